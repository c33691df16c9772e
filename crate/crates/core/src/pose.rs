//! Core pose types: the 14-landmark body model, samples and landmark subsets.
//!
//! Landmark numbering (1-based):
//!
//! | index | landmark        | index | landmark    |
//! |-------|-----------------|-------|-------------|
//! | 1     | head            | 8     | left wrist  |
//! | 2     | root (neck)     | 9     | right hip   |
//! | 3     | right shoulder  | 10    | right knee  |
//! | 4     | right elbow     | 11    | right ankle |
//! | 5     | right wrist     | 12    | left hip    |
//! | 6     | left shoulder   | 13    | left knee   |
//! | 7     | left elbow      | 14    | left ankle  |
//!
//! Detectors that order left/right differently must be remapped on ingest;
//! scaling uses landmark 9 (right hip) as its reference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 14;

/// 1-based landmark index in `1..=14`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LandmarkId(u8);

impl LandmarkId {
    pub const HEAD: LandmarkId = LandmarkId(1);
    pub const ROOT: LandmarkId = LandmarkId(2);
    pub const RIGHT_HIP: LandmarkId = LandmarkId(9);
    pub const LEFT_HIP: LandmarkId = LandmarkId(12);

    pub fn new(index: u8) -> Option<Self> {
        (1..=NUM_LANDMARKS as u8).contains(&index).then_some(LandmarkId(index))
    }

    /// Landmark from a 0-based array slot.
    pub fn from_slot(slot: usize) -> Self {
        assert!(slot < NUM_LANDMARKS, "landmark slot {slot} out of range");
        LandmarkId(slot as u8 + 1)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// 0-based array slot.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    /// Left/right mirror counterpart. Head and root map to themselves.
    pub fn mirror(self) -> Self {
        LandmarkId(match self.0 {
            3..=5 => self.0 + 3,
            6..=8 => self.0 - 3,
            9..=11 => self.0 + 3,
            12..=14 => self.0 - 3,
            other => other,
        })
    }

    pub fn all() -> impl Iterator<Item = LandmarkId> {
        (1..=NUM_LANDMARKS as u8).map(LandmarkId)
    }
}

impl TryFrom<u8> for LandmarkId {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        LandmarkId::new(value).ok_or_else(|| format!("landmark index {value} out of range 1..=14"))
    }
}

impl From<LandmarkId> for u8 {
    fn from(id: LandmarkId) -> u8 {
        id.0
    }
}

impl fmt::Display for LandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One frame: 14 landmark coordinates with presence flags.
///
/// Absent landmarks always store `(0, 0)` so that equality compares only
/// meaningful data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    coords: [[f64; 2]; NUM_LANDMARKS],
    present: [bool; NUM_LANDMARKS],
}

impl Default for Pose {
    fn default() -> Self {
        Self::empty()
    }
}

impl Pose {
    /// All landmarks absent.
    pub fn empty() -> Self {
        Pose {
            coords: [[0.0; 2]; NUM_LANDMARKS],
            present: [false; NUM_LANDMARKS],
        }
    }

    /// All landmarks present at the given coordinates.
    pub fn from_coords(coords: [[f64; 2]; NUM_LANDMARKS]) -> Self {
        Pose {
            coords,
            present: [true; NUM_LANDMARKS],
        }
    }

    pub fn new(coords: [[f64; 2]; NUM_LANDMARKS], present: [bool; NUM_LANDMARKS]) -> Self {
        let mut pose = Pose { coords, present };
        for slot in 0..NUM_LANDMARKS {
            if !present[slot] {
                pose.coords[slot] = [0.0, 0.0];
            }
        }
        pose
    }

    pub fn get(&self, id: LandmarkId) -> Option<[f64; 2]> {
        let slot = id.slot();
        self.present[slot].then_some(self.coords[slot])
    }

    pub fn is_present(&self, id: LandmarkId) -> bool {
        self.present[id.slot()]
    }

    pub fn set(&mut self, id: LandmarkId, xy: [f64; 2]) {
        self.coords[id.slot()] = xy;
        self.present[id.slot()] = true;
    }

    pub fn clear(&mut self, id: LandmarkId) {
        self.coords[id.slot()] = [0.0, 0.0];
        self.present[id.slot()] = false;
    }

    /// Raw coordinate storage; absent slots hold `(0, 0)`.
    pub fn coords(&self) -> &[[f64; 2]; NUM_LANDMARKS] {
        &self.coords
    }

    pub fn present(&self) -> &[bool; NUM_LANDMARKS] {
        &self.present
    }

    pub fn missing_count(&self) -> usize {
        self.present.iter().filter(|p| !**p).count()
    }

    pub fn present_count(&self) -> usize {
        NUM_LANDMARKS - self.missing_count()
    }

    /// Apply `f` to every present coordinate.
    pub fn map_present(&self, mut f: impl FnMut(LandmarkId, [f64; 2]) -> [f64; 2]) -> Pose {
        let mut out = *self;
        for id in LandmarkId::all() {
            if let Some(xy) = self.get(id) {
                out.coords[id.slot()] = f(id, xy);
            }
        }
        out
    }

    /// Left/right mirror about the vertical axis `x = 0`: x negated and
    /// landmark tracks swapped.
    pub fn mirrored(&self) -> Pose {
        let mut out = Pose::empty();
        for id in LandmarkId::all() {
            if let Some([x, y]) = self.get(id) {
                out.set(id.mirror(), [-x, y]);
            }
        }
        out
    }
}

/// Vector between two landmarks of the same pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkVector {
    pub from: LandmarkId,
    pub to: LandmarkId,
    pub dx: f64,
    pub dy: f64,
}

impl LinkVector {
    pub fn norm(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy).sqrt()
    }
}

/// Link vector `coords[to] - coords[from]`.
pub fn link(pose: &Pose, from: LandmarkId, to: LandmarkId) -> Result<LinkVector> {
    let a = pose.get(from).ok_or(Error::AbsentLandmark(from))?;
    let b = pose.get(to).ok_or(Error::AbsentLandmark(to))?;
    Ok(LinkVector {
        from,
        to,
        dx: b[0] - a[0],
        dy: b[1] - a[1],
    })
}

/// Recording direction relative to the subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Viewpoint {
    Front,
    FrontLeft,
    FrontRight,
    Left,
    Right,
    Rear,
    RearLeft,
    RearRight,
}

impl Viewpoint {
    pub const ALL: [Viewpoint; 8] = [
        Viewpoint::Front,
        Viewpoint::FrontLeft,
        Viewpoint::FrontRight,
        Viewpoint::Left,
        Viewpoint::Right,
        Viewpoint::Rear,
        Viewpoint::RearLeft,
        Viewpoint::RearRight,
    ];

    /// Viewpoint seen after a left/right flip of the image.
    pub fn mirrored(self) -> Self {
        use Viewpoint::*;
        match self {
            Front => Front,
            Rear => Rear,
            Left => Right,
            Right => Left,
            FrontLeft => FrontRight,
            FrontRight => FrontLeft,
            RearLeft => RearRight,
            RearRight => RearLeft,
        }
    }

    pub fn as_str(self) -> &'static str {
        use Viewpoint::*;
        match self {
            Front => "front",
            FrontLeft => "front-left",
            FrontRight => "front-right",
            Left => "left",
            Right => "right",
            Rear => "rear",
            RearLeft => "rear-left",
            RearRight => "rear-right",
        }
    }
}

impl fmt::Display for Viewpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Viewpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Viewpoint::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "viewpoint",
                label: s.to_string(),
            })
    }
}

/// A labelled pose sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub poses: Vec<Pose>,
    pub action: String,
    pub viewpoint: Viewpoint,
    pub actor: String,
    pub dataset: String,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Landmark groups used by the embedding: the whole body and the four limbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandmarkSubset {
    All,
    RightArm,
    LeftArm,
    RightLeg,
    LeftLeg,
}

impl LandmarkSubset {
    pub const ALL: [LandmarkSubset; 5] = [
        LandmarkSubset::All,
        LandmarkSubset::RightArm,
        LandmarkSubset::LeftArm,
        LandmarkSubset::RightLeg,
        LandmarkSubset::LeftLeg,
    ];

    /// Member landmark indices in ascending order.
    pub fn indices(self) -> &'static [u8] {
        match self {
            LandmarkSubset::All => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14],
            LandmarkSubset::RightArm => &[3, 4, 5],
            LandmarkSubset::LeftArm => &[6, 7, 8],
            LandmarkSubset::RightLeg => &[9, 10, 11],
            LandmarkSubset::LeftLeg => &[12, 13, 14],
        }
    }

    pub fn landmarks(self) -> impl Iterator<Item = LandmarkId> {
        self.indices().iter().map(|&i| LandmarkId(i))
    }

    /// Short name used in channel headers.
    pub fn name(self) -> &'static str {
        match self {
            LandmarkSubset::All => "J",
            LandmarkSubset::RightArm => "J_a",
            LandmarkSubset::LeftArm => "J_b",
            LandmarkSubset::RightLeg => "J_c",
            LandmarkSubset::LeftLeg => "J_d",
        }
    }
}
