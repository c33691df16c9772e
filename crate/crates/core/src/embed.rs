//! Spatio-temporal embedding: per-frame minimum landmark distance of a pose
//! (or its displacement) to every action's prototype library, per body part.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{ModelBundle, PoseLibrary, Prototype};
use crate::pose::{LandmarkId, LandmarkSubset, Pose, Sample, NUM_LANDMARKS};
use crate::preprocess::NormalizedSequence;
use crate::reduce::reroll;

/// Emitted instead of a distance when no landmark of the subset is available.
pub const EMPTY_SUBSET_SENTINEL: f64 = 99.0;

/// Emitted for coordinates of landmarks that are never observed.
pub const MISSING_COORD_SENTINEL: f64 = -1.0;

/// Pipeline variant: which channels feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Raw detector coordinates, `-1` for missing landmarks.
    Baseline,
    /// Normalized poses and their derivatives.
    Basic,
    /// Basic channels plus spatial and temporal library embeddings.
    Advanced,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Basic => "basic",
            Mode::Advanced => "advanced",
        }
    }

    /// Number of classifier input channels for `actions` action classes.
    pub fn channel_count(self, actions: usize) -> usize {
        match self {
            Mode::Baseline => 2 * NUM_LANDMARKS,
            Mode::Basic => 4 * NUM_LANDMARKS,
            Mode::Advanced => 4 * NUM_LANDMARKS + 10 * actions,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "basic" => Ok(Mode::Basic),
            "advanced" => Ok(Mode::Advanced),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

fn landmark_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Mean landmark distance over the subset's available landmarks, or `None`
/// if none is available.
fn subset_mean(dists: &[f64; NUM_LANDMARKS], available: &[bool; NUM_LANDMARKS], subset: LandmarkSubset) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in subset.landmarks() {
        if available[id.slot()] {
            sum += dists[id.slot()];
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Averaged distance between a pose and a prototype over the subset's
/// present landmarks.
pub fn subset_distance(pose: &Pose, proto: &Prototype, subset: LandmarkSubset) -> Result<f64> {
    let landmarks = reroll(&proto.full);
    let mut dists = [0.0; NUM_LANDMARKS];
    for id in subset.landmarks() {
        if let Some(xy) = pose.get(id) {
            dists[id.slot()] = landmark_distance(xy, landmarks[id.slot()]);
        }
    }
    subset_mean(&dists, pose.present(), subset).ok_or(Error::EmptySubset(subset.name()))
}

/// Five per-subset minimum distances (`J`, `J_a`..`J_d` order) of a frame
/// against a library. `available` marks landmarks that may be compared.
pub fn embed_coords(
    coords: &[[f64; 2]; NUM_LANDMARKS],
    available: &[bool; NUM_LANDMARKS],
    lib: &PoseLibrary,
) -> [f64; 5] {
    let mut best = [f64::INFINITY; 5];
    let mut dists = [0.0; NUM_LANDMARKS];
    for proto in &lib.prototypes {
        let landmarks = reroll(&proto.full);
        for slot in 0..NUM_LANDMARKS {
            dists[slot] = if available[slot] {
                landmark_distance(coords[slot], landmarks[slot])
            } else {
                0.0
            };
        }
        for (b, subset) in best.iter_mut().zip(LandmarkSubset::ALL) {
            if let Some(d) = subset_mean(&dists, available, subset) {
                if d < *b {
                    *b = d;
                }
            }
        }
    }
    for b in &mut best {
        if !b.is_finite() {
            *b = EMPTY_SUBSET_SENTINEL;
        }
    }
    best
}

pub fn embed_frame(pose: &Pose, lib: &PoseLibrary) -> [f64; 5] {
    embed_coords(pose.coords(), pose.present(), lib)
}

/// Classifier input: named channels of equal length `len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingChannels {
    pub names: Vec<String>,
    /// Channel-major values, `data[c][t]`.
    pub data: Vec<Vec<f64>>,
    pub len: usize,
}

impl EmbeddingChannels {
    pub fn channels(&self) -> usize {
        self.data.len()
    }

    fn push(&mut self, name: String, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.len);
        self.names.push(name);
        self.data.push(values);
    }

    pub fn slice_channels(&self, prefix: &str) -> Vec<&Vec<f64>> {
        self.names
            .iter()
            .zip(&self.data)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, d)| d)
            .collect()
    }
}

/// Pad derivative-aligned rows (length `T-1`) to `T` by repeating the first
/// value in front. Empty rows become a single zero.
fn front_pad(mut row: Vec<f64>) -> Vec<f64> {
    let first = row.first().copied().unwrap_or(0.0);
    row.insert(0, first);
    row
}

fn coordinate_channels(
    out: &mut EmbeddingChannels,
    prefix: &str,
    frames: &[[[f64; 2]; NUM_LANDMARKS]],
    missing: &BTreeSet<LandmarkId>,
    pad: bool,
) {
    for id in LandmarkId::all() {
        for (axis, axis_name) in ["x", "y"].iter().enumerate() {
            let row: Vec<f64> = frames
                .iter()
                .map(|f| {
                    if missing.contains(&id) {
                        MISSING_COORD_SENTINEL
                    } else {
                        f[id.slot()][axis]
                    }
                })
                .collect();
            let row = if pad { front_pad(row) } else { row };
            out.push(format!("{prefix}/{id}/{axis_name}"), row);
        }
    }
}

fn library_channels(
    out: &mut EmbeddingChannels,
    kind: &str,
    libs: &[PoseLibrary],
    frames: &[[[f64; 2]; NUM_LANDMARKS]],
    available: &[bool; NUM_LANDMARKS],
    pad: bool,
) {
    for lib in libs {
        let per_frame: Vec<[f64; 5]> = frames.iter().map(|f| embed_coords(f, available, lib)).collect();
        for (k, subset) in LandmarkSubset::ALL.iter().enumerate() {
            let row: Vec<f64> = per_frame.iter().map(|e| e[k]).collect();
            let row = if pad { front_pad(row) } else { row };
            out.push(format!("{kind}/{}/{}", lib.action, subset.name()), row);
        }
    }
}

/// Channels for a normalized sequence: 28 pose coordinates, 28 derivative
/// coordinates and, in advanced mode, `5 |L|` spatial plus `5 |L|` temporal
/// embeddings. Derivative-based rows are front-padded to the pose length.
pub fn embed_sequence(seq: &NormalizedSequence, bundle: Option<&ModelBundle>, mode: Mode) -> Result<EmbeddingChannels> {
    if mode == Mode::Baseline {
        return Err(Error::Config("baseline channels come from raw samples".into()));
    }
    let len = seq.len();
    let mut out = EmbeddingChannels {
        names: Vec::new(),
        data: Vec::new(),
        len,
    };
    let poses: Vec<[[f64; 2]; NUM_LANDMARKS]> = seq.poses.iter().map(|p| *p.coords()).collect();
    coordinate_channels(&mut out, "pose", &poses, &seq.persistent_missing, false);
    coordinate_channels(&mut out, "deriv", &seq.derivatives, &seq.persistent_missing, true);

    if mode == Mode::Advanced {
        let bundle = bundle.ok_or_else(|| Error::MissingLibrary("<model bundle>".into()))?;
        let mut available = [true; NUM_LANDMARKS];
        for id in &seq.persistent_missing {
            available[id.slot()] = false;
        }
        for (kind, libs) in [("spatial", &bundle.spatial), ("temporal", &bundle.temporal)] {
            for action in &bundle.actions {
                if !libs.iter().any(|l| &l.action == action) {
                    return Err(Error::MissingLibrary(format!("{kind}/{action}")));
                }
            }
        }
        library_channels(&mut out, "spatial", &bundle.spatial, &poses, &available, false);
        library_channels(
            &mut out,
            "temporal",
            &bundle.temporal,
            &seq.derivatives,
            &available,
            true,
        );
    }
    Ok(out)
}

/// Raw global coordinates with `-1` for every absent landmark.
pub fn baseline_channels(sample: &Sample) -> EmbeddingChannels {
    let len = sample.poses.len();
    let mut out = EmbeddingChannels {
        names: Vec::new(),
        data: Vec::new(),
        len,
    };
    for id in LandmarkId::all() {
        for (axis, axis_name) in ["x", "y"].iter().enumerate() {
            let row = sample
                .poses
                .iter()
                .map(|p| p.get(id).map_or(MISSING_COORD_SENTINEL, |xy| xy[axis]))
                .collect();
            out.push(format!("raw/{id}/{axis_name}"), row);
        }
    }
    out
}
