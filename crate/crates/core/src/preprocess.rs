//! Missing-data treatment, root centering and torso scaling.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{link, LandmarkId, Pose, Sample, NUM_LANDMARKS};

/// Frames with more missing landmarks than this are dropped.
pub const MAX_MISSING: usize = 8;

/// Root-to-hip lengths at or below this (in pixels) are degenerate.
pub const DEGENERATE_TORSO_EPS: f64 = 1e-6;

/// Per-landmark displacement between consecutive frames.
pub type Displacement = [[f64; 2]; NUM_LANDMARKS];

/// Output of missing-data treatment. Every landmark outside
/// `persistent_missing` is present in every frame; every landmark inside it
/// is absent in every frame; the root is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSequence {
    pub poses: Vec<Pose>,
    pub persistent_missing: BTreeSet<LandmarkId>,
}

/// What [`treat_missing`] did to a sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreatmentReport {
    pub input_frames: usize,
    /// Indices (in the input) of dropped frames.
    pub dropped_frames: Vec<usize>,
    /// Landmarks whose whole track was copied from the mirror landmark.
    pub mirrored: Vec<LandmarkId>,
    /// Number of individual frame gaps filled from the landmark's own track.
    pub filled_gaps: usize,
    pub persistent_missing: Vec<LandmarkId>,
}

fn retained(pose: &Pose) -> bool {
    pose.is_present(LandmarkId::ROOT) && pose.missing_count() <= MAX_MISSING
}

/// Nearest present frame for every frame of one landmark track; ties go to
/// the earlier frame. `None` when the landmark is never present.
fn nearest_present(present: &[bool]) -> Option<Vec<usize>> {
    let n = present.len();
    let mut prev = vec![None; n];
    let mut last = None;
    for t in 0..n {
        if present[t] {
            last = Some(t);
        }
        prev[t] = last;
    }
    let mut out = vec![0; n];
    let mut next = None;
    for t in (0..n).rev() {
        if present[t] {
            next = Some(t);
        }
        out[t] = match (prev[t], next) {
            (Some(p), Some(q)) => {
                if t - p <= q - t {
                    p
                } else {
                    q
                }
            }
            (Some(p), None) => p,
            (None, Some(q)) => q,
            (None, None) => return None,
        };
    }
    Some(out)
}

pub fn treat_missing(sample: &Sample) -> Result<CleanSequence> {
    treat_missing_with_report(sample).map(|(seq, _)| seq)
}

/// Drop unusable frames, fill occasional gaps from the nearest frame in time
/// and substitute never-seen limbs with their mirror counterpart's track.
pub fn treat_missing_with_report(sample: &Sample) -> Result<(CleanSequence, TreatmentReport)> {
    let mut report = TreatmentReport {
        input_frames: sample.poses.len(),
        ..Default::default()
    };
    let mut poses = Vec::with_capacity(sample.poses.len());
    for (t, pose) in sample.poses.iter().enumerate() {
        if retained(pose) {
            poses.push(*pose);
        } else {
            report.dropped_frames.push(t);
        }
    }
    if poses.is_empty() {
        return Err(Error::EmptySequence);
    }

    // Absence is judged on the retained frames before any filling.
    let never_seen: Vec<bool> = LandmarkId::all()
        .map(|id| poses.iter().all(|p| !p.is_present(id)))
        .collect();

    let source = poses.clone();
    for id in LandmarkId::all() {
        if id == LandmarkId::ROOT || never_seen[id.slot()] {
            continue;
        }
        let present: Vec<bool> = source.iter().map(|p| p.is_present(id)).collect();
        let nearest = nearest_present(&present).expect("landmark seen at least once");
        for (t, &src) in nearest.iter().enumerate() {
            if src != t {
                let xy = source[src].get(id).expect("nearest frame has the landmark");
                poses[t].set(id, xy);
                report.filled_gaps += 1;
            }
        }
    }

    let mut persistent_missing = BTreeSet::new();
    for id in LandmarkId::all() {
        if !never_seen[id.slot()] {
            continue;
        }
        let mirror = id.mirror();
        if mirror != id && !never_seen[mirror.slot()] {
            for pose in &mut poses {
                let xy = pose.get(mirror).expect("mirror track is complete");
                pose.set(id, xy);
            }
            report.mirrored.push(id);
        } else {
            persistent_missing.insert(id);
        }
    }
    report.persistent_missing = persistent_missing.iter().copied().collect();
    Ok((
        CleanSequence {
            poses,
            persistent_missing,
        },
        report,
    ))
}

/// Translate so that the root sits at the origin.
pub fn center(pose: &Pose) -> Result<Pose> {
    let [rx, ry] = pose.get(LandmarkId::ROOT).ok_or(Error::AbsentRoot)?;
    let mut out = pose.map_present(|_, [x, y]| [x - rx, y - ry]);
    out.set(LandmarkId::ROOT, [0.0, 0.0]);
    Ok(out)
}

/// Divide a centered pose by its root-to-right-hip length, falling back to
/// the left hip when the right hip is absent.
pub fn scale(pose: &Pose) -> Result<Pose> {
    let hip = if pose.is_present(LandmarkId::RIGHT_HIP) {
        LandmarkId::RIGHT_HIP
    } else if pose.is_present(LandmarkId::LEFT_HIP) {
        LandmarkId::LEFT_HIP
    } else {
        return Err(Error::AbsentHip);
    };
    let len = link(pose, LandmarkId::ROOT, hip)?.norm();
    if !(len > DEGENERATE_TORSO_EPS) {
        return Err(Error::DegenerateTorso(len));
    }
    Ok(pose.map_present(|_, [x, y]| [x / len, y / len]))
}

/// Root-centered, torso-scaled poses and their frame-to-frame derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSequence {
    pub poses: Vec<Pose>,
    /// `derivatives[t] = poses[t + 1] - poses[t]`; persistent-missing
    /// landmarks hold zero.
    pub derivatives: Vec<Displacement>,
    pub persistent_missing: BTreeSet<LandmarkId>,
}

impl NormalizedSequence {
    pub fn from_poses(poses: Vec<Pose>, persistent_missing: BTreeSet<LandmarkId>) -> Self {
        let derivatives = poses.windows(2).map(|w| displacement(&w[0], &w[1])).collect();
        NormalizedSequence {
            poses,
            derivatives,
            persistent_missing,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// `b - a` per landmark, zero where either side is absent.
pub fn displacement(a: &Pose, b: &Pose) -> Displacement {
    let mut d = [[0.0; 2]; NUM_LANDMARKS];
    for id in LandmarkId::all() {
        if let (Some(p), Some(q)) = (a.get(id), b.get(id)) {
            d[id.slot()] = [q[0] - p[0], q[1] - p[1]];
        }
    }
    d
}

/// Center and scale every frame. Frames whose torso is degenerate are
/// dropped with a warning.
pub fn normalize(seq: &CleanSequence) -> Result<NormalizedSequence> {
    let missing = &seq.persistent_missing;
    if missing.contains(&LandmarkId::RIGHT_HIP) && missing.contains(&LandmarkId::LEFT_HIP) {
        return Err(Error::AbsentHip);
    }
    let mut poses = Vec::with_capacity(seq.poses.len());
    for (t, pose) in seq.poses.iter().enumerate() {
        match center(pose).and_then(|p| scale(&p)) {
            Ok(p) => poses.push(p),
            Err(e @ Error::DegenerateTorso(_)) => warn!("dropping frame {t}: {e}"),
            Err(e) => return Err(e),
        }
    }
    if poses.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(NormalizedSequence::from_poses(poses, missing.clone()))
}

/// Missing-data treatment followed by normalization.
pub fn preprocess(sample: &Sample) -> Result<NormalizedSequence> {
    normalize(&treat_missing(sample)?)
}
