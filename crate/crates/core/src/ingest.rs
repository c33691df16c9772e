//! Reading detector exports and dataset manifests into [`Sample`]s.
//!
//! The detector emits 18 COCO-ordered body keypoints per person:
//!
//! ```text
//!  0 nose        5 l-shoulder  10 r-ankle    15 l-eye
//!  1 neck        6 l-elbow     11 l-hip      16 r-ear
//!  2 r-shoulder  7 l-wrist     12 l-knee     17 l-ear
//!  3 r-elbow     8 r-hip       13 l-ankle
//!  4 r-wrist     9 r-knee      14 r-eye
//! ```
//!
//! The five facial keypoints are averaged into the head landmark; keypoints
//! 1..=13 map in order onto landmarks 2..=14.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{LandmarkId, Pose, Sample, Viewpoint};
use crate::records;

pub const DETECTOR_KEYPOINTS: usize = 18;
const FACIAL: [usize; 5] = [0, 14, 15, 16, 17];
const NECK: usize = 1;

/// One detected person in one frame: `(x, y, confidence)` per keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetectionFrame {
    pub keypoints: Vec<[f64; 3]>,
    pub frame_index: usize,
}

/// Merge the facial keypoints into a head landmark and map the body
/// keypoints onto the 14-landmark model. A keypoint counts as detected when
/// its confidence exceeds `threshold` (0 for the plain rule).
pub fn merge_head_with_threshold(frame: &RawDetectionFrame, threshold: f64) -> Result<Pose> {
    if frame.keypoints.len() != DETECTOR_KEYPOINTS {
        return Err(Error::MalformedFrame(frame.keypoints.len()));
    }
    let detected = |k: &[f64; 3]| k[2] > threshold;
    let mut pose = Pose::empty();

    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for &i in &FACIAL {
        let k = &frame.keypoints[i];
        if detected(k) {
            sx += k[0];
            sy += k[1];
            n += 1;
        }
    }
    if n > 0 {
        pose.set(LandmarkId::HEAD, [sx / n as f64, sy / n as f64]);
    }

    for (offset, k) in frame.keypoints[1..=13].iter().enumerate() {
        if detected(k) {
            pose.set(LandmarkId::from_slot(offset + 1), [k[0], k[1]]);
        }
    }
    Ok(pose)
}

pub fn merge_head(frame: &RawDetectionFrame) -> Result<Pose> {
    merge_head_with_threshold(frame, 0.0)
}

/// Parse one per-frame detector JSON record into its list of people.
///
/// Accepts both `pose_keypoints_2d` and the older `pose_keypoints` key.
pub fn parse_detector_frame(path: &Path, frame_index: usize, text: &str) -> Result<Vec<RawDetectionFrame>> {
    let loc = || format!("frame {frame_index}");
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse(path, loc(), e.to_string()))?;
    let people = value
        .get("people")
        .and_then(|p| p.as_array())
        .ok_or_else(|| Error::parse(path, loc(), "missing `people` array"))?;
    let mut out = Vec::with_capacity(people.len());
    for person in people {
        let flat = person
            .get("pose_keypoints_2d")
            .or_else(|| person.get("pose_keypoints"))
            .and_then(|k| k.as_array())
            .ok_or_else(|| Error::parse(path, loc(), "person without pose keypoints"))?;
        if flat.len() % 3 != 0 {
            return Err(Error::parse(path, loc(), "keypoint list length is not a multiple of 3"));
        }
        let mut keypoints = Vec::with_capacity(flat.len() / 3);
        for triple in flat.chunks(3) {
            let mut k = [0.0; 3];
            for (dst, v) in k.iter_mut().zip(triple) {
                *dst = v
                    .as_f64()
                    .ok_or_else(|| Error::parse(path, loc(), "non-numeric keypoint value"))?;
            }
            keypoints.push(k);
        }
        if keypoints.len() != DETECTOR_KEYPOINTS {
            return Err(Error::parse(
                path,
                loc(),
                Error::MalformedFrame(keypoints.len()).to_string(),
            ));
        }
        out.push(RawDetectionFrame { keypoints, frame_index });
    }
    Ok(out)
}

fn total_confidence(frame: &RawDetectionFrame) -> f64 {
    frame.keypoints.iter().map(|k| k[2]).sum()
}

/// Pick the tracked person in each frame: the most confident person first,
/// then whoever's neck is nearest the previously tracked neck. Frames with
/// nobody yield an all-absent pose.
pub fn track_single_person(frames: &[Vec<RawDetectionFrame>], threshold: f64) -> Result<Vec<Pose>> {
    let mut prev_root: Option<[f64; 2]> = None;
    let mut out = Vec::with_capacity(frames.len());
    for people in frames {
        let chosen = match prev_root {
            Some([px, py]) => people
                .iter()
                .filter(|p| p.keypoints[NECK][2] > threshold)
                .min_by(|a, b| {
                    let da = (a.keypoints[NECK][0] - px).powi(2) + (a.keypoints[NECK][1] - py).powi(2);
                    let db = (b.keypoints[NECK][0] - px).powi(2) + (b.keypoints[NECK][1] - py).powi(2);
                    da.total_cmp(&db)
                })
                .or_else(|| most_confident(people)),
            None => most_confident(people),
        };
        match chosen {
            Some(person) => {
                let pose = merge_head_with_threshold(person, threshold)?;
                if let Some(root) = pose.get(LandmarkId::ROOT) {
                    prev_root = Some(root);
                }
                out.push(pose);
            }
            None => out.push(Pose::empty()),
        }
    }
    Ok(out)
}

fn most_confident(people: &[RawDetectionFrame]) -> Option<&RawDetectionFrame> {
    // first maximum wins on ties
    people.iter().fold(None, |best, p| match best {
        Some(b) if total_confidence(b) >= total_confidence(p) => Some(b),
        _ => Some(p),
    })
}

/// Load a directory of per-frame detector JSON files, ordered by file name.
pub fn load_detector_dir(dir: &Path, threshold: f64) -> Result<Vec<Pose>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut frames = Vec::with_capacity(files.len());
    for (i, file) in files.iter().enumerate() {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        frames.push(parse_detector_frame(file, i, &text)?);
    }
    track_single_person(&frames, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// A sequence record file, or a directory of detector frame files.
    pub path: PathBuf,
    pub action: String,
    pub viewpoint: String,
    pub actor: String,
    pub dataset: String,
}

/// Dataset listing with its label vocabularies (TOML on disk).
///
/// ```toml
/// actions = ["wave", "squat"]
/// viewpoints = ["front", "left"]    # optional, defaults to all eight
/// confidence_threshold = 0.0        # optional
///
/// [[entry]]
/// path = "clips/0001.phs"           # relative to the manifest file
/// action = "wave"
/// viewpoint = "front"
/// actor = "3"
/// dataset = "lab"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub actions: Vec<String>,
    #[serde(default = "all_viewpoints")]
    pub viewpoints: Vec<String>,
    #[serde(default)]
    pub confidence_threshold: f64,
    #[serde(default, rename = "entry")]
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn all_viewpoints() -> Vec<String> {
    Viewpoint::ALL.iter().map(|v| v.as_str().to_string()).collect()
}

impl DatasetManifest {
    pub fn new(actions: Vec<String>) -> Self {
        DatasetManifest {
            actions,
            viewpoints: all_viewpoints(),
            confidence_threshold: 0.0,
            entries: Vec::new(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest =
            toml::from_str(&text).map_err(|e| Error::parse(path, "manifest", e.to_string()))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// Check label vocabularies and path uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            self.check_labels(e)?;
            if !seen.insert(&e.path) {
                return Err(Error::Config(format!("duplicate manifest path {}", e.path.display())));
            }
        }
        Ok(())
    }

    fn check_labels(&self, e: &ManifestEntry) -> Result<Viewpoint> {
        if !self.actions.contains(&e.action) {
            return Err(Error::UnknownLabel {
                kind: "action",
                label: e.action.clone(),
            });
        }
        if !self.viewpoints.contains(&e.viewpoint) {
            return Err(Error::UnknownLabel {
                kind: "viewpoint",
                label: e.viewpoint.clone(),
            });
        }
        e.viewpoint.parse()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }
}

/// One [`Sample`] per manifest entry, in manifest order. Labels come from
/// the manifest; frames with nobody detected stay as all-absent poses.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<Sample>> {
    manifest.validate()?;
    manifest
        .entries
        .iter()
        .map(|entry| {
            let viewpoint = manifest.check_labels(entry)?;
            let path = manifest.resolve(entry);
            let poses = if path.is_dir() {
                load_detector_dir(&path, manifest.confidence_threshold)?
            } else {
                records::read_sample(&path)?.poses
            };
            Ok(Sample {
                poses,
                action: entry.action.clone(),
                viewpoint,
                actor: entry.actor.clone(),
                dataset: entry.dataset.clone(),
            })
        })
        .collect()
}
