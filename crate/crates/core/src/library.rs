//! Per-action prototype libraries and the model bundle that stores them.
//!
//! For every (action, viewpoint) cell of the training set, the unrolled
//! vectors (poses for spatial libraries, frame-to-frame displacements for
//! temporal ones) are projected with a global PCA, clustered with a SOM, and
//! every non-empty cluster becomes a prototype: the mean of its members both
//! in the reduced space and in the original 26-dimensional landmark space.
//! Prototypes of all viewpoints are stacked into one library per action.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::augment::sample_seed;
use crate::error::{Error, Result};
use crate::pose::Viewpoint;
use crate::records::LabeledSequence;
use crate::reduce::{fit_pca, unroll, unroll_displacement, FeatureVector, PcaModel, FEATURE_DIM};
use crate::som::{train_som, SomConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LibraryKind {
    Spatial,
    Temporal,
}

impl LibraryKind {
    pub fn name(self) -> &'static str {
        match self {
            LibraryKind::Spatial => "spatial",
            LibraryKind::Temporal => "temporal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub reduced: Vec<f64>,
    pub full: FeatureVector,
    /// Number of training vectors averaged into this prototype.
    pub weight: usize,
    pub viewpoint: Viewpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseLibrary {
    pub action: String,
    pub kind: LibraryKind,
    pub prototypes: Vec<Prototype>,
}

/// The unrolled vectors of one sequence for the given library kind.
pub fn feature_vectors(seq: &LabeledSequence, kind: LibraryKind) -> Vec<FeatureVector> {
    match kind {
        LibraryKind::Spatial => seq.seq.poses.iter().map(unroll).collect(),
        LibraryKind::Temporal => seq.seq.derivatives.iter().map(unroll_displacement).collect(),
    }
}

/// One (action, viewpoint) cell: cluster its vectors and average clusters.
pub fn cell_prototypes(
    vectors: &[FeatureVector],
    viewpoint: Viewpoint,
    pca: &PcaModel,
    cfg: &SomConfig,
) -> Result<(Vec<Prototype>, Vec<usize>)> {
    let reduced: Vec<Vec<f64>> = vectors.iter().map(|v| pca.project(v)).collect();
    let som = train_som(&reduced, cfg)?;
    let units = cfg.units();
    let m = pca.m();
    let mut sum_full = vec![[0.0; FEATURE_DIM]; units];
    let mut sum_red = vec![vec![0.0; m]; units];
    let mut counts = vec![0usize; units];
    for ((v, r), &k) in vectors.iter().zip(&reduced).zip(&som.assignments) {
        counts[k] += 1;
        for (s, x) in sum_full[k].iter_mut().zip(v) {
            *s += x;
        }
        for (s, x) in sum_red[k].iter_mut().zip(r) {
            *s += x;
        }
    }
    let prototypes = (0..units)
        .filter(|&k| counts[k] > 0)
        .map(|k| {
            let n = counts[k] as f64;
            let mut full = sum_full[k];
            for x in &mut full {
                *x /= n;
            }
            Prototype {
                reduced: sum_red[k].iter().map(|x| x / n).collect(),
                full,
                weight: counts[k],
                viewpoint,
            }
        })
        .collect();
    Ok((prototypes, som.assignments))
}

/// Build one library per action that has data of the given kind.
pub fn build_library(
    train: &[LabeledSequence],
    kind: LibraryKind,
    pca: &PcaModel,
    cfg: &SomConfig,
    actions: &[String],
) -> Result<BTreeMap<String, PoseLibrary>> {
    let mut libs = BTreeMap::new();
    for (ai, action) in actions.iter().enumerate() {
        let mut prototypes = Vec::new();
        for (wi, &vp) in Viewpoint::ALL.iter().enumerate() {
            let vectors: Vec<FeatureVector> = train
                .iter()
                .filter(|s| &s.action == action && s.viewpoint == vp)
                .flat_map(|s| feature_vectors(s, kind))
                .collect();
            if vectors.is_empty() {
                continue;
            }
            // mirrored cells share a seed so that building commutes with flipping
            let pair = Viewpoint::ALL.iter().position(|&v| v == vp.mirrored()).unwrap().min(wi);
            let cell_cfg = SomConfig {
                rng_seed: sample_seed(cfg.rng_seed, ai * Viewpoint::ALL.len() + pair),
                ..cfg.clone()
            };
            let (protos, _) = cell_prototypes(&vectors, vp, pca, &cell_cfg)?;
            prototypes.extend(protos);
        }
        if prototypes.is_empty() {
            warn!("no {} training data for action `{action}`", kind.name());
            continue;
        }
        libs.insert(
            action.clone(),
            PoseLibrary {
                action: action.clone(),
                kind,
                prototypes,
            },
        );
    }
    Ok(libs)
}

pub const BUNDLE_MAGIC: &str = "POSEHAR-BUNDLE 1";

/// Everything the embedding stage needs, fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub actions: Vec<String>,
    pub spatial_pca: PcaModel,
    pub temporal_pca: PcaModel,
    /// One library per action, in `actions` order.
    pub spatial: Vec<PoseLibrary>,
    pub temporal: Vec<PoseLibrary>,
    pub som: SomConfig,
}

impl ModelBundle {
    /// Fit both PCA models on all training vectors and build both library
    /// sets. Every action must end up with both libraries.
    pub fn fit(train: &[LabeledSequence], actions: &[String], cfg: &SomConfig) -> Result<Self> {
        cfg.validate()?;
        let fit_kind = |kind| -> Result<(PcaModel, Vec<PoseLibrary>)> {
            let vectors: Vec<FeatureVector> = train.iter().flat_map(|s| feature_vectors(s, kind)).collect();
            let pca = fit_pca(&vectors, cfg.m).map_err(|e| match e {
                Error::InsufficientData(msg) => Error::InsufficientData(format!("{} PCA: {msg}", kind.name())),
                other => other,
            })?;
            let mut libs = build_library(train, kind, &pca, cfg, actions)?;
            let ordered = actions
                .iter()
                .map(|a| {
                    libs.remove(a).ok_or_else(|| {
                        Error::InsufficientData(format!("no {} training data for action `{a}`", kind.name()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((pca, ordered))
        };
        let (spatial_pca, spatial) = fit_kind(LibraryKind::Spatial)?;
        let (temporal_pca, temporal) = fit_kind(LibraryKind::Temporal)?;
        Ok(ModelBundle {
            actions: actions.to_vec(),
            spatial_pca,
            temporal_pca,
            spatial,
            temporal,
            som: cfg.clone(),
        })
    }

    /// File layout: the line `POSEHAR-BUNDLE 1`, then one line of JSON
    /// holding this struct.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{BUNDLE_MAGIC}\n").into_bytes();
        serde_json::to_writer(&mut out, self).expect("bundle serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes
            .strip_prefix(format!("{BUNDLE_MAGIC}\n").as_bytes())
            .ok_or_else(|| Error::Format("missing model bundle header".into()))?;
        serde_json::from_slice(body).map_err(|e| Error::Format(format!("model bundle: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Pose;
    use crate::preprocess::NormalizedSequence;

    fn seq(action: &str, vp: Viewpoint, poses: Vec<Pose>) -> LabeledSequence {
        LabeledSequence {
            seq: NormalizedSequence::from_poses(poses, Default::default()),
            action: action.into(),
            viewpoint: vp,
            actor: "1".into(),
            dataset: "t".into(),
        }
    }

    fn wavy_pose(t: usize, amp: f64) -> Pose {
        let mut c = [[0.0; 2]; 14];
        for (k, xy) in c.iter_mut().enumerate() {
            let phase = t as f64 * 0.4 + k as f64;
            *xy = [amp * phase.sin() + k as f64 * 0.1, amp * phase.cos() - 0.2 * k as f64];
        }
        c[1] = [0.0, 0.0];
        Pose::from_coords(c)
    }

    fn corpus() -> Vec<LabeledSequence> {
        let mut out = Vec::new();
        for (a, amp) in [("a", 0.3), ("b", 0.8)] {
            for vp in [Viewpoint::Front, Viewpoint::Left] {
                out.push(seq(a, vp, (0..30).map(|t| wavy_pose(t, amp)).collect()));
            }
        }
        out
    }

    #[test]
    fn library_size_bounded() {
        let train = corpus();
        let actions = vec!["a".to_string(), "b".to_string()];
        let bundle = ModelBundle::fit(&train, &actions, &SomConfig::default()).unwrap();
        for lib in bundle.spatial.iter().chain(&bundle.temporal) {
            assert!(!lib.prototypes.is_empty());
            assert!(lib.prototypes.len() <= 2 * 64);
            for vp in [Viewpoint::Front, Viewpoint::Left] {
                let n = lib.prototypes.iter().filter(|p| p.viewpoint == vp).count();
                assert!((1..=64).contains(&n));
            }
        }
    }

    #[test]
    fn identical_frames_make_one_prototype() {
        let pose = wavy_pose(3, 0.5);
        let train = vec![seq("a", Viewpoint::Front, vec![pose; 12])];
        let vectors: Vec<FeatureVector> = feature_vectors(&train[0], LibraryKind::Spatial);
        let mut spread = vectors.clone();
        spread.extend((0..10).map(|t| unroll(&wavy_pose(t, 1.0))));
        let pca = fit_pca(&spread, 3).unwrap();
        let (protos, _) = cell_prototypes(&vectors, Viewpoint::Front, &pca, &SomConfig::default()).unwrap();
        assert_eq!(protos.len(), 1);
        for (a, b) in protos[0].full.iter().zip(unroll(&pose)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(protos[0].weight, 12);
    }

    #[test]
    fn two_point_cluster_is_midpoint() {
        let a = unroll(&wavy_pose(0, 0.5));
        let b = unroll(&wavy_pose(1, 0.5));
        let spread: Vec<FeatureVector> = (0..10).map(|t| unroll(&wavy_pose(t, 1.0))).collect();
        let pca = fit_pca(&spread, 3).unwrap();
        let cfg = SomConfig {
            q: 1,
            ..Default::default()
        };
        let (protos, _) = cell_prototypes(&[a, b], Viewpoint::Front, &pca, &cfg).unwrap();
        assert_eq!(protos.len(), 1);
        for k in 0..FEATURE_DIM {
            assert!((protos[0].full[k] - (a[k] + b[k]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prototypes_are_cluster_means() {
        let train = corpus();
        let vectors: Vec<FeatureVector> = train
            .iter()
            .flat_map(|s| feature_vectors(s, LibraryKind::Spatial))
            .collect();
        let pca = fit_pca(&vectors, 3).unwrap();
        let (protos, assign) = cell_prototypes(&vectors, Viewpoint::Front, &pca, &SomConfig::default()).unwrap();
        let mut used: Vec<usize> = assign.clone();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), protos.len());
        for (p, &unit) in protos.iter().zip(&used) {
            let members: Vec<&FeatureVector> = vectors
                .iter()
                .zip(&assign)
                .filter(|(_, &k)| k == unit)
                .map(|(v, _)| v)
                .collect();
            assert_eq!(members.len(), p.weight);
            for k in 0..FEATURE_DIM {
                let mean = members.iter().map(|v| v[k]).sum::<f64>() / members.len() as f64;
                assert!((p.full[k] - mean).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_action_is_an_error() {
        let train = corpus();
        let actions = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        assert!(matches!(
            ModelBundle::fit(&train, &actions, &SomConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bundle_round_trip() {
        let train = corpus();
        let actions = vec!["a".to_string(), "b".to_string()];
        let cfg = SomConfig {
            q: 2,
            epochs: 3,
            ..Default::default()
        };
        let bundle = ModelBundle::fit(&train, &actions, &cfg).unwrap();
        let back = ModelBundle::from_bytes(&bundle.to_bytes()).unwrap();
        assert_eq!(back, bundle);
        assert!(ModelBundle::from_bytes(b"nope").is_err());
    }
}
