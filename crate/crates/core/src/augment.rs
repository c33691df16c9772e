//! Training-set augmentation: left/right pose flipping and Gaussian noising.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::LandmarkId;
use crate::preprocess::NormalizedSequence;
use crate::records::LabeledSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Noised copies per sample.
    pub z: usize,
    /// Noise standard deviation in normalized (torso-length) units.
    pub sigma: f64,
    pub flip: bool,
    /// Flip the noised copies as well as the originals.
    pub flip_noised: bool,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            z: 0,
            sigma: 0.0,
            flip: true,
            flip_noised: true,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Mirror a sequence about the vertical axis through the root. Viewpoint
/// labels swap left and right; the action label is kept.
pub fn flip(rec: &LabeledSequence) -> LabeledSequence {
    let poses = rec.seq.poses.iter().map(|p| p.mirrored()).collect();
    let missing = rec.seq.persistent_missing.iter().map(|id| id.mirror()).collect();
    LabeledSequence {
        seq: NormalizedSequence::from_poses(poses, missing),
        action: rec.action.clone(),
        viewpoint: rec.viewpoint.mirrored(),
        actor: rec.actor.clone(),
        dataset: rec.dataset.clone(),
    }
}

/// `z` noised copies of `seq`. Every present non-root coordinate receives an
/// independent N(0, sigma^2) draw; derivatives are recomputed from the
/// noised poses.
pub fn noise(seq: &NormalizedSequence, z: usize, sigma: f64, seed: u64) -> Vec<NormalizedSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    (0..z)
        .map(|_| {
            let poses = seq
                .poses
                .iter()
                .map(|p| {
                    p.map_present(|id, [x, y]| {
                        if id == LandmarkId::ROOT {
                            [x, y]
                        } else {
                            [x + normal.sample(&mut rng), y + normal.sample(&mut rng)]
                        }
                    })
                })
                .collect();
            NormalizedSequence::from_poses(poses, seq.persistent_missing.clone())
        })
        .collect()
}

/// Per-sample seed: splitmix64 of the base seed combined with the index.
pub fn sample_seed(base: u64, index: usize) -> u64 {
    let mut x = base ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Augment a training set. Output order: originals, then the noised copies
/// of each original in turn, then flipped versions of the preceding
/// (all of them, or only the originals when `flip_noised` is off).
pub fn augment(train: &[LabeledSequence], cfg: &AugmentConfig) -> Result<Vec<LabeledSequence>> {
    cfg.validate()?;
    let mut out: Vec<LabeledSequence> = train.to_vec();
    for (i, rec) in train.iter().enumerate() {
        for seq in noise(&rec.seq, cfg.z, cfg.sigma, sample_seed(cfg.rng_seed, i)) {
            out.push(LabeledSequence { seq, ..rec.clone() });
        }
    }
    if cfg.flip {
        let flip_count = if cfg.flip_noised { out.len() } else { train.len() };
        let flipped: Vec<_> = out[..flip_count].iter().map(flip).collect();
        out.extend(flipped);
    }
    Ok(out)
}
