//! Self-organizing map on a hypercubic `q^m` lattice.

use nalgebra::SymmetricEigen;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce::{canonical_sign, mean_and_covariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SomInit {
    /// Regular lattice spanning the leading principal axes of the data.
    Linear,
    /// Units drawn uniformly inside the data's bounding box.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decay {
    /// `v(t) = v0 * exp(-t / T)` over `T` total steps.
    Exponential,
    /// `v(t) = v0 * (1 - t / T)`.
    Linear,
}

impl Decay {
    fn at(self, v0: f64, step: usize, total: usize) -> f64 {
        let frac = step as f64 / total as f64;
        match self {
            Decay::Exponential => v0 * (-frac).exp(),
            Decay::Linear => v0 * (1.0 - frac),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomConfig {
    /// Units per lattice dimension.
    pub q: usize,
    /// Lattice dimensionality; also the PCA output dimension.
    pub m: usize,
    /// Full passes over the data.
    pub epochs: usize,
    pub lr0: f64,
    pub lr_decay: Decay,
    /// Initial neighbourhood radius in lattice units; `q / 2` when unset.
    pub radius0: Option<f64>,
    pub radius_decay: Decay,
    pub init: SomInit,
    /// Finish with one batch update (neighbourhood-weighted means at the
    /// final radius).
    pub batch_refine: bool,
    pub rng_seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig {
            q: 4,
            m: 3,
            epochs: 20,
            lr0: 0.5,
            lr_decay: Decay::Exponential,
            radius0: None,
            radius_decay: Decay::Exponential,
            init: SomInit::Linear,
            batch_refine: true,
            rng_seed: 0,
        }
    }
}

impl SomConfig {
    pub fn units(&self) -> usize {
        self.q.pow(self.m as u32)
    }

    pub fn radius0(&self) -> f64 {
        self.radius0.unwrap_or(self.q as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 1 || self.m < 1 || self.epochs < 1 || !(self.lr0 > 0.0) {
            return Err(Error::Config(format!(
                "SOM needs q >= 1, m >= 1, epochs >= 1 and lr0 > 0 (got q={}, m={}, epochs={}, lr0={})",
                self.q, self.m, self.epochs, self.lr0
            )));
        }
        Ok(())
    }
}

/// Trained map plus the final best-matching unit of every input.
#[derive(Debug, Clone, PartialEq)]
pub struct SomResult {
    pub weights: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub initial_quantization_error: f64,
    pub final_quantization_error: f64,
}

/// Lattice coordinates of a unit (first coordinate varies fastest).
pub fn lattice_coords(unit: usize, q: usize, m: usize) -> Vec<usize> {
    let mut rest = unit;
    (0..m)
        .map(|_| {
            let c = rest % q;
            rest /= q;
            c
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest unit; the lowest index wins ties.
pub fn best_matching_unit(weights: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (u, w) in weights.iter().enumerate() {
        let d = sq_dist(w, x);
        if d < best_d {
            best_d = d;
            best = u;
        }
    }
    best
}

/// Mean distance from each input to its best-matching unit.
pub fn quantization_error<V: AsRef<[f64]>>(weights: &[Vec<f64>], data: &[V]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|x| {
            let x = x.as_ref();
            sq_dist(&weights[best_matching_unit(weights, x)], x).sqrt()
        })
        .sum();
    total / data.len() as f64
}

fn linear_init<V: AsRef<[f64]>>(data: &[V], cfg: &SomConfig) -> Vec<Vec<f64>> {
    let (mean, cov) = mean_and_covariance(data);
    let dim = mean.len();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<(f64, Vec<f64>)> = order
        .iter()
        .take(cfg.m.min(dim))
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            canonical_sign(&mut v);
            (eig.eigenvalues[k].max(0.0).sqrt(), v)
        })
        .collect();
    (0..cfg.units())
        .map(|u| {
            let coords = lattice_coords(u, cfg.q, cfg.m);
            let mut w = mean.clone();
            for (d, (sd, axis)) in axes.iter().enumerate() {
                let t = if cfg.q > 1 {
                    2.0 * coords[d] as f64 / (cfg.q - 1) as f64 - 1.0
                } else {
                    0.0
                };
                for (wi, ai) in w.iter_mut().zip(axis) {
                    *wi += t * sd * ai;
                }
            }
            w
        })
        .collect()
}

fn random_init<V: AsRef<[f64]>>(data: &[V], units: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dim = data[0].as_ref().len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in data {
        for (k, v) in x.as_ref().iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    (0..units)
        .map(|_| {
            (0..dim)
                .map(|k| lo[k] + rng.random::<f64>() * (hi[k] - lo[k]))
                .collect()
        })
        .collect()
}

/// Initial unit weights for `data` under `cfg`.
pub fn initial_weights<V: AsRef<[f64]>>(data: &[V], cfg: &SomConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    match cfg.init {
        SomInit::Linear => linear_init(data, cfg),
        SomInit::Random => random_init(data, cfg.units(), &mut rng),
    }
}

/// Online SOM training: one shuffled pass per epoch, Gaussian lattice
/// neighbourhood, decaying learning rate and radius.
pub fn train_som<V: AsRef<[f64]>>(data: &[V], cfg: &SomConfig) -> Result<SomResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("SOM needs at least one input".into()));
    }
    let dim = data[0].as_ref().len();
    if data.iter().any(|x| x.as_ref().len() != dim) {
        return Err(Error::ShapeMismatch("SOM inputs of unequal length".into()));
    }

    let units = cfg.units();
    let grid: Vec<Vec<f64>> = (0..units)
        .map(|u| lattice_coords(u, cfg.q, cfg.m).into_iter().map(|c| c as f64).collect())
        .collect();
    let grid_sq = |a: usize, b: usize| sq_dist(&grid[a], &grid[b]);

    let mut weights = initial_weights(data, cfg);
    let initial_quantization_error = quantization_error(&weights, data);

    // shuffling uses a stream separate from random initialization
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x005E_ED0F_5A4D);
    let total = cfg.epochs * data.len();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = data[i].as_ref();
            let lr = cfg.lr_decay.at(cfg.lr0, step, total);
            let radius = cfg.radius_decay.at(cfg.radius0(), step, total).max(1e-3);
            let two_r2 = 2.0 * radius * radius;
            let bmu = best_matching_unit(&weights, x);
            for (u, w) in weights.iter_mut().enumerate() {
                let h = (-grid_sq(u, bmu) / two_r2).exp();
                let rate = lr * h;
                for (wk, xk) in w.iter_mut().zip(x) {
                    *wk += rate * (xk - *wk);
                }
            }
            step += 1;
        }
    }

    if cfg.batch_refine {
        let radius = cfg.radius_decay.at(cfg.radius0(), total, total).max(1e-3);
        let two_r2 = 2.0 * radius * radius;
        let bmus: Vec<usize> = data.iter().map(|x| best_matching_unit(&weights, x.as_ref())).collect();
        let mut num = vec![vec![0.0; dim]; units];
        let mut den = vec![0.0; units];
        for (x, &b) in data.iter().zip(&bmus) {
            for u in 0..units {
                let h = (-grid_sq(u, b) / two_r2).exp();
                den[u] += h;
                for (nk, xk) in num[u].iter_mut().zip(x.as_ref()) {
                    *nk += h * xk;
                }
            }
        }
        for u in 0..units {
            if den[u] > 0.0 {
                for (wk, nk) in weights[u].iter_mut().zip(&num[u]) {
                    *wk = nk / den[u];
                }
            }
        }
    }

    let assignments: Vec<usize> = data.iter().map(|x| best_matching_unit(&weights, x.as_ref())).collect();
    let final_quantization_error = quantization_error(&weights, data);
    Ok(SomResult {
        weights,
        assignments,
        initial_quantization_error,
        final_quantization_error,
    })
}
