#![allow(dead_code)]

use ndarray::Array2;
use posehar::classifier::{loss_and_grad, ClassifierConfig, ClassifierModel, PaddedBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor for relative error: gradients that are zero in exact
/// arithmetic (conv bias ahead of batch-norm) come out at roundoff level.
pub const REL_FLOOR: f64 = 1e-6;

pub fn toy_config() -> ClassifierConfig {
    ClassifierConfig {
        conv_blocks: vec![(5, 3), (4, 2)],
        recurrent_units: 3,
        attention: true,
        dropout: 0.5,
        classes: 3,
        channels: 4,
        rng_seed: 11,
        ..Default::default()
    }
}

/// 2 samples, T = 7, the second one masked after step 5.
pub fn toy_batch(seed: u64) -> PaddedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((4, 7), |_| rng.random_range(-2.0..2.0));
    let b = Array2::from_shape_fn((4, 5), |_| rng.random_range(-2.0..2.0));
    PaddedBatch::new(&[&a, &b], vec![1, 2], 7).unwrap()
}

fn perturbed(model: &ClassifierModel, group: &str, idx: usize, delta: f64) -> ClassifierModel {
    let mut m = model.clone();
    m.params.for_each_group_mut(|name, g| {
        if name == group {
            g[idx] += delta;
        }
    });
    m
}

/// Max relative error between backprop and central differences, per group.
pub fn gradient_check(model: &ClassifierModel, batch: &PaddedBatch, dropout_seed: u64) -> Vec<(String, f64)> {
    let analytic = loss_and_grad(model, batch, dropout_seed, None).unwrap().grad;
    let mut groups = Vec::new();
    analytic.for_each_group(|name, g| groups.push((name.to_string(), g.to_vec())));
    groups
        .into_iter()
        .map(|(name, grad)| {
            let mut worst: f64 = 0.0;
            for (i, a) in grad.iter().enumerate() {
                let up = loss_and_grad(&perturbed(model, &name, i, FD_STEP), batch, dropout_seed, None)
                    .unwrap()
                    .loss;
                let down = loss_and_grad(&perturbed(model, &name, i, -FD_STEP), batch, dropout_seed, None)
                    .unwrap()
                    .loss;
                let n = (up - down) / (2.0 * FD_STEP);
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
                worst = worst.max(rel);
            }
            (name, worst)
        })
        .collect()
}

/// Random model with non-trivial batch-norm running statistics.
pub fn perturbed_running(model: &mut ClassifierModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (m, v) in &mut model.running {
        m.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        v.mapv_inplace(|_| rng.random_range(0.5..2.0));
    }
}
