use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{evaluate_batch, loss_and_grad};
use super::{ClassifierConfig, ClassifierModel, PaddedBatch, Params, Standardizer};
use crate::error::{Error, Result};

/// Adam with the usual constants (beta1 0.9, beta2 0.999, eps 1e-8) and
/// bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, params: &Params) -> Self {
        let n = params.count();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn update(&mut self, params: &mut Params, grad: &Params) {
        self.step += 1;
        let mut g = Vec::with_capacity(self.m.len());
        grad.for_each_group(|_, v| g.extend_from_slice(v));
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut i = 0;
        params.for_each_group_mut(|_, p| {
            for x in p.iter_mut() {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
                *x -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
                i += 1;
            }
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

const EVAL_BATCH: usize = 64;

/// Eval-mode mean loss and accuracy.
pub fn evaluate(model: &ClassifierModel, data: &[(Array2<f64>, usize)]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in data.chunks(EVAL_BATCH) {
        let series: Vec<&Array2<f64>> = chunk.iter().map(|(s, _)| s).collect();
        let batch = PaddedBatch::new(&series, chunk.iter().map(|(_, y)| *y).collect(), 0)?;
        let (l, c) = evaluate_batch(model, &batch)?;
        loss += l;
        correct += c;
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

fn inverse_frequency(labels: impl Iterator<Item = usize>, classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    let mut n = 0;
    for y in labels {
        counts[y] += 1;
        n += 1;
    }
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n as f64 / (classes * c) as f64 })
        .collect()
}

/// Mini-batch Adam on `(channels, T)` series with integer labels. After each
/// epoch the model is scored on `val`; an epoch improves if validation
/// accuracy rises, or stays equal while validation loss falls. Training stops
/// once more than `patience` consecutive epochs fail to improve, and the
/// weights of the best epoch are returned.
pub fn train(
    config: &ClassifierConfig,
    train: &[(Array2<f64>, usize)],
    val: &[(Array2<f64>, usize)],
) -> Result<(ClassifierModel, TrainHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::TooFewSamples(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut model = ClassifierModel::new(config.clone())?;
    if let Some((s, _)) = train.iter().chain(val).find(|(s, _)| s.nrows() != config.channels) {
        return Err(Error::ShapeMismatch(format!(
            "series has {} channels, config expects {}",
            s.nrows(),
            config.channels
        )));
    }
    if let Some((_, y)) = train.iter().chain(val).find(|(_, y)| *y >= config.classes) {
        return Err(Error::ShapeMismatch(format!("label {y} out of range")));
    }
    let series: Vec<Array2<f64>> = train.iter().map(|(s, _)| s.clone()).collect();
    model.standardizer = Standardizer::fit(&series);
    let weights = config
        .class_weights
        .then(|| inverse_frequency(train.iter().map(|(_, y)| *y), config.classes));

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut opt = Adam::new(config.lr, &model.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64, ClassifierModel)> = None;
    let mut waited = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(config.batch) {
            let s: Vec<&Array2<f64>> = idx.iter().map(|&i| &train[i].0).collect();
            let batch = PaddedBatch::new(&s, idx.iter().map(|&i| train[i].1).collect(), 0)?;
            let out = match loss_and_grad(&model, &batch, rng.random(), weights.as_deref()) {
                Ok(o) => o,
                Err(Error::NonFiniteLoss) => return Err(Error::Diverged(epoch)),
                Err(e) => return Err(e),
            };
            opt.update(&mut model.params, &out.grad);
            model.update_running(&out.bn_stats);
            if !model.params.is_finite() {
                return Err(Error::Diverged(epoch));
            }
            loss_sum += out.loss * idx.len() as f64;
        }
        let (val_loss, val_accuracy) = evaluate(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_accuracy,
        });
        log::debug!(
            "epoch {epoch}: loss {:.4} val acc {val_accuracy:.3}",
            loss_sum / train.len() as f64
        );
        let improved = match &best {
            None => true,
            Some((acc, loss, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss),
        };
        if improved {
            best = Some((val_accuracy, val_loss, model.clone()));
            history.best_epoch = epoch;
            waited = 0;
        } else {
            waited += 1;
            if waited > config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (_, _, model) = best.expect("at least one epoch ran");
    Ok((model, history))
}
