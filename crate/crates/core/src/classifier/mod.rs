//! Multivariate sequence classifier with a temporal-convolution branch and a
//! recurrent branch with time attention.
//!
//! ```text
//!            ┌ conv → BN → ReLU (× blocks) → masked mean over time ┐
//! input ─────┤                                                      ├─ concat → dropout → affine → softmax
//!            └ LSTM over valid steps → attention-weighted state sum ┘
//! ```
//!
//! Inputs are standardized per channel with statistics from the training
//! set. Padded time steps (mask `false`) are zero, are re-zeroed after every
//! convolution block, are excluded from batch-norm statistics and pooling,
//! and are skipped by the recurrence and the attention.

mod network;
mod train;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingChannels;
use crate::error::{Error, Result};

pub use network::{forward, loss_and_grad, BatchNormStats, ForwardOutput, LossOutput};
pub use train::{evaluate, train, Adam, EpochRecord, TrainHistory};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// `(filters, kernel width)` per convolution block.
    pub conv_blocks: Vec<(usize, usize)>,
    pub recurrent_units: usize,
    pub attention: bool,
    pub dropout: f64,
    pub classes: usize,
    pub channels: usize,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Weight the loss by inverse class frequency.
    pub class_weights: bool,
    pub rng_seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            conv_blocks: vec![(64, 8), (128, 5), (64, 3)],
            recurrent_units: 32,
            attention: true,
            dropout: 0.5,
            classes: 2,
            channels: 1,
            lr: 1e-3,
            batch: 16,
            max_epochs: 100,
            patience: 10,
            class_weights: false,
            rng_seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.classes < 2 {
            return bad(format!("classifier needs at least 2 classes, got {}", self.classes));
        }
        if self.channels == 0 {
            return bad("classifier needs at least one input channel".into());
        }
        if self.conv_blocks.is_empty() || self.conv_blocks.iter().any(|&(f, k)| f == 0 || k == 0) {
            return bad("convolution blocks need filters >= 1 and kernel width >= 1".into());
        }
        if self.recurrent_units == 0 {
            return bad("recurrent_units must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0) || self.batch == 0 || self.max_epochs == 0 {
            return bad("lr, batch and max_epochs must be positive".into());
        }
        Ok(())
    }

    fn feature_dim(&self) -> usize {
        self.conv_blocks.last().map_or(0, |b| b.0) + self.recurrent_units
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    /// `(filters, in_channels, kernel)`.
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub conv: Vec<ConvBlock>,
    /// `(4H, C)`, gate order input, forget, cell, output.
    pub lstm_input: Array2<f64>,
    /// `(4H, H)`.
    pub lstm_recurrent: Array2<f64>,
    pub lstm_bias: Array1<f64>,
    pub attention: Array1<f64>,
    /// `(classes, F_last + H)`.
    pub dense_weight: Array2<f64>,
    pub dense_bias: Array1<f64>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        let mut p = other.clone();
        p.for_each_group_mut(|_, g| g.fill(0.0));
        p
    }

    /// Visit every parameter group as a flat slice, in a fixed order.
    pub fn for_each_group(&self, mut f: impl FnMut(&str, &[f64])) {
        for (i, b) in self.conv.iter().enumerate() {
            f(&format!("conv{i}.weight"), b.weight.as_slice().unwrap());
            f(&format!("conv{i}.bias"), b.bias.as_slice().unwrap());
            f(&format!("bn{i}.gamma"), b.gamma.as_slice().unwrap());
            f(&format!("bn{i}.beta"), b.beta.as_slice().unwrap());
        }
        f("lstm.input", self.lstm_input.as_slice().unwrap());
        f("lstm.recurrent", self.lstm_recurrent.as_slice().unwrap());
        f("lstm.bias", self.lstm_bias.as_slice().unwrap());
        f("attention", self.attention.as_slice().unwrap());
        f("dense.weight", self.dense_weight.as_slice().unwrap());
        f("dense.bias", self.dense_bias.as_slice().unwrap());
    }

    pub fn for_each_group_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (i, b) in self.conv.iter_mut().enumerate() {
            f(&format!("conv{i}.weight"), b.weight.as_slice_mut().unwrap());
            f(&format!("conv{i}.bias"), b.bias.as_slice_mut().unwrap());
            f(&format!("bn{i}.gamma"), b.gamma.as_slice_mut().unwrap());
            f(&format!("bn{i}.beta"), b.beta.as_slice_mut().unwrap());
        }
        f("lstm.input", self.lstm_input.as_slice_mut().unwrap());
        f("lstm.recurrent", self.lstm_recurrent.as_slice_mut().unwrap());
        f("lstm.bias", self.lstm_bias.as_slice_mut().unwrap());
        f("attention", self.attention.as_slice_mut().unwrap());
        f("dense.weight", self.dense_weight.as_slice_mut().unwrap());
        f("dense.bias", self.dense_bias.as_slice_mut().unwrap());
    }

    pub fn group_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_group(|n, _| names.push(n.to_string()));
        names
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_group(|_, g| ok &= g.iter().all(|v| v.is_finite()));
        ok
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.for_each_group(|_, g| n += g.len());
        n
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape_len: usize, bound: f64) -> Vec<f64> {
    (0..shape_len).map(|_| rng.random_range(-bound..bound)).collect()
}

impl Params {
    /// Glorot-uniform weights, zero biases, unit batch-norm scale and a
    /// forget-gate bias of 1.
    pub fn init(cfg: &ClassifierConfig) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let mut conv = Vec::with_capacity(cfg.conv_blocks.len());
        let mut c_in = cfg.channels;
        for &(f, k) in &cfg.conv_blocks {
            let bound = (6.0 / ((c_in * k + f * k) as f64)).sqrt();
            conv.push(ConvBlock {
                weight: Array3::from_shape_vec((f, c_in, k), uniform(&mut rng, f * c_in * k, bound)).unwrap(),
                bias: Array1::zeros(f),
                gamma: Array1::ones(f),
                beta: Array1::zeros(f),
            });
            c_in = f;
        }
        let h = cfg.recurrent_units;
        let c = cfg.channels;
        let b_in = (6.0 / ((c + 4 * h) as f64)).sqrt();
        let b_rec = (6.0 / ((h + 4 * h) as f64)).sqrt();
        let mut lstm_bias = Array1::zeros(4 * h);
        lstm_bias.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
        let d = cfg.feature_dim();
        let b_dense = (6.0 / ((d + cfg.classes) as f64)).sqrt();
        Params {
            conv,
            lstm_input: Array2::from_shape_vec((4 * h, c), uniform(&mut rng, 4 * h * c, b_in)).unwrap(),
            lstm_recurrent: Array2::from_shape_vec((4 * h, h), uniform(&mut rng, 4 * h * h, b_rec)).unwrap(),
            lstm_bias,
            attention: Array1::from(uniform(&mut rng, h, (3.0 / h as f64).sqrt())),
            dense_weight: Array2::from_shape_vec((cfg.classes, d), uniform(&mut rng, cfg.classes * d, b_dense))
                .unwrap(),
            dense_bias: Array1::zeros(cfg.classes),
        }
    }
}

/// Per-channel affine standardization applied before the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(channels: usize) -> Self {
        Standardizer {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Mean and standard deviation over all (unpadded) time steps.
    pub fn fit(series: &[Array2<f64>]) -> Self {
        let c = series.first().map_or(0, |s| s.nrows());
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut n = 0usize;
        for s in series {
            for (k, row) in s.outer_iter().enumerate() {
                for v in row {
                    sum[k] += v;
                    sq[k] += v * v;
                }
            }
            n += s.ncols();
        }
        let n = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var.sqrt() > 1e-8 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }
}

/// A padded mini-batch. Masked-out positions hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    /// `(batch, channels, T_max)`.
    pub series: Array3<f64>,
    /// `(batch, T_max)`, `true` at valid steps.
    pub mask: Array2<bool>,
    pub labels: Vec<usize>,
}

impl PaddedBatch {
    /// Pad `(channels, T_i)` series to a common length `max(T_i, min_len)`.
    pub fn new(series: &[&Array2<f64>], labels: Vec<usize>, min_len: usize) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        let c = series[0].nrows();
        if series.iter().any(|s| s.nrows() != c) {
            return Err(Error::ShapeMismatch("series with different channel counts".into()));
        }
        if series.iter().any(|s| s.ncols() == 0) {
            return Err(Error::ShapeMismatch("zero-length series".into()));
        }
        let t_max = series.iter().map(|s| s.ncols()).max().unwrap().max(min_len);
        let mut out = Array3::zeros((series.len(), c, t_max));
        let mut mask = Array2::from_elem((series.len(), t_max), false);
        for (b, s) in series.iter().enumerate() {
            out.slice_mut(ndarray::s![b, .., ..s.ncols()]).assign(s);
            mask.slice_mut(ndarray::s![b, ..s.ncols()]).fill(true);
        }
        Ok(PaddedBatch {
            series: out,
            mask,
            labels,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.series.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.series.shape()[1]
    }

    pub fn t_max(&self) -> usize {
        self.series.shape()[2]
    }
}

/// Channel-major `(channels, T)` matrix from embedding channels.
pub fn channels_to_array(ch: &EmbeddingChannels) -> Array2<f64> {
    let mut a = Array2::zeros((ch.channels(), ch.len));
    for (c, row) in ch.data.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            a[(c, t)] = *v;
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub params: Params,
    /// Running batch-norm mean and variance per block.
    pub running: Vec<(Array1<f64>, Array1<f64>)>,
    pub standardizer: Standardizer,
    pub class_names: Vec<String>,
    pub channel_names: Vec<String>,
}

impl ClassifierModel {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config);
        let running = config
            .conv_blocks
            .iter()
            .map(|&(f, _)| (Array1::zeros(f), Array1::ones(f)))
            .collect();
        Ok(ClassifierModel {
            standardizer: Standardizer::identity(config.channels),
            class_names: (0..config.classes).map(|c| c.to_string()).collect(),
            channel_names: Vec::new(),
            config,
            params,
            running,
        })
    }

    /// Fold one training batch's statistics into the running estimates.
    pub fn update_running(&mut self, stats: &[BatchNormStats]) {
        for ((rm, rv), s) in self.running.iter_mut().zip(stats) {
            for k in 0..rm.len() {
                rm[k] = BN_MOMENTUM * rm[k] + (1.0 - BN_MOMENTUM) * s.mean[k];
                rv[k] = BN_MOMENTUM * rv[k] + (1.0 - BN_MOMENTUM) * s.var[k];
            }
        }
    }

    /// Class probabilities for one `(channels, T)` series (eval mode).
    pub fn probabilities(&self, series: &Array2<f64>) -> Result<Vec<f64>> {
        let batch = PaddedBatch::new(&[series], vec![0], 0)?;
        let out = forward(self, &batch, None)?;
        Ok(out.probs.row(0).to_vec())
    }

    /// Most probable class (lowest index on ties) and the probabilities.
    pub fn predict(&self, series: &Array2<f64>) -> Result<(usize, Vec<f64>)> {
        let probs = self.probabilities(series)?;
        Ok((argmax(&probs), probs))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            config: self.config.clone(),
            standardizer: self.standardizer.clone(),
            class_names: self.class_names.clone(),
            channel_names: self.channel_names.clone(),
            groups: {
                let mut g = Vec::new();
                self.params.for_each_group(|n, v| g.push((n.to_string(), v.len())));
                g
            },
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut push = |v: &[f64]| {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        self.params.for_each_group(|_, v| push(v));
        for (m, v) in &self.running {
            push(m.as_slice().unwrap());
            push(v.as_slice().unwrap());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("classifier model: {m}"));
        let rest = bytes.strip_prefix(MODEL_MAGIC).ok_or_else(|| fmt("bad magic"))?;
        if rest.len() < 12 {
            return Err(fmt("truncated header"));
        }
        let version = u32::from_le_bytes(rest[0..4].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(fmt(&format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(rest[4..12].try_into().unwrap()) as usize;
        let rest = &rest[12..];
        if rest.len() < len {
            return Err(fmt("truncated header"));
        }
        let header: ModelHeader = serde_json::from_slice(&rest[..len]).map_err(|e| fmt(&e.to_string()))?;
        let mut values = rest[len..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut model = ClassifierModel::new(header.config)?;
        let mut expected = Vec::new();
        model
            .params
            .for_each_group(|n, v| expected.push((n.to_string(), v.len())));
        if expected != header.groups {
            return Err(fmt("parameter layout does not match configuration"));
        }
        let mut short = false;
        let mut fill = |dst: &mut [f64]| {
            for d in dst {
                match values.next() {
                    Some(v) => *d = v,
                    None => short = true,
                }
            }
        };
        model.params.for_each_group_mut(|_, g| fill(g));
        for (m, v) in &mut model.running {
            fill(m.as_slice_mut().unwrap());
            fill(v.as_slice_mut().unwrap());
        }
        if short || values.next().is_some() {
            return Err(fmt("parameter payload has the wrong length"));
        }
        model.standardizer = header.standardizer;
        model.class_names = header.class_names;
        model.channel_names = header.channel_names;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Model file layout, all integers little-endian:
///
/// ```text
/// b"POSEHAR-CLF\n"  magic (12 bytes)
/// u32               format version (1)
/// u64               header length N
/// N bytes           JSON header: config, standardizer, class and channel
///                   names, parameter group names and lengths
/// f64 * ...         parameter groups in header order, then running
///                   batch-norm mean and variance per block
/// ```
const MODEL_MAGIC: &[u8] = b"POSEHAR-CLF\n";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    config: ClassifierConfig,
    standardizer: Standardizer,
    class_names: Vec<String>,
    channel_names: Vec<String>,
    groups: Vec<(String, usize)>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
