use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassifierModel, PaddedBatch, Params, BN_EPS};
use crate::error::{Error, Result};

/// Batch-norm statistics of one training batch, per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `(batch, classes)`.
    pub probs: Array2<f64>,
    /// `(batch, classes)` pre-softmax scores.
    pub logits: Array2<f64>,
    /// `(batch, T_max)` time weights of the recurrent branch, 0 at padding.
    pub attention: Array2<f64>,
    /// Empty in eval mode.
    pub bn_stats: Vec<BatchNormStats>,
    cache: Cache,
}

#[derive(Debug, Clone)]
struct ConvCache {
    col: Array2<f64>,
    z_hat: Array2<f64>,
    y: Array2<f64>,
    inv_std: Array1<f64>,
    kernel: usize,
}

#[derive(Debug, Clone)]
struct Step {
    col: usize,
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Cache {
    b: usize,
    t: usize,
    mask: Vec<f64>,
    steps_valid: Vec<Vec<usize>>,
    input: Array2<f64>,
    conv: Vec<ConvCache>,
    last: Array2<f64>,
    lstm: Vec<Vec<Step>>,
    dropped: Array2<f64>,
    dropout_scale: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Columns are `b * t + step`; same-padded with zeros on both ends.
fn im2col(a: &Array2<f64>, b: usize, t: usize, k: usize) -> Array2<f64> {
    let cin = a.nrows();
    let pl = (k - 1) / 2;
    let mut col = Array2::zeros((cin * k, b * t));
    for ci in 0..cin {
        let src = a.row(ci);
        let src = src.as_slice().unwrap();
        for kk in 0..k {
            let mut dst = col.row_mut(ci * k + kk);
            let dst = dst.as_slice_mut().unwrap();
            for bi in 0..b {
                let base = bi * t;
                for tt in 0..t {
                    let s = tt + kk;
                    if s >= pl && s - pl < t {
                        dst[base + tt] = src[base + s - pl];
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &Array2<f64>, cin: usize, b: usize, t: usize, k: usize) -> Array2<f64> {
    let pl = (k - 1) / 2;
    let mut a = Array2::zeros((cin, b * t));
    for ci in 0..cin {
        let mut dst = a.row_mut(ci);
        let dst = dst.as_slice_mut().unwrap();
        for kk in 0..k {
            let src = col.row(ci * k + kk);
            let src = src.as_slice().unwrap();
            for bi in 0..b {
                let base = bi * t;
                for tt in 0..t {
                    let s = tt + kk;
                    if s >= pl && s - pl < t {
                        dst[base + s - pl] += src[base + tt];
                    }
                }
            }
        }
    }
    a
}

/// Class probabilities. `dropout_seed = Some(_)` selects train mode: batch
/// statistics in batch-norm and a dropout mask drawn from that seed.
pub fn forward(model: &ClassifierModel, batch: &PaddedBatch, dropout_seed: Option<u64>) -> Result<ForwardOutput> {
    let cfg = &model.config;
    let (b, c, t) = (batch.batch_size(), batch.channels(), batch.t_max());
    if c != cfg.channels || model.standardizer.mean.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "batch has {c} channels, model expects {}",
            cfg.channels
        )));
    }
    if batch.mask.dim() != (b, t) || batch.labels.len() != b {
        return Err(Error::ShapeMismatch("mask or labels do not match the series".into()));
    }
    let train = dropout_seed.is_some();
    let n = b * t;

    let mut mask = vec![0.0; n];
    let mut steps_valid = Vec::with_capacity(b);
    for bi in 0..b {
        let valid: Vec<usize> = (0..t).filter(|&tt| batch.mask[(bi, tt)]).collect();
        if valid.is_empty() {
            return Err(Error::ShapeMismatch(format!("batch row {bi} has no valid time step")));
        }
        for &tt in &valid {
            mask[bi * t + tt] = 1.0;
        }
        steps_valid.push(valid);
    }
    let n_valid: f64 = mask.iter().sum();

    let mut input = Array2::zeros((c, n));
    for ci in 0..c {
        let (m, s) = (model.standardizer.mean[ci], model.standardizer.std[ci]);
        for bi in 0..b {
            for &tt in &steps_valid[bi] {
                input[(ci, bi * t + tt)] = (batch.series[(bi, ci, tt)] - m) / s;
            }
        }
    }

    // convolution branch
    let mut a = input.clone();
    let mut conv = Vec::with_capacity(cfg.conv_blocks.len());
    let mut bn_stats = Vec::new();
    for (l, block) in model.params.conv.iter().enumerate() {
        let (f, cin, k) = block.weight.dim();
        let col = im2col(&a, b, t, k);
        let w2 = block.weight.view().into_shape_with_order((f, cin * k)).unwrap();
        let mut z = w2.dot(&col);
        for fi in 0..f {
            z.row_mut(fi).mapv_inplace(|v| v + block.bias[fi]);
        }
        let (mean, var) = if train {
            let mut mean = Array1::zeros(f);
            let mut var = Array1::zeros(f);
            for fi in 0..f {
                let row = z.row(fi);
                let mu = row.iter().zip(&mask).map(|(v, m)| v * m).sum::<f64>() / n_valid;
                let s2 = row.iter().zip(&mask).map(|(v, m)| m * (v - mu) * (v - mu)).sum::<f64>() / n_valid;
                mean[fi] = mu;
                var[fi] = s2;
            }
            bn_stats.push(BatchNormStats {
                mean: mean.clone(),
                var: var.clone(),
            });
            (mean, var)
        } else {
            model.running[l].clone()
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut z_hat = z;
        let mut y = Array2::zeros((f, n));
        let mut out = Array2::zeros((f, n));
        for fi in 0..f {
            let (mu, is, g, be) = (mean[fi], inv_std[fi], block.gamma[fi], block.beta[fi]);
            for j in 0..n {
                let zh = (z_hat[(fi, j)] - mu) * is;
                z_hat[(fi, j)] = zh;
                let yy = g * zh + be;
                y[(fi, j)] = yy;
                out[(fi, j)] = yy.max(0.0) * mask[j];
            }
        }
        conv.push(ConvCache {
            col,
            z_hat,
            y,
            inv_std,
            kernel: k,
        });
        a = out;
    }
    let f_last = a.nrows();
    let mut pooled = Array2::zeros((b, f_last));
    for bi in 0..b {
        let len = steps_valid[bi].len() as f64;
        for fi in 0..f_last {
            pooled[(bi, fi)] = steps_valid[bi].iter().map(|&tt| a[(fi, bi * t + tt)]).sum::<f64>() / len;
        }
    }

    // recurrent branch
    let h_units = cfg.recurrent_units;
    let w_in = model.params.lstm_input.as_slice().unwrap();
    let w_rec = model.params.lstm_recurrent.as_slice().unwrap();
    let bias = model.params.lstm_bias.as_slice().unwrap();
    let mut lstm = Vec::with_capacity(b);
    let mut attention = Array2::zeros((b, t));
    let mut context = Array2::zeros((b, h_units));
    let mut x = vec![0.0; c];
    for bi in 0..b {
        let mut steps: Vec<Step> = Vec::with_capacity(steps_valid[bi].len());
        for &tt in &steps_valid[bi] {
            let colj = bi * t + tt;
            for ci in 0..c {
                x[ci] = input[(ci, colj)];
            }
            let zeros = vec![0.0; h_units];
            let (h_prev, c_prev) = match steps.last() {
                Some(s) => (&s.h, &s.c),
                None => (&zeros, &zeros),
            };
            let mut gates = bias.to_vec();
            for (r, g) in gates.iter_mut().enumerate() {
                let wi = &w_in[r * c..(r + 1) * c];
                let wr = &w_rec[r * h_units..(r + 1) * h_units];
                *g += wi.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
                    + wr.iter().zip(h_prev).map(|(w, v)| w * v).sum::<f64>();
            }
            let mut cs = vec![0.0; h_units];
            let mut hs = vec![0.0; h_units];
            for u in 0..h_units {
                let ig = sigmoid(gates[u]);
                let fg = sigmoid(gates[h_units + u]);
                let gg = gates[2 * h_units + u].tanh();
                let og = sigmoid(gates[3 * h_units + u]);
                gates[u] = ig;
                gates[h_units + u] = fg;
                gates[2 * h_units + u] = gg;
                gates[3 * h_units + u] = og;
                cs[u] = fg * c_prev[u] + ig * gg;
                hs[u] = og * cs[u].tanh();
            }
            steps.push(Step {
                col: colj,
                gates,
                c: cs,
                h: hs,
            });
        }
        if cfg.attention {
            let v = &model.params.attention;
            let scores: Vec<f64> = steps
                .iter()
                .map(|s| s.h.iter().zip(v.iter()).map(|(h, w)| h * w).sum())
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for (s, (&tt, ei)) in steps.iter().zip(steps_valid[bi].iter().zip(&e)) {
                let alpha = ei / z;
                attention[(bi, tt)] = alpha;
                for u in 0..h_units {
                    context[(bi, u)] += alpha * s.h[u];
                }
            }
        } else {
            let last = steps.last().unwrap();
            attention[(bi, *steps_valid[bi].last().unwrap())] = 1.0;
            for u in 0..h_units {
                context[(bi, u)] = last.h[u];
            }
        }
        lstm.push(steps);
    }

    // head
    let mut features = Array2::zeros((b, f_last + h_units));
    features.slice_mut(ndarray::s![.., ..f_last]).assign(&pooled);
    features.slice_mut(ndarray::s![.., f_last..]).assign(&context);
    let mut dropout_scale = Array2::ones(features.dim());
    if let Some(seed) = dropout_seed {
        let p = cfg.dropout;
        if p > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            dropout_scale.mapv_inplace(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) });
        }
    }
    let dropped = &features * &dropout_scale;
    let mut logits = dropped.dot(&model.params.dense_weight.t());
    logits += &model.params.dense_bias;
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row /= s;
    }

    Ok(ForwardOutput {
        probs,
        logits,
        attention,
        bn_stats,
        cache: Cache {
            b,
            t,
            mask,
            steps_valid,
            input,
            conv,
            last: a,
            lstm,
            dropped,
            dropout_scale,
        },
    })
}

/// Per-sample cross-entropy from logits, via log-sum-exp.
pub(crate) fn sample_losses(logits: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Params,
    pub bn_stats: Vec<BatchNormStats>,
    pub probs: Array2<f64>,
}

/// Weighted mean cross-entropy in train mode and its gradient with respect
/// to every parameter. The dropout mask is a pure function of
/// `dropout_seed`. `class_weights` scales each sample's term; the mean is
/// normalized by the summed weights.
pub fn loss_and_grad(
    model: &ClassifierModel,
    batch: &PaddedBatch,
    dropout_seed: u64,
    class_weights: Option<&[f64]>,
) -> Result<LossOutput> {
    let classes = model.config.classes;
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::ShapeMismatch(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let out = forward(model, batch, Some(dropout_seed))?;
    let Cache {
        b,
        t,
        ref mask,
        ref steps_valid,
        ref input,
        ref conv,
        ref last,
        ref lstm,
        ref dropped,
        ref dropout_scale,
    } = out.cache;
    let weights: Vec<f64> = batch
        .labels
        .iter()
        .map(|&y| class_weights.map_or(1.0, |w| w[y]))
        .collect();
    let w_sum: f64 = weights.iter().sum();
    if !(w_sum > 0.0) {
        return Err(Error::ShapeMismatch("class weights of the batch sum to zero".into()));
    }
    let losses = sample_losses(&out.logits, &batch.labels);
    let loss = losses.iter().zip(&weights).map(|(l, w)| l * w).sum::<f64>() / w_sum;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }

    let p = &model.params;
    let mut grad = Params::zeros_like(p);

    // head
    let mut dlogits = out.probs.clone();
    for (bi, &y) in batch.labels.iter().enumerate() {
        dlogits[(bi, y)] -= 1.0;
        let s = weights[bi] / w_sum;
        dlogits.row_mut(bi).mapv_inplace(|v| v * s);
    }
    grad.dense_weight = dlogits.t().dot(dropped);
    grad.dense_bias = dlogits.sum_axis(Axis(0));
    let dfeat = dlogits.dot(&p.dense_weight) * dropout_scale;
    let f_last = last.nrows();
    let h_units = model.config.recurrent_units;
    let c = input.nrows();

    // recurrent branch
    let w_rec = p.lstm_recurrent.as_slice().unwrap();
    let v = &p.attention;
    for bi in 0..b {
        let steps = &lstm[bi];
        let dctx: Vec<f64> = (0..h_units).map(|u| dfeat[(bi, f_last + u)]).collect();
        let mut dh_ext = vec![vec![0.0; h_units]; steps.len()];
        if model.config.attention {
            let alphas: Vec<f64> = steps_valid[bi].iter().map(|&tt| out.attention[(bi, tt)]).collect();
            let dalpha: Vec<f64> = steps
                .iter()
                .map(|s| s.h.iter().zip(&dctx).map(|(h, d)| h * d).sum())
                .collect();
            let avg: f64 = alphas.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
            for (si, s) in steps.iter().enumerate() {
                let de = alphas[si] * (dalpha[si] - avg);
                for u in 0..h_units {
                    grad.attention[u] += de * s.h[u];
                    dh_ext[si][u] = alphas[si] * dctx[u] + de * v[u];
                }
            }
        } else {
            *dh_ext.last_mut().unwrap() = dctx;
        }
        let mut dh_next = vec![0.0; h_units];
        let mut dc_next = vec![0.0; h_units];
        let mut dpre = vec![0.0; 4 * h_units];
        for si in (0..steps.len()).rev() {
            let s = &steps[si];
            let zeros = vec![0.0; h_units];
            let (h_prev, c_prev) = if si > 0 {
                (&steps[si - 1].h, &steps[si - 1].c)
            } else {
                (&zeros, &zeros)
            };
            for u in 0..h_units {
                let (ig, fg, gg, og) = (
                    s.gates[u],
                    s.gates[h_units + u],
                    s.gates[2 * h_units + u],
                    s.gates[3 * h_units + u],
                );
                let dh = dh_ext[si][u] + dh_next[u];
                let tc = s.c[u].tanh();
                let dc = dc_next[u] + dh * og * (1.0 - tc * tc);
                dpre[u] = dc * gg * ig * (1.0 - ig);
                dpre[h_units + u] = dc * c_prev[u] * fg * (1.0 - fg);
                dpre[2 * h_units + u] = dc * ig * (1.0 - gg * gg);
                dpre[3 * h_units + u] = dh * tc * og * (1.0 - og);
                dc_next[u] = dc * fg;
            }
            let gi = grad.lstm_input.as_slice_mut().unwrap();
            for (r, &d) in dpre.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for ci in 0..c {
                    gi[r * c + ci] += d * input[(ci, s.col)];
                }
            }
            let gr = grad.lstm_recurrent.as_slice_mut().unwrap();
            for (r, &d) in dpre.iter().enumerate() {
                for u in 0..h_units {
                    gr[r * h_units + u] += d * h_prev[u];
                }
                grad.lstm_bias[r] += d;
            }
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            for (r, &d) in dpre.iter().enumerate() {
                for u in 0..h_units {
                    dh_next[u] += w_rec[r * h_units + u] * d;
                }
            }
        }
    }

    // convolution branch
    let n = b * t;
    let n_valid: f64 = mask.iter().sum();
    let mut dout = Array2::zeros((f_last, n));
    for bi in 0..b {
        let len = steps_valid[bi].len() as f64;
        for fi in 0..f_last {
            let d = dfeat[(bi, fi)] / len;
            for &tt in &steps_valid[bi] {
                dout[(fi, bi * t + tt)] = d;
            }
        }
    }
    for l in (0..conv.len()).rev() {
        let cc = &conv[l];
        let block = &p.conv[l];
        let (f, cin, k) = block.weight.dim();
        let mut dz = Array2::zeros((f, n));
        for fi in 0..f {
            let g = block.gamma[fi];
            let mut dgamma = 0.0;
            let mut dbeta = 0.0;
            let mut sum_dzh = 0.0;
            let mut sum_dzh_zh = 0.0;
            let mut dzh = vec![0.0; n];
            for j in 0..n {
                if mask[j] == 0.0 || cc.y[(fi, j)] <= 0.0 {
                    continue;
                }
                let dy = dout[(fi, j)];
                let zh = cc.z_hat[(fi, j)];
                dgamma += dy * zh;
                dbeta += dy;
                dzh[j] = dy * g;
                sum_dzh += dzh[j];
                sum_dzh_zh += dzh[j] * zh;
            }
            grad.conv[l].gamma[fi] = dgamma;
            grad.conv[l].beta[fi] = dbeta;
            let is = cc.inv_std[fi];
            for j in 0..n {
                if mask[j] != 0.0 {
                    dz[(fi, j)] = is / n_valid * (n_valid * dzh[j] - sum_dzh - cc.z_hat[(fi, j)] * sum_dzh_zh);
                }
            }
        }
        let dw = dz.dot(&cc.col.t());
        grad.conv[l].weight = dw.into_shape_with_order((f, cin, k)).unwrap();
        grad.conv[l].bias = dz.sum_axis(Axis(1));
        if l > 0 {
            let w2 = block.weight.view().into_shape_with_order((f, cin * k)).unwrap();
            let dcol = w2.t().dot(&dz);
            dout = col2im(&dcol, cin, b, t, cc.kernel);
        }
    }

    Ok(LossOutput {
        loss,
        grad,
        bn_stats: out.bn_stats,
        probs: out.probs,
    })
}

/// Eval-mode mean cross-entropy and correct count over `batch`.
pub(crate) fn evaluate_batch(model: &ClassifierModel, batch: &PaddedBatch) -> Result<(f64, usize)> {
    let out = forward(model, batch, None)?;
    let loss: f64 = sample_losses(&out.logits, &batch.labels).iter().sum();
    let correct = out
        .probs
        .rows()
        .into_iter()
        .zip(&batch.labels)
        .filter(|(row, &y)| super::argmax(row.as_slice().unwrap()) == y)
        .count();
    Ok((loss, correct))
}
