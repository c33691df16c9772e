//! Pose unrolling and principal component analysis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{LandmarkId, Pose, NUM_LANDMARKS};
use crate::preprocess::Displacement;

/// Unrolled pose without the root: `(x1, y1, x3, y3, ..., x14, y14)`.
pub const FEATURE_DIM: usize = 2 * NUM_LANDMARKS - 2;

pub type FeatureVector = [f64; FEATURE_DIM];

/// Offset of a landmark's x coordinate inside a [`FeatureVector`], or
/// `None` for the root.
pub fn feature_offset(id: LandmarkId) -> Option<usize> {
    match id.slot() {
        0 => Some(0),
        1 => None,
        s => Some(2 * (s - 1)),
    }
}

fn unroll_pairs(coords: &[[f64; 2]; NUM_LANDMARKS], present: impl Fn(LandmarkId) -> bool) -> FeatureVector {
    let mut v = [0.0; FEATURE_DIM];
    for id in LandmarkId::all() {
        if let Some(off) = feature_offset(id) {
            if present(id) {
                v[off] = coords[id.slot()][0];
                v[off + 1] = coords[id.slot()][1];
            }
        }
    }
    v
}

/// Unroll a normalized pose; absent landmarks enter as `(0, 0)`.
pub fn unroll(pose: &Pose) -> FeatureVector {
    unroll_pairs(pose.coords(), |id| pose.is_present(id))
}

pub fn unroll_displacement(d: &Displacement) -> FeatureVector {
    unroll_pairs(d, |_| true)
}

/// Inverse of [`unroll`]: 14 landmark pairs with the root at the origin.
pub fn reroll(v: &FeatureVector) -> [[f64; 2]; NUM_LANDMARKS] {
    let mut out = [[0.0; 2]; NUM_LANDMARKS];
    for id in LandmarkId::all() {
        if let Some(off) = feature_offset(id) {
            out[id.slot()] = [v[off], v[off + 1]];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `m` orthonormal rows, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim());
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(ci, (vi, mi))| ci * (vi - mi))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, r) in self.components.iter().zip(reduced) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += r * ci;
            }
        }
        out
    }
}

/// Sample mean and (n-1)-normalized covariance of the rows.
pub fn mean_and_covariance<V: AsRef<[f64]>>(data: &[V]) -> (Vec<f64>, DMatrix<f64>) {
    let n = data.len();
    let dim = data[0].as_ref().len();
    let mut mean = vec![0.0; dim];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for row in data {
        for ((c, v), m) in centered.iter_mut().zip(row.as_ref()).zip(&mean) {
            *c = v - m;
        }
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// Flip a vector's sign so that its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Fit the top-`m` principal components of `data`.
pub fn fit_pca<V: AsRef<[f64]>>(data: &[V], m: usize) -> Result<PcaModel> {
    if data.len() < m + 1 || data.is_empty() {
        return Err(Error::InsufficientData(format!(
            "PCA with {m} components needs at least {} rows, got {}",
            m + 1,
            data.len()
        )));
    }
    let dim = data[0].as_ref().len();
    if m == 0 || m >= dim {
        return Err(Error::Config(format!("PCA components must be in 1..{dim}, got {m}")));
    }
    if data.iter().any(|r| r.as_ref().len() != dim) {
        return Err(Error::ShapeMismatch("PCA rows of unequal length".into()));
    }
    let (mean, cov) = mean_and_covariance(data);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Vec::with_capacity(m);
    let mut eigenvalues = Vec::with_capacity(m);
    for &k in order.iter().take(m) {
        let mut c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        canonical_sign(&mut c);
        components.push(c);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        total_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|k| rng.random_range(-1.0..1.0) * (1.0 + k as f64))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn unroll_layout() {
        let mut p = Pose::empty();
        p.set(LandmarkId::ROOT, [0.0, 0.0]);
        for id in LandmarkId::all().filter(|&id| id != LandmarkId::ROOT) {
            p.set(id, [0.0, 0.0]);
        }
        assert_eq!(unroll(&p), [0.0; FEATURE_DIM]);
        p.set(LandmarkId::HEAD, [0.0, -1.0]);
        let v = unroll(&p);
        assert_eq!(&v[0..2], &[0.0, -1.0]);
        assert_eq!(v.len(), 26);
        p.set(LandmarkId::new(14).unwrap(), [5.0, 6.0]);
        assert_eq!(&unroll(&p)[24..26], &[5.0, 6.0]);
        assert_eq!(reroll(&unroll(&p)), *p.coords());
    }

    #[test]
    fn rank_one_line() {
        let dir: Vec<f64> = (0..26).map(|k| ((k * 7 % 5) as f64) - 2.0).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let positions = [-2.0, -0.5, 0.0, 1.0, 3.5];
        let rows: Vec<Vec<f64>> = positions
            .iter()
            .map(|t| dir.iter().map(|d| 10.0 + t * d / norm).collect())
            .collect();
        let model = fit_pca(&rows, 1).unwrap();
        let dot: f64 = model.components[0].iter().zip(&dir).map(|(a, b)| a * b / norm).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-10);
        let mean_t = positions.iter().sum::<f64>() / 5.0;
        let sign = dot.signum();
        for (row, t) in rows.iter().zip(positions) {
            assert!((model.project(row)[0] - sign * (t - mean_t)).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_basics() {
        let rows = random_rows(40, 26, 1);
        let model = fit_pca(&rows, 3).unwrap();
        assert!(model.project(&model.mean).iter().all(|v| v.abs() < 1e-12));
        for k in 0..3 {
            let v: Vec<f64> = model
                .mean
                .iter()
                .zip(&model.components[k])
                .map(|(m, c)| m + c)
                .collect();
            let p = model.project(&v);
            for (j, pj) in p.iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((pj - want).abs() < 1e-9);
            }
        }
        for row in &rows {
            let p = model.project(row);
            let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dn = row
                .iter()
                .zip(&model.mean)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(pn <= dn + 1e-9);
        }
    }

    #[test]
    fn orthonormal_and_sorted() {
        let model = fit_pca(&random_rows(30, 26, 2), 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = model.components[i]
                    .iter()
                    .zip(&model.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8);
            }
            let c = &model.components[i];
            let big = c
                .iter()
                .copied()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
        assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn residual_variance_matches_eigenvalues() {
        let rows = random_rows(50, 26, 3);
        let model = fit_pca(&rows, 4).unwrap();
        let mut residual = 0.0;
        for row in &rows {
            let rec = model.reconstruct(&model.project(row));
            residual += row.iter().zip(&rec).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        residual /= (rows.len() - 1) as f64;
        let expected = model.total_variance - model.eigenvalues.iter().sum::<f64>();
        assert!((residual - expected).abs() <= 1e-6 * expected);
    }

    #[test]
    fn permutation_invariant() {
        let rows = random_rows(25, 26, 4);
        let mut rev = rows.clone();
        rev.reverse();
        let a = fit_pca(&rows, 3).unwrap();
        let b = fit_pca(&rev, 3).unwrap();
        for (ca, cb) in a.components.iter().zip(&b.components) {
            for (x, y) in ca.iter().zip(cb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn insufficient_data() {
        let rows = random_rows(3, 26, 5);
        assert!(matches!(fit_pca(&rows, 3), Err(Error::InsufficientData(_))));
        assert!(fit_pca(&rows, 2).is_ok());
    }
}
