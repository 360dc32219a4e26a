//! Principal component projection pooled over every iteration.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{EvoError, Result};
use crate::model::EvolutionDataset;

/// Above this input dimension the projection is computed with a randomized
/// range finder instead of a dense covariance eigendecomposition.
pub const DENSE_PCA_MAX_DIM: usize = 512;

const RSVD_OVERSAMPLE: usize = 10;
const RSVD_POWER_ITERS: usize = 4;
const RSVD_SEED: u64 = 0x5_eed0_f9ca;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Row-major `target_dims x D`; row `c` is component `c`.
    pub components: Vec<f64>,
    /// Variance along each component, decreasing.
    pub explained_variance: Vec<f64>,
    pub input_dim: usize,
}

impl PcaModel {
    pub fn num_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c * self.input_dim..(c + 1) * self.input_dim]
    }

    /// Projects row-major `rows` (each `input_dim` long).
    pub fn transform(&self, rows: &[f64]) -> Vec<f64> {
        let d = self.input_dim;
        let k = self.num_components();
        let mut out = Vec::with_capacity(rows.len() / d * k);
        let mut centered = vec![0.0; d];
        for row in rows.chunks_exact(d) {
            for ((c, v), m) in centered.iter_mut().zip(row).zip(&self.mean) {
                *c = v - m;
            }
            for comp in self.components.chunks_exact(d) {
                out.push(comp.iter().zip(&centered).map(|(a, b)| a * b).sum());
            }
        }
        out
    }
}

/// Fits a PCA on `n` row-major rows of width `d`.
pub fn pca_fit(rows: &[f64], d: usize, target_dims: usize) -> Result<PcaModel> {
    if target_dims == 0 || target_dims > d {
        return Err(EvoError::config(format!(
            "PCA target dimension {target_dims} must lie in 1..={d}"
        )));
    }
    let n = rows.len() / d;
    if n < 2 {
        return Err(EvoError::config("PCA needs at least two rows"));
    }

    let mut mean = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |r, c| rows[r * d + c] - mean[c]);

    let (vectors, values) = if d <= DENSE_PCA_MAX_DIM {
        dense_components(&centered, n, target_dims)
    } else {
        randomized_components(&centered, n, target_dims)
    };

    let mut components = Vec::with_capacity(target_dims * d);
    for mut v in vectors {
        // Sign convention: the largest-magnitude loading is positive.
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
            .0;
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.extend(v);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: values,
        input_dim: d,
    })
}

fn dense_components(centered: &DMatrix<f64>, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let cov = (centered.transpose() * centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let order = sorted_desc(eig.eigenvalues.as_slice());
    let vectors = order[..k]
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect();
    let values = order[..k]
        .iter()
        .map(|&c| eig.eigenvalues[c].max(0.0))
        .collect();
    (vectors, values)
}

fn randomized_components(centered: &DMatrix<f64>, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = centered.ncols();
    let l = (k + RSVD_OVERSAMPLE).min(d).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(RSVD_SEED);
    let omega = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));

    let mut q = (centered * omega).qr().q();
    for _ in 0..RSVD_POWER_ITERS {
        let z = (centered.transpose() * &q).qr().q();
        q = (centered * z).qr().q();
    }
    // B = Q^T X is l x d; its right singular vectors approximate X's.
    let b = q.transpose() * centered;
    let gram = &b * b.transpose();
    let eig = SymmetricEigen::new(gram);
    let order = sorted_desc(eig.eigenvalues.as_slice());

    let mut vectors = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &c in &order[..k] {
        let s2 = eig.eigenvalues[c].max(0.0);
        let u = eig.eigenvectors.column(c);
        let mut v: Vec<f64> = (b.transpose() * u).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        vectors.push(v);
        values.push(s2 / (n as f64 - 1.0));
    }
    (vectors, values)
}

fn sorted_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Replaces every feature row with its projection on the top `target_dims`
/// principal components of all rows pooled across iterations.
pub fn pca_reduce(dataset: &EvolutionDataset, target_dims: usize) -> Result<EvolutionDataset> {
    let model = pca_fit(&dataset.features, dataset.feature_dim, target_dims)?;
    Ok(EvolutionDataset {
        feature_dim: target_dims,
        features: model.transform(&dataset.features),
        ..dataset.clone()
    })
}
