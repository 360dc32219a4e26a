//! Perplexity-calibrated Gaussian affinities, computed independently for
//! each iteration rank.

use crate::error::{EvoError, Result};
use crate::model::EvolutionDataset;
use crate::par;

pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 64;
/// Floor applied to joint probabilities before renormalization.
pub const P_FLOOR: f64 = 1e-12;

const MAX_BRACKET_STEPS: usize = 256;

/// Normalized `p_{j|i}` for one point given its squared distances to the
/// other `N - 1` points.
pub fn conditional_row(sq_distances: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(EvoError::config(format!("sigma must be > 0, got {sigma}")));
    }
    let min = sq_distances.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(EvoError::Numeric {
            module: "affinity",
            message: "all neighbour distances are infinite".into(),
        });
    }
    let scale = 1.0 / (2.0 * sigma * sigma);
    // Shift by the largest exponent so the nearest neighbour maps to exp(0).
    let mut row: Vec<f64> = sq_distances
        .iter()
        .map(|d| (-(d - min) * scale).exp())
        .collect();
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
    Ok(row)
}

/// Shannon entropy in bits.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaFit {
    pub sigma: f64,
    pub entropy: f64,
    /// `p_{j|i}` at the returned bandwidth.
    pub probs: Vec<f64>,
    /// False when the target entropy was not reached within `tol`.
    pub converged: bool,
}

/// Finds the Gaussian bandwidth whose conditional distribution has
/// perplexity `2^H` equal to `perplexity`.
///
/// Brackets by doubling/halving, then bisects. If the target is out of reach
/// (the entropy cannot fall low enough because of exact ties, or cannot rise
/// high enough), the row falls back to a uniform distribution over the tied
/// nearest neighbours or over all neighbours, and is flagged.
pub fn calibrate_sigma(
    sq_distances: &[f64],
    perplexity: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SigmaFit> {
    let n = sq_distances.len() + 1;
    if !(perplexity > 1.0 && perplexity < n as f64) {
        return Err(EvoError::config(format!(
            "perplexity must lie in (1, N={n}), got {perplexity}"
        )));
    }
    let target = perplexity.log2();
    let eval = |sigma: f64| -> Result<(f64, Vec<f64>)> {
        let row = conditional_row(sq_distances, sigma)?;
        Ok((entropy_bits(&row), row))
    };

    let finite: Vec<f64> = sq_distances.iter().copied().filter(|d| d.is_finite()).collect();
    let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
    let mut sigma = if mean > 0.0 { mean.sqrt() } else { 1.0 };

    let (mut h, mut row) = eval(sigma)?;
    if (h - target).abs() <= tol {
        return Ok(SigmaFit { sigma, entropy: h, probs: row, converged: true });
    }

    // Entropy grows with sigma: find lo with H < target < H(hi).
    let (mut lo, mut hi) = (sigma, sigma);
    let mut steps = 0;
    if h < target {
        while h < target {
            steps += 1;
            if steps > MAX_BRACKET_STEPS {
                return Ok(uniform_fallback(sq_distances, false));
            }
            lo = sigma;
            sigma *= 2.0;
            (h, row) = eval(sigma)?;
            if (h - target).abs() <= tol {
                return Ok(SigmaFit { sigma, entropy: h, probs: row, converged: true });
            }
        }
        hi = sigma;
    } else {
        while h > target {
            steps += 1;
            if steps > MAX_BRACKET_STEPS || sigma < 1e-150 {
                return Ok(uniform_fallback(sq_distances, true));
            }
            hi = sigma;
            sigma *= 0.5;
            (h, row) = eval(sigma)?;
            if (h - target).abs() <= tol {
                return Ok(SigmaFit { sigma, entropy: h, probs: row, converged: true });
            }
        }
        lo = sigma;
    }

    let mut best = (f64::INFINITY, sigma, h, row);
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let (hm, rm) = eval(mid)?;
        let err = (hm - target).abs();
        if err <= tol {
            return Ok(SigmaFit { sigma: mid, entropy: hm, probs: rm, converged: true });
        }
        if hm < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if err < best.0 {
            best = (err, mid, hm, rm);
        }
    }
    let mid = 0.5 * (lo + hi);
    let (hm, rm) = eval(mid)?;
    if (hm - target).abs() < best.0 {
        best = ((hm - target).abs(), mid, hm, rm);
    }
    Ok(SigmaFit { sigma: best.1, entropy: best.2, probs: best.3, converged: false })
}

fn uniform_fallback(sq_distances: &[f64], nearest_ties: bool) -> SigmaFit {
    let min = sq_distances.iter().copied().fold(f64::INFINITY, f64::min);
    let mask: Vec<bool> = sq_distances
        .iter()
        .map(|&d| if nearest_ties { d == min } else { d.is_finite() })
        .collect();
    let count = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let probs: Vec<f64> = mask.iter().map(|&m| if m { 1.0 / count } else { 0.0 }).collect();
    SigmaFit {
        sigma: if nearest_ties { 0.0 } else { f64::INFINITY },
        entropy: entropy_bits(&probs),
        probs,
        converged: false,
    }
}

/// Symmetric joint probabilities `P_k` for one iteration rank.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAffinity {
    pub num_points: usize,
    /// Row-major `N x N`, zero diagonal, sums to one.
    pub p: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Instances whose bandwidth search did not converge.
    pub flagged: Vec<usize>,
}

impl JointAffinity {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.num_points + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.num_points..(i + 1) * self.num_points]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinitySet {
    pub perplexity: f64,
    pub per_iteration: Vec<JointAffinity>,
}

impl AffinitySet {
    pub fn compute(dataset: &EvolutionDataset, perplexity: f64) -> Result<Self> {
        let per_iteration = (0..dataset.num_iterations())
            .map(|k| joint_affinities(dataset, k, perplexity))
            .collect::<Result<_>>()?;
        Ok(AffinitySet { perplexity, per_iteration })
    }
}

/// Squared Euclidean distances between the rows of one iteration, `N x N`.
pub fn squared_distances(rows: &[f64], dim: usize) -> Vec<f64> {
    let n = rows.len() / dim;
    let per_row = par::map_indices(n, |i| {
        let a = &rows[i * dim..(i + 1) * dim];
        (0..n)
            .map(|j| {
                let b = &rows[j * dim..(j + 1) * dim];
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    per_row.concat()
}

/// `P_k`: calibrates each row of iteration `rank` to `perplexity`, then
/// symmetrizes as `(p_{j|i} + p_{i|j}) / 2N`.
pub fn joint_affinities(dataset: &EvolutionDataset, rank: usize, perplexity: f64) -> Result<JointAffinity> {
    let n = dataset.num_instances;
    if n < 3 {
        return Err(EvoError::config(format!("affinities need N >= 3, got {n}")));
    }
    let dist = squared_distances(dataset.iteration_rows(rank), dataset.feature_dim);

    let fits = par::map_indices(n, |i| {
        let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[i * n + j]).collect();
        calibrate_sigma(&others, perplexity, DEFAULT_TOL, DEFAULT_MAX_ITER)
    });

    let mut cond = vec![0.0; n * n];
    let mut sigmas = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    for (i, fit) in fits.into_iter().enumerate() {
        let fit = fit.map_err(|e| match e {
            EvoError::Numeric { module, message } => EvoError::Numeric {
                module,
                message: format!(
                    "{message} (instance {}, iteration {})",
                    dataset.instance_meta[i].instance_id, dataset.iteration_labels[rank]
                ),
            },
            other => other,
        })?;
        if !fit.converged {
            flagged.push(i);
        }
        let mut it = fit.probs.into_iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[i * n + j] = it.next().unwrap();
        }
        sigmas.push(fit.sigma);
    }

    let norm = 2.0 * n as f64;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / norm).max(P_FLOOR);
            }
        }
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(JointAffinity { num_points: n, p, sigmas, flagged })
}
