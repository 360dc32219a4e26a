//! Trustworthiness and continuity of each iteration's embedding, and the
//! alignment-ablation harness built on them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};
use crate::model::{EmbedConfig, EmbeddingState, EvolutionDataset, Layout};
use crate::optimizer::embed;
use crate::par;

pub const DEFAULT_K: usize = 7;

/// `A_k = 2 / (N k (2N - 3k - 1))`.
pub fn scaling_factor(n: usize, k: usize) -> Result<f64> {
    let denom = 2 * n as i64 - 3 * k as i64 - 1;
    if k == 0 || denom <= 0 {
        return Err(EvoError::config(format!(
            "neighbourhood size k={k} too large for N={n} (need 1 <= k and 3k < 2N - 1)"
        )));
    }
    Ok(2.0 / (n as f64 * k as f64 * denom as f64))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Neighbours of `i` sorted by distance, ties broken by index; `i` excluded.
fn sorted_neighbours(rows: &[f64], dim: usize, i: usize) -> Vec<usize> {
    let n = rows.len() / dim;
    let p = &rows[i * dim..(i + 1) * dim];
    let d: Vec<f64> = (0..n).map(|j| sq_dist(p, &rows[j * dim..(j + 1) * dim])).collect();
    let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    order.sort_unstable_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order
}

/// `sum_i sum_{j in U_k(i)} (rank(i, j) - k)` where `U_k(i)` are the `k`
/// nearest neighbours of `i` in `neighbour_rows` that are not among its `k`
/// nearest in `rank_rows`, and `rank` is taken in `rank_rows`.
pub fn rank_excess(rank_rows: &[f64], rank_dim: usize, neighbour_rows: &[f64], neighbour_dim: usize, k: usize) -> u64 {
    let n = rank_rows.len() / rank_dim;
    debug_assert_eq!(n, neighbour_rows.len() / neighbour_dim);
    par::map_indices(n, |i| {
        let mut rank = vec![0usize; n];
        for (pos, j) in sorted_neighbours(rank_rows, rank_dim, i).into_iter().enumerate() {
            rank[j] = pos + 1;
        }
        sorted_neighbours(neighbour_rows, neighbour_dim, i)
            .into_iter()
            .take(k)
            .filter(|&j| rank[j] > k)
            .map(|j| (rank[j] - k) as u64)
            .sum::<u64>()
    })
    .into_iter()
    .sum()
}

fn flatten(low: &[[f64; 2]]) -> Vec<f64> {
    low.iter().flat_map(|p| [p[0], p[1]]).collect()
}

fn check_sizes(high: &[f64], dim: usize, low: &[[f64; 2]]) -> Result<usize> {
    let n = high.len() / dim.max(1);
    if dim == 0 || n * dim != high.len() || n != low.len() {
        return Err(EvoError::config(format!(
            "{} high-dimensional rows of width {dim} do not match {} embedded points",
            n,
            low.len()
        )));
    }
    Ok(n)
}

/// Penalizes embedding neighbours that are not neighbours in feature space.
pub fn trustworthiness(high: &[f64], dim: usize, low: &[[f64; 2]], k: usize) -> Result<f64> {
    let n = check_sizes(high, dim, low)?;
    let a = scaling_factor(n, k)?;
    Ok(1.0 - a * rank_excess(high, dim, &flatten(low), 2, k) as f64)
}

/// Penalizes feature-space neighbours that are lost in the embedding.
pub fn continuity(high: &[f64], dim: usize, low: &[[f64; 2]], k: usize) -> Result<f64> {
    let n = check_sizes(high, dim, low)?;
    let a = scaling_factor(n, k)?;
    Ok(1.0 - a * rank_excess(&flatten(low), 2, high, dim, k) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationQuality {
    pub rank: usize,
    pub iteration_label: i64,
    pub trust: f64,
    pub cont: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub k: usize,
    pub baseline_label: String,
    pub iterations: Vec<IterationQuality>,
}

/// Per-iteration metrics of `state` against the features it was fit to.
pub fn quality_report(
    features: &EvolutionDataset,
    state: &EmbeddingState,
    k: usize,
    label: &str,
) -> Result<QualityReport> {
    let iterations = (0..features.num_iterations())
        .map(|rank| {
            let high = features.iteration_rows(rank);
            let low = state.iteration_xy(rank);
            Ok(IterationQuality {
                rank,
                iteration_label: features.iteration_labels[rank],
                trust: trustworthiness(high, features.feature_dim, &low, k)?,
                cont: continuity(high, features.feature_dim, &low, k)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(QualityReport { k, baseline_label: label.to_string(), iterations })
}

/// Independent per-iteration Cartesian t-SNE with the same optimizer
/// settings.
pub fn vanilla_config(config: &EmbedConfig) -> EmbedConfig {
    EmbedConfig { layout: Layout::Rectilinear, alpha: 1.0, beta: 0.0, gamma: 0.0, ..config.clone() }
}

/// Embeds with each labelled configuration plus a vanilla t-SNE baseline
/// (appended last, labelled `vanilla`) and reports per-iteration metrics.
pub fn ablation_report(
    dataset: &EvolutionDataset,
    configs: &[(String, EmbedConfig)],
    k: usize,
) -> Result<Vec<QualityReport>> {
    let Some((_, first)) = configs.first() else {
        return Err(EvoError::config("ablation needs at least one configuration"));
    };
    if configs.iter().any(|(_, c)| c.seed != first.seed || c.perplexity != first.perplexity) {
        return Err(EvoError::config("ablation configurations must share seed and perplexity"));
    }
    let mut runs: Vec<(String, EmbedConfig)> = configs.to_vec();
    runs.push(("vanilla".to_string(), vanilla_config(first)));
    runs.iter()
        .map(|(label, cfg)| {
            let res = embed(dataset, cfg)?;
            quality_report(&res.features, &res.state, k, label)
        })
        .collect()
}

/// CSV rows `iteration_label,trust,cont,baseline_label` for every report.
pub fn reports_to_csv(reports: &[QualityReport]) -> String {
    let mut out = String::from("iteration_label,trust,cont,baseline_label\n");
    for r in reports {
        for it in &r.iterations {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{}", it.iteration_label, it.trust, it.cont, r.baseline_label);
        }
    }
    out
}
