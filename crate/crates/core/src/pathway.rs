//! Instance pathways across iterations, length filtering, per-(iteration,
//! keyword) DBSCAN bundling and spline control data for rendering.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};
use crate::model::{EmbeddingState, EvolutionDataset, Layout};
use crate::par;

pub const DEFAULT_MIN_PTS: usize = 4;
pub const DEFAULT_TENSION: f64 = 0.5;
/// Samples per span when a spline is evaluated.
pub const SPLINE_SEGMENTS: usize = 16;

/// Default DBSCAN radius: a quarter of the band spacing.
pub fn default_eps(spacing: f64) -> f64 {
    spacing / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pathway {
    pub instance_id: String,
    /// Cartesian positions, one per iteration rank, noisiest first.
    pub control_points: Vec<[f64; 2]>,
    pub path_length: f64,
    /// Sum of wrapped angle steps; radial layouts only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular_length: Option<f64>,
    pub keywords: Vec<String>,
}

pub fn path_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

/// Angular distance in `[0, pi]` between two (unwrapped) angles.
pub fn angle_between(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// `sum_k angle_between(theta_{k-1}, theta_k)`: path length on unit rings.
pub fn angular_path_length(thetas: &[f64]) -> f64 {
    thetas.windows(2).map(|w| angle_between(w[0], w[1])).sum()
}

/// One pathway per instance, in instance order.
pub fn extract_pathways(state: &EmbeddingState, dataset: &EvolutionDataset) -> Vec<Pathway> {
    let t = state.num_iterations();
    (0..state.num_instances)
        .map(|i| {
            let elems: Vec<usize> = (0..t).map(|k| state.element_index(k, i)).collect();
            let control_points: Vec<[f64; 2]> = elems.iter().map(|&e| state.xy(e)).collect();
            let angular_length = (state.layout == Layout::Radial)
                .then(|| angular_path_length(&elems.iter().map(|&e| state.coords[e][1]).collect::<Vec<_>>()));
            let meta = &dataset.instance_meta[i];
            Pathway {
                instance_id: meta.instance_id.clone(),
                path_length: path_length(&control_points),
                control_points,
                angular_length,
                keywords: meta.keywords.iter().cloned().collect(),
            }
        })
        .collect()
}

/// Nearest-rank percentile of ascending `sorted`: the value at ordinal
/// `ceil(pct / 100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank_percentile(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// Keeps pathways whose length lies within the `[lo_pct, hi_pct]`
/// nearest-rank percentile range of all given pathways.
pub fn filter_by_length_percentile(pathways: &[Pathway], lo_pct: f64, hi_pct: f64) -> Result<Vec<Pathway>> {
    if !(0.0 <= lo_pct && lo_pct <= hi_pct && hi_pct <= 100.0) {
        return Err(EvoError::config(format!(
            "percentile range must satisfy 0 <= lo <= hi <= 100, got ({lo_pct}, {hi_pct})"
        )));
    }
    let mut lengths: Vec<f64> = pathways.iter().map(|p| p.path_length).collect();
    lengths.sort_by(f64::total_cmp);
    let (Some(lo), Some(hi)) = (
        nearest_rank_percentile(&lengths, lo_pct),
        nearest_rank_percentile(&lengths, hi_pct),
    ) else {
        return Ok(Vec::new());
    };
    Ok(pathways
        .iter()
        .filter(|p| p.path_length >= lo && p.path_length <= hi)
        .cloned()
        .collect())
}

/// Density-based clustering. A point is core when at least `min_pts` points
/// (itself included) lie within `eps`. Clusters are numbered in the order
/// their first core point appears; `None` marks noise.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    if !(eps > 0.0) || min_pts < 1 {
        return Err(EvoError::config(format!("dbscan needs eps > 0 and min_pts >= 1, got {eps}, {min_pts}")));
    }
    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = par::map_indices(points.len(), |i| {
        (0..points.len())
            .filter(|&j| {
                let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
                dx * dx + dy * dy <= eps2
            })
            .collect()
    });
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut next = 0;
    for seed in 0..points.len() {
        if labels[seed].is_some() || !is_core[seed] {
            continue;
        }
        labels[seed] = Some(next);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            if !is_core[p] {
                continue;
            }
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub rank: usize,
    pub iteration_label: i64,
    pub keyword: String,
    /// Instance indices in this group.
    pub members: Vec<usize>,
    /// Cluster id per member, `None` for noise.
    pub labels: Vec<Option<usize>>,
    /// Cartesian mean of each cluster's members.
    pub centroids: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTable {
    pub eps: f64,
    pub min_pts: usize,
    pub groups: Vec<ClusterGroup>,
}

/// Runs DBSCAN separately for every (iteration rank, keyword) group, on the
/// Cartesian coordinates. Instances without keywords are grouped under `""`.
pub fn cluster_by_iteration_keyword(
    state: &EmbeddingState,
    dataset: &EvolutionDataset,
    eps: f64,
    min_pts: usize,
) -> Result<ClusterTable> {
    if !(eps > 0.0) || min_pts < 1 {
        return Err(EvoError::config(format!("dbscan needs eps > 0 and min_pts >= 1, got {eps}, {min_pts}")));
    }
    let mut keywords: BTreeSet<String> = BTreeSet::new();
    for m in &dataset.instance_meta {
        if m.keywords.is_empty() {
            keywords.insert(String::new());
        }
        keywords.extend(m.keywords.iter().cloned());
    }
    let keywords: Vec<String> = keywords.into_iter().collect();
    let t = state.num_iterations();
    let jobs: Vec<(usize, &String)> = (0..t).flat_map(|k| keywords.iter().map(move |kw| (k, kw))).collect();

    let groups = par::map_indices(jobs.len(), |g| {
        let (rank, keyword) = jobs[g];
        let members: Vec<usize> = dataset
            .instance_meta
            .iter()
            .enumerate()
            .filter(|(_, m)| if keyword.is_empty() { m.keywords.is_empty() } else { m.keywords.contains(keyword) })
            .map(|(i, _)| i)
            .collect();
        let pts: Vec<[f64; 2]> = members.iter().map(|&i| state.xy(state.element_index(rank, i))).collect();
        let labels = dbscan(&pts, eps, min_pts)?;
        let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let mut sums = vec![[0.0, 0.0, 0.0]; count];
        for (p, l) in pts.iter().zip(&labels) {
            if let Some(c) = l {
                sums[*c][0] += p[0];
                sums[*c][1] += p[1];
                sums[*c][2] += 1.0;
            }
        }
        Ok(ClusterGroup {
            rank,
            iteration_label: dataset.iteration_labels[rank],
            keyword: keyword.clone(),
            members,
            labels,
            centroids: sums.iter().map(|s| [s[0] / s[2], s[1] / s[2]]).collect(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ClusterTable { eps, min_pts, groups })
}

/// Cartesian overlay where every clustered element moves a fraction
/// `lambda` of the way to its cluster centroid. Noise elements keep their
/// position. An element clustered under several keywords uses the first
/// keyword (lexicographic) that clusters it. The state is not modified.
pub fn interpolate_to_centroids(
    state: &EmbeddingState,
    clusters: &ClusterTable,
    lambda: f64,
) -> Result<Vec<[f64; 2]>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(EvoError::config(format!("interpolation factor must lie in [0, 1], got {lambda}")));
    }
    let mut out = state.cartesian();
    let mut done = vec![false; out.len()];
    for g in &clusters.groups {
        for (&i, label) in g.members.iter().zip(&g.labels) {
            let e = state.element_index(g.rank, i);
            if let (Some(c), false) = (label, done[e]) {
                let p = out[e];
                let m = g.centroids[*c];
                out[e] = [(1.0 - lambda) * p[0] + lambda * m[0], (1.0 - lambda) * p[1] + lambda * m[1]];
                done[e] = true;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineControl {
    pub points: Vec<[f64; 2]>,
    pub tension: f64,
}

/// Control data for one instance's cardinal spline, read from `coords`
/// (the plain Cartesian layout or an interpolated overlay).
pub fn spline_control(coords: &[[f64; 2]], state: &EmbeddingState, instance: usize, tension: f64) -> SplineControl {
    SplineControl {
        points: (0..state.num_iterations()).map(|k| coords[state.element_index(k, instance)]).collect(),
        tension,
    }
}

/// Samples a cardinal spline through `control` with `segments` steps per
/// span. Tension 0 is Catmull-Rom, tension 1 gives straight segments; the
/// end points are duplicated to define end tangents.
pub fn sample_cardinal(control: &SplineControl, segments: usize) -> Vec<[f64; 2]> {
    let p = &control.points;
    if p.len() < 2 {
        return p.clone();
    }
    let scale = (1.0 - control.tension) / 2.0;
    let tangent = |k: usize| {
        let a = p[k.saturating_sub(1)];
        let b = p[(k + 1).min(p.len() - 1)];
        [scale * (b[0] - a[0]), scale * (b[1] - a[1])]
    };
    let mut out = vec![p[0]];
    for k in 0..p.len() - 1 {
        let (p0, p1, m0, m1) = (p[k], p[k + 1], tangent(k), tangent(k + 1));
        for s in 1..=segments {
            let u = s as f64 / segments as f64;
            let (u2, u3) = (u * u, u * u * u);
            let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
            let h10 = u3 - 2.0 * u2 + u;
            let h01 = -2.0 * u3 + 3.0 * u2;
            let h11 = u3 - u2;
            out.push([
                h00 * p0[0] + h10 * m0[0] + h01 * p1[0] + h11 * m1[0],
                h00 * p0[1] + h10 * m0[1] + h01 * p1[1] + h11 * m1[1],
            ]);
        }
    }
    out
}
