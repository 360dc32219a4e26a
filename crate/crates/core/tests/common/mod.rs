//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use evoembed::affinity::AffinitySet;
use evoembed::EvolutionDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random `T x N x D` dataset with a little per-iteration drift.
pub fn random_dataset(seed: u64, n: usize, t: usize, d: usize) -> EvolutionDataset {
    let mut r = rng(seed);
    let base = gaussian_rows(&mut r, n * d);
    let mut features = Vec::with_capacity(t * n * d);
    for k in 0..t {
        for i in 0..n {
            for c in 0..d {
                let drift: f64 = r.sample(StandardNormal);
                features.push(base[i * d + c] * (1.0 + 0.3 * k as f64) + 0.5 * drift);
            }
        }
    }
    EvolutionDataset::from_features(n, (0..t as i64).rev().map(|k| k * 10).collect(), d, features).unwrap()
}

// ---------------------------------------------------------------- costs

/// `sum_k KL(P_k || Q_k)` with Student-t `Q_k`, straight from the definition.
pub fn kl_cost(aff: &AffinitySet, xy: &[[f64; 2]]) -> f64 {
    let mut total = 0.0;
    for (k, p) in aff.per_iteration.iter().enumerate() {
        let n = p.num_points;
        let pts = &xy[k * n..(k + 1) * n];
        let w = |i: usize, j: usize| {
            let dx = pts[i][0] - pts[j][0];
            let dy = pts[i][1] - pts[j][1];
            1.0 / (1.0 + dx * dx + dy * dy)
        };
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    z += w(i, j);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let pij = p.get(i, j);
                if i != j && pij > 0.0 {
                    total += pij * (pij / (w(i, j) / z).max(1e-12)).ln();
                }
            }
        }
    }
    total
}

pub fn displacement_cost(band: &[f64], offsets: &[f64], n: usize, sigma: f64) -> f64 {
    band.iter()
        .enumerate()
        .map(|(e, c)| {
            let u = c - offsets[e / n];
            -(-u * u / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
        })
        .sum()
}

pub fn rect_alignment_cost(y: &[f64], n: usize) -> f64 {
    (n..y.len()).map(|e| (y[e] - y[e - n]).abs()).sum()
}

pub fn radial_alignment_cost(theta: &[f64], n: usize) -> f64 {
    (n..theta.len()).map(|e| 1.0 - ((theta[e] - theta[e - n]) / 2.0).cos().abs()).sum()
}

// ---------------------------------------------------------- derivatives

pub const FD_STEP: f64 = 1e-5;

/// Central difference of `f` with respect to `x[idx]`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], idx: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[idx] += h;
    b[idx] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|)`, with differences below `floor` treated as
/// exact (both values are then numerically zero).
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= floor {
        return 0.0;
    }
    diff / a.abs().max(b.abs())
}

// -------------------------------------------------------- rank metrics

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `rank[i][j]`: 1 + number of points strictly closer to `i` than `j`, or
/// equally close with a smaller index. Brute force, O(N^3).
pub fn rank_matrix(rows: &[f64], dim: usize) -> Vec<Vec<usize>> {
    let n = rows.len() / dim;
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0;
                    }
                    let dij = sq(row(i), row(j));
                    1 + (0..n)
                        .filter(|&l| l != i && l != j)
                        .filter(|&l| {
                            let dil = sq(row(i), row(l));
                            dil < dij || (dil == dij && l < j)
                        })
                        .count()
                })
                .collect()
        })
        .collect()
}

/// `sum_i sum_{j: nbr_rank <= k < ref_rank} (ref_rank - k)`.
pub fn oracle_rank_excess(ref_rows: &[f64], ref_dim: usize, nbr_rows: &[f64], nbr_dim: usize, k: usize) -> u64 {
    let r = rank_matrix(ref_rows, ref_dim);
    let m = rank_matrix(nbr_rows, nbr_dim);
    let n = r.len();
    let mut total = 0u64;
    for i in 0..n {
        for j in 0..n {
            if i != j && m[i][j] <= k && r[i][j] > k {
                total += (r[i][j] - k) as u64;
            }
        }
    }
    total
}

pub fn oracle_scale(n: usize, k: usize) -> f64 {
    2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0))
}

pub fn flat(points: &[[f64; 2]]) -> Vec<f64> {
    points.iter().flat_map(|p| [p[0], p[1]]).collect()
}

// --------------------------------------------------------------- dbscan

/// DBSCAN labels from the definition: core points, connected components of
/// the core graph (boolean transitive closure), border points joined to the
/// lowest-numbered reachable cluster, clusters numbered by smallest core.
pub fn oracle_dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near = |a: usize, b: usize| {
        let dx = points[a][0] - points[b][0];
        let dy = points[a][1] - points[b][1];
        (dx * dx + dy * dy).sqrt() <= eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && near(i, j);
        }
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][m] && reach[m][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if core[i] && labels[i].is_none() {
            for j in 0..n {
                if reach[i][j] {
                    labels[j] = Some(next);
                }
            }
            next += 1;
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n).filter(|&c| core[c] && near(i, c)).filter_map(|c| labels[c]).min();
        }
    }
    labels
}

// ------------------------------------------------------------------ pca

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

pub fn covariance(rows: &[f64], d: usize) -> Vec<Vec<f64>> {
    let n = rows.len() / d;
    let mean: Vec<f64> = (0..d).map(|c| (0..n).map(|r| rows[r * d + c]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    (0..n).map(|r| (rows[r * d + a] - mean[a]) * (rows[r * d + b] - mean[b])).sum::<f64>()
                        / (n as f64 - 1.0)
                })
                .collect()
        })
        .collect()
}

// --------------------------------------------------------------- angles

/// Smallest circular arc `(start, width)` containing all `angles`.
pub fn covering_arc(angles: &[f64]) -> (f64, f64) {
    let mut a: Vec<f64> = angles.iter().map(|t| t.rem_euclid(2.0 * PI)).collect();
    a.sort_by(f64::total_cmp);
    let m = a.len();
    // The arc is the circle minus the largest gap between neighbours.
    let (mut gap, mut after) = (a[0] + 2.0 * PI - a[m - 1], 0);
    for i in 1..m {
        if a[i] - a[i - 1] > gap {
            gap = a[i] - a[i - 1];
            after = i;
        }
    }
    (a[after], 2.0 * PI - gap)
}

pub fn in_arc(theta: f64, arc: (f64, f64)) -> bool {
    (theta - arc.0).rem_euclid(2.0 * PI) <= arc.1
}

/// Fraction of the points of two groups that fall inside the other group's
/// covering arc.
pub fn sector_overlap(a: &[f64], b: &[f64]) -> f64 {
    let (arc_a, arc_b) = (covering_arc(a), covering_arc(b));
    let inside = a.iter().filter(|&&t| in_arc(t, arc_b)).count() + b.iter().filter(|&&t| in_arc(t, arc_a)).count();
    inside as f64 / (a.len() + b.len()) as f64
}
