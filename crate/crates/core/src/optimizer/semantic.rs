use crate::affinity::AffinitySet;
use crate::par;

/// Floor on `q_ij` inside the KL logarithm.
pub const Q_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTerm {
    /// `KL(P_k || Q_k)` per iteration rank.
    pub per_iteration: Vec<f64>,
    pub total: f64,
    /// Cartesian gradient per element.
    pub grad: Vec<[f64; 2]>,
}

#[inline]
fn kernel(a: [f64; 2], b: [f64; 2]) -> (f64, f64, f64) {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (1.0 / (1.0 + dx * dx + dy * dy), dx, dy)
}

/// Sum over iterations of `KL(P_k || Q_k)` with a Student-t `Q_k` normalized
/// within the iteration, and its gradient. `exaggeration` scales `P` in the
/// gradient only; the reported KL always uses the unscaled `P`.
///
/// `xy` is indexed `k * N + i`.
pub fn semantic_loss_and_grad(
    affinities: &AffinitySet,
    xy: &[[f64; 2]],
    exaggeration: f64,
) -> SemanticTerm {
    let t = affinities.per_iteration.len();
    let n = affinities.per_iteration.first().map_or(0, |p| p.num_points);
    debug_assert_eq!(xy.len(), t * n);

    let row_sums = par::map_indices(t * n, |e| {
        let (k, i) = (e / n, e % n);
        let pts = &xy[k * n..(k + 1) * n];
        let mut s = 0.0;
        for (j, pj) in pts.iter().enumerate() {
            if j != i {
                s += kernel(pts[i], *pj).0;
            }
        }
        s
    });
    let z: Vec<f64> = row_sums.chunks(n.max(1)).map(|c| c.iter().sum()).collect();

    let rows = par::map_indices(t * n, |e| {
        let (k, i) = (e / n, e % n);
        let pts = &xy[k * n..(k + 1) * n];
        let p = affinities.per_iteration[k].row(i);
        let inv_z = 1.0 / z[k];
        let (mut gx, mut gy, mut kl) = (0.0, 0.0, 0.0);
        for (j, pj) in pts.iter().enumerate() {
            if j == i {
                continue;
            }
            let (w, dx, dy) = kernel(pts[i], *pj);
            let q = w * inv_z;
            let f = (exaggeration * p[j] - q) * w;
            gx += f * dx;
            gy += f * dy;
            if p[j] > 0.0 {
                kl += p[j] * (p[j] / q.max(Q_FLOOR)).ln();
            }
        }
        ([4.0 * gx, 4.0 * gy], kl)
    });

    let mut per_iteration = vec![0.0; t];
    let mut grad = Vec::with_capacity(t * n);
    for (e, (g, kl)) in rows.into_iter().enumerate() {
        per_iteration[e / n] += kl;
        grad.push(g);
    }
    SemanticTerm {
        total: per_iteration.iter().sum(),
        per_iteration,
        grad,
    }
}

/// Converts a Cartesian gradient at polar position `(r, theta)` into
/// `(dC/dr, dC/dtheta)`.
#[inline]
pub fn to_polar_gradient(g: [f64; 2], r: f64, theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * g[0] + s * g[1], r * (-s * g[0] + c * g[1])]
}
