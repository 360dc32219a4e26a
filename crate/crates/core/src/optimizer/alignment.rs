use rand::Rng;

/// Below this `|dy|` a rectilinear segment contributes no gradient.
pub const RECT_KINK: f64 = 1e-9;
/// Below this `|cos(dtheta / 2)|` a radial segment sits on the unstable
/// equilibrium and picks a gradient branch at random.
pub const RADIAL_KINK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTerm {
    pub total: f64,
    /// Derivative with respect to y (rectilinear) or theta (radial).
    pub grad: Vec<f64>,
}

/// `sum_i sum_k |y_k - y_{k-1}|`, each element collecting the subgradient of
/// every segment it touches. `y` is indexed `k * N + i`.
pub fn alignment_loss_and_grad_rect(y: &[f64], num_instances: usize) -> AlignmentTerm {
    let n = num_instances;
    let t = y.len() / n;
    let mut grad = vec![0.0; y.len()];
    let mut total = 0.0;
    for i in 0..n {
        for k in 1..t {
            let (cur, prev) = (k * n + i, (k - 1) * n + i);
            let dy = y[cur] - y[prev];
            total += dy.abs();
            if dy.abs() >= RECT_KINK {
                let s = dy.signum();
                grad[cur] += s;
                grad[prev] -= s;
            }
        }
    }
    AlignmentTerm { total, grad }
}

/// `sum_i sum_k 1 - |cos((theta_k - theta_{k-1}) / 2)|`.
///
/// At the cost maximum (`cos = 0`) the derivative is undefined; one of the
/// two one-sided branches is drawn from `rng`.
pub fn alignment_loss_and_grad_radial<R: Rng>(
    theta: &[f64],
    num_instances: usize,
    rng: &mut R,
) -> AlignmentTerm {
    let n = num_instances;
    let t = theta.len() / n;
    let mut grad = vec![0.0; theta.len()];
    let mut total = 0.0;
    for i in 0..n {
        for k in 1..t {
            let (cur, prev) = (k * n + i, (k - 1) * n + i);
            let half = 0.5 * (theta[cur] - theta[prev]);
            let sim = half.cos();
            total += 1.0 - sim.abs();
            let branch = if sim.abs() < RADIAL_KINK {
                if rng.random::<bool>() { 1.0 } else { -1.0 }
            } else {
                sim.signum()
            };
            let g = branch * 0.5 * half.sin();
            grad[cur] += g;
            grad[prev] -= g;
        }
    }
    AlignmentTerm { total, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn flat_instance_costs_nothing() {
        let a = alignment_loss_and_grad_rect(&[5.0, 5.0, 5.0], 1);
        assert_eq!(a.total, 0.0);
        assert_eq!(a.grad, vec![0.0; 3]);
    }

    #[test]
    fn step_instance_slopes() {
        let a = alignment_loss_and_grad_rect(&[0.0, 3.0, 3.0], 1);
        assert_eq!(a.total, 3.0);
        assert_eq!(a.grad, vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn interleaved_instances_stay_separate() {
        // Two instances, two ranks: y = [i0k0, i1k0, i0k1, i1k1].
        let a = alignment_loss_and_grad_rect(&[0.0, 10.0, 2.0, 7.0], 2);
        assert_eq!(a.total, 5.0);
        assert_eq!(a.grad, vec![-1.0, 1.0, 1.0, -1.0]);
    }

    fn radial_cost(dtheta: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        alignment_loss_and_grad_radial(&[0.3, 0.3 + dtheta], 1, &mut rng).total
    }

    #[test]
    fn radial_closed_forms() {
        assert!(radial_cost(0.0).abs() < 1e-15);
        assert!((radial_cost(PI) - 1.0).abs() < 1e-15);
        assert!((radial_cost(PI / 2.0) - 0.292_893_218_813_452_5).abs() < 1e-12);
        // 2 pi periodic.
        assert!((radial_cost(2.0 * PI + 0.4) - radial_cost(0.4)).abs() < 1e-12);
    }

    #[test]
    fn radial_gradient_pulls_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = alignment_loss_and_grad_radial(&[0.0, 1.0], 1, &mut rng);
        assert!(a.grad[1] > 0.0 && a.grad[0] < 0.0);
        assert_eq!(a.grad[0], -a.grad[1]);
        assert!((a.grad[1] - 0.5 * 0.5f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_branch_is_seeded() {
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            alignment_loss_and_grad_radial(&[0.0, PI], 1, &mut rng).grad[1]
        };
        assert_eq!(pick(5), pick(5));
        let signs: std::collections::BTreeSet<bool> = (0..32).map(|s| pick(s) > 0.0).collect();
        assert_eq!(signs.len(), 2, "both branches must be reachable");
        assert!((pick(1).abs() - 0.5).abs() < 1e-12);
    }
}
