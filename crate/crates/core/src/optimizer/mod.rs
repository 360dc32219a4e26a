//! Gradient-descent minimization of
//! `alpha * semantic + beta * displacement + gamma * alignment`
//! for the rectilinear and radial layouts.

mod alignment;
mod displacement;
mod semantic;

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use alignment::{
    alignment_loss_and_grad_radial, alignment_loss_and_grad_rect, AlignmentTerm, RADIAL_KINK, RECT_KINK,
};
pub use displacement::{displacement_loss_and_grad, well, DisplacementTerm};
pub use semantic::{semantic_loss_and_grad, to_polar_gradient, SemanticTerm, Q_FLOOR};

use crate::affinity::AffinitySet;
use crate::error::{EvoError, Result};
use crate::ingest::prepare_features;
use crate::model::{iteration_offsets, EmbedConfig, EmbeddingState, EvolutionDataset, Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub semantic_per_iteration: Vec<f64>,
    pub semantic: f64,
    pub displacement: f64,
    pub alignment: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(semantic_per_iteration: Vec<f64>, semantic: f64, displacement: f64, alignment: f64, cfg: &EmbedConfig) -> Self {
        LossBreakdown {
            semantic_per_iteration,
            semantic,
            displacement,
            alignment,
            total: cfg.alpha * semantic + cfg.beta * displacement + cfg.gamma * alignment,
        }
    }
}

/// Linear decay of the displacement well's width over the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub start: f64,
    pub end: f64,
    pub iters: usize,
}

impl AnnealSchedule {
    pub fn from_config(cfg: &EmbedConfig) -> Self {
        AnnealSchedule { start: cfg.sigma_start, end: cfg.sigma_end, iters: cfg.opt_iters }
    }

    pub fn sigma_at(&self, opt_iter: usize) -> f64 {
        if self.iters <= 1 || opt_iter == 0 {
            return self.start;
        }
        if opt_iter >= self.iters - 1 {
            return self.end;
        }
        let f = opt_iter as f64 / (self.iters - 1) as f64;
        self.start + (self.end - self.start) * f
    }
}

/// Random start inside a quarter-spacing buffer around each band or ring.
pub fn initialize(dataset: &EvolutionDataset, config: &EmbedConfig, offsets: &[f64]) -> EmbeddingState {
    let n = dataset.num_instances;
    let s = config.spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let y_dist = Normal::new(0.0, 1e-2 * s).expect("positive spacing");
    let mut coords = Vec::with_capacity(n * offsets.len());
    for &center in offsets {
        for _ in 0..n {
            coords.push(match config.layout {
                Layout::Rectilinear => {
                    let x = rng.random_range(center - s / 4.0..=center + s / 4.0);
                    [x, y_dist.sample(&mut rng)]
                }
                Layout::Radial => {
                    let r = rng.random_range((center - s / 4.0).max(0.0)..=center + s / 4.0);
                    [r, rng.random_range(0.0..2.0 * PI)]
                }
            });
        }
    }
    let mut state = EmbeddingState {
        layout: config.layout,
        num_instances: n,
        velocity: vec![[0.0; 2]; coords.len()],
        gains: vec![[1.0; 2]; coords.len()],
        coords,
        offsets: offsets.to_vec(),
        rng,
    };
    separate_duplicates(&mut state, 1e-8 * s);
    state
}

/// Nudges exactly coincident points of the same iteration apart.
fn separate_duplicates(state: &mut EmbeddingState, jitter: f64) {
    let n = state.num_instances;
    for k in 0..state.num_iterations() {
        let mut order: Vec<usize> = (k * n..(k + 1) * n).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (state.xy(a), state.xy(b));
            pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1]))
        });
        for w in order.windows(2) {
            if state.xy(w[0]) == state.xy(w[1]) {
                let dir = if state.rng.random::<bool>() { jitter } else { -jitter };
                state.coords[w[1]][0] += dir;
                if state.layout == Layout::Radial {
                    state.coords[w[1]][0] = state.coords[w[1]][0].abs();
                }
            }
        }
    }
}

/// Loss breakdown and combined gradient (in native coordinates) at the
/// current state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub losses: LossBreakdown,
    pub grad: Vec<[f64; 2]>,
}

pub fn exaggeration_at(config: &EmbedConfig, opt_iter: usize) -> f64 {
    if opt_iter < config.exaggeration_iters { config.exaggeration_factor } else { 1.0 }
}

pub fn momentum_at(config: &EmbedConfig, opt_iter: usize) -> f64 {
    if opt_iter < config.momentum_switch_iter { config.momentum_initial } else { config.momentum_final }
}

/// Evaluates every loss term and combines their gradients into the descent
/// direction: `(x, y)` components in both layouts.
///
/// Rectilinear alignment enters as `gamma / 2N` times its gradient. Radial
/// displacement and alignment become radial and tangential forces; the
/// alignment force is `gamma / 2` times the arc-length derivative of its
/// angular cost, tapered linearly to zero inside radius `spacing`, where
/// angles are ill-defined.
pub fn evaluate(
    state: &mut EmbeddingState,
    affinities: &AffinitySet,
    config: &EmbedConfig,
    opt_iter: usize,
    sigma: f64,
) -> Result<Evaluation> {
    let n = state.num_instances;
    let xy = state.cartesian();
    let sem = semantic_loss_and_grad(affinities, &xy, exaggeration_at(config, opt_iter));
    let band: Vec<f64> = state.coords.iter().map(|c| c[0]).collect();
    let disp = displacement_loss_and_grad(&band, &state.offsets, n, sigma);
    let second: Vec<f64> = state.coords.iter().map(|c| c[1]).collect();
    let align = match state.layout {
        Layout::Rectilinear => alignment_loss_and_grad_rect(&second, n),
        Layout::Radial => alignment_loss_and_grad_radial(&second, n, &mut state.rng),
    };

    let name = |e: usize| format!("element (instance {}, rank {})", e % n, e / n);
    for (term, bad) in [
        ("semantic", sem.grad.iter().position(|g| !(g[0].is_finite() && g[1].is_finite()))),
        ("displacement", disp.grad.iter().position(|g| !g.is_finite())),
        ("alignment", align.grad.iter().position(|g| !g.is_finite())),
    ] {
        if let Some(e) = bad {
            return Err(EvoError::Numeric {
                module: "layout-optimizer",
                message: format!("non-finite {term} gradient at {} (iteration {opt_iter})", name(e)),
            });
        }
    }

    let (a, b, g) = (config.alpha, config.beta, config.gamma);
    let grad = match state.layout {
        Layout::Rectilinear => {
            // Per-instance mean, which keeps the pull on the O(1/N) scale
            // of the semantic forces.
            let g_step = g / (2.0 * n as f64);
            (0..state.coords.len())
                .map(|e| [a * sem.grad[e][0] + b * disp.grad[e], a * sem.grad[e][1] + g_step * align.grad[e]])
                .collect()
        }
        Layout::Radial => {
            let s2 = config.spacing * config.spacing;
            (0..state.coords.len())
                .map(|e| {
                    let [r, theta] = state.coords[e];
                    let (sin, cos) = theta.sin_cos();
                    let radial = b * disp.grad[e];
                    let tangential = 0.5 * g * align.grad[e] * r / (r * r).max(s2);
                    [
                        a * sem.grad[e][0] + radial * cos - tangential * sin,
                        a * sem.grad[e][1] + radial * sin + tangential * cos,
                    ]
                })
                .collect()
        }
    };

    let losses = LossBreakdown::new(sem.per_iteration, sem.total, disp.total, align.total, config);
    if !losses.total.is_finite() {
        return Err(EvoError::Numeric {
            module: "layout-optimizer",
            message: format!("non-finite total loss at iteration {opt_iter}"),
        });
    }
    Ok(Evaluation { losses, grad })
}

/// Smallest per-coordinate gain.
pub const MIN_GAIN: f64 = 0.01;

fn adapt_gain(gain: f64, grad: f64, velocity: f64) -> f64 {
    if (grad > 0.0) != (velocity > 0.0) { gain + 0.2 } else { (gain * 0.8).max(MIN_GAIN) }
}

/// Applies one momentum update with the gradient from [`evaluate`].
///
/// Both layouts step in Cartesian space; radial states are then converted
/// back, keeping `theta` continuous with its previous value.
///
/// With `adaptive_gains`, each coordinate carries a gain that grows by 0.2
/// while the gradient keeps opposing the current velocity and shrinks by 0.8
/// (to at least [`MIN_GAIN`]) when the two agree.
pub fn apply_update(state: &mut EmbeddingState, grad: &[[f64; 2]], config: &EmbedConfig, opt_iter: usize) {
    let mu = momentum_at(config, opt_iter);
    let lr = config.learning_rate;
    let layout = state.layout;
    let coords = state.coords.iter_mut().zip(state.velocity.iter_mut()).zip(state.gains.iter_mut());
    for (((c, v), gain), g) in coords.zip(grad) {
        let mut p = match layout {
            Layout::Rectilinear => *c,
            Layout::Radial => {
                let (sin, cos) = c[1].sin_cos();
                [c[0] * cos, c[0] * sin]
            }
        };
        for d in 0..2 {
            if config.adaptive_gains {
                gain[d] = adapt_gain(gain[d], g[d], v[d]);
            }
            v[d] = mu * v[d] - lr * gain[d] * g[d];
            p[d] += v[d];
        }
        *c = match layout {
            Layout::Rectilinear => p,
            Layout::Radial => {
                let turn = (p[1].atan2(p[0]) - c[1] + PI).rem_euclid(2.0 * PI) - PI;
                [p[0].hypot(p[1]), c[1] + turn]
            }
        };
    }
}

/// One optimization iteration: evaluate, then update. Returns the losses at
/// the pre-update state.
pub fn step(
    state: &mut EmbeddingState,
    affinities: &AffinitySet,
    config: &EmbedConfig,
    opt_iter: usize,
    sigma: f64,
) -> Result<LossBreakdown> {
    let eval = evaluate(state, affinities, config, opt_iter, sigma)?;
    apply_update(state, &eval.grad, config, opt_iter);
    Ok(eval.losses)
}

pub type ProgressFn<'a> = dyn FnMut(usize, &LossBreakdown, f64) + 'a;

/// Progress reporting and cancellation for [`embed_with`].
#[derive(Default)]
pub struct EmbedOptions<'a> {
    /// Invoke `progress` every this many iterations (0 disables).
    pub progress_every: usize,
    pub progress: Option<&'a mut ProgressFn<'a>>,
    /// Checked between steps.
    pub cancel: Option<&'a AtomicBool>,
}

#[derive(Debug, Clone)]
pub struct EmbedResult {
    pub state: EmbeddingState,
    pub history: Vec<LossBreakdown>,
    /// The features the optimizer consumed (after optional PCA).
    pub features: EvolutionDataset,
}

pub fn embed(dataset: &EvolutionDataset, config: &EmbedConfig) -> Result<EmbedResult> {
    embed_with(dataset, config, EmbedOptions::default())
}

pub fn embed_with(
    dataset: &EvolutionDataset,
    config: &EmbedConfig,
    mut options: EmbedOptions<'_>,
) -> Result<EmbedResult> {
    dataset.ensure_valid()?;
    config.validate(dataset.num_instances)?;
    let features = prepare_features(dataset, config)?.into_owned();
    let affinities = AffinitySet::compute(&features, config.perplexity)?;
    let offsets = iteration_offsets(config, features.num_iterations())?;
    let mut state = initialize(&features, config, &offsets);
    let schedule = AnnealSchedule::from_config(config);

    let mut history = Vec::with_capacity(config.opt_iters);
    for it in 0..config.opt_iters {
        if options.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Err(EvoError::Cancelled(it));
        }
        let sigma = schedule.sigma_at(it);
        let losses = step(&mut state, &affinities, config, it, sigma)?;
        if options.progress_every > 0 && (it % options.progress_every == 0 || it + 1 == config.opt_iters) {
            if let Some(cb) = options.progress.as_mut() {
                cb(it, &losses, sigma);
            }
        }
        history.push(losses);
    }
    Ok(EmbedResult { state, history, features })
}
