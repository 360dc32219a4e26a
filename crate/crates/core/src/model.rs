//! Domain types shared by the pipeline: the input trajectory dataset, the
//! embedding configuration and the optimizer's mutable state.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};

/// Which intermediate image each feature row was encoded from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationKind {
    /// The evolving noisy sample at each iteration.
    #[default]
    Noisy,
    /// The denoised final-image estimate at each iteration.
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub instance_id: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub keywords: BTreeSet<String>,
}

impl InstanceMeta {
    pub fn new(id: impl Into<String>) -> Self {
        InstanceMeta {
            instance_id: id.into(),
            prompt: String::new(),
            keywords: BTreeSet::new(),
        }
    }
}

/// `N` instances observed at `T_s` sampled iterations, each a `D`-dimensional
/// feature vector.
///
/// Rows are stored iteration-major: row `k * N + i` is instance `i` at
/// iteration rank `k`, where rank 0 is the noisiest sampled iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionDataset {
    pub num_instances: usize,
    /// Original iteration indices, noisiest first (e.g. 99, 90, ..., 0).
    pub iteration_labels: Vec<i64>,
    pub feature_dim: usize,
    pub features: Vec<f64>,
    pub instance_meta: Vec<InstanceMeta>,
    pub representation_kind: RepresentationKind,
}

impl EvolutionDataset {
    /// Builds a dataset with default metadata (`inst0000`, ...) and checks it.
    pub fn from_features(
        num_instances: usize,
        iteration_labels: Vec<i64>,
        feature_dim: usize,
        features: Vec<f64>,
    ) -> Result<Self> {
        let instance_meta = (0..num_instances)
            .map(|i| InstanceMeta::new(format!("inst{i:04}")))
            .collect();
        let ds = EvolutionDataset {
            num_instances,
            iteration_labels,
            feature_dim,
            features,
            instance_meta,
            representation_kind: RepresentationKind::Noisy,
        };
        ds.ensure_valid()?;
        Ok(ds)
    }

    pub fn num_iterations(&self) -> usize {
        self.iteration_labels.len()
    }

    pub fn num_elements(&self) -> usize {
        self.num_instances * self.num_iterations()
    }

    pub fn element_index(&self, rank: usize, instance: usize) -> usize {
        rank * self.num_instances + instance
    }

    pub fn row(&self, rank: usize, instance: usize) -> &[f64] {
        let start = self.element_index(rank, instance) * self.feature_dim;
        &self.features[start..start + self.feature_dim]
    }

    /// All `N` rows of one iteration rank, contiguous.
    pub fn iteration_rows(&self, rank: usize) -> &[f64] {
        let len = self.num_instances * self.feature_dim;
        &self.features[rank * len..(rank + 1) * len]
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_dataset(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(EvoError::Validation(
                violations.iter().map(ToString::to_string).collect(),
            ))
        }
    }
}

/// A single failed dataset invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "{} (row {}): {}", self.field, row, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Lists every invariant the dataset breaks; empty when it is well formed.
pub fn validate_dataset(ds: &EvolutionDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field, row, message: String| {
        out.push(Violation {
            field,
            row,
            message,
        })
    };

    if ds.num_instances < 2 {
        push("num_instances", None, format!("need at least 2 instances, got {}", ds.num_instances));
    }
    if ds.feature_dim < 1 {
        push("feature_dim", None, "feature dimension must be at least 1".into());
    }
    let t = ds.iteration_labels.len();
    if t < 2 {
        push("iteration_labels", None, format!("need at least 2 iterations, got {t}"));
    }
    for (k, w) in ds.iteration_labels.windows(2).enumerate() {
        if w[1] >= w[0] {
            push(
                "iteration_labels",
                None,
                format!(
                    "labels must be strictly decreasing (noisiest first): position {} has {} after {}",
                    k + 1,
                    w[1],
                    w[0]
                ),
            );
        }
    }
    if ds.instance_meta.len() != ds.num_instances {
        push(
            "instance_meta",
            None,
            format!("expected {} records, got {}", ds.num_instances, ds.instance_meta.len()),
        );
    }
    let mut seen = HashSet::new();
    for m in &ds.instance_meta {
        if !seen.insert(m.instance_id.as_str()) {
            push("instance_meta", None, format!("duplicate instance_id {:?}", m.instance_id));
        }
    }

    let expected = ds.num_instances * t * ds.feature_dim;
    if ds.features.len() != expected {
        push(
            "features",
            None,
            format!("expected {expected} values ({t} x {} x {}), got {}", ds.num_instances, ds.feature_dim, ds.features.len()),
        );
    } else if ds.feature_dim > 0 {
        for (row, values) in ds.features.chunks(ds.feature_dim).enumerate() {
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                push("features", Some(row), format!("non-finite value at column {col}"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// One vertical band per iteration, noisiest on the left.
    Rectilinear,
    /// One concentric ring per iteration, noisiest innermost.
    #[default]
    Radial,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Rectilinear => "rectilinear",
            Layout::Radial => "radial",
        })
    }
}

impl std::str::FromStr for Layout {
    type Err = EvoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectilinear" | "rect" => Ok(Layout::Rectilinear),
            "radial" => Ok(Layout::Radial),
            other => Err(EvoError::config(format!("unknown layout {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub layout: Layout,
    /// Weight of the per-iteration t-SNE objective.
    pub alpha: f64,
    /// Weight of the band/ring displacement well.
    pub beta: f64,
    /// Weight of the cross-iteration alignment penalty.
    pub gamma: f64,
    pub perplexity: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    /// Distance between neighbouring iteration bands or rings.
    pub spacing: f64,
    pub opt_iters: usize,
    pub pca_dims: Option<usize>,
    pub seed: u64,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub exaggeration_factor: f64,
    pub exaggeration_iters: usize,
    /// Scale each coordinate's step by an adaptive gain; plain momentum
    /// steps when off.
    #[serde(default = "enabled")]
    pub adaptive_gains: bool,
}

fn enabled() -> bool {
    true
}

impl EmbedConfig {
    pub fn rectilinear() -> Self {
        EmbedConfig {
            layout: Layout::Rectilinear,
            gamma: 0.2,
            ..Self::radial()
        }
    }

    pub fn radial() -> Self {
        EmbedConfig {
            layout: Layout::Radial,
            alpha: 1.0,
            beta: 5.0,
            gamma: 0.05,
            perplexity: 30.0,
            sigma_start: 20.0,
            sigma_end: 10.0,
            spacing: 20.0,
            opt_iters: 2000,
            pca_dims: Some(50),
            seed: 42,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            exaggeration_factor: 12.0,
            exaggeration_iters: 250,
            adaptive_gains: true,
        }
    }

    /// Default weights for `layout`.
    pub fn for_layout(layout: Layout) -> Self {
        match layout {
            Layout::Rectilinear => Self::rectilinear(),
            Layout::Radial => Self::radial(),
        }
    }

    /// Default alignment weight for `layout`.
    pub fn default_gamma(layout: Layout) -> f64 {
        Self::for_layout(layout).gamma
    }

    /// Checks the configuration against a dataset with `num_instances` rows
    /// per iteration.
    pub fn validate(&self, num_instances: usize) -> Result<()> {
        let bad = |msg: String| Err(EvoError::Config(msg));
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("learning_rate", self.learning_rate),
            ("exaggeration_factor", self.exaggeration_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.sigma_end > 0.0 && self.sigma_start >= self.sigma_end && self.sigma_start.is_finite()) {
            return bad(format!(
                "need sigma_start >= sigma_end > 0, got {} and {}",
                self.sigma_start, self.sigma_end
            ));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad(format!("spacing must be > 0, got {}", self.spacing));
        }
        if !(self.perplexity > 1.0 && self.perplexity < num_instances as f64) {
            return bad(format!(
                "perplexity must lie in (1, N={num_instances}), got {}",
                self.perplexity
            ));
        }
        if self.opt_iters == 0 {
            return bad("opt_iters must be at least 1".into());
        }
        if self.pca_dims == Some(0) {
            return bad("pca_dims must be at least 1".into());
        }
        for (name, m) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} must lie in [0, 1), got {m}"));
            }
        }
        Ok(())
    }
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self::radial()
    }
}

/// Target band (x) or ring (r) offsets per iteration rank: `0, s, 2s, ...`.
pub fn iteration_offsets(config: &EmbedConfig, num_iterations: usize) -> Result<Vec<f64>> {
    if num_iterations < 2 {
        return Err(EvoError::config(format!(
            "need at least 2 iterations for a layout, got {num_iterations}"
        )));
    }
    Ok((0..num_iterations)
        .map(|k| config.spacing * k as f64)
        .collect())
}

/// Optimizer state: one 2-D point per element plus momentum and gain
/// scratch.
///
/// `coords` holds the layout's native coordinates: `(x, y)` for the
/// rectilinear layout and `(r, theta)` for the radial one. `theta` is kept
/// unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub layout: Layout,
    pub num_instances: usize,
    pub coords: Vec<[f64; 2]>,
    pub offsets: Vec<f64>,
    /// Optimizer velocity in Cartesian `(x, y)`, for both layouts.
    pub velocity: Vec<[f64; 2]>,
    /// Per-coordinate adaptive step multipliers, also Cartesian.
    pub gains: Vec<[f64; 2]>,
    pub(crate) rng: rand_chacha::ChaCha8Rng,
}

impl EmbeddingState {
    /// A state at rest (zero velocity, unit gains) at the given native
    /// coordinates, e.g. restored from a bundle.
    pub fn from_coords(layout: Layout, num_instances: usize, coords: Vec<[f64; 2]>, offsets: Vec<f64>, seed: u64) -> Self {
        use rand::SeedableRng;
        EmbeddingState {
            layout,
            num_instances,
            velocity: vec![[0.0; 2]; coords.len()],
            gains: vec![[1.0; 2]; coords.len()],
            coords,
            offsets,
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn num_iterations(&self) -> usize {
        self.offsets.len()
    }

    pub fn element_index(&self, rank: usize, instance: usize) -> usize {
        rank * self.num_instances + instance
    }

    /// Cartesian view of element `e`.
    pub fn xy(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.coords[e];
        match self.layout {
            Layout::Rectilinear => [a, b],
            Layout::Radial => [a * b.cos(), a * b.sin()],
        }
    }

    /// Polar view `(r, theta)` of element `e`; theta in `[0, 2pi)`.
    pub fn polar(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.coords[e];
        match self.layout {
            Layout::Rectilinear => [a.hypot(b), wrap_angle(b.atan2(a))],
            Layout::Radial => [a, wrap_angle(b)],
        }
    }

    /// The coordinate the displacement well acts on: x or r.
    pub fn band_coord(&self, e: usize) -> f64 {
        self.coords[e][0]
    }

    pub fn cartesian(&self) -> Vec<[f64; 2]> {
        (0..self.coords.len()).map(|e| self.xy(e)).collect()
    }

    /// Cartesian coordinates of one iteration rank.
    pub fn iteration_xy(&self, rank: usize) -> Vec<[f64; 2]> {
        (0..self.num_instances)
            .map(|i| self.xy(self.element_index(rank, i)))
            .collect()
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI { 0.0 } else { w }
}
