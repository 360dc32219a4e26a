//! Synthetic branching trajectories with ground-truth mode labels.
//!
//! Every instance starts as pure per-instance noise and drifts, along a
//! linear ramp, towards the centre of the mode it belongs to. Modes split
//! according to a branch tree, so at early ranks several final modes share
//! one ancestor centre.

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};
use crate::model::{EvolutionDataset, InstanceMeta};

/// At `rank`, mode `parent` splits into `children`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub rank: usize,
    pub parent: usize,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_instances: usize,
    pub num_iterations: usize,
    pub feature_dim: usize,
    pub num_modes: usize,
    pub branch_schedule: Vec<Branch>,
    pub noise_scale: f64,
    /// Distance between a child mode centre and its parent's.
    pub separation: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Balanced binary splitting into `num_modes` leaves, with split levels
    /// spread evenly over ranks `1..num_iterations`.
    pub fn hierarchical(
        num_instances: usize,
        num_iterations: usize,
        feature_dim: usize,
        num_modes: usize,
        seed: u64,
    ) -> Self {
        SynthSpec {
            num_instances,
            num_iterations,
            feature_dim,
            num_modes,
            branch_schedule: default_schedule(num_modes, num_iterations),
            noise_scale: 0.1,
            separation: 12.0,
            seed,
        }
    }
}

fn default_schedule(num_modes: usize, num_iterations: usize) -> Vec<Branch> {
    if num_modes < 2 || num_iterations < 2 {
        return Vec::new();
    }
    let levels = (num_modes as f64).log2().ceil() as usize;
    let span = num_iterations.saturating_sub(2);
    let mut leaves = vec![0usize];
    let mut next = 1;
    let mut schedule = Vec::new();
    for level in 0..levels {
        let rank = 1 + level * span / levels;
        for parent in leaves.clone() {
            if leaves.len() >= num_modes {
                break;
            }
            let children = vec![next, next + 1];
            next += 2;
            leaves.retain(|&m| m != parent);
            leaves.extend(&children);
            schedule.push(Branch { rank, parent, children });
        }
    }
    schedule
}

/// Parses `rank:parent>child,child;rank:parent>child,child`.
impl FromStr for Branch {
    type Err = EvoError;

    fn from_str(s: &str) -> Result<Self> {
        let err = || EvoError::config(format!("bad branch {s:?}, expected rank:parent>child,child"));
        let (rank, rest) = s.trim().split_once(':').ok_or_else(err)?;
        let (parent, children) = rest.split_once('>').ok_or_else(err)?;
        let children = children
            .split(',')
            .map(|c| c.trim().parse().map_err(|_| err()))
            .collect::<Result<Vec<usize>>>()?;
        Ok(Branch {
            rank: rank.trim().parse().map_err(|_| err())?,
            parent: parent.trim().parse().map_err(|_| err())?,
            children,
        })
    }
}

pub fn parse_schedule(s: &str) -> Result<Vec<Branch>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Generated dataset plus the mode of every element (`labels[k * N + i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: EvolutionDataset,
    pub labels: Vec<usize>,
    /// Final-rank (leaf) mode of each instance.
    pub leaf_modes: Vec<usize>,
    pub centers: HashMap<usize, Vec<f64>>,
}

impl SynthOutput {
    pub fn label(&self, rank: usize, instance: usize) -> usize {
        self.labels[rank * self.dataset.num_instances + instance]
    }
}

/// Checks the schedule and returns, per leaf mode, its ancestry as
/// `(rank the mode appears, mode id)` from the root down.
fn validate_tree(spec: &SynthSpec) -> Result<Vec<Vec<(usize, usize)>>> {
    let bad = |m: String| Err(EvoError::Config(m));
    if spec.num_instances < 2 || spec.num_iterations < 2 || spec.feature_dim < 1 {
        return bad(format!(
            "need >= 2 instances, >= 2 iterations and >= 1 dim, got {}x{}x{}",
            spec.num_instances, spec.num_iterations, spec.feature_dim
        ));
    }
    if spec.num_modes < 1 {
        return bad("need at least one mode".into());
    }
    if !(spec.noise_scale >= 0.0 && spec.noise_scale.is_finite()) {
        return bad(format!("noise_scale must be >= 0, got {}", spec.noise_scale));
    }

    let mut active: BTreeSet<usize> = BTreeSet::from([0]);
    let mut seen: BTreeSet<usize> = BTreeSet::from([0]);
    let mut lineage: HashMap<usize, Vec<(usize, usize)>> = HashMap::from([(0, vec![(0, 0)])]);
    let mut last_rank = 1;
    for b in &spec.branch_schedule {
        if b.rank < 1 || b.rank >= spec.num_iterations {
            return bad(format!("branch rank {} outside 1..{}", b.rank, spec.num_iterations));
        }
        if b.rank < last_rank {
            return bad(format!("branch ranks must be non-decreasing ({} after {last_rank})", b.rank));
        }
        last_rank = b.rank;
        if !active.remove(&b.parent) {
            return bad(format!("branch parent {} is not a current leaf", b.parent));
        }
        if b.children.len() < 2 {
            return bad(format!("mode {} must split into at least 2 children", b.parent));
        }
        let path = lineage[&b.parent].clone();
        for &c in &b.children {
            if !seen.insert(c) {
                return bad(format!("mode id {c} used twice"));
            }
            active.insert(c);
            let mut p = path.clone();
            p.push((b.rank, c));
            lineage.insert(c, p);
        }
    }
    if active.len() != spec.num_modes {
        return bad(format!(
            "schedule yields {} leaf modes but {} were requested",
            active.len(),
            spec.num_modes
        ));
    }
    Ok(active.into_iter().map(|m| lineage.remove(&m).unwrap()).collect())
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthOutput> {
    let leaves = validate_tree(spec)?;
    let (n, t, d) = (spec.num_instances, spec.num_iterations, spec.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mut centers: HashMap<usize, Vec<f64>> = HashMap::from([(0, vec![0.0; d])]);
    for b in &spec.branch_schedule {
        let parent = centers[&b.parent].clone();
        for &c in &b.children {
            let dir: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let center = parent
                .iter()
                .zip(&dir)
                .map(|(p, u)| p + spec.separation * u / norm)
                .collect();
            centers.insert(c, center);
        }
    }

    let leaf_of: Vec<usize> = (0..n).map(|i| i % leaves.len()).collect();
    let base_noise: Vec<f64> = (0..n * d).map(|_| gauss(&mut rng)).collect();

    let mut features = Vec::with_capacity(t * n * d);
    let mut labels = Vec::with_capacity(t * n);
    for k in 0..t {
        let a = k as f64 / (t - 1) as f64;
        for (i, &leaf) in leaf_of.iter().enumerate() {
            let mode = leaves[leaf]
                .iter()
                .rev()
                .find(|(rank, _)| *rank <= k)
                .map(|&(_, m)| m)
                .unwrap_or(0);
            labels.push(mode);
            let mu = &centers[&mode];
            for c in 0..d {
                let eta = gauss(&mut rng);
                let v = (1.0 - a) * base_noise[i * d + c] + a * mu[c] + spec.noise_scale * eta;
                features.push(v as f32 as f64);
            }
        }
    }

    let labels_out = (0..t as i64).rev().map(|k| k * 10).collect();
    let meta = (0..n)
        .map(|i| {
            let leaf = leaves[leaf_of[i]].last().unwrap().1;
            let keyword = format!("mode{leaf}");
            InstanceMeta {
                instance_id: format!("inst{i:04}"),
                prompt: format!("synthetic instance {i} of {keyword}"),
                keywords: BTreeSet::from([keyword]),
            }
        })
        .collect();
    let dataset = EvolutionDataset {
        num_instances: n,
        iteration_labels: labels_out,
        feature_dim: d,
        features,
        instance_meta: meta,
        representation_kind: Default::default(),
    };
    dataset.ensure_valid()?;
    Ok(SynthOutput {
        leaf_modes: leaf_of.iter().map(|&l| leaves[l].last().unwrap().1).collect(),
        dataset,
        labels,
        centers,
    })
}
