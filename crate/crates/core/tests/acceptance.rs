//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::*;
use evoembed::affinity::{AffinitySet, JointAffinity};
use evoembed::bundle::{BundleOptions, LayoutBundle};
use evoembed::ingest::{generate_synthetic, SynthOutput, SynthSpec};
use evoembed::optimizer::{
    alignment_loss_and_grad_radial, alignment_loss_and_grad_rect, displacement_loss_and_grad, embed, initialize,
    semantic_loss_and_grad, step, to_polar_gradient, AnnealSchedule, EmbedResult,
};
use evoembed::pathway::{angle_between, angular_path_length};
use evoembed::quality::{continuity, quality_report, rank_excess, scaling_factor, trustworthiness, vanilla_config, QualityReport};
use evoembed::{iteration_offsets, EmbedConfig, EmbeddingState, Layout};
use rand::Rng;

const QUALITY_K: usize = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ------------------------------------------------------------- gradients

/// Worst relative error of one term's analytic gradient against central
/// differences, skipping coordinates flagged by `skip`. Differences below the
/// rounding resolution of the difference quotient count as exact.
fn worst_error(analytic: &[f64], x: &[f64], f: &dyn Fn(&[f64]) -> f64, skip: &dyn Fn(usize) -> bool) -> f64 {
    let floor = 10.0 * f64::EPSILON * f(x).abs().max(1.0) / FD_STEP;
    (0..x.len())
        .filter(|&i| !skip(i))
        .map(|i| rel_err(analytic[i], central_difference(f, x, i, FD_STEP), floor))
        .fold(0.0, f64::max)
}

/// Whether element `e` lies within 1e-6 of a kink of `side(e - other)`, or
/// close enough that the difference stencil straddles it.
fn near_kink(values: &[f64], n: usize, e: usize, side: &dyn Fn(f64) -> f64) -> bool {
    [e.checked_sub(n), Some(e + n)].into_iter().flatten().filter(|&o| o < values.len()).any(|o| {
        let d = values[e] - values[o];
        side(d).abs() < 1e-6 || side(d + FD_STEP).signum() != side(d - FD_STEP).signum()
    })
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let (n, t, d) = (30, 4, 8);
    let mut worst = [0.0f64; 6];
    for case in 0..20u64 {
        let ds = random_dataset(1000 + case, n, t, d);
        let aff = AffinitySet::compute(&ds, 10.0).unwrap();
        let mut r = rng(2000 + case);
        let offsets: Vec<f64> = (0..t).map(|k| 20.0 * k as f64).collect();
        let sigma = r.random_range(10.0..20.0);

        // Rectilinear: semantic on (x, y), displacement on x, alignment on y.
        let xy: Vec<f64> = (0..n * t).flat_map(|e| [offsets[e / n] + r.random_range(-15.0..15.0), r.random_range(-10.0..10.0)]).collect();
        let pts = |v: &[f64]| -> Vec<[f64; 2]> { v.chunks(2).map(|c| [c[0], c[1]]).collect() };
        let sem = semantic_loss_and_grad(&aff, &pts(&xy), 1.0);
        worst[0] = worst[0].max(worst_error(&flat(&sem.grad), &xy, &|v| kl_cost(&aff, &pts(v)), &|_| false));
        let xs: Vec<f64> = xy.chunks(2).map(|c| c[0]).collect();
        let ys: Vec<f64> = xy.chunks(2).map(|c| c[1]).collect();
        let disp = displacement_loss_and_grad(&xs, &offsets, n, sigma);
        worst[1] = worst[1].max(worst_error(&disp.grad, &xs, &|v| displacement_cost(v, &offsets, n, sigma), &|_| false));
        let align = alignment_loss_and_grad_rect(&ys, n);
        let kink = |e: usize| near_kink(&ys, n, e, &|d| d);
        worst[2] = worst[2].max(worst_error(&align.grad, &ys, &|v| rect_alignment_cost(v, n), &kink));

        // Radial: semantic through the polar chain rule, displacement on r,
        // alignment on theta.
        let polar: Vec<f64> = (0..n * t)
            .flat_map(|e| [offsets[e / n] + r.random_range(0.5..15.0), r.random_range(-PI..PI)])
            .collect();
        let to_xy = |v: &[f64]| -> Vec<[f64; 2]> { v.chunks(2).map(|c| [c[0] * c[1].cos(), c[0] * c[1].sin()]).collect() };
        let cart = semantic_loss_and_grad(&aff, &to_xy(&polar), 1.0);
        let chain: Vec<f64> = (0..n * t).flat_map(|e| to_polar_gradient(cart.grad[e], polar[2 * e], polar[2 * e + 1])).collect();
        worst[3] = worst[3].max(worst_error(&chain, &polar, &|v| kl_cost(&aff, &to_xy(v)), &|_| false));
        let rs: Vec<f64> = polar.chunks(2).map(|c| c[0]).collect();
        let thetas: Vec<f64> = polar.chunks(2).map(|c| c[1]).collect();
        let disp = displacement_loss_and_grad(&rs, &offsets, n, sigma);
        worst[4] = worst[4].max(worst_error(&disp.grad, &rs, &|v| displacement_cost(v, &offsets, n, sigma), &|_| false));
        let align = alignment_loss_and_grad_radial(&thetas, n, &mut rng(case));
        let kink = |e: usize| near_kink(&thetas, n, e, &|d| (d / 2.0).cos());
        worst[5] = worst[5].max(worst_error(&align.grad, &thetas, &|v| radial_alignment_cost(v, n), &kink));
    }
    let elapsed = start.elapsed();
    let max = worst.iter().copied().fold(0.0, f64::max);
    outcome(
        max < 1e-3 && elapsed < Duration::from_secs(30),
        format!(
            "max rel err {max:.2e} (rect sem {:.1e} disp {:.1e} align {:.1e}; radial sem {:.1e} disp {:.1e} align {:.1e}), {:.1}s",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5], elapsed.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------- shared embeddings

struct Run {
    result: EmbedResult,
    seconds: f64,
}

fn run(data: &SynthOutput, cfg: &EmbedConfig) -> Run {
    let start = Instant::now();
    let result = embed(&data.dataset, cfg).unwrap();
    Run { result, seconds: start.elapsed().as_secs_f64() }
}

struct LayoutRuns {
    layout: Layout,
    aligned: Run,
    free: Run,
    vanilla: Run,
}

fn layout_runs(data: &SynthOutput, layout: Layout) -> LayoutRuns {
    let cfg = EmbedConfig::for_layout(layout);
    LayoutRuns {
        layout,
        aligned: run(data, &cfg),
        free: run(data, &EmbedConfig { gamma: 0.0, ..cfg.clone() }),
        vanilla: run(data, &vanilla_config(&cfg)),
    }
}

fn report(r: &Run, label: &str) -> QualityReport {
    quality_report(&r.result.features, &r.result.state, QUALITY_K, label).unwrap()
}

// ------------------------------------------------------------ separation

fn quartiles(mut v: Vec<f64>) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    (at(0.25), at(0.75))
}

fn band_separation(runs: &[LayoutRuns]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lr in runs {
        let st = &lr.aligned.result.state;
        let t = st.num_iterations();
        let nearest_own = (0..st.coords.len())
            .filter(|&e| {
                let own = e / st.num_instances;
                let dist = |k: usize| (st.band_coord(e) - st.offsets[k]).abs();
                (0..t).all(|k| k == own || dist(own) < dist(k))
            })
            .count() as f64
            / st.coords.len() as f64;
        let iqrs: Vec<(f64, f64)> = (0..t)
            .map(|k| quartiles((0..st.num_instances).map(|i| st.band_coord(st.element_index(k, i))).collect()))
            .collect();
        let disjoint = iqrs.windows(2).all(|w| w[0].1 < w[1].0);
        let ok = nearest_own >= 0.95 && disjoint && lr.aligned.seconds < 120.0;
        pass &= ok;
        parts.push(format!(
            "{}: {:.1}% nearest own offset, IQRs {}, {:.1}s",
            lr.layout,
            100.0 * nearest_own,
            if disjoint { "disjoint" } else { "overlap" },
            lr.aligned.seconds
        ));
    }
    outcome(pass, parts.join("; "))
}

// --------------------------------------------------------------- quality

/// Largest per-iteration amount by which `a` falls below `b` (or differs
/// from it, when `absolute`).
fn quality_gap(a: &QualityReport, b: &QualityReport, absolute: bool) -> (f64, usize) {
    let mut worst = (f64::NEG_INFINITY, 0);
    for (x, y) in a.iterations.iter().zip(&b.iterations) {
        for diff in [y.trust - x.trust, y.cont - x.cont] {
            let gap = if absolute { diff.abs() } else { diff };
            if gap > worst.0 {
                worst = (gap, x.rank);
            }
        }
    }
    worst
}

fn quality_vs_vanilla(runs: &[LayoutRuns]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lr in runs {
        let (gap, rank) = quality_gap(&report(&lr.aligned, "aligned"), &report(&lr.vanilla, "vanilla"), true);
        pass &= gap <= 0.10;
        parts.push(format!("{}: max |dQ| {gap:.3} (rank {rank})", lr.layout));
    }
    outcome(pass, parts.join("; "))
}

fn total_path_length(st: &EmbeddingState) -> f64 {
    (0..st.num_instances)
        .map(|i| {
            let second: Vec<f64> = (0..st.num_iterations()).map(|k| st.coords[st.element_index(k, i)][1]).collect();
            match st.layout {
                Layout::Rectilinear => second.windows(2).map(|w| (w[1] - w[0]).abs()).sum(),
                Layout::Radial => angular_path_length(&second),
            }
        })
        .sum()
}

fn alignment_ablation(runs: &[LayoutRuns]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lr in runs {
        let (a, f) = (total_path_length(&lr.aligned.result.state), total_path_length(&lr.free.result.state));
        let reduction = 1.0 - a / f;
        let (loss, rank) = quality_gap(&report(&lr.aligned, "aligned"), &report(&lr.free, "free"), false);
        pass &= reduction >= 0.30 && loss < 0.05;
        parts.push(format!("{}: path -{:.1}%, max dQ {loss:.3} (rank {rank})", lr.layout, 100.0 * reduction));
    }
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------- metric oracle

fn metric_oracle() -> Outcome {
    let mut r = rng(4242);
    let mut mismatches = 0;
    for case in 0..50 {
        let n = r.random_range(10..=50);
        let d = r.random_range(2..=6);
        let k = r.random_range(1..=((2 * n - 2) / 3).min(12));
        let coarse = case % 3 == 0;
        let mut draw = || {
            let v: f64 = r.random_range(-3.0..3.0);
            if coarse { v.round() } else { v }
        };
        let high: Vec<f64> = (0..n * d).map(|_| draw()).collect();
        let low: Vec<[f64; 2]> = (0..n).map(|_| [draw(), draw()]).collect();
        let lf = flat(&low);
        let (t_oracle, c_oracle) = (oracle_rank_excess(&high, d, &lf, 2, k), oracle_rank_excess(&lf, 2, &high, d, k));
        let a = oracle_scale(n, k);
        let exact = rank_excess(&high, d, &lf, 2, k) == t_oracle
            && rank_excess(&lf, 2, &high, d, k) == c_oracle
            && scaling_factor(n, k).unwrap() == a
            && trustworthiness(&high, d, &low, k).unwrap() == 1.0 - a * t_oracle as f64
            && continuity(&high, d, &low, k).unwrap() == 1.0 - a * c_oracle as f64;
        mismatches += usize::from(!exact);
    }
    outcome(mismatches == 0, format!("{mismatches}/50 instances differ from the brute-force oracle"))
}

// ------------------------------------------------------------- complexity

fn seconds_per_step(t: usize) -> f64 {
    let ds = random_dataset(31, 200, t, 16);
    let cfg = EmbedConfig::radial();
    let aff = AffinitySet::compute(&ds, cfg.perplexity).unwrap();
    let offsets = iteration_offsets(&cfg, t).unwrap();
    let mut st = initialize(&ds, &cfg, &offsets);
    let schedule = AnnealSchedule::from_config(&cfg);
    for it in 0..5 {
        step(&mut st, &aff, &cfg, it, schedule.sigma_at(it)).unwrap();
    }
    let (steps, start) = (40, Instant::now());
    for it in 5..5 + steps {
        step(&mut st, &aff, &cfg, it, schedule.sigma_at(it)).unwrap();
    }
    start.elapsed().as_secs_f64() / steps as f64
}

fn per_iteration_complexity() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (short, long) = pool.install(|| (seconds_per_step(6), seconds_per_step(12)));
    let ratio = long / short;
    outcome(ratio <= 2.5, format!("T=6 {:.2} ms/step, T=12 {:.2} ms/step, ratio {ratio:.2}", 1e3 * short, 1e3 * long))
}

// ------------------------------------------------------------ determinism

fn bundle_json(data: &SynthOutput, layout: Layout, threads: usize) -> String {
    let cfg = EmbedConfig { opt_iters: 500, ..EmbedConfig::for_layout(layout) };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let res = embed(&data.dataset, &cfg).unwrap();
        LayoutBundle::build(&data.dataset, &res.state, &cfg, &BundleOptions::for_config(&cfg)).unwrap().to_json().unwrap()
    })
}

fn determinism() -> Outcome {
    let data = generate_synthetic(&SynthSpec::hierarchical(120, 4, 16, 2, 5)).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for layout in [Layout::Rectilinear, Layout::Radial] {
        let runs = [bundle_json(&data, layout, 1), bundle_json(&data, layout, 1), bundle_json(&data, layout, 4), bundle_json(&data, layout, 4)];
        let same = runs.iter().all(|b| b == &runs[0]);
        pass &= same;
        parts.push(format!("{layout}: {}", if same { "identical" } else { "differ" }));
    }
    outcome(pass, format!("{} across runs and 1/4 threads", parts.join(", ")))
}

// ----------------------------------------------------- unstable equilibrium

fn unstable_equilibrium() -> Outcome {
    let cfg = EmbedConfig { alpha: 0.0, beta: 0.0, opt_iters: 1000, ..EmbedConfig::radial() };
    // One instance: the semantic term has no pairs.
    let single = JointAffinity { num_points: 1, p: vec![0.0], sigmas: vec![0.0], flagged: Vec::new() };
    let aff = AffinitySet { perplexity: 1.0, per_iteration: vec![single.clone(), single] };
    let offsets = iteration_offsets(&cfg, 2).unwrap();
    let schedule = AnnealSchedule::from_config(&cfg);
    let mut worst: f64 = 0.0;
    for delta in [PI - 1e-3, PI + 1e-3] {
        for seed in 0..4 {
            let coords = vec![[offsets[0] + 10.0, 0.3], [offsets[1] + 10.0, 0.3 + delta]];
            let mut st = EmbeddingState::from_coords(Layout::Radial, 1, coords, offsets.clone(), seed);
            for it in 0..cfg.opt_iters {
                step(&mut st, &aff, &cfg, it, schedule.sigma_at(it)).unwrap();
            }
            worst = worst.max(angle_between(st.coords[0][1], st.coords[1][1]));
        }
    }
    outcome(worst < 0.1, format!("largest final angle {worst:.2e} rad from start pi +- 1e-3"))
}

// ---------------------------------------------------- branch separability

fn branch_separability(data: &SynthOutput, radial: &EmbedResult) -> Outcome {
    let st = &radial.state;
    let t = st.num_iterations();
    let mut leaves: Vec<usize> = data.leaf_modes.clone();
    leaves.sort_unstable();
    leaves.dedup();
    let members = |m: usize| -> Vec<usize> { (0..st.num_instances).filter(|&i| data.leaf_modes[i] == m).collect() };
    let mut violations = Vec::new();
    let mut pairs = 0;
    for (ai, &a) in leaves.iter().enumerate() {
        for &b in &leaves[ai + 1..] {
            pairs += 1;
            let (ma, mb) = (members(a), members(b));
            let split = (0..t).find(|&k| data.label(k, ma[0]) != data.label(k, mb[0])).unwrap_or(t);
            let overlap = |k: usize| {
                let angles = |m: &[usize]| -> Vec<f64> { m.iter().map(|&i| st.coords[st.element_index(k, i)][1]).collect() };
                sector_overlap(&angles(&ma), &angles(&mb))
            };
            if let Some(k) = (0..split).find(|&k| overlap(k) < 0.1) {
                violations.push(format!("{a}/{b} separable at rank {k} before split at {split}"));
            }
            if !(split..t).any(|k| overlap(k) < 0.1) {
                violations.push(format!("{a}/{b} never separable after split at {split}"));
            }
        }
    }
    let detail = if violations.is_empty() {
        format!("{pairs} leaf pairs: none separable before their split, all separable after")
    } else {
        violations.join("; ")
    };
    outcome(violations.is_empty(), detail)
}

fn main() {
    let mut failed = 0;
    let mut print = |name: &str, o: Outcome| {
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    print("gradient correctness", gradient_correctness());

    let data = generate_synthetic(&SynthSpec::hierarchical(200, 6, 16, 4, 42)).unwrap();
    let runs = [layout_runs(&data, Layout::Rectilinear), layout_runs(&data, Layout::Radial)];
    print("band/ring separation", band_separation(&runs));
    print("neighbourhood preservation vs vanilla", quality_vs_vanilla(&runs));
    print("alignment ablation", alignment_ablation(&runs));
    print("metric oracle equivalence", metric_oracle());
    print("per-iteration complexity", per_iteration_complexity());
    print("determinism", determinism());
    print("unstable equilibrium", unstable_equilibrium());
    print("branch separability", branch_separability(&data, &runs[1].aligned.result));

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
