use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evoembed::bundle::{loss_history_csv, BundleOptions, LayoutBundle, RenderSettings};
use evoembed::ingest::{generate_synthetic, load_with_manifest, parse_schedule, prepare_features, write_dataset, SynthSpec};
use evoembed::optimizer::{embed, embed_with, EmbedOptions, LossBreakdown};
use evoembed::pathway::default_eps;
use evoembed::quality::{quality_report, reports_to_csv, vanilla_config, QualityReport};
use evoembed::{EmbedConfig, EvoError, Layout};

use crate::args::{Baseline, Command, EmbedArgs, MetricsArgs, PathwayArgs, PathwayFlags, SynthArgs};
use crate::{serve, usage};

pub fn dispatch(cli: crate::Cli) -> Result<()> {
    match cli.command {
        Command::Embed(a) => cmd_embed(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Pathways(a) => cmd_pathways(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Serve(a) => serve::cmd_serve(a),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bundle".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn bundle_options(flags: &PathwayFlags, spacing: f64, enabled: bool) -> Result<BundleOptions> {
    let [lo, hi] = flags.len_pct[..] else {
        return Err(usage("--len-pct takes exactly two values"));
    };
    if !(0.0..=1.0).contains(&flags.interp) {
        return Err(usage(format!("--interp must lie in [0, 1], got {}", flags.interp)));
    }
    if !(0.0..=1.0).contains(&flags.tension) {
        return Err(usage(format!("--tension must lie in [0, 1], got {}", flags.tension)));
    }
    Ok(BundleOptions {
        pathways: enabled,
        eps: flags.eps.unwrap_or_else(|| default_eps(spacing)),
        min_pts: flags.min_pts,
        render: RenderSettings { tension: flags.tension, interp: flags.interp, len_pct: [lo, hi] },
        thumbnail_dirs: Vec::new(),
    })
}

fn print_losses(it: usize, l: &LossBreakdown, sigma: f64) {
    eprintln!(
        "iter {it:>5}  total {:>12.6}  semantic {:>10.6}  displacement {:>11.6}  alignment {:>11.6}  sigma {sigma:.3}",
        l.total, l.semantic, l.displacement, l.alignment
    );
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    if a.iters == 0 {
        return Err(usage("--iters must be at least 1"));
    }
    let layout = Layout::from(a.layout);
    let config = EmbedConfig {
        layout,
        alpha: a.alpha,
        beta: a.beta,
        gamma: a.gamma.unwrap_or_else(|| EmbedConfig::default_gamma(layout)),
        perplexity: a.perplexity,
        sigma_start: a.sigma_start,
        sigma_end: a.sigma_end,
        spacing: a.spacing,
        opt_iters: a.iters,
        pca_dims: (a.pca_dims > 0).then_some(a.pca_dims),
        seed: a.seed,
        learning_rate: a.learning_rate,
        adaptive_gains: !a.no_gains,
        ..EmbedConfig::for_layout(layout)
    };
    let mut options = bundle_options(&a.pathway, config.spacing, !a.no_pathways)?;

    let (manifest, dataset) = load_with_manifest(&a.input)?;
    config.validate(dataset.num_instances)?;
    if config.learning_rate > dataset.num_instances as f64 {
        eprintln!(
            "warning: learning rate {} exceeds the {} instances per iteration; consider --learning-rate {}",
            config.learning_rate, dataset.num_instances, dataset.num_instances
        );
    }
    options.thumbnail_dirs = manifest.instances.iter().map(|m| m.thumbnail_dir.clone()).collect();

    let mut progress = print_losses;
    let result = embed_with(
        &dataset,
        &config,
        EmbedOptions { progress_every: 100, progress: Some(&mut progress), cancel: None },
    )?;
    let bundle = LayoutBundle::build(&dataset, &result.state, &config, &options)?;
    bundle.write(&a.out)?;
    let loss_path = sibling(&a.out, ".loss.csv");
    fs::write(&loss_path, loss_history_csv(&result.history))
        .with_context(|| format!("writing {}", loss_path.display()))?;
    eprintln!("wrote {} ({} elements) and {}", a.out.display(), bundle.elements.len(), loss_path.display());
    Ok(())
}

fn run_label(config: &EmbedConfig, suffix: &str) -> String {
    format!("{}_{suffix}", config.layout)
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    if a.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let mut bundle = LayoutBundle::read(&a.bundle)?;
    let (_, dataset) = load_with_manifest(&a.input)?;
    let state = bundle.state_for(&dataset).map_err(|e| match e {
        EvoError::Validation(v) => EvoError::Validation(
            v.into_iter().map(|m| format!("bundle {} vs manifest {}: {m}", a.bundle.display(), a.input.display())).collect(),
        ),
        other => other,
    })?;
    let config = bundle.config.clone();
    let measure = |features: &evoembed::EvolutionDataset, state: &evoembed::EmbeddingState, label: &str| {
        quality_report(features, state, a.k, label)
    };
    let features = if a.pre_pca { dataset.clone() } else { prepare_features(&dataset, &config)?.into_owned() };
    let own = if config.gamma > 0.0 { "all" } else { "noalign" };
    let main = measure(&features, &state, &run_label(&config, own))?;

    let mut baselines: Vec<QualityReport> = Vec::new();
    let reference = match a.baseline {
        Baseline::None => None,
        Baseline::Vanilla => Some((vanilla_config(&config), "vanilla".to_string())),
        Baseline::Noalign => Some((EmbedConfig { gamma: 0.0, ..config.clone() }, run_label(&config, "noalign"))),
    };
    if let Some((cfg, label)) = reference {
        eprintln!("running {label} baseline ({} iterations)", cfg.opt_iters);
        let run = embed(&dataset, &cfg)?;
        let f = if a.pre_pca { &dataset } else { &run.features };
        baselines.push(measure(f, &run.state, &label)?);
    }

    let mut reports = vec![main.clone()];
    reports.extend(baselines.iter().cloned());
    let out = a.out.unwrap_or_else(|| sibling(&a.bundle, ".metrics.csv"));
    fs::write(&out, reports_to_csv(&reports)).with_context(|| format!("writing {}", out.display()))?;

    bundle.quality = Some(main);
    bundle.baseline_quality = baselines;
    bundle.write(&a.bundle)?;
    for r in &reports {
        for it in &r.iterations {
            eprintln!("{:<20} iteration {:>6}  trust {:.4}  cont {:.4}", r.baseline_label, it.iteration_label, it.trust, it.cont);
        }
    }
    eprintln!("wrote {} and updated {}", out.display(), a.bundle.display());
    Ok(())
}

fn cmd_pathways(a: PathwayArgs) -> Result<()> {
    let mut bundle = LayoutBundle::read(&a.bundle)?;
    let options = bundle_options(&a.pathway, bundle.config.spacing, true)?;
    bundle.set_pathways(&options)?;
    let out = a.out.unwrap_or_else(|| a.bundle.clone());
    bundle.write(&out)?;
    let visible = bundle.pathways.iter().filter(|p| p.visible).count();
    let clusters: usize = bundle
        .clusters
        .iter()
        .flat_map(|c| &c.groups)
        .map(|g| g.centroids.len())
        .sum();
    eprintln!(
        "wrote {}: {visible}/{} pathways visible, {clusters} clusters",
        out.display(),
        bundle.pathways.len()
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::hierarchical(a.instances, a.iterations, a.dims, a.modes, a.seed);
    if let Some(s) = &a.schedule {
        spec.branch_schedule = parse_schedule(s)?;
    }
    spec.noise_scale = a.noise;
    spec.separation = a.separation;
    if !(a.noise >= 0.0 && a.separation >= 0.0) {
        return Err(usage("--noise and --separation must be non-negative"));
    }
    let out = generate_synthetic(&spec)?;
    let manifest = write_dataset(&out.dataset, &a.out_dir, "synth")?;

    let ds = &out.dataset;
    let mut csv = String::from("rank,iteration_label,instance_id,label\n");
    for k in 0..ds.num_iterations() {
        for (i, m) in ds.instance_meta.iter().enumerate() {
            let _ = writeln!(csv, "{k},{},{},{}", ds.iteration_labels[k], m.instance_id, out.label(k, i));
        }
    }
    let labels = a.out_dir.join("labels.csv");
    fs::write(&labels, csv).with_context(|| format!("writing {}", labels.display()))?;
    eprintln!("wrote {} and {}", manifest.display(), labels.display());
    Ok(())
}
