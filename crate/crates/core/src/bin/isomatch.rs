use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use isomatch::bench::{
    emit_plot_data, gen_synthetic, load_dataset, run_experiment, write_report, write_synthetic,
    DataSource, ExperimentConfig, ExperimentReport, ReportRow, Silhouette, SyntheticConfig,
};
use isomatch::features::{with_shape_context, ShapeContextConfig};
use isomatch::infer::LoopyOptions;
use isomatch::io::{
    load_matches, load_model, load_scene, load_template, save_matches, save_model, save_scene, LegacyDims,
};
use isomatch::learn::{
    evaluate, evaluate_linear, loss, predict_linear, select_lambda_stage1, select_lambda_stage2,
    train_stage1, train_stage2, write_risk_history, LossKind, MatchOptions, TrainConfig, TrainingSet,
};
use isomatch::{FeatureConfig, FeatureFlags, FeatureGroup, Scene};

/// Near-isometric shape matching with loop-of-cliques inference.
///
/// File formats:
///   scene     `# width=W height=H k=K` header, then `<id> <x> <y> <d_1> .. <d_K>` per point.
///             Bare `<x> <y>` landmark files are read when --width/--height are given.
///   template  a scene file plus a `# order: i0 i1 ...` line (all points when absent).
///   matches   one `<template_index> <target_index>` pair per line.
///   model     JSON: version, theta0, theta, p, feature_config, scale_factors.
///   dataset   manifest.json listing {template, target, matches} per split.
#[derive(Parser, Debug)]
#[command(name = "isomatch", version, verbatim_doc_comment)]
struct Cli {
    /// Worker threads for instance-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Match a template against a target scene with a trained model.
    Match(MatchArgs),
    /// Train both stages on a dataset manifest and write a model.
    Train(TrainArgs),
    /// Evaluate a model on one split of a dataset manifest.
    Eval(EvalArgs),
    /// Generate a synthetic silhouette dataset.
    Synth(SynthArgs),
    /// Run an experiment config and write report.csv plus plot CSVs.
    Sweep(SweepArgs),
    /// Append Shape Context descriptors to a scene file.
    Sc(ScArgs),
}

#[derive(Args, Debug, Clone)]
struct Legacy {
    /// Image width for header-less landmark files.
    #[arg(long, requires = "height")]
    width: Option<f64>,
    /// Image height for header-less landmark files.
    #[arg(long, requires = "width")]
    height: Option<f64>,
}

impl Legacy {
    fn dims(&self) -> Option<LegacyDims> {
        Some(LegacyDims {
            width: self.width?,
            height: self.height?,
        })
    }
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Candidates per template point.
    #[arg(long)]
    p: Option<usize>,
    /// Loss: hamming or endpoint.
    #[arg(long)]
    loss: Option<LossKind>,
    /// Regularisation constant (disables lambda grids).
    #[arg(long)]
    lambda: Option<f64>,
    /// Message-passing sweeps.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Use the exact conditioned solver instead of message passing.
    #[arg(long)]
    exact: bool,
}

impl Common {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.p {
            cfg.p = p;
        }
        if let Some(l) = self.loss {
            cfg.loss = l;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
            cfg.lambda_grid.clear();
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        cfg.exact |= self.exact;
    }

    fn match_options(&self) -> MatchOptions {
        MatchOptions {
            loopy: LoopyOptions {
                max_iters: self.max_iters.unwrap_or(LoopyOptions::default().max_iters),
                ..LoopyOptions::default()
            },
            exact: self.exact,
        }
    }
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output match file.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth match file; the loss is reported when given.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Stage-1 linear assignment only.
    #[arg(long)]
    linear: bool,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    legacy: Legacy,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest with `train` and optionally `val` splits.
    #[arg(long)]
    data: PathBuf,
    /// Training config (JSON); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for model.json, risk histories and pruning recall.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated feature groups (unary, distance, adjacency, scaled_distance, angle).
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<String>>,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    legacy: Legacy,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Output report CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    legacy: Legacy,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Synthetic config (JSON); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.csv and plot CSVs.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ScArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    radial_bins: usize,
    #[arg(long, default_value_t = 12)]
    angular_bins: usize,
    #[arg(long, default_value_t = 0.125)]
    r_inner: f64,
    #[arg(long, default_value_t = 2.0)]
    r_outer: f64,
    #[command(flatten)]
    legacy: Legacy,
}

fn with_descriptors(scene: Arc<Scene>, sc: Option<&ShapeContextConfig>) -> Result<Arc<Scene>> {
    match sc {
        Some(cfg) if !scene.has_descriptors() => Ok(Arc::new(with_shape_context(&scene, cfg)?)),
        _ => Ok(scene),
    }
}

fn cmd_match(a: MatchArgs) -> Result<()> {
    let mut model = load_model(&a.model)?;
    if let Some(p) = a.common.p {
        model.p = p;
    }
    let sc = model.feature_config.shape_context;
    let legacy = a.legacy.dims();
    let t = load_template(&a.template, legacy)?;
    let template = t.with_scene(with_descriptors(t.scene_arc().clone(), sc.as_ref())?)?;
    let target = with_descriptors(Arc::new(load_scene(&a.target, legacy)?), sc.as_ref())?;
    let y = if a.linear {
        predict_linear(&template, &target, &model.theta0)?
    } else {
        let r = isomatch::learn::infer_higher_order(&template, &target, &model, None, &a.common.match_options())?;
        println!(
            "objective {:.6}, {} sweeps{}{}",
            r.objective,
            r.iterations,
            if r.converged { ", converged" } else { "" },
            if r.fallback { ", exact fallback" } else { "" }
        );
        r.assignment
    };
    save_matches(&y, &a.out)?;
    let collisions = y.collisions();
    if collisions > 0 {
        println!("{collisions} target points receive more than one template point");
    }
    if let Some(truth) = &a.truth {
        let gt = load_matches(truth, template.len(), target.len())?;
        let kind = a.common.loss.unwrap_or(LossKind::Hamming);
        println!("{} loss {:.6}", kind_name(kind), loss::loss(kind, &y, &gt, &target)?);
    }
    Ok(())
}

fn kind_name(kind: LossKind) -> &'static str {
    match kind {
        LossKind::Hamming => "hamming",
        LossKind::Endpoint => "endpoint",
    }
}

fn parse_groups(names: &[String]) -> Result<FeatureFlags> {
    let mut flags = FeatureFlags::NONE;
    for name in names {
        let g = FeatureGroup::ALL
            .into_iter()
            .find(|g| g.name() == name.trim())
            .with_context(|| format!("unknown feature group `{name}`"))?;
        match g {
            FeatureGroup::Unary => flags.unary = true,
            FeatureGroup::Distance => flags.distance = true,
            FeatureGroup::Adjacency => flags.adjacency = true,
            FeatureGroup::ScaledDistance => flags.scaled_distance = true,
            FeatureGroup::Angle => flags.angle = true,
        }
    }
    Ok(flags)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    a.common.apply(&mut cfg);
    cfg.validate()?;
    let mut fc = FeatureConfig::default();
    if let Some(g) = &a.groups {
        fc.groups = parse_groups(g)?;
    }
    let ds = load_dataset(&a.data, a.legacy.dims())?;
    let train = TrainingSet::new(ds.split("train")?.to_vec())?;
    let val = match ds.splits.get("val") {
        Some(v) if !v.is_empty() => Some(TrainingSet::new(v.clone())?),
        _ => None,
    };
    mkdir(&a.out)?;

    let (s1, s2) = match (&val, cfg.lambda_grid.is_empty()) {
        (Some(v), false) => {
            let sel1 = select_lambda_stage1(&train, v, &cfg)?;
            println!("stage 1: lambda {} (validation risks {:?})", sel1.lambda, sel1.risks);
            let theta0 = sel1.chosen.theta0.clone();
            let sel2 = select_lambda_stage2(&train, v, &theta0, &fc, &cfg)?;
            println!("stage 2: lambda {} (validation risks {:?})", sel2.lambda, sel2.risks);
            (sel1.chosen, sel2.chosen)
        }
        _ => {
            let s1 = train_stage1(&train, val.as_ref(), &cfg)?;
            let s2 = train_stage2(&train, val.as_ref(), &s1.theta0, &fc, &cfg)?;
            (s1, s2)
        }
    };
    save_model(&s2.model, a.out.join("model.json"))?;
    write_risk_history(&s1.state.risk_history, a.out.join("risk_stage1.csv"))?;
    write_risk_history(&s2.state.risk_history, a.out.join("risk_stage2.csv"))?;
    let mut w = csv::Writer::from_path(a.out.join("pruning_recall.csv"))?;
    w.write_record(["instance", "recall"])?;
    for (i, r) in s2.recall.per_instance.iter().enumerate() {
        w.write_record([i.to_string(), r.to_string()])?;
    }
    w.flush()?;
    println!(
        "pruning recall at p={}: mean {:.4}, {} of {} instances complete",
        cfg.p,
        s2.recall.mean,
        s2.recall.complete,
        s2.recall.per_instance.len()
    );
    let ev = evaluate(&train, &s2.model, cfg.loss, &cfg.match_options())?;
    println!(
        "training {} loss {:.4} (+/- {:.4}); model written to {}",
        kind_name(cfg.loss),
        ev.mean,
        ev.std_error,
        a.out.join("model.json").display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut model = load_model(&a.model)?;
    if let Some(p) = a.common.p {
        model.p = p;
    }
    let kind = a.common.loss.unwrap_or(LossKind::Hamming);
    let ds = load_dataset(&a.data, a.legacy.dims())?;
    let data = TrainingSet::new(ds.split(&a.split)?.to_vec())?;
    let opts = a.common.match_options();
    let mut report = ExperimentReport::default();
    for (method, p) in [("linear_learned", None), ("higher_order_learned", Some(model.p))] {
        let start = std::time::Instant::now();
        let ev = if p.is_some() {
            evaluate(&data, &model, kind, &opts)?
        } else {
            evaluate_linear(&data, &model.theta0, kind)?
        };
        let ms = start.elapsed().as_secs_f64() * 1e3 / data.len().max(1) as f64;
        println!("{method:<22} {} loss {:.4} (+/- {:.4}), {ms:.2} ms/pair", kind_name(kind), ev.mean, ev.std_error);
        report.rows.push(ReportRow {
            method: method.into(),
            condition: a.split.clone(),
            mean: ev.mean,
            stderr: ev.std_error,
            ms,
            n: ev.losses.len(),
            outliers: None,
            epsilon: None,
            baseline: None,
            p,
            per_seed: vec![ev.mean],
        });
    }
    write_report(&report, &a.out)?;
    Ok(())
}

#[derive(Deserialize, Default)]
struct SynthFile {
    #[serde(flatten)]
    synthetic: SyntheticConfig,
    #[serde(default)]
    silhouette: Option<PathBuf>,
    #[serde(default)]
    shape_context: Option<ShapeContextConfig>,
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut file: SynthFile = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthFile {
            synthetic: SyntheticConfig::default(),
            ..SynthFile::default()
        },
    };
    if let Some(s) = a.seed {
        file.synthetic.seed = s;
    }
    let cfg = &file.synthetic;
    let sil = match &file.silhouette {
        Some(p) => {
            let base = a.config.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
            Silhouette::load(base.join(p))?
        }
        None => Silhouette::random_blob(0, 200, cfg.width, cfg.height)?,
    };
    let ds = gen_synthetic(cfg, &sil, &file.shape_context.unwrap_or_default())?;
    let manifest = write_synthetic(&ds, &a.out)?;
    println!(
        "{} images, {}/{}/{} train/val/test pairs; manifest at {}",
        ds.images.len(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        manifest.display()
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    let c = &a.common;
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(p) = c.p {
        cfg.p = vec![p];
    }
    if let Some(l) = c.loss {
        cfg.loss = l;
    }
    if let Some(l) = c.lambda {
        cfg.train.lambda = l;
        cfg.lambda_grid_stage1.clear();
        cfg.lambda_grid_stage2.clear();
    }
    if let Some(m) = c.max_iters {
        cfg.train.max_iters = m;
    }
    cfg.train.exact |= c.exact;
    if let DataSource::House { dir, .. } = &cfg.data {
        if !dir.is_dir() {
            bail!("house data directory {} not found", dir.display());
        }
    }
    let report = run_experiment(&cfg)?;
    for (cond, seed, stage, holds) in &report.bound_checks {
        if !holds {
            println!("warning: stage {stage} slacks do not bound the training loss ({cond}, seed {seed})");
        }
    }
    mkdir(&a.out)?;
    write_report(&report, a.out.join("report.csv"))?;
    if report.rows.is_empty() {
        println!("no methods configured; empty report written");
        return Ok(());
    }
    emit_plot_data(&report, &a.out)?;
    for r in &report.rows {
        println!(
            "{:<22} p={:<4} {:<28} mean {:.4} (+/- {:.4}) over {} pairs, {:.2} ms/pair",
            r.method,
            r.p.map_or("-".into(), |p| p.to_string()),
            r.condition,
            r.mean,
            r.stderr,
            r.n,
            r.ms
        );
    }
    Ok(())
}

fn cmd_sc(a: ScArgs) -> Result<()> {
    let cfg = ShapeContextConfig {
        radial_bins: a.radial_bins,
        angular_bins: a.angular_bins,
        r_inner: a.r_inner,
        r_outer: a.r_outer,
    };
    cfg.validate()?;
    let scene = load_scene(&a.scene, a.legacy.dims())?;
    let out = with_shape_context(&scene, &cfg)?;
    save_scene(&out, &a.out)?;
    println!("{} points, {} descriptor columns", out.len(), cfg.dim());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Sc(a) => cmd_sc(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
