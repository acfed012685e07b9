//! End-to-end experiment driver: generate or load data per condition,
//! train both stages, evaluate each method on the test pairs, and aggregate.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::house::{house_pairs, load_frames, split_thirds};
use crate::bench::synthetic::{gen_synthetic, Silhouette, SyntheticConfig};
use crate::error::{Error, Result};
use crate::features::ShapeContextConfig;
use crate::infer::LoopyOptions;
use crate::io::LegacyDims;
use crate::learn::{
    calibrate_scale_factors, infer_higher_order, loss, predict_linear, select_lambda_stage1,
    select_lambda_stage2, stage1_bound_check, stage2_bound_check, Evaluation, LossKind, MatchOptions,
    TrainConfig, TrainingSet,
};
use crate::model::{FeatureConfig, FeatureFlags, WeightModel};
use crate::types::MatchInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Linear assignment with uniform unary weights.
    Linear,
    /// Linear assignment with learned unary weights.
    LinearLearned,
    /// Loop model with uniform unary weights and equal group weights.
    HigherOrder,
    /// Loop model after both learning stages.
    HigherOrderLearned,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Linear,
        Method::LinearLearned,
        Method::HigherOrder,
        Method::HigherOrderLearned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::LinearLearned => "linear_learned",
            Method::HigherOrder => "higher_order",
            Method::HigherOrderLearned => "higher_order_learned",
        }
    }

    fn uses_p(self) -> bool {
        matches!(self, Method::HigherOrder | Method::HigherOrderLearned)
    }
}

fn default_n_shape() -> usize {
    25
}
fn default_n_images() -> usize {
    10
}
fn default_width() -> f64 {
    640.0
}
fn default_height() -> f64 {
    480.0
}
fn default_zero_usize() -> Vec<usize> {
    vec![0]
}
fn default_zero_f64() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        /// Closed polyline file; a seeded random blob when absent.
        #[serde(default)]
        silhouette: Option<PathBuf>,
        #[serde(default = "default_n_shape")]
        n_shape: usize,
        #[serde(default = "default_n_images")]
        n_images: usize,
        #[serde(default = "default_zero_usize")]
        outliers: Vec<usize>,
        #[serde(default = "default_zero_f64")]
        epsilons: Vec<f64>,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "default_height")]
        height: f64,
    },
    House {
        dir: PathBuf,
        /// Image size for landmark files without a header.
        #[serde(default)]
        width: Option<f64>,
        #[serde(default)]
        height: Option<f64>,
        baselines: Vec<usize>,
    },
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_p() -> Vec<usize> {
    vec![10]
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_bp() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub data: DataSource,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Candidate counts evaluated for the loop model.
    #[serde(default = "default_p")]
    pub p: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub loss: LossKind,
    /// Solver settings; `lambda_grid` here is ignored in favour of the
    /// per-stage grids below.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub lambda_grid_stage1: Vec<f64>,
    #[serde(default)]
    pub lambda_grid_stage2: Vec<f64>,
    #[serde(default)]
    pub feature_groups: FeatureFlags,
    #[serde(default)]
    pub shape_context: ShapeContextConfig,
    /// Length of the per-iteration timing series; 0 disables it.
    #[serde(default = "default_bp")]
    pub bp_iterations: usize,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        // Relative data paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg.data {
            DataSource::Synthetic { silhouette: Some(p), .. } if p.is_relative() => {
                *p = base.join(&*p);
            }
            DataSource::House { dir, .. } if dir.is_relative() => {
                *dir = base.join(&*dir);
            }
            _ => {}
        }
        Ok(cfg)
    }
}

/// One aggregated result: a method under one condition, pooled over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub condition: String,
    pub mean: f64,
    pub stderr: f64,
    /// Mean prediction time per test pair, milliseconds.
    pub ms: f64,
    /// Number of test pairs pooled.
    pub n: usize,
    pub outliers: Option<usize>,
    pub epsilon: Option<f64>,
    pub baseline: Option<usize>,
    pub p: Option<usize>,
    /// Mean test loss for each seed, in seed order.
    #[serde(skip)]
    pub per_seed: Vec<f64>,
}

/// Prediction cost and loss after a fixed number of message-passing sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpRow {
    pub iterations: usize,
    pub ms: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub bp_series: Vec<BpRow>,
    /// `(condition, seed, stage, lambda)` chosen by validation.
    pub lambdas: Vec<(String, u64, u8, f64)>,
    /// Mean pruning recall on the training pairs, per condition, seed and p.
    pub recall: Vec<(String, u64, usize, f64)>,
    /// `(condition, seed, stage, holds)`: whether every training slack of
    /// the selected model bounds its prediction loss.
    pub bound_checks: Vec<(String, u64, u8, bool)>,
}

#[derive(Debug, Clone)]
struct Condition {
    label: String,
    outliers: Option<usize>,
    epsilon: Option<f64>,
    baseline: Option<usize>,
}

struct Splits {
    train: TrainingSet,
    val: TrainingSet,
    test: Vec<MatchInstance>,
}

fn conditions(data: &DataSource) -> Vec<Condition> {
    match data {
        DataSource::Synthetic {
            outliers, epsilons, ..
        } => {
            let mut out = Vec::new();
            for &o in outliers {
                for &e in epsilons {
                    out.push(Condition {
                        label: format!("outliers={o} epsilon={e}"),
                        outliers: Some(o),
                        epsilon: Some(e),
                        baseline: None,
                    });
                }
            }
            out
        }
        DataSource::House { baselines, .. } => baselines
            .iter()
            .map(|&b| Condition {
                label: format!("baseline={b}"),
                outliers: None,
                epsilon: None,
                baseline: Some(b),
            })
            .collect(),
    }
}

fn load_splits(
    cfg: &ExperimentConfig,
    cond: &Condition,
    seed: u64,
    house: &Option<Vec<std::sync::Arc<crate::types::Scene>>>,
) -> Result<Splits> {
    match &cfg.data {
        DataSource::Synthetic {
            silhouette,
            n_shape,
            n_images,
            width,
            height,
            ..
        } => {
            let sil = match silhouette {
                Some(p) => Silhouette::load(p)?,
                None => Silhouette::random_blob(0, 200, *width, *height)?,
            };
            let sc = SyntheticConfig {
                n_shape: *n_shape,
                n_outliers: cond.outliers.unwrap_or(0),
                epsilon: cond.epsilon.unwrap_or(0.0),
                n_images: *n_images,
                seed,
                width: *width,
                height: *height,
            };
            let ds = gen_synthetic(&sc, &sil, &cfg.shape_context)?;
            Ok(Splits {
                train: TrainingSet::new(ds.train)?,
                val: TrainingSet::new(ds.val)?,
                test: ds.test,
            })
        }
        DataSource::House { .. } => {
            let frames = house.as_ref().expect("frames loaded");
            let pairs = house_pairs(frames, cond.baseline.unwrap_or(0), &cfg.shape_context)?;
            let (train, val, test) = split_thirds(&pairs);
            Ok(Splits {
                train: TrainingSet::new(train)?,
                val: TrainingSet::new(val)?,
                test,
            })
        }
    }
}

/// Losses and mean per-pair time (ms) of `predict` over the test pairs.
fn time_predictions<F>(test: &[MatchInstance], kind: LossKind, predict: F) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&MatchInstance) -> Result<crate::types::Assignment> + Sync,
{
    let start = Instant::now();
    let losses = test
        .par_iter()
        .map(|inst| {
            let y = predict(inst)?;
            loss::loss(kind, &y, inst.require_ground_truth()?, inst.target())
        })
        .collect::<Result<Vec<f64>>>()?;
    let ms = start.elapsed().as_secs_f64() * 1e3 / test.len().max(1) as f64;
    Ok((losses, ms))
}

#[derive(Default)]
struct Pool {
    losses: Vec<f64>,
    per_seed: Vec<f64>,
    ms: f64,
    runs: usize,
}

impl Pool {
    fn add(&mut self, losses: Vec<f64>, ms: f64) {
        let m = Evaluation::from_losses(losses.clone()).mean;
        self.per_seed.push(m);
        self.losses.extend(losses);
        self.ms += ms;
        self.runs += 1;
    }
}

const BOUND_TOL: f64 = 1e-9;

/// Runs every condition for every seed. Rows come out ordered by condition,
/// then method, then p.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::default();
    if cfg.methods.is_empty() {
        return Ok(report);
    }
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidConfig("no seeds given".into()));
    }
    let house = match &cfg.data {
        DataSource::House {
            dir, width, height, ..
        } => {
            let legacy = match (width, height) {
                (Some(w), Some(h)) => Some(LegacyDims {
                    width: *w,
                    height: *h,
                }),
                _ => None,
            };
            if !dir.is_dir() {
                return Err(Error::InvalidConfig(format!(
                    "house data directory `{}` does not exist",
                    dir.display()
                )));
            }
            Some(load_frames(dir, legacy)?)
        }
        DataSource::Synthetic { .. } => None,
    };
    let feature_config = FeatureConfig {
        groups: cfg.feature_groups,
        shape_context: Some(cfg.shape_context),
        ..FeatureConfig::default()
    };
    let needs_stage1 = cfg
        .methods
        .iter()
        .any(|m| matches!(m, Method::LinearLearned | Method::HigherOrderLearned));
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let opts = MatchOptions {
        loopy: LoopyOptions {
            max_iters: cfg.train.max_iters,
            ..LoopyOptions::default()
        },
        exact: cfg.train.exact,
    };

    for (ci, cond) in conditions(&cfg.data).iter().enumerate() {
        let mut plan: Vec<(Method, Option<usize>)> = Vec::new();
        for &m in &methods {
            if m.uses_p() {
                for &p in &cfg.p {
                    plan.push((m, Some(p)));
                }
            } else {
                plan.push((m, None));
            }
        }
        let mut pools: Vec<Pool> = plan.iter().map(|_| Pool::default()).collect();

        for (si, &seed) in cfg.seeds.iter().enumerate() {
            let splits = load_splits(cfg, cond, seed, &house)?;
            let dim = splits
                .train
                .instances()
                .first()
                .and_then(|i| i.target().descriptor_dim())
                .ok_or_else(|| Error::MissingDescriptors("training data".into()))?;
            let uniform0 = vec![1.0; dim];
            let base = TrainConfig {
                seed,
                loss: cfg.loss,
                ..cfg.train.clone()
            };

            let theta0_learned = if needs_stage1 {
                let c = TrainConfig {
                    lambda_grid: cfg.lambda_grid_stage1.clone(),
                    ..base.clone()
                };
                let sel = select_lambda_stage1(&splits.train, &splits.val, &c)?;
                report.lambdas.push((cond.label.clone(), seed, 1, sel.lambda));
                let holds = stage1_bound_check(&splits.train, &sel.chosen, &c)?.holds(BOUND_TOL);
                report.bound_checks.push((cond.label.clone(), seed, 1, holds));
                Some(sel.chosen.theta0)
            } else {
                None
            };

            for (pi, &(method, p)) in plan.iter().enumerate() {
                let (losses, ms, model) = match method {
                    Method::Linear => {
                        let (l, ms) = time_predictions(&splits.test, cfg.loss, |inst| {
                            predict_linear(inst.template(), inst.target(), &uniform0)
                        })?;
                        (l, ms, None)
                    }
                    Method::LinearLearned => {
                        let th = theta0_learned.as_ref().expect("stage 1 trained");
                        let (l, ms) = time_predictions(&splits.test, cfg.loss, |inst| {
                            predict_linear(inst.template(), inst.target(), th)
                        })?;
                        (l, ms, None)
                    }
                    Method::HigherOrder | Method::HigherOrderLearned => {
                        let p = p.expect("loop methods carry p");
                        let c = TrainConfig {
                            p,
                            lambda_grid: cfg.lambda_grid_stage2.clone(),
                            ..base.clone()
                        };
                        let model = if method == Method::HigherOrder {
                            let scale = calibrate_scale_factors(&splits.train, &uniform0, &feature_config, &c)?;
                            WeightModel {
                                theta0: uniform0.clone(),
                                theta: vec![1.0; feature_config.groups.count()],
                                p,
                                feature_config: feature_config.clone(),
                                scale_factors: scale,
                            }
                        } else {
                            let th = theta0_learned.as_ref().expect("stage 1 trained");
                            let sel = select_lambda_stage2(&splits.train, &splits.val, th, &feature_config, &c)?;
                            report.lambdas.push((cond.label.clone(), seed, 2, sel.lambda));
                            let holds = stage2_bound_check(&splits.train, &sel.chosen, &c)?.holds(BOUND_TOL);
                            report.bound_checks.push((cond.label.clone(), seed, 2, holds));
                            report
                                .recall
                                .push((cond.label.clone(), seed, p, sel.chosen.recall.mean));
                            sel.chosen.model
                        };
                        let (l, ms) = time_predictions(&splits.test, cfg.loss, |inst| {
                            infer_higher_order(inst.template(), inst.target(), &model, None, &opts)
                                .map(|r| r.assignment)
                        })?;
                        (l, ms, Some(model))
                    }
                };
                pools[pi].add(losses, ms);

                if ci == 0 && si == 0 && cfg.bp_iterations > 0 && report.bp_series.is_empty() {
                    if let Some(model) = model.filter(|_| method.uses_p()) {
                        report.bp_series = bp_series(&splits.test, &model, cfg.loss, cfg.bp_iterations)?;
                    }
                }
            }
        }

        for (&(method, p), pool) in plan.iter().zip(pools) {
            let ev = Evaluation::from_losses(pool.losses);
            report.rows.push(ReportRow {
                method: method.name().into(),
                condition: cond.label.clone(),
                mean: ev.mean,
                stderr: ev.std_error,
                ms: pool.ms / pool.runs.max(1) as f64,
                n: ev.losses.len(),
                outliers: cond.outliers,
                epsilon: cond.epsilon,
                baseline: cond.baseline,
                p,
                per_seed: pool.per_seed,
            });
        }
    }
    Ok(report)
}

/// Loss and time per test pair when message passing runs exactly `k`
/// sweeps, for `k = 1..=max`, with no early stop and no fallback.
pub fn bp_series(test: &[MatchInstance], model: &WeightModel, kind: LossKind, max: usize) -> Result<Vec<BpRow>> {
    (1..=max)
        .map(|k| {
            let opts = MatchOptions {
                loopy: LoopyOptions {
                    max_iters: k,
                    tol: 0.0,
                    fallback: false,
                    stop_when_certified: false,
                },
                exact: false,
            };
            let (losses, ms) = time_predictions(test, kind, |inst| {
                infer_higher_order(inst.template(), inst.target(), model, None, &opts).map(|r| r.assignment)
            })?;
            let ev = Evaluation::from_losses(losses);
            Ok(BpRow {
                iterations: k,
                ms,
                mean: ev.mean,
                stderr: ev.std_error,
            })
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Writes `report.csv` with columns
/// `method,condition,mean,stderr,ms,n,outliers,epsilon,baseline,p`.
pub fn write_report(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "method", "condition", "mean", "stderr", "ms", "n", "outliers", "epsilon", "baseline", "p",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.method.clone(),
            r.condition.clone(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.ms.to_string(),
            r.n.to_string(),
            opt(r.outliers),
            opt(r.epsilon),
            opt(r.baseline),
            opt(r.p),
        ])?;
    }
    w.flush().map_err(|e| Error::file(path.as_ref(), e))?;
    Ok(())
}

/// Writes the plot families into `dir`:
///
/// * `loss_vs_baseline.csv`: `method,p,baseline,mean,stderr`
/// * `loss_vs_epsilon.csv`: `method,p,outliers,epsilon,mean,stderr`
/// * `runtime_vs_method.csv`: `method,p,condition,ms`
/// * `bp_iterations.csv`: `iterations,ms,mean,stderr`
pub fn emit_plot_data(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::InvalidConfig("cannot plot an empty report".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("loss_vs_baseline.csv"))?;
    w.write_record(["method", "p", "baseline", "mean", "stderr"])?;
    for r in report.rows.iter().filter(|r| r.baseline.is_some()) {
        w.write_record([
            r.method.clone(),
            opt(r.p),
            opt(r.baseline),
            r.mean.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("loss_vs_epsilon.csv"))?;
    w.write_record(["method", "p", "outliers", "epsilon", "mean", "stderr"])?;
    for r in report.rows.iter().filter(|r| r.epsilon.is_some()) {
        w.write_record([
            r.method.clone(),
            opt(r.p),
            opt(r.outliers),
            opt(r.epsilon),
            r.mean.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("runtime_vs_method.csv"))?;
    w.write_record(["method", "p", "condition", "ms"])?;
    for r in &report.rows {
        w.write_record([r.method.clone(), opt(r.p), r.condition.clone(), r.ms.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("bp_iterations.csv"))?;
    w.write_record(["iterations", "ms", "mean", "stderr"])?;
    for b in &report.bp_series {
        w.write_record([
            b.iterations.to_string(),
            b.ms.to_string(),
            b.mean.to_string(),
            b.stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
