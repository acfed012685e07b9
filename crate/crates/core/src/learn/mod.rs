//! Large-margin structured learning in two stages: unary weights with
//! linear-assignment inference, then clique weights with loop inference over
//! pruned candidates.

pub mod loss;
pub mod solver;
mod stage1;
mod stage2;

use serde::{Deserialize, Serialize};

pub use loss::{endpoint, hamming, LossKind, NodeLoss};
pub use solver::{
    write_risk_history, Oracle, RiskRecord, SolverKind, SolverOptions, SolverState, Violation,
};
pub use stage1::{joint_feature_unary, predict_linear};
pub use stage2::{candidates_for, joint_feature, MatchOptions, PruningReport};

use crate::assign::{solve_lap, unary_scores};
use crate::error::{Error, Result};
use crate::features::CliqueContext;
use crate::infer::{build_tables, InferenceResult, LoopyOptions};
use crate::model::{FeatureConfig, WeightModel};
use crate::types::{Assignment, MatchInstance, Scene, TemplateShape};
use stage1::UnaryOracle;
use stage2::{run_inference, CliqueOracle};

/// Labelled instances, all sharing one descriptor dimension.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    instances: Vec<MatchInstance>,
}

impl TrainingSet {
    pub fn new(instances: Vec<MatchInstance>) -> Result<Self> {
        for inst in &instances {
            inst.require_ground_truth()?;
        }
        Ok(TrainingSet { instances })
    }

    pub fn instances(&self) -> &[MatchInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Largest value `kind` can take on any instance.
    pub fn loss_bound(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::Hamming => 1.0,
            LossKind::Endpoint => self
                .instances
                .iter()
                .map(|inst| {
                    let t = inst.target();
                    let pts = t.points();
                    let (mut lo, mut hi) = (pts[0], pts[0]);
                    for p in pts {
                        lo.x = lo.x.min(p.x);
                        lo.y = lo.y.min(p.y);
                        hi.x = hi.x.max(p.x);
                        hi.y = hi.y.max(p.y);
                    }
                    lo.dist(hi) / t.width()
                })
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE),
        }
    }
}

fn default_lambda() -> f64 {
    1e-2
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    1
}
fn default_p() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_calibration() -> usize {
    5000
}
fn default_solver() -> SolverKind {
    SolverKind::Bundle
}
fn default_tol() -> f64 {
    1e-3
}
fn default_max_iters() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    /// Passes over the training set (bundle iterations for the bundle method).
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Relative duality gap at which the bundle method stops.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Instances per subgradient step.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Candidates per template point in the second stage.
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    /// Add each training instance's true match to its pruned candidates.
    #[serde(default = "default_true")]
    pub inject_ground_truth: bool,
    /// Candidate triples sampled to calibrate per-group scale factors.
    #[serde(default = "default_calibration")]
    pub calibration_samples: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Use the conditioned exact solver instead of message passing.
    #[serde(default)]
    pub exact: bool,
}

fn default_loss() -> LossKind {
    LossKind::Hamming
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: default_lambda(),
            loss: default_loss(),
            solver: default_solver(),
            epochs: default_epochs(),
            tol: default_tol(),
            batch_size: default_batch(),
            seed: 0,
            p: default_p(),
            lambda_grid: Vec::new(),
            inject_ground_truth: true,
            calibration_samples: default_calibration(),
            max_iters: default_max_iters(),
            exact: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.p == 0 {
            return Err(Error::InvalidConfig("p must be at least 1".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(format!("grid lambda must be positive, got {l}")));
        }
        Ok(())
    }

    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            loopy: LoopyOptions {
                max_iters: self.max_iters,
                ..LoopyOptions::default()
            },
            exact: self.exact,
        }
    }

    fn solver(&self, lambda: f64) -> SolverOptions {
        SolverOptions {
            kind: self.solver,
            lambda,
            tol: self.tol,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

/// Stage-1 result: unary weights and the solver log.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub theta0: Vec<f64>,
    pub state: SolverState,
}

/// Learns unary weights from zero with linear-assignment column generation.
pub fn train_stage1(
    data: &TrainingSet,
    validation: Option<&TrainingSet>,
    cfg: &TrainConfig,
) -> Result<Stage1Output> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let oracle = UnaryOracle::new(data, cfg.loss)?;
    let val = validation
        .filter(|v| !v.is_empty())
        .map(|v| UnaryOracle::new(v, cfg.loss))
        .transpose()?;
    let state = solver::train(&oracle, val.as_ref(), vec![0.0; oracle.dim()], &cfg.solver(cfg.lambda))?;
    Ok(Stage1Output {
        theta0: state.theta.clone(),
        state,
    })
}

/// Stage-2 result: the complete model, solver log and pruning recall.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output {
    pub model: WeightModel,
    pub state: SolverState,
    pub recall: PruningReport,
}

/// Scale factors making each active group's values over a random sample of
/// candidate triples have unit standard deviation.
pub fn calibrate_scale_factors(
    data: &TrainingSet,
    theta0: &[f64],
    feature_config: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let oracle = CliqueOracle::new(
        data,
        theta0,
        feature_config,
        cfg.p,
        false,
        cfg.loss,
        cfg.match_options(),
    )?;
    Ok(oracle.calibrate(cfg.calibration_samples, cfg.seed))
}

/// Learns clique weights, starting from all-ones, over the top-`p`
/// candidates ranked by `theta0`.
pub fn train_stage2(
    data: &TrainingSet,
    validation: Option<&TrainingSet>,
    theta0: &[f64],
    feature_config: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<Stage2Output> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if feature_config.groups.count() == 0 {
        return Err(Error::InvalidConfig("no feature groups are active".into()));
    }
    let opts = cfg.match_options();
    let mut oracle = CliqueOracle::new(
        data,
        theta0,
        feature_config,
        cfg.p,
        cfg.inject_ground_truth,
        cfg.loss,
        opts,
    )?;
    let scale = oracle.calibrate(cfg.calibration_samples, cfg.seed);
    oracle.set_scale(scale.clone());
    let val = validation
        .filter(|v| !v.is_empty())
        .map(|v| -> Result<CliqueOracle<'_>> {
            let mut o = CliqueOracle::new(v, theta0, feature_config, cfg.p, false, cfg.loss, opts)?;
            o.set_scale(scale.clone());
            Ok(o)
        })
        .transpose()?;
    let init = vec![1.0; oracle.dim()];
    let state = solver::train(&oracle, val.as_ref(), init, &cfg.solver(cfg.lambda))?;
    let model = WeightModel {
        theta0: theta0.to_vec(),
        theta: state.theta.clone(),
        p: cfg.p,
        feature_config: feature_config.clone(),
        scale_factors: scale,
    };
    model.validate()?;
    Ok(Stage2Output {
        model,
        state,
        recall: oracle.recall,
    })
}

/// Upper-bound check data for a trained stage: for each training instance,
/// the recorded slack and the loss of the plain prediction at the returned
/// weights over the same output space used in training.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub slacks: Vec<f64>,
    pub losses: Vec<f64>,
}

impl BoundCheck {
    /// Whether `slack >= loss - tol` holds for every instance.
    pub fn holds(&self, tol: f64) -> bool {
        self.slacks
            .iter()
            .zip(&self.losses)
            .all(|(s, l)| *s >= l - tol)
    }
}

pub fn stage1_bound_check(data: &TrainingSet, out: &Stage1Output, cfg: &TrainConfig) -> Result<BoundCheck> {
    let oracle = UnaryOracle::new(data, cfg.loss)?;
    let losses = (0..oracle.len())
        .map(|i| oracle.prediction_loss(i, &out.theta0))
        .collect::<Result<_>>()?;
    Ok(BoundCheck {
        slacks: out.state.slacks.clone(),
        losses,
    })
}

pub fn stage2_bound_check(data: &TrainingSet, out: &Stage2Output, cfg: &TrainConfig) -> Result<BoundCheck> {
    let mut oracle = CliqueOracle::new(
        data,
        &out.model.theta0,
        &out.model.feature_config,
        cfg.p,
        cfg.inject_ground_truth,
        cfg.loss,
        cfg.match_options(),
    )?;
    oracle.set_scale(out.model.scale_factors.clone());
    let losses = (0..oracle.len())
        .map(|i| oracle.prediction_loss(i, &out.model.theta))
        .collect::<Result<_>>()?;
    Ok(BoundCheck {
        slacks: out.state.slacks.clone(),
        losses,
    })
}

/// Grid point with the smallest validation risk; ties go to the larger
/// lambda.
pub fn pick_lambda(risks: &[(f64, f64)]) -> Result<f64> {
    risks
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 < best.1 || (cur.1 == best.1 && cur.0 > best.0) {
                cur
            } else {
                best
            }
        })
        .map(|(l, _)| l)
        .ok_or_else(|| Error::InvalidConfig("empty lambda grid".into()))
}

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection<T> {
    pub lambda: f64,
    /// `(lambda, validation risk)` for every grid point, in grid order.
    pub risks: Vec<(f64, f64)>,
    pub chosen: T,
}

fn grid(cfg: &TrainConfig) -> Vec<f64> {
    if cfg.lambda_grid.is_empty() {
        vec![cfg.lambda]
    } else {
        cfg.lambda_grid.clone()
    }
}

/// Trains stage 1 for each grid lambda and keeps the one with the lowest
/// validation risk.
pub fn select_lambda_stage1(
    train: &TrainingSet,
    val: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<LambdaSelection<Stage1Output>> {
    if val.is_empty() {
        return Err(Error::InvalidConfig("empty validation set".into()));
    }
    let val_oracle = UnaryOracle::new(val, cfg.loss)?;
    let mut outs = Vec::new();
    for lambda in grid(cfg) {
        let c = TrainConfig {
            lambda,
            ..cfg.clone()
        };
        let out = train_stage1(train, Some(val), &c)?;
        let r = solver::risk(&val_oracle, &out.theta0)?;
        outs.push((lambda, r, out));
    }
    finish(outs)
}

/// Trains stage 2 for each grid lambda and keeps the one with the lowest
/// validation risk.
pub fn select_lambda_stage2(
    train: &TrainingSet,
    val: &TrainingSet,
    theta0: &[f64],
    feature_config: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<LambdaSelection<Stage2Output>> {
    if val.is_empty() {
        return Err(Error::InvalidConfig("empty validation set".into()));
    }
    let mut outs = Vec::new();
    for lambda in grid(cfg) {
        let c = TrainConfig {
            lambda,
            ..cfg.clone()
        };
        let out = train_stage2(train, Some(val), theta0, feature_config, &c)?;
        let r = evaluate(val, &out.model, cfg.loss, &cfg.match_options())?.mean;
        outs.push((lambda, r, out));
    }
    finish(outs)
}

fn finish<T>(outs: Vec<(f64, f64, T)>) -> Result<LambdaSelection<T>> {
    let risks: Vec<(f64, f64)> = outs.iter().map(|(l, r, _)| (*l, *r)).collect();
    let lambda = pick_lambda(&risks)?;
    let chosen = outs
        .into_iter()
        .find(|(l, _, _)| *l == lambda)
        .map(|(_, _, o)| o)
        .expect("picked from the grid");
    Ok(LambdaSelection {
        lambda,
        risks,
        chosen,
    })
}

/// Which inference a model is used with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Unary,
    HigherOrder,
}

/// Most violated assignment for one labelled instance and its slack.
pub fn column_generation(
    instance: &MatchInstance,
    model: &WeightModel,
    stage: Stage,
    kind: LossKind,
    opts: &MatchOptions,
) -> Result<(Assignment, f64)> {
    let gt = instance.require_ground_truth()?;
    let (template, target) = (instance.template(), instance.target());
    let nl = NodeLoss::new(kind, gt, target);
    let (y, h_y, h_gt, theta) = match stage {
        Stage::Unary => {
            let y = solve_lap(&unary_scores(template, target, &model.theta0, Some(&nl))?)?;
            let h_y = joint_feature_unary(template, target, &y)?;
            let h_gt = joint_feature_unary(template, target, gt)?;
            (y, h_y, h_gt, &model.theta0)
        }
        Stage::HigherOrder => {
            let r = infer_higher_order(template, target, model, Some(&nl), opts)?;
            let h_y = joint_feature(template, target, &r.assignment, model)?;
            let h_gt = joint_feature(template, target, gt, model)?;
            (r.assignment, h_y, h_gt, &model.theta)
        }
    };
    let margin: f64 = h_y
        .iter()
        .zip(&h_gt)
        .zip(theta)
        .map(|((a, b), t)| (a - b) * t)
        .sum();
    let delta = loss::loss(kind, &y, gt, target)?;
    Ok((y, (margin + delta).max(0.0)))
}

/// Higher-order MAP over the model's top-`p` candidates, optionally
/// loss-augmented.
pub fn infer_higher_order(
    template: &TemplateShape,
    target: &Scene,
    model: &WeightModel,
    augment: Option<&NodeLoss<'_>>,
    opts: &MatchOptions,
) -> Result<InferenceResult> {
    model.validate()?;
    let cands = candidates_for(template, target, &model.theta0, model.p)?;
    let theta0 = model.feature_config.groups.unary.then_some(model.theta0.as_slice());
    let ctx = CliqueContext::new(template, target, &model.feature_config, theta0)?;
    let tables = build_tables(&ctx, &model.theta, &model.scale_factors, &cands, augment)?;
    Ok(run_inference(&tables, opts))
}

/// Mean loss with standard error over a set of labelled instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub losses: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
}

impl Evaluation {
    pub fn from_losses(losses: Vec<f64>) -> Self {
        let m = losses.len() as f64;
        let mean = if losses.is_empty() { 0.0 } else { losses.iter().sum::<f64>() / m };
        let std_error = if losses.len() < 2 {
            0.0
        } else {
            let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        };
        Evaluation {
            losses,
            mean,
            std_error,
        }
    }
}

/// Higher-order prediction loss on every instance.
pub fn evaluate(
    data: &TrainingSet,
    model: &WeightModel,
    kind: LossKind,
    opts: &MatchOptions,
) -> Result<Evaluation> {
    use rayon::prelude::*;
    let losses = data
        .instances()
        .par_iter()
        .map(|inst| {
            let r = infer_higher_order(inst.template(), inst.target(), model, None, opts)?;
            loss::loss(kind, &r.assignment, inst.require_ground_truth()?, inst.target())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Evaluation::from_losses(losses))
}

/// Linear-assignment prediction loss on every instance.
pub fn evaluate_linear(data: &TrainingSet, theta0: &[f64], kind: LossKind) -> Result<Evaluation> {
    use rayon::prelude::*;
    let losses = data
        .instances()
        .par_iter()
        .map(|inst| {
            let y = predict_linear(inst.template(), inst.target(), theta0)?;
            loss::loss(kind, &y, inst.require_ground_truth()?, inst.target())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Evaluation::from_losses(losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_ties_go_to_the_larger_value() {
        assert_eq!(pick_lambda(&[(0.5, 0.1)]).unwrap(), 0.5);
        assert_eq!(pick_lambda(&[(0.1, 0.2), (1.0, 0.2)]).unwrap(), 1.0);
        assert_eq!(pick_lambda(&[(1.0, 0.2), (0.1, 0.2)]).unwrap(), 1.0);
        assert_eq!(pick_lambda(&[(1.0, 0.3), (0.1, 0.2)]).unwrap(), 0.1);
        assert!(pick_lambda(&[]).is_err());
    }

    #[test]
    fn standard_error() {
        let e = Evaluation::from_losses(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
