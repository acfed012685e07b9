//! Solvers for the regularised structured hinge objective
//! `lambda/2 |theta|^2 + 1/N sum_i max_y (<h(y) - h(y_i), theta> + loss(y, y_i))`.
//!
//! Two are provided: a bundle method that keeps every cutting plane of the
//! empirical risk and minimises the regularised piecewise-linear model
//! exactly, and averaged stochastic subgradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Assignment;

/// The most violated output for one training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub y: Assignment,
    /// `max(0, <h(y) - h(y_gt), theta> + loss(y, y_gt))`.
    pub slack: f64,
    /// `h(y) - h(y_gt)`.
    pub dpsi: Vec<f64>,
}

/// Loss-augmented and plain inference for a fixed set of instances.
pub trait Oracle: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn most_violated(&self, i: usize, theta: &[f64]) -> Result<Violation>;
    /// Loss of the plain prediction for instance `i`.
    fn prediction_loss(&self, i: usize, theta: &[f64]) -> Result<f64>;
    /// Upper bound on any loss value, used to bound the search region.
    fn loss_bound(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub epoch: usize,
    /// Regularised objective at the best weights found so far; the risks
    /// below are measured at the same weights.
    pub objective: f64,
    pub train_risk: f64,
    pub val_risk: Option<f64>,
}

/// Weights with per-instance slacks and the per-epoch log.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub theta: Vec<f64>,
    /// Hinge values at `theta`, one per training instance.
    pub slacks: Vec<f64>,
    pub risk_history: Vec<RiskRecord>,
    /// Epoch whose iterate was returned.
    pub best_epoch: usize,
    /// Bundle method only: the duality gap fell below tolerance.
    pub converged: bool,
}

impl SolverState {
    pub fn objective(&self, lambda: f64) -> f64 {
        regularised(lambda, &self.theta, &self.slacks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Cutting planes with an exactly solved regularised model.
    Bundle,
    /// Mini-batch subgradient steps of size `1/(lambda t)` with averaging.
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub lambda: f64,
    /// Passes over the data; one cutting plane per pass for the bundle method.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Bundle method: stop once the gap between the best objective and the
    /// model's lower bound is below `tol` times the best objective.
    pub tol: f64,
}

fn regularised(lambda: f64, theta: &[f64], slacks: &[f64]) -> f64 {
    let norm2: f64 = theta.iter().map(|t| t * t).sum();
    let risk: f64 = slacks.iter().sum::<f64>() / slacks.len().max(1) as f64;
    0.5 * lambda * norm2 + risk
}

/// Slacks of every instance at `theta`, in instance order.
pub fn slacks<O: Oracle + ?Sized>(oracle: &O, theta: &[f64]) -> Result<Vec<f64>> {
    (0..oracle.len())
        .into_par_iter()
        .map(|i| oracle.most_violated(i, theta).map(|v| v.slack))
        .collect()
}

/// Mean prediction loss at `theta`.
pub fn risk<O: Oracle + ?Sized>(oracle: &O, theta: &[f64]) -> Result<f64> {
    if oracle.len() == 0 {
        return Ok(0.0);
    }
    let losses: Vec<f64> = (0..oracle.len())
        .into_par_iter()
        .map(|i| oracle.prediction_loss(i, theta))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn check<O: Oracle + ?Sized>(oracle: &O, init: &[f64], opts: &SolverOptions) -> Result<()> {
    if oracle.len() == 0 {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if !(opts.lambda > 0.0 && opts.lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be positive, got {}",
            opts.lambda
        )));
    }
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "epochs and batch size must be at least 1".into(),
        ));
    }
    if init.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            found: init.len(),
        });
    }
    Ok(())
}

/// Minimises the regularised objective from `init` with the solver chosen
/// in `opts`. The returned weights are the iterate with the lowest
/// objective (the earliest on ties), with their slacks.
pub fn train<O: Oracle + ?Sized>(
    oracle: &O,
    validation: Option<&O>,
    init: Vec<f64>,
    opts: &SolverOptions,
) -> Result<SolverState> {
    check(oracle, &init, opts)?;
    match opts.kind {
        SolverKind::Bundle => train_bundle(oracle, validation, init, opts),
        SolverKind::Subgradient => train_subgradient(oracle, validation, init, opts),
    }
}

/// Keeps the best iterate and logs one record per epoch.
struct Tracker<'a, O: Oracle + ?Sized> {
    oracle: &'a O,
    validation: Option<&'a O>,
    lambda: f64,
    best: Option<(f64, Vec<f64>, Vec<f64>, usize)>,
    risks: (f64, Option<f64>),
    history: Vec<RiskRecord>,
}

impl<'a, O: Oracle + ?Sized> Tracker<'a, O> {
    fn new(oracle: &'a O, validation: Option<&'a O>, lambda: f64) -> Self {
        Tracker {
            oracle,
            validation,
            lambda,
            best: None,
            risks: (0.0, None),
            history: Vec::new(),
        }
    }

    fn offer(&mut self, epoch: usize, theta: &[f64], slacks: Vec<f64>) -> Result<f64> {
        let objective = regularised(self.lambda, theta, &slacks);
        if self.best.as_ref().map_or(true, |(b, ..)| objective < *b) {
            self.risks = (
                risk(self.oracle, theta)?,
                self.validation.map(|v| risk(v, theta)).transpose()?,
            );
            self.best = Some((objective, theta.to_vec(), slacks, epoch));
        }
        let best = self.best.as_ref().expect("just set").0;
        self.history.push(RiskRecord {
            epoch,
            objective: best,
            train_risk: self.risks.0,
            val_risk: self.risks.1,
        });
        Ok(best)
    }

    fn finish(self, converged: bool) -> SolverState {
        let (_, theta, slacks, best_epoch) = self.best.expect("at least one epoch");
        SolverState {
            theta,
            slacks,
            risk_history: self.history,
            best_epoch,
            converged,
        }
    }
}

/// Maximises `b.alpha - |sum_j alpha_j a_j|^2 / (2 lambda)` over the simplex
/// by pairwise mass transfers, warm-started from `alpha`. `gram` holds the
/// inner products of the planes' slopes.
fn solve_dual(gram: &[Vec<f64>], b: &[f64], lambda: f64, alpha: &mut [f64]) {
    let m = b.len();
    let mut grad: Vec<f64> = (0..m)
        .map(|i| b[i] - (0..m).map(|j| gram[i][j] * alpha[j]).sum::<f64>() / lambda)
        .collect();
    for _ in 0..100_000 {
        let up = (0..m)
            .max_by(|&x, &y| grad[x].total_cmp(&grad[y]).then(y.cmp(&x)))
            .expect("nonempty");
        let Some(down) = (0..m)
            .filter(|&j| alpha[j] > 0.0 && j != up)
            .min_by(|&x, &y| grad[x].total_cmp(&grad[y]).then(x.cmp(&y)))
        else {
            break;
        };
        let diff = grad[up] - grad[down];
        if diff <= 1e-13 * (1.0 + grad[up].abs()) {
            break;
        }
        let curv = gram[up][up] + gram[down][down] - 2.0 * gram[up][down];
        let delta = if curv > 0.0 {
            (lambda * diff / curv).min(alpha[down])
        } else {
            alpha[down]
        };
        alpha[up] += delta;
        alpha[down] -= delta;
        for (k, g) in grad.iter_mut().enumerate() {
            *g -= delta * (gram[k][up] - gram[k][down]) / lambda;
        }
    }
}

/// Bundle method: each epoch adds the cutting plane of the empirical risk
/// at the current weights, then moves to the minimiser of the regularised
/// maximum over all planes. Stops early once the duality gap is below
/// `opts.tol` relative to the best objective.
fn train_bundle<O: Oracle + ?Sized>(
    oracle: &O,
    validation: Option<&O>,
    init: Vec<f64>,
    opts: &SolverOptions,
) -> Result<SolverState> {
    let n = oracle.len();
    let dim = oracle.dim();
    let lambda = opts.lambda;
    let mut tracker = Tracker::new(oracle, validation, lambda);
    let mut slopes: Vec<Vec<f64>> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();
    let mut gram: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut theta = init;
    let mut converged = false;

    for epoch in 1..=opts.epochs {
        let found: Vec<Violation> = (0..n)
            .into_par_iter()
            .map(|i| oracle.most_violated(i, &theta))
            .collect::<Result<_>>()?;
        let mut a = vec![0.0; dim];
        for v in found.iter().filter(|v| v.slack > 0.0) {
            for (s, d) in a.iter_mut().zip(&v.dpsi) {
                *s += d / n as f64;
            }
        }
        let slacks: Vec<f64> = found.iter().map(|v| v.slack).collect();
        let r = slacks.iter().sum::<f64>() / n as f64;
        let b = r - dot(&a, &theta);
        let best = tracker.offer(epoch, &theta, slacks)?;

        let row: Vec<f64> = slopes.iter().map(|s| dot(s, &a)).collect();
        for (g, v) in gram.iter_mut().zip(&row) {
            g.push(*v);
        }
        let mut last = row;
        last.push(dot(&a, &a));
        gram.push(last);
        slopes.push(a);
        offsets.push(b);
        alpha.push(if alpha.is_empty() { 1.0 } else { 0.0 });
        solve_dual(&gram, &offsets, lambda, &mut alpha);

        let mut w = vec![0.0; dim];
        for (s, &al) in slopes.iter().zip(&alpha) {
            for (x, v) in w.iter_mut().zip(s) {
                *x -= al * v / lambda;
            }
        }
        let lower = dot(&alpha, &offsets) - 0.5 * lambda * dot(&w, &w);
        theta = w;
        if best - lower <= opts.tol * best.abs() {
            converged = true;
            break;
        }
    }
    Ok(tracker.finish(converged))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs `epochs` passes of mini-batch subgradient steps with step size
/// `1/(lambda t)`, iterates kept inside the ball of radius
/// `sqrt(2 B / lambda)` that contains the optimum, and a running average of
/// the iterates. The averaged iterate with the lowest objective at an epoch
/// boundary is returned.
fn train_subgradient<O: Oracle + ?Sized>(
    oracle: &O,
    validation: Option<&O>,
    init: Vec<f64>,
    opts: &SolverOptions,
) -> Result<SolverState> {
    let n = oracle.len();
    let lambda = opts.lambda;
    let radius = (2.0 * oracle.loss_bound() / lambda).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut theta = init.clone();
    let mut avg = init;
    let mut t = 0usize;
    let mut tracker = Tracker::new(oracle, validation, lambda);

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size) {
            t += 1;
            let found: Vec<Violation> = batch
                .par_iter()
                .map(|&i| oracle.most_violated(i, &theta))
                .collect::<Result<_>>()?;
            let mut grad: Vec<f64> = theta.iter().map(|w| lambda * w).collect();
            let scale = 1.0 / batch.len() as f64;
            for v in found.iter().filter(|v| v.slack > 0.0) {
                for (g, d) in grad.iter_mut().zip(&v.dpsi) {
                    *g += scale * d;
                }
            }
            let eta = 1.0 / (lambda * t as f64);
            for (w, g) in theta.iter_mut().zip(&grad) {
                *w -= eta * g;
            }
            let norm = theta.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > radius {
                theta.iter_mut().for_each(|w| *w *= radius / norm);
            }
            let k = t as f64 + 1.0;
            for (a, w) in avg.iter_mut().zip(&theta) {
                *a += (w - *a) / k;
            }
        }

        let epoch_slacks = slacks(oracle, &avg)?;
        tracker.offer(epoch, &avg, epoch_slacks)?;
    }
    Ok(tracker.finish(false))
}

/// Writes `epoch,objective,train_risk,val_risk` rows.
pub fn write_risk_history(history: &[RiskRecord], path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "objective", "train_risk", "val_risk"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.objective.to_string(),
            r.train_risk.to_string(),
            r.val_risk.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}
