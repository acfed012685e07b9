//! Second stage: clique weights learned with loop inference over the top-p
//! candidates of each template point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::CliqueContext;
use crate::infer::{
    map_conditioned, map_loopy, prune_candidates, CandidateSets, CliqueTableSet, InferenceResult,
    LoopyOptions,
};
use crate::learn::loss::{loss, LossKind, NodeLoss};
use crate::learn::solver::{Oracle, Violation};
use crate::learn::TrainingSet;
use crate::model::{FeatureConfig, WeightModel};
use crate::types::{Assignment, MatchInstance, Scene, TemplateShape};

/// Candidate lists for `template` under `model`: the top `p` by collapsed
/// unary score, or every target point when the model has no unary weights
/// and `p` covers the whole target.
pub fn candidates_for(
    template: &TemplateShape,
    target: &Scene,
    theta0: &[f64],
    p: usize,
) -> Result<CandidateSets> {
    if theta0.is_empty() {
        if p >= target.len() {
            return Ok(CandidateSets::full(template.len(), target.len()));
        }
        return Err(Error::InvalidModel(
            "pruning to fewer than all target points needs unary weights".into(),
        ));
    }
    prune_candidates(template, target, theta0, p)
}

/// Clique joint feature `-sum_i s * Phi(clique i)` with the model's scale
/// factors `s`, one entry per active group.
pub fn joint_feature(
    template: &TemplateShape,
    target: &Scene,
    y: &Assignment,
    model: &WeightModel,
) -> Result<Vec<f64>> {
    y.check_against(template.len(), target.len())?;
    let theta0 = model.feature_config.groups.unary.then_some(model.theta0.as_slice());
    let ctx = CliqueContext::new(template, target, &model.feature_config, theta0)?;
    let raw = raw_sum(&ctx, y.as_slice());
    Ok(raw
        .iter()
        .zip(&model.scale_factors)
        .map(|(r, s)| -r * s)
        .collect())
}

fn raw_sum(ctx: &CliqueContext<'_>, y: &[usize]) -> Vec<f64> {
    let n = ctx.n();
    let g = ctx.groups().len();
    let mut sum = vec![0.0; g];
    let mut buf = vec![0.0; g];
    for i in 0..n {
        ctx.raw_into(i, y[i], y[(i + 1) % n], y[(i + 2) % n], &mut buf);
        sum.iter_mut().zip(&buf).for_each(|(s, b)| *s += b);
    }
    sum
}

/// Inference options shared by training and prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOptions {
    pub loopy: LoopyOptions,
    /// Use the conditioned exact solver instead of message passing.
    pub exact: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions {
            loopy: LoopyOptions::default(),
            exact: false,
        }
    }
}

pub(crate) fn run_inference(tables: &CliqueTableSet, opts: &MatchOptions) -> InferenceResult {
    if opts.exact {
        map_conditioned(tables)
    } else {
        map_loopy(tables, &opts.loopy)
    }
}

/// Unscaled clique features for every candidate triple of one instance.
#[derive(Debug, Clone)]
pub(crate) struct FeatureCache {
    candidates: CandidateSets,
    groups: usize,
    /// `raw[i][((a * nb + b) * nc + c) * groups + k]`.
    raw: Vec<Vec<f64>>,
}

impl FeatureCache {
    pub(crate) fn new(ctx: &CliqueContext<'_>, candidates: CandidateSets) -> Self {
        let n = ctx.n();
        let g = ctx.groups().len();
        let raw = (0..n)
            .map(|i| {
                let la = candidates.list(i);
                let lb = candidates.list((i + 1) % n);
                let lc = candidates.list((i + 2) % n);
                let mut out = vec![0.0; la.len() * lb.len() * lc.len() * g];
                let mut k = 0;
                for &a in la {
                    for &b in lb {
                        for &c in lc {
                            ctx.raw_into(i, a, b, c, &mut out[k..k + g]);
                            k += g;
                        }
                    }
                }
                out
            })
            .collect();
        FeatureCache {
            candidates,
            groups: g,
            raw,
        }
    }

    /// Tables for per-group weights `w` (weight times scale factor).
    pub(crate) fn tables(&self, w: &[f64], augment: Option<&NodeLoss<'_>>) -> CliqueTableSet {
        let n = self.raw.len();
        let g = self.groups;
        let tables = (0..n)
            .map(|i| {
                let la = self.candidates.list(i);
                let inner = self.candidates.len_of((i + 1) % n) * self.candidates.len_of((i + 2) % n);
                let raw = &self.raw[i];
                let mut out = Vec::with_capacity(raw.len() / g.max(1));
                for (ai, &a) in la.iter().enumerate() {
                    let l = augment.map_or(0.0, |nl| nl.node(i, a));
                    for e in 0..inner {
                        let off = (ai * inner + e) * g;
                        let dot: f64 = raw[off..off + g].iter().zip(w).map(|(r, w)| r * w).sum();
                        out.push(l - dot);
                    }
                }
                out
            })
            .collect();
        CliqueTableSet::new(self.candidates.clone(), tables).expect("cache shapes are consistent")
    }

    /// Sum of raw features along candidate positions.
    pub(crate) fn raw_sum(&self, positions: &[usize]) -> Vec<f64> {
        let n = self.raw.len();
        let g = self.groups;
        let mut sum = vec![0.0; g];
        for i in 0..n {
            let nb = self.candidates.len_of((i + 1) % n);
            let nc = self.candidates.len_of((i + 2) % n);
            let idx = (positions[i] * nb + positions[(i + 1) % n]) * nc + positions[(i + 2) % n];
            let off = idx * g;
            sum.iter_mut()
                .zip(&self.raw[i][off..off + g])
                .for_each(|(s, r)| *s += r);
        }
        sum
    }

    /// Raw values of a few random candidate triples, for scale calibration.
    fn sample(&self, rng: &mut ChaCha8Rng, count: usize, out: &mut Vec<Vec<f64>>) {
        let n = self.raw.len();
        let g = self.groups;
        for _ in 0..count {
            let i = rng.gen_range(0..n);
            let entries = self.raw[i].len() / g;
            let e = rng.gen_range(0..entries);
            out.push(self.raw[i][e * g..(e + 1) * g].to_vec());
        }
    }
}

/// Per-instance pruning recall: the fraction of template points whose true
/// match survived pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningReport {
    pub per_instance: Vec<f64>,
    pub mean: f64,
    /// Instances whose whole ground truth is among the candidates.
    pub complete: usize,
}

impl PruningReport {
    fn new(per_instance: Vec<f64>) -> Self {
        let mean = per_instance.iter().sum::<f64>() / per_instance.len().max(1) as f64;
        let complete = per_instance.iter().filter(|&&r| r == 1.0).count();
        PruningReport {
            per_instance,
            mean,
            complete,
        }
    }
}

pub(crate) struct CliqueOracle<'a> {
    instances: &'a [MatchInstance],
    caches: Vec<FeatureCache>,
    gt_raw: Vec<Vec<f64>>,
    scale: Vec<f64>,
    loss: LossKind,
    bound: f64,
    opts: MatchOptions,
    pub(crate) recall: PruningReport,
}

impl<'a> CliqueOracle<'a> {
    pub(crate) fn new(
        data: &'a TrainingSet,
        theta0: &[f64],
        config: &FeatureConfig,
        p: usize,
        inject: bool,
        loss: LossKind,
        opts: MatchOptions,
    ) -> Result<Self> {
        let instances = data.instances();
        let theta0_opt = config.groups.unary.then_some(theta0);
        let built: Vec<(FeatureCache, Vec<f64>, f64)> = instances
            .par_iter()
            .map(|inst| {
                let gt = inst.require_ground_truth()?;
                let ctx = CliqueContext::new(inst.template(), inst.target(), config, theta0_opt)?;
                let mut cands = candidates_for(inst.template(), inst.target(), theta0, p)?;
                let recall = cands.recall(gt);
                if inject {
                    cands.inject(gt);
                }
                let gt_raw = raw_sum(&ctx, gt.as_slice());
                Ok((FeatureCache::new(&ctx, cands), gt_raw, recall))
            })
            .collect::<Result<_>>()?;
        let mut caches = Vec::with_capacity(built.len());
        let mut gt_raw = Vec::with_capacity(built.len());
        let mut recall = Vec::with_capacity(built.len());
        for (c, g, r) in built {
            caches.push(c);
            gt_raw.push(g);
            recall.push(r);
        }
        Ok(CliqueOracle {
            instances,
            caches,
            gt_raw,
            scale: vec![1.0; config.groups.count()],
            loss,
            bound: data.loss_bound(loss),
            opts,
            recall: PruningReport::new(recall),
        })
    }

    pub(crate) fn set_scale(&mut self, scale: Vec<f64>) {
        self.scale = scale;
    }

    /// `1 / std` of each group over `samples` random candidate triples;
    /// groups with no spread keep a factor of 1.
    pub(crate) fn calibrate(&self, samples: usize, seed: u64) -> Vec<f64> {
        let g = self.scale.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(samples);
        let per = samples.div_ceil(self.caches.len().max(1)).max(1);
        for cache in &self.caches {
            cache.sample(&mut rng, per, &mut values);
        }
        (0..g)
            .map(|k| {
                let m = values.len() as f64;
                let mean = values.iter().map(|v| v[k]).sum::<f64>() / m;
                let var = values.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
                let sd = var.sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect()
    }

    fn weights(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.scale).map(|(t, s)| t * s).collect()
    }

    fn h(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.scale).map(|(r, s)| -r * s).collect()
    }

    /// Plain prediction over the instance's candidates.
    pub(crate) fn predict(&self, i: usize, theta: &[f64]) -> InferenceResult {
        let tables = self.caches[i].tables(&self.weights(theta), None);
        run_inference(&tables, &self.opts)
    }
}

impl Oracle for CliqueOracle<'_> {
    fn dim(&self) -> usize {
        self.scale.len()
    }

    fn len(&self) -> usize {
        self.instances.len()
    }

    fn most_violated(&self, i: usize, theta: &[f64]) -> Result<Violation> {
        let inst = &self.instances[i];
        let gt = inst.require_ground_truth()?;
        let nl = NodeLoss::new(self.loss, gt, inst.target());
        let cache = &self.caches[i];
        let tables = cache.tables(&self.weights(theta), Some(&nl));
        let r = run_inference(&tables, &self.opts);
        let h_y = self.h(&cache.raw_sum(&r.positions));
        let h_gt = self.h(&self.gt_raw[i]);
        let dpsi: Vec<f64> = h_y.iter().zip(&h_gt).map(|(a, b)| a - b).collect();
        let margin: f64 = dpsi.iter().zip(theta).map(|(d, t)| d * t).sum();
        let delta = loss(self.loss, &r.assignment, gt, inst.target())?;
        Ok(Violation {
            y: r.assignment,
            slack: (margin + delta).max(0.0),
            dpsi,
        })
    }

    fn prediction_loss(&self, i: usize, theta: &[f64]) -> Result<f64> {
        let inst = &self.instances[i];
        let r = self.predict(i, theta);
        loss(self.loss, &r.assignment, inst.require_ground_truth()?, inst.target())
    }

    fn loss_bound(&self) -> f64 {
        self.bound
    }
}
