//! First stage: unary weights learned with linear-assignment inference.

use crate::assign::{solve_lap, unary_scores};
use crate::error::{Error, Result};
use crate::features::phi0;
use crate::learn::loss::{loss, LossKind, NodeLoss};
use crate::learn::solver::{Oracle, Violation};
use crate::learn::TrainingSet;
use crate::types::{Assignment, MatchInstance, Scene, TemplateShape};

/// Unary joint feature `-sum_i phi0(s_i, y(s_i))`.
pub fn joint_feature_unary(
    template: &TemplateShape,
    target: &Scene,
    y: &Assignment,
) -> Result<Vec<f64>> {
    y.check_against(template.len(), target.len())?;
    let mut h: Vec<f64> = Vec::new();
    for i in 0..template.len() {
        let f = phi0(template.descriptor(i)?, target.require_descriptor(y.get(i))?)?;
        if h.is_empty() {
            h = vec![0.0; f.len()];
        }
        h.iter_mut().zip(&f).for_each(|(a, b)| *a -= b);
    }
    Ok(h)
}

/// Linear-assignment prediction with unary weights `theta0`.
pub fn predict_linear(template: &TemplateShape, target: &Scene, theta0: &[f64]) -> Result<Assignment> {
    solve_lap(&unary_scores(template, target, theta0, None)?)
}

pub(crate) struct UnaryOracle<'a> {
    instances: &'a [MatchInstance],
    loss: LossKind,
    dim: usize,
    gt_features: Vec<Vec<f64>>,
    bound: f64,
}

impl<'a> UnaryOracle<'a> {
    pub(crate) fn new(data: &'a TrainingSet, loss: LossKind) -> Result<Self> {
        let instances = data.instances();
        let dim = instances
            .first()
            .and_then(|inst| inst.target().descriptor_dim())
            .ok_or_else(|| Error::MissingDescriptors("training targets".into()))?;
        let gt_features = instances
            .iter()
            .map(|inst| {
                let h = joint_feature_unary(inst.template(), inst.target(), inst.require_ground_truth()?)?;
                if h.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: h.len(),
                    });
                }
                Ok(h)
            })
            .collect::<Result<_>>()?;
        Ok(UnaryOracle {
            instances,
            loss,
            dim,
            gt_features,
            bound: data.loss_bound(loss),
        })
    }
}

impl Oracle for UnaryOracle<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.instances.len()
    }

    fn most_violated(&self, i: usize, theta: &[f64]) -> Result<Violation> {
        let inst = &self.instances[i];
        let gt = inst.require_ground_truth()?;
        let node_loss = NodeLoss::new(self.loss, gt, inst.target());
        let scores = unary_scores(inst.template(), inst.target(), theta, Some(&node_loss))?;
        let y = solve_lap(&scores)?;
        let h = joint_feature_unary(inst.template(), inst.target(), &y)?;
        let dpsi: Vec<f64> = h.iter().zip(&self.gt_features[i]).map(|(a, b)| a - b).collect();
        let margin: f64 = dpsi.iter().zip(theta).map(|(d, t)| d * t).sum();
        let delta = loss(self.loss, &y, gt, inst.target())?;
        Ok(Violation {
            y,
            slack: (margin + delta).max(0.0),
            dpsi,
        })
    }

    fn prediction_loss(&self, i: usize, theta: &[f64]) -> Result<f64> {
        let inst = &self.instances[i];
        let y = predict_linear(inst.template(), inst.target(), theta)?;
        loss(self.loss, &y, inst.require_ground_truth()?, inst.target())
    }

    fn loss_bound(&self) -> f64 {
        self.bound
    }
}
