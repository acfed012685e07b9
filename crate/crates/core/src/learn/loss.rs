//! Losses that decompose over template points, so they can be folded into
//! unary or clique scores during loss-augmented inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Assignment, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Fraction of template points matched to the wrong target.
    Hamming,
    /// Mean distance to the true target, divided by the target width.
    Endpoint,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(LossKind::Hamming),
            "endpoint" => Ok(LossKind::Endpoint),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss `{other}` (expected hamming or endpoint)"
            ))),
        }
    }
}

fn check_lengths(y: &Assignment, gt: &Assignment) -> Result<()> {
    if y.len() != gt.len() || y.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            found: y.len(),
        });
    }
    Ok(())
}

pub fn hamming(y: &Assignment, gt: &Assignment) -> Result<f64> {
    check_lengths(y, gt)?;
    let wrong = y
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / y.len() as f64)
}

pub fn endpoint(y: &Assignment, gt: &Assignment, target: &Scene) -> Result<f64> {
    check_lengths(y, gt)?;
    for &u in y.as_slice().iter().chain(gt.as_slice()) {
        if u >= target.len() {
            return Err(Error::IndexOutOfRange {
                index: u,
                len: target.len(),
            });
        }
    }
    let total: f64 = y
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&a, &b)| target.point(a).dist(target.point(b)))
        .sum();
    Ok(total / target.width() / y.len() as f64)
}

pub fn loss(kind: LossKind, y: &Assignment, gt: &Assignment, target: &Scene) -> Result<f64> {
    match kind {
        LossKind::Hamming => hamming(y, gt),
        LossKind::Endpoint => endpoint(y, gt, target),
    }
}

/// Per-node loss terms `delta_i(u)` whose sum over nodes equals the loss.
#[derive(Debug, Clone, Copy)]
pub struct NodeLoss<'a> {
    pub kind: LossKind,
    pub ground_truth: &'a Assignment,
    pub target: &'a Scene,
}

impl<'a> NodeLoss<'a> {
    pub fn new(kind: LossKind, ground_truth: &'a Assignment, target: &'a Scene) -> Self {
        NodeLoss {
            kind,
            ground_truth,
            target,
        }
    }

    /// Loss contributed by matching template position `i` to target `u`.
    pub fn node(&self, i: usize, u: usize) -> f64 {
        let n = self.ground_truth.len() as f64;
        let truth = self.ground_truth.get(i);
        match self.kind {
            LossKind::Hamming => {
                if u == truth {
                    0.0
                } else {
                    1.0 / n
                }
            }
            LossKind::Endpoint => {
                self.target.point(u).dist(self.target.point(truth)) / self.target.width() / n
            }
        }
    }
}
