//! Learned weights and the feature configuration they were learned under.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ShapeContextConfig;

/// Clique feature groups, in the order they appear in a clique vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    /// Unary term collapsed through the stage-1 weights.
    Unary,
    /// Squared difference of width-normalised distances.
    Distance,
    /// Delaunay edge co-occurrence.
    Adjacency,
    /// Squared difference of triangle-normalised distances.
    ScaledDistance,
    /// Squared difference of the angle at the middle vertex.
    Angle,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::Unary,
        FeatureGroup::Distance,
        FeatureGroup::Adjacency,
        FeatureGroup::ScaledDistance,
        FeatureGroup::Angle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Unary => "unary",
            FeatureGroup::Distance => "distance",
            FeatureGroup::Adjacency => "adjacency",
            FeatureGroup::ScaledDistance => "scaled_distance",
            FeatureGroup::Angle => "angle",
        }
    }
}

/// Which clique groups participate in the higher-order score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub unary: bool,
    pub distance: bool,
    pub adjacency: bool,
    pub scaled_distance: bool,
    pub angle: bool,
}

impl FeatureFlags {
    pub const ALL: FeatureFlags = FeatureFlags {
        unary: true,
        distance: true,
        adjacency: true,
        scaled_distance: true,
        angle: true,
    };

    pub const NONE: FeatureFlags = FeatureFlags {
        unary: false,
        distance: false,
        adjacency: false,
        scaled_distance: false,
        angle: false,
    };

    /// Everything except the adjacency indicator.
    pub const NO_ADJACENCY: FeatureFlags = FeatureFlags {
        adjacency: false,
        ..FeatureFlags::ALL
    };

    /// Distance, scaled distance and angle only.
    pub const GEOMETRIC: FeatureFlags = FeatureFlags {
        unary: false,
        adjacency: false,
        ..FeatureFlags::ALL
    };

    pub fn is_active(&self, group: FeatureGroup) -> bool {
        match group {
            FeatureGroup::Unary => self.unary,
            FeatureGroup::Distance => self.distance,
            FeatureGroup::Adjacency => self.adjacency,
            FeatureGroup::ScaledDistance => self.scaled_distance,
            FeatureGroup::Angle => self.angle,
        }
    }

    pub fn active(&self) -> Vec<FeatureGroup> {
        FeatureGroup::ALL
            .into_iter()
            .filter(|g| self.is_active(*g))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.active().len()
    }
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags::ALL
    }
}

fn default_penalty() -> f64 {
    10.0
}

/// How features are computed. Serialised alongside the weights so a model
/// file fully determines the scores it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub groups: FeatureFlags,
    /// Raw group value substituted for a degenerate triangle.
    #[serde(default = "default_penalty")]
    pub degenerate_penalty: f64,
    /// When set, scenes without descriptors get Shape Context descriptors
    /// computed from their geometry.
    #[serde(default)]
    pub shape_context: Option<ShapeContextConfig>,
    /// Template distances are normalised by the template scene's width and
    /// target distances by the target's. When false both use the target width.
    #[serde(default = "default_true")]
    pub template_own_width: bool,
}

fn default_true() -> bool {
    true
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            groups: FeatureFlags::ALL,
            degenerate_penalty: default_penalty(),
            shape_context: Some(ShapeContextConfig::default()),
            template_own_width: true,
        }
    }
}

impl FeatureConfig {
    pub fn with_groups(groups: FeatureFlags) -> Self {
        FeatureConfig {
            groups,
            ..FeatureConfig::default()
        }
    }
}

/// Stage-1 unary weights, stage-2 clique weights, and everything needed to
/// reproduce the scores they define.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    pub theta0: Vec<f64>,
    pub theta: Vec<f64>,
    pub p: usize,
    pub feature_config: FeatureConfig,
    pub scale_factors: Vec<f64>,
}

impl WeightModel {
    /// The unlearned model: unit unary weights, unit group weights and unit
    /// scales.
    pub fn uniform(descriptor_dim: usize, p: usize, feature_config: FeatureConfig) -> Self {
        let g = feature_config.groups.count();
        WeightModel {
            theta0: vec![1.0; descriptor_dim],
            theta: vec![1.0; g],
            p,
            feature_config,
            scale_factors: vec![1.0; g],
        }
    }

    pub fn active_groups(&self) -> Vec<FeatureGroup> {
        self.feature_config.groups.active()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.feature_config.groups.count();
        if self.theta.len() != g {
            return Err(Error::InvalidModel(format!(
                "theta has dimension {} but the feature configuration has {g} active groups",
                self.theta.len()
            )));
        }
        if self.scale_factors.len() != g {
            return Err(Error::InvalidModel(format!(
                "scale_factors has dimension {} but the feature configuration has {g} active groups",
                self.scale_factors.len()
            )));
        }
        if let Some(sc) = &self.feature_config.shape_context {
            sc.validate()?;
            if !self.theta0.is_empty() && self.theta0.len() != sc.dim() {
                return Err(Error::InvalidModel(format!(
                    "theta0 has dimension {} but Shape Context produces {}",
                    self.theta0.len(),
                    sc.dim()
                )));
            }
        }
        if self.feature_config.groups.unary && self.theta0.is_empty() {
            return Err(Error::InvalidModel(
                "the unary group is active but theta0 is empty".into(),
            ));
        }
        if self.p == 0 {
            return Err(Error::InvalidModel("p must be at least 1".into()));
        }
        if let Some(s) = self.scale_factors.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidModel(format!(
                "scale factors must be positive and finite, found {s}"
            )));
        }
        if self
            .theta0
            .iter()
            .chain(&self.theta)
            .any(|w| !w.is_finite())
        {
            return Err(Error::InvalidModel("non-finite weight".into()));
        }
        if !(self.feature_config.degenerate_penalty.is_finite()) {
            return Err(Error::InvalidModel("degenerate penalty must be finite".into()));
        }
        Ok(())
    }
}
