//! Near-isometric shape matching with a loop-of-cliques graphical model.

pub mod assign;
pub mod bench;
pub mod error;
pub mod features;
pub mod infer;
pub mod io;
pub mod learn;
pub mod model;
pub mod types;

pub use error::{Error, Result};
pub use model::{FeatureConfig, FeatureFlags, FeatureGroup, WeightModel};
pub use types::{Assignment, MatchInstance, Point2, Scene, TemplateShape};
