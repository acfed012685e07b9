//! Feature functions: unary descriptor differences, pairwise and triangle
//! geometry, Delaunay adjacency, Shape Context, and per-clique assembly.

pub mod clique;
pub mod delaunay;
pub mod geometry;
pub mod shape_context;
pub mod unary;

pub use clique::{collapsed_unary_matrix, CliqueContext, CliqueFeatureVector};
pub use delaunay::{adjacency_feature, delaunay, triangulate, AdjacencyGraph};
pub use geometry::{angle, d1, d2, phi1, phi2, phi3};
pub use shape_context::{
    mean_pairwise_distance, shape_context, shape_context_all, with_shape_context,
    with_shape_context_subset, ShapeContextConfig,
};
pub use unary::{collapse_unary, phi0};
