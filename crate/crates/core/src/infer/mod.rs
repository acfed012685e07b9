//! MAP inference over the loop of cliques.

mod exact;
mod loopy;
mod tables;

pub use exact::{map_bruteforce, map_conditioned, BRUTEFORCE_LIMIT};
pub use loopy::{map_loopy, LoopyOptions, MessagePassing};
pub use tables::{build_tables, prune_candidates, CandidateSets, CliqueTableSet};

use crate::types::Assignment;

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    /// Target indices, one per template position.
    pub assignment: Assignment,
    /// The same assignment as positions within each node's candidate list.
    pub positions: Vec<usize>,
    /// Sum of table entries along the assignment.
    pub objective: f64,
    /// Message-passing sweeps performed (0 for the direct solvers).
    pub iterations: usize,
    /// Messages stopped changing, or the decode was certified optimal.
    pub converged: bool,
    /// Set when message passing could not certify its decode and the exact
    /// conditioned solver produced the result.
    pub fallback: bool,
}

impl InferenceResult {
    pub(crate) fn from_positions(
        tables: &CliqueTableSet,
        positions: Vec<usize>,
        iterations: usize,
        converged: bool,
        fallback: bool,
    ) -> Self {
        InferenceResult {
            assignment: tables.candidates().to_assignment(&positions),
            objective: tables.score(&positions),
            positions,
            iterations,
            converged,
            fallback,
        }
    }
}
