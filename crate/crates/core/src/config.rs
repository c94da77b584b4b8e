//! Pipeline-wide configuration.

use serde::{Deserialize, Serialize};

use crate::dominant::SolverParams;

/// Knobs shared by every pipeline stage. Defaults: tri-grams, prune
/// parameter 0.5, context depth 8, non-trivial cliques of 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// n-gram width for the bag representation.
    pub n: usize,
    /// Prune parameter: a context survives only if its bit gain exceeds
    /// `k_param * log2(total corpus length)`.
    pub k_param: f64,
    /// Maximum context depth of the per-class Markov models.
    pub max_depth: usize,
    /// Smallest class a peel round may emit.
    pub min_clique_size: usize,
    /// L1 convergence threshold for the replicator iteration.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Weight above which a node belongs to the converged support.
    pub support_threshold: f64,
    /// Additive smoothing used when scoring held-out activities.
    pub smoothing: f64,
    /// Seed recorded in reports and used by the synthetic generator.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 3,
            k_param: 0.5,
            max_depth: 8,
            min_clique_size: 3,
            epsilon: 1e-8,
            max_iters: 10_000,
            support_threshold: 1e-4,
            smoothing: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    /// Checks the numeric bounds; every field must be positive, with
    /// `n >= 1` and `min_clique_size >= 2`.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.n < 1 {
            problems.push("n must be at least 1");
        }
        if self.k_param <= 0.0 {
            problems.push("k_param must be positive");
        }
        if self.max_depth < 1 {
            problems.push("max_depth must be at least 1");
        }
        if self.min_clique_size < 2 {
            problems.push("min_clique_size must be at least 2");
        }
        if self.epsilon <= 0.0 {
            problems.push("epsilon must be positive");
        }
        if self.max_iters < 1 {
            problems.push("max_iters must be at least 1");
        }
        if self.support_threshold <= 0.0 {
            problems.push("support_threshold must be positive");
        }
        if self.smoothing < 0.0 {
            problems.push("smoothing must be nonnegative");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems.join("; ")))
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            support_threshold: self.support_threshold,
            min_clique_size: self.min_clique_size,
        }
    }
}
