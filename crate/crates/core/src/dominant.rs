//! Activity-class discovery by sequentially peeling dominant sets
//! (edge-weighted maximal cliques) from the similarity graph.
//!
//! Two routes to the same object live here and must stay independent:
//!
//! * [`CouplingOracle`] evaluates the recursive coupling-weight definition
//!   exactly. The recursion is exponential in the subset size, so it is
//!   capped and used only to verify small instances.
//! * [`find_dominant_set`] runs replicator dynamics, a simplex-preserving
//!   iteration `x_i <- x_i (Ax)_i / (x'Ax)` whose stable fixed points are
//!   the characteristic vectors of dominant sets. The converged support is
//!   the discovered class and the converged weights are the membership
//!   measure of each node in it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use serde::Serialize;

use crate::similarity::SimilarityMatrix;

/// Upper bound on subset size for the exact recursion.
pub const DEFAULT_ORACLE_SIZE_LIMIT: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum DominantSetError {
    #[error("node {node} is not a member of the subset")]
    NotInSubset { node: usize },
    #[error("node {node} is already a member of the subset")]
    AlreadyInSubset { node: usize },
    #[error("subset of size {size} exceeds the oracle size limit {limit}")]
    OracleLimit { size: usize, limit: usize },
    #[error("oracle supports node indices below 64, got {node}")]
    OracleIndex { node: usize },
    #[error("graph is degenerate: no positive similarity among current nodes")]
    DegenerateGraph,
    #[error("subset is empty")]
    EmptySubset,
}

/// A set of node indices into a [`SimilarityMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSubset {
    members: BTreeSet<usize>,
}

impl NodeSubset {
    pub fn new<I: IntoIterator<Item = usize>>(members: I) -> Self {
        NodeSubset {
            members: members.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.contains(&node)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.members.iter().copied().collect()
    }

    fn with(&self, node: usize) -> NodeSubset {
        let mut members = self.members.clone();
        members.insert(node);
        NodeSubset { members }
    }

    fn without(&self, node: usize) -> NodeSubset {
        let mut members = self.members.clone();
        members.remove(&node);
        NodeSubset { members }
    }

    fn mask(&self) -> Result<u64, DominantSetError> {
        let mut mask = 0u64;
        for &node in &self.members {
            if node >= 64 {
                return Err(DominantSetError::OracleIndex { node });
            }
            mask |= 1 << node;
        }
        Ok(mask)
    }
}

/// Average weighted degree of `i` within `s`: mean edge weight from `i`
/// to the subset (the `j = i` term contributes the zero diagonal).
pub fn awdeg(s: &NodeSubset, i: usize, a: &SimilarityMatrix) -> Result<f64, DominantSetError> {
    if !s.contains(i) {
        return Err(DominantSetError::NotInSubset { node: i });
    }
    let sum: f64 = s.iter().map(|j| a.get(i, j)).sum();
    Ok(sum / s.len() as f64)
}

/// Relative affinity of outside node `j` to `i`, measured against the
/// average similarity of `i` within `s`. May be negative.
pub fn phi(
    s: &NodeSubset,
    i: usize,
    j: usize,
    a: &SimilarityMatrix,
) -> Result<f64, DominantSetError> {
    if !s.contains(i) {
        return Err(DominantSetError::NotInSubset { node: i });
    }
    if s.contains(j) {
        return Err(DominantSetError::AlreadyInSubset { node: j });
    }
    Ok(a.get(i, j) - awdeg(s, i, a)?)
}

/// Exact recursive evaluator for coupling weights. Memoized over
/// (subset, node); exponential in subset size, so capped at `size_limit`.
pub struct CouplingOracle<'a> {
    matrix: &'a SimilarityMatrix,
    size_limit: usize,
    memo: HashMap<(u64, usize), f64>,
}

impl<'a> CouplingOracle<'a> {
    pub fn new(matrix: &'a SimilarityMatrix) -> Self {
        CouplingOracle {
            matrix,
            size_limit: DEFAULT_ORACLE_SIZE_LIMIT,
            memo: HashMap::new(),
        }
    }

    pub fn with_size_limit(matrix: &'a SimilarityMatrix, size_limit: usize) -> Self {
        CouplingOracle {
            matrix,
            size_limit,
            memo: HashMap::new(),
        }
    }

    /// Coupling weight of `i` with respect to `s`: 1 for singletons, else
    /// the phi-weighted sum of the weights of `s \ {i}`.
    pub fn node_weight(&mut self, s: &NodeSubset, i: usize) -> Result<f64, DominantSetError> {
        if s.is_empty() {
            return Err(DominantSetError::EmptySubset);
        }
        if !s.contains(i) {
            return Err(DominantSetError::NotInSubset { node: i });
        }
        if s.len() > self.size_limit {
            return Err(DominantSetError::OracleLimit {
                size: s.len(),
                limit: self.size_limit,
            });
        }
        let key = (s.mask()?, i);
        if let Some(&cached) = self.memo.get(&key) {
            return Ok(cached);
        }
        let value = if s.len() == 1 {
            1.0
        } else {
            let rest = s.without(i);
            let mut sum = 0.0;
            for j in rest.iter() {
                let coupling = self.node_weight(&rest, j)?;
                sum += phi(&rest, j, i, self.matrix)? * coupling;
            }
            sum
        };
        self.memo.insert(key, value);
        Ok(value)
    }

    /// Total coupling weight of `s`.
    pub fn total_weight(&mut self, s: &NodeSubset) -> Result<f64, DominantSetError> {
        let mut sum = 0.0;
        for i in s.iter() {
            sum += self.node_weight(s, i)?;
        }
        Ok(sum)
    }

    /// Checks the dominant-set definition exactly: positive coupling for
    /// every member (internal homogeneity), negative coupling for every
    /// extension (external inhomogeneity), and positive total weight for
    /// every non-empty subset of `s`.
    pub fn is_dominant(&mut self, s: &NodeSubset) -> Result<bool, DominantSetError> {
        if s.is_empty() {
            return Err(DominantSetError::EmptySubset);
        }
        for i in s.iter() {
            if self.node_weight(s, i)? <= 0.0 {
                return Ok(false);
            }
        }
        for i in 0..self.matrix.size() {
            if !s.contains(i) && self.node_weight(&s.with(i), i)? >= 0.0 {
                return Ok(false);
            }
        }
        // W(T) > 0 for every non-empty T subset of S.
        let members = s.to_vec();
        for bits in 1u64..(1 << members.len()) {
            let subset = NodeSubset::new(
                members
                    .iter()
                    .enumerate()
                    .filter(|(pos, _)| bits & (1 << pos) != 0)
                    .map(|(_, &node)| node),
            );
            if self.total_weight(&subset)? <= 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A point on the probability simplex over graph nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicVector {
    weights: Vec<f64>,
}

impl CharacteristicVector {
    /// Uniform distribution over `k` nodes.
    pub fn barycenter(k: usize) -> Self {
        CharacteristicVector {
            weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices with weight above the given threshold.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > threshold)
            .map(|(i, _)| i)
            .collect()
    }

    /// The quadratic form x'Ax measured by this vector.
    pub fn cohesiveness(&self, a: &SimilarityMatrix) -> f64 {
        let k = self.weights.len();
        let mut total = 0.0;
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                row += a.get(i, j) * self.weights[j];
            }
            total += self.weights[i] * row;
        }
        total
    }
}

/// One replicator step: `x_i <- x_i (Ax)_i / (x'Ax)`. The output stays on
/// the simplex and never decreases the quadratic form.
pub fn replicator_step(
    x: &CharacteristicVector,
    a: &SimilarityMatrix,
) -> Result<CharacteristicVector, DominantSetError> {
    let k = x.len();
    assert_eq!(k, a.size(), "vector and matrix dimensions must agree");
    let mut ax = vec![0.0; k];
    for i in 0..k {
        let mut sum = 0.0;
        for j in 0..k {
            sum += a.get(i, j) * x.weights[j];
        }
        ax[i] = sum;
    }
    let quad: f64 = (0..k).map(|i| x.weights[i] * ax[i]).sum();
    if quad <= 0.0 {
        return Err(DominantSetError::DegenerateGraph);
    }
    let weights = (0..k).map(|i| x.weights[i] * ax[i] / quad).collect();
    Ok(CharacteristicVector { weights })
}

/// Solver knobs for the replicator iteration and the peel loop.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    /// L1 convergence threshold between consecutive iterates.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Weight above which a node counts as part of the converged support.
    pub support_threshold: f64,
    /// Smallest class size a peel round may emit (non-trivial clique size).
    pub min_clique_size: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            epsilon: 1e-8,
            max_iters: 10_000,
            support_threshold: 1e-4,
            min_clique_size: 3,
        }
    }
}

/// One discovered activity class: its members, their normalized converged
/// weights, and the cohesiveness x'Ax at convergence.
#[derive(Debug, Clone)]
pub struct DiscoveredClass {
    pub members: NodeSubset,
    pub membership_weights: BTreeMap<usize, f64>,
    pub cohesiveness: f64,
}

/// Outcome of one dominant-set extraction.
#[derive(Debug, Clone)]
pub struct DominantSetOutcome {
    pub class: DiscoveredClass,
    pub vector: CharacteristicVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Ordered classes plus the nodes left unclustered. Class member sets and
/// the leftover always partition the node set.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterResult {
    #[serde(skip)]
    pub classes: Vec<DiscoveredClass>,
    #[serde(skip)]
    pub leftover: NodeSubset,
}

/// Iterates replicator dynamics from the barycenter until the L1 step is
/// below `epsilon` or `max_iters` is reached; the converged support is the
/// discovered class. Non-convergence is reported via the outcome, not an
/// error.
pub fn find_dominant_set(
    a: &SimilarityMatrix,
    params: &SolverParams,
) -> Result<DominantSetOutcome, DominantSetError> {
    if a.size() == 0 || a.max_edge() <= 0.0 {
        return Err(DominantSetError::DegenerateGraph);
    }
    let mut x = CharacteristicVector::barycenter(a.size());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        let next = replicator_step(&x, a)?;
        iterations += 1;
        let step: f64 = x
            .weights
            .iter()
            .zip(next.weights.iter())
            .map(|(old, new)| (old - new).abs())
            .sum();
        x = next;
        if step < params.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "replicator dynamics did not converge in {} iterations; using best iterate",
            params.max_iters
        );
    }

    let support = x.support(params.support_threshold);
    let support_mass: f64 = support.iter().map(|&i| x.weights[i]).sum();
    let membership_weights = support
        .iter()
        .map(|&i| (i, x.weights[i] / support_mass))
        .collect();
    let class = DiscoveredClass {
        members: NodeSubset::new(support),
        membership_weights,
        cohesiveness: x.cohesiveness(a),
    };
    Ok(DominantSetOutcome {
        class,
        vector: x,
        iterations,
        converged,
    })
}

/// Repeatedly extracts a dominant set from the induced subgraph of the
/// remaining nodes and removes its members. Peeling stops when the next
/// support would be smaller than `min_clique_size`, when fewer than
/// `min_clique_size` nodes remain, or when the remaining graph has no
/// positive edge; whatever remains is the leftover.
pub fn peel_clusters(a: &SimilarityMatrix, params: &SolverParams) -> ClusterResult {
    let mut remaining: Vec<usize> = (0..a.size()).collect();
    let mut classes = Vec::new();
    while remaining.len() >= params.min_clique_size {
        let sub = a.induced(&remaining);
        let outcome = match find_dominant_set(&sub, params) {
            Ok(outcome) => outcome,
            Err(DominantSetError::DegenerateGraph) => break,
            Err(other) => unreachable!("peel subgraph is well-formed: {other}"),
        };
        if outcome.class.members.len() < params.min_clique_size {
            break;
        }
        // Map subgraph indices back to original node ids.
        let members: Vec<usize> = outcome
            .class
            .members
            .iter()
            .map(|local| remaining[local])
            .collect();
        let membership_weights = outcome
            .class
            .membership_weights
            .iter()
            .map(|(&local, &w)| (remaining[local], w))
            .collect();
        classes.push(DiscoveredClass {
            members: NodeSubset::new(members.iter().copied()),
            membership_weights,
            cohesiveness: outcome.class.cohesiveness,
        });
        remaining.retain(|node| !members.contains(node));
    }
    ClusterResult {
        classes,
        leftover: NodeSubset::new(remaining),
    }
}
