//! Pairwise activity similarity and the edge-weighted activity graph.
//!
//! Two bags are compared term by term over the union of their supports:
//! an n-gram present in only one bag contributes a full structural
//! difference of 1, a shared n-gram contributes its relative count
//! difference. The sum is normalized by the combined support cardinality,
//! so the score lands in [0, 1] with 1 meaning identical bags. The induced
//! dissimilarity 1 - sim violates the triangle inequality; it is a
//! divergence, not a metric.

use serde::Serialize;

use crate::ngram::NGramHistogram;

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("similarity is undefined when both histograms are empty")]
    UndefinedPair,
    #[error("histograms have different n ({left} vs {right})")]
    MismatchedN { left: usize, right: usize },
    #[error("similarity undefined for activity pair ({left:?}, {right:?}): both histograms empty")]
    UndefinedMatrixPair { left: String, right: String },
}

/// Similarity between two bags.
///
/// Exclusive n-grams contribute exactly 1 each (missing counts read as 0),
/// shared ones contribute `|f_a - f_b| / (f_a + f_b)`; the normalizer is
/// the sum of the two support sizes. Errors if both bags are empty, which
/// would divide by zero.
pub fn sim(h_a: &NGramHistogram, h_b: &NGramHistogram) -> Result<f64, SimilarityError> {
    if h_a.n() != h_b.n() {
        return Err(SimilarityError::MismatchedN {
            left: h_a.n(),
            right: h_b.n(),
        });
    }
    let support = h_a.support_size() + h_b.support_size();
    if support == 0 {
        return Err(SimilarityError::UndefinedPair);
    }

    // Merge-join over the two sorted supports; every key in the union
    // contributes exactly one term.
    let mut sum = 0.0f64;
    let mut iter_a = h_a.iter().peekable();
    let mut iter_b = h_b.iter().peekable();
    loop {
        match (iter_a.peek(), iter_b.peek()) {
            (Some(&(ga, ca)), Some(&(gb, cb))) => match ga.cmp(gb) {
                std::cmp::Ordering::Less => {
                    sum += 1.0;
                    iter_a.next();
                }
                std::cmp::Ordering::Greater => {
                    sum += 1.0;
                    iter_b.next();
                }
                std::cmp::Ordering::Equal => {
                    let diff = ca.abs_diff(cb) as f64;
                    sum += diff / (ca + cb) as f64;
                    iter_a.next();
                    iter_b.next();
                }
            },
            (Some(_), None) | (None, Some(_)) => {
                sum += 1.0;
                iter_a.next();
                iter_b.next();
            }
            (None, None) => break,
        }
    }
    Ok(1.0 - sum / support as f64)
}

/// Symmetric K x K similarity matrix with zero diagonal: the edge-weighted
/// graph of activities. Serializes as `{ids: [...], rows: [[...]]}`.
#[derive(Debug, Clone, Serialize)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    /// Builds a matrix directly from entries; intended for tests and worked
    /// examples. Panics if the input is not square, not symmetric, or has a
    /// non-zero diagonal.
    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        let k = ids.len();
        assert_eq!(rows.len(), k, "row count must match id count");
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), k, "matrix must be square");
            assert_eq!(row[i], 0.0, "diagonal must be zero");
            for j in 0..k {
                assert_eq!(row[j], rows[j][i], "matrix must be symmetric");
            }
        }
        SimilarityMatrix { ids, rows }
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, node: usize) -> &str {
        &self.ids[node]
    }

    /// Induced submatrix over the given nodes, preserving their order.
    pub fn induced(&self, nodes: &[usize]) -> SimilarityMatrix {
        let ids = nodes.iter().map(|&i| self.ids[i].clone()).collect();
        let rows = nodes
            .iter()
            .map(|&i| nodes.iter().map(|&j| self.rows[i][j]).collect())
            .collect();
        SimilarityMatrix { ids, rows }
    }

    /// Largest off-diagonal entry; zero for a 1x1 matrix.
    pub fn max_edge(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.size() {
            for j in 0..i {
                best = best.max(self.rows[i][j]);
            }
        }
        best
    }
}

/// Computes the full pairwise matrix. Each unordered pair is evaluated
/// once, so the result is symmetric by construction.
pub fn build_matrix(
    ids: &[String],
    histograms: &[NGramHistogram],
) -> Result<SimilarityMatrix, SimilarityError> {
    assert_eq!(ids.len(), histograms.len());
    let k = histograms.len();
    let mut rows = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let value = sim(&histograms[i], &histograms[j]).map_err(|e| match e {
                SimilarityError::UndefinedPair => SimilarityError::UndefinedMatrixPair {
                    left: ids[i].clone(),
                    right: ids[j].clone(),
                },
                other => other,
            })?;
            rows[i][j] = value;
            rows[j][i] = value;
        }
    }
    Ok(SimilarityMatrix {
        ids: ids.to_vec(),
        rows,
    })
}
