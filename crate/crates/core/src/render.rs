//! Grayscale rendering of similarity matrices.
//!
//! Binary PGM (P5), one pixel per matrix entry: white is identical
//! similarity, black complete dissimilarity. The diagonal renders black
//! because self-similarity is stored as zero. An optional node ordering
//! reorders rows and columns, e.g. classes in peel order followed by the
//! leftover, which makes block structure visible.

use crate::similarity::SimilarityMatrix;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("ordering is not a permutation of 0..{expected}")]
    InvalidPermutation { expected: usize },
}

/// Renders the matrix as P5 PGM bytes, row-major in the given ordering.
/// Pixel value is `round(255 * sim)`.
pub fn render_similarity_image(
    matrix: &SimilarityMatrix,
    ordering: Option<&[usize]>,
) -> Result<Vec<u8>, RenderError> {
    let k = matrix.size();
    let identity: Vec<usize>;
    let order: &[usize] = match ordering {
        Some(order) => {
            let mut seen = vec![false; k];
            if order.len() != k {
                return Err(RenderError::InvalidPermutation { expected: k });
            }
            for &node in order {
                if node >= k || seen[node] {
                    return Err(RenderError::InvalidPermutation { expected: k });
                }
                seen[node] = true;
            }
            order
        }
        None => {
            identity = (0..k).collect();
            &identity
        }
    };

    let mut bytes = format!("P5\n{k} {k}\n255\n").into_bytes();
    bytes.reserve(k * k);
    for &row in order {
        for &col in order {
            bytes.push((255.0 * matrix.get(row, col)).round() as u8);
        }
    }
    Ok(bytes)
}
