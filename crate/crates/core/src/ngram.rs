//! Bag-of-n-grams representation of an activity.
//!
//! An activity's event sequence is scanned with an overlapping window of
//! width `n`; the sparse histogram of window counts is the activity's bag
//! representation. No boundary padding is applied, so a sequence of length
//! `L` yields exactly `max(L - n + 1, 0)` windows.

use std::collections::BTreeMap;

use crate::event::{ActivityInstance, EventId};

/// A contiguous window of `n` events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NGram(pub Vec<EventId>);

impl NGram {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn events(&self) -> &[EventId] {
        &self.0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NGramError {
    #[error("n must be at least 1")]
    InvalidN,
    #[error("n-gram {0:?} has length {1}, expected {2}")]
    WrongArity(Vec<u32>, usize, usize),
    #[error("counts must be positive")]
    ZeroCount,
    #[error("duplicate n-gram in counts")]
    DuplicateGram,
}

/// Sparse histogram of n-gram counts; zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramHistogram {
    n: usize,
    counts: BTreeMap<NGram, u64>,
    total: u64,
}

impl NGramHistogram {
    /// Builds a histogram directly from (n-gram, count) pairs. Counts must
    /// be positive, grams distinct and of width `n`.
    pub fn from_counts<I>(n: usize, entries: I) -> Result<Self, NGramError>
    where
        I: IntoIterator<Item = (NGram, u64)>,
    {
        if n == 0 {
            return Err(NGramError::InvalidN);
        }
        let mut counts = BTreeMap::new();
        let mut total = 0u64;
        for (gram, count) in entries {
            if gram.len() != n {
                let raw = gram.0.iter().map(|e| e.0).collect();
                return Err(NGramError::WrongArity(raw, gram.len(), n));
            }
            if count == 0 {
                return Err(NGramError::ZeroCount);
            }
            if counts.insert(gram, count).is_some() {
                return Err(NGramError::DuplicateGram);
            }
            total += count;
        }
        Ok(NGramHistogram { n, counts, total })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct n-grams (the support size, `||Y||` for this bag).
    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// Sum of all counts; equals `max(L - n + 1, 0)`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, gram: &NGram) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, u64)> {
        self.counts.iter().map(|(g, &c)| (g, c))
    }
}

/// Returns the overlapping windows of width `n`, in sequence order.
/// Sequences shorter than `n` yield an empty list.
pub fn extract_ngrams(activity: &ActivityInstance, n: usize) -> Result<Vec<NGram>, NGramError> {
    if n == 0 {
        return Err(NGramError::InvalidN);
    }
    Ok(activity
        .events
        .windows(n)
        .map(|w| NGram(w.to_vec()))
        .collect())
}

/// Aggregates [`extract_ngrams`] output into a sparse histogram.
pub fn build_histogram(activity: &ActivityInstance, n: usize) -> Result<NGramHistogram, NGramError> {
    if n == 0 {
        return Err(NGramError::InvalidN);
    }
    let mut counts: BTreeMap<NGram, u64> = BTreeMap::new();
    let mut total = 0u64;
    for window in activity.events.windows(n) {
        *counts.entry(NGram(window.to_vec())).or_insert(0) += 1;
        total += 1;
    }
    Ok(NGramHistogram { n, counts, total })
}

#[cfg(test)]
pub(crate) fn histogram_from_counts(n: usize, entries: &[(&[u32], u64)]) -> NGramHistogram {
    let entries = entries
        .iter()
        .map(|(events, count)| (NGram(events.iter().map(|&e| EventId(e)).collect()), *count));
    NGramHistogram::from_counts(n, entries).expect("test histograms are well-formed")
}
