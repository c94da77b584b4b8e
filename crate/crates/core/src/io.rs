//! Event-log ingestion and export.
//!
//! The event log is JSON-lines: one object per event with fields `activity`
//! (string), `seq` (integer, unique per activity, defines order), and `event`
//! (string). Unknown fields such as timestamps are accepted and ignored; the
//! core methods use order only. A vocabulary file is newline-separated unique
//! event names, index = line number starting at 0.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::event::{ActivityInstance, Dataset, Vocabulary, VocabularyError};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: event {name:?} is not in the supplied vocabulary")]
    UnknownEvent { line: usize, name: String },
    #[error("line {line}: duplicate (activity {activity:?}, seq {seq}) pair")]
    DuplicateRecord {
        line: usize,
        activity: String,
        seq: i64,
    },
    #[error("vocabulary file: {0}")]
    Vocabulary(#[from] VocabularyError),
}

#[derive(Debug, Deserialize)]
struct LogRecord {
    activity: String,
    seq: i64,
    event: String,
}

/// Reads a vocabulary file (one event name per line).
pub fn read_vocabulary(path: &Path) -> Result<Vocabulary, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(Vocabulary::from_names(
        text.lines().filter(|l| !l.is_empty()).map(str::to_owned),
    )?)
}

/// Writes a vocabulary file, one name per line.
pub fn write_vocabulary(path: &Path, vocabulary: &Vocabulary) -> std::io::Result<()> {
    let mut out = String::new();
    for name in vocabulary.names() {
        out.push_str(name);
        out.push('\n');
    }
    fs::write(path, out)
}

/// Ingests a JSON-lines event log into a [`Dataset`].
///
/// Activities are ordered lexicographically by id and events within an
/// activity by `seq`, so the result is independent of line order. When
/// `vocab_path` is absent the vocabulary is induced from the data in
/// lexicographic name order.
pub fn ingest(path: &Path, vocab_path: Option<&Path>) -> Result<Dataset, IngestError> {
    let explicit_vocab = match vocab_path {
        Some(p) => Some(read_vocabulary(p)?),
        None => None,
    };
    ingest_with(path, explicit_vocab)
}

/// [`ingest`] against an already-loaded vocabulary (e.g. the one embedded
/// in a serialized model).
pub fn ingest_with(
    path: &Path,
    explicit_vocab: Option<Vocabulary>,
) -> Result<Dataset, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;

    // activity id -> (seq -> (line, event name)); BTreeMaps give the
    // canonical id/seq ordering for free.
    let mut by_activity: BTreeMap<String, BTreeMap<i64, String>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_num = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord =
            serde_json::from_str(line).map_err(|e| IngestError::Malformed {
                line: line_num,
                message: e.to_string(),
            })?;
        if let Some(vocab) = &explicit_vocab {
            if vocab.id(&record.event).is_none() {
                return Err(IngestError::UnknownEvent {
                    line: line_num,
                    name: record.event,
                });
            }
        }
        let seqs = by_activity.entry(record.activity.clone()).or_default();
        if seqs.insert(record.seq, record.event).is_some() {
            return Err(IngestError::DuplicateRecord {
                line: line_num,
                activity: record.activity,
                seq: record.seq,
            });
        }
    }

    let vocabulary = match explicit_vocab {
        Some(v) => v,
        None => Vocabulary::induce(
            by_activity
                .values()
                .flat_map(|seqs| seqs.values())
                .cloned(),
        )?,
    };

    let activities = by_activity
        .into_iter()
        .map(|(id, seqs)| {
            let events = seqs
                .into_values()
                .map(|name| vocabulary.id(&name).expect("name came from vocabulary"))
                .collect();
            ActivityInstance::new(id, events)
        })
        .collect();

    Ok(Dataset::new(vocabulary, activities))
}

/// Exports a dataset as a JSON-lines event log (inverse of [`ingest`]).
pub fn export(path: &Path, dataset: &Dataset) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    for activity in &dataset.activities {
        for (seq, &event) in activity.events.iter().enumerate() {
            let name = dataset
                .vocabulary
                .name(event)
                .expect("dataset events are in range");
            let record = serde_json::json!({
                "activity": activity.id,
                "seq": seq,
                "event": name,
            });
            writeln!(file, "{record}")?;
        }
    }
    Ok(())
}
