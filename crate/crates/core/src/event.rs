//! Events, vocabularies, activity instances, and datasets.
//!
//! Events are dense integer ids internally; names appear only at the I/O
//! boundary, so n-gram keys and context-tree edges stay fixed-width.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Dense index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u32);

impl EventId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Errors raised while constructing a vocabulary.
#[derive(Debug, thiserror::Error)]
pub enum VocabularyError {
    #[error("empty event name at index {0}")]
    EmptyName(usize),
    #[error("duplicate event name {0:?}")]
    DuplicateName(String),
}

/// Ordered set of unique event names with a name <-> id bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: BTreeMap<String, EventId>,
}

impl Vocabulary {
    /// Builds a vocabulary from names in the given order (index = position).
    pub fn from_names<I, S>(names: I) -> Result<Self, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vocabulary {
            names: Vec::new(),
            index: BTreeMap::new(),
        };
        for (i, name) in names.into_iter().enumerate() {
            let name = name.into();
            if name.is_empty() {
                return Err(VocabularyError::EmptyName(i));
            }
            let id = EventId(out.names.len() as u32);
            if out.index.insert(name.clone(), id).is_some() {
                return Err(VocabularyError::DuplicateName(name));
            }
            out.names.push(name);
        }
        Ok(out)
    }

    /// Induces a vocabulary from observed names, in lexicographic order.
    /// Order-independent: any permutation of the input yields the same result.
    pub fn induce<I, S>(names: I) -> Result<Self, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut sorted: Vec<String> = names.into_iter().map(Into::into).collect();
        sorted.sort();
        sorted.dedup();
        Self::from_names(sorted)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<EventId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: EventId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One pre-segmented activity: an ordered, non-empty sequence of events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityInstance {
    pub id: String,
    pub events: Vec<EventId>,
}

impl ActivityInstance {
    pub fn new(id: impl Into<String>, events: Vec<EventId>) -> Self {
        ActivityInstance {
            id: id.into(),
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// A vocabulary plus a list of activity instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub activities: Vec<ActivityInstance>,
}

impl Dataset {
    pub fn new(vocabulary: Vocabulary, activities: Vec<ActivityInstance>) -> Self {
        Dataset {
            vocabulary,
            activities,
        }
    }

    /// Total event count over all activities.
    pub fn total_length(&self) -> usize {
        self.activities.iter().map(ActivityInstance::len).sum()
    }

    pub fn activity(&self, id: &str) -> Option<&ActivityInstance> {
        self.activities.iter().find(|a| a.id == id)
    }
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyActivity { activity: String },
    EventOutOfRange { activity: String, position: usize, id: EventId },
    DuplicateActivityId { activity: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyActivity { activity } => {
                write!(f, "activity {activity:?} has no events")
            }
            Violation::EventOutOfRange {
                activity,
                position,
                id,
            } => write!(
                f,
                "activity {activity:?} event at position {position} has out-of-range id {id}"
            ),
            Violation::DuplicateActivityId { activity } => {
                write!(f, "duplicate activity id {activity:?}")
            }
        }
    }
}

/// Checks every dataset invariant and reports violations; never fails.
/// An empty report means the dataset is well-formed.
pub fn validate(dataset: &Dataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let vocab_len = dataset.vocabulary.len();
    for activity in &dataset.activities {
        if !seen.insert(activity.id.as_str()) {
            violations.push(Violation::DuplicateActivityId {
                activity: activity.id.clone(),
            });
        }
        if activity.events.is_empty() {
            violations.push(Violation::EmptyActivity {
                activity: activity.id.clone(),
            });
        }
        for (position, &id) in activity.events.iter().enumerate() {
            if id.index() >= vocab_len {
                violations.push(Violation::EventOutOfRange {
                    activity: activity.id.clone(),
                    position,
                    id,
                });
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc_vocab() -> Vocabulary {
        Vocabulary::from_names(["a", "b", "c"]).unwrap()
    }

    #[test]
    fn vocabulary_bijection() {
        let v = abc_vocab();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("b"), Some(EventId(1)));
        assert_eq!(v.name(EventId(2)), Some("c"));
        assert_eq!(v.id("z"), None);
        assert_eq!(v.name(EventId(9)), None);
    }

    #[test]
    fn vocabulary_rejects_duplicates_and_empty() {
        assert!(matches!(
            Vocabulary::from_names(["a", "a"]),
            Err(VocabularyError::DuplicateName(_))
        ));
        assert!(matches!(
            Vocabulary::from_names(["a", ""]),
            Err(VocabularyError::EmptyName(1))
        ));
    }

    #[test]
    fn induced_vocabulary_is_sorted_and_order_independent() {
        let v1 = Vocabulary::induce(["walk", "sit", "walk", "run"]).unwrap();
        let v2 = Vocabulary::induce(["run", "walk", "sit"]).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.names(), &["run", "sit", "walk"]);
    }

    #[test]
    fn total_length_sums_activity_lengths() {
        let v = abc_vocab();
        let d = Dataset::new(
            v,
            vec![
                ActivityInstance::new("x", vec![EventId(0), EventId(1), EventId(2)]),
                ActivityInstance::new("y", vec![EventId(0); 4]),
            ],
        );
        assert_eq!(d.total_length(), 7);
    }

    #[test]
    fn validate_well_formed_is_empty() {
        let d = Dataset::new(
            abc_vocab(),
            vec![ActivityInstance::new("x", vec![EventId(0)])],
        );
        assert!(validate(&d).is_empty());
    }

    #[test]
    fn validate_reports_empty_activity() {
        let d = Dataset::new(abc_vocab(), vec![ActivityInstance::new("x", vec![])]);
        let report = validate(&d);
        assert_eq!(report.len(), 1);
        assert_eq!(
            report[0],
            Violation::EmptyActivity {
                activity: "x".into()
            }
        );
    }

    #[test]
    fn validate_reports_duplicate_ids() {
        let d = Dataset::new(
            abc_vocab(),
            vec![
                ActivityInstance::new("A7", vec![EventId(0)]),
                ActivityInstance::new("A7", vec![EventId(1)]),
            ],
        );
        let report = validate(&d);
        assert_eq!(report.len(), 1);
        assert!(matches!(report[0], Violation::DuplicateActivityId { .. }));
    }

    #[test]
    fn validate_reports_out_of_range_events() {
        let d = Dataset::new(
            abc_vocab(),
            vec![ActivityInstance::new("x", vec![EventId(0), EventId(7)])],
        );
        let report = validate(&d);
        assert_eq!(report.len(), 1);
        assert!(matches!(report[0], Violation::EventOutOfRange { position: 1, .. }));
    }
}
