//! End-to-end orchestration: discovery, motif learning, classification,
//! and the JSON file formats shared with the command-line tool.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dominant::{peel_clusters, ClusterResult};
use crate::event::{ActivityInstance, Dataset, EventId, Vocabulary, VocabularyError};
use crate::ngram::{build_histogram, NGramError, NGramHistogram};
use crate::render::RenderError;
use crate::similarity::{build_matrix, SimilarityError, SimilarityMatrix};
use crate::synth::GroundTruth;
use crate::vmmc::{
    build_counts, classify, extract_motifs, objective, prune, Classification, ClassAssignment,
    ClassModel, ObjectiveReport, VmmcError,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("dataset has no activities")]
    EmptyDataset,
    #[error(transparent)]
    NGram(#[from] NGramError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Vmmc(#[from] VmmcError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
    #[error("models file has unsupported version {0}")]
    UnsupportedModelVersion(u32),
    #[error("event {event:?} in class {class:?} is not in the model vocabulary")]
    ModelVocabularyMismatch { class: String, event: String },
    #[error("clusters refer to unknown activity {0:?}")]
    UnknownActivity(String),
}

/// Result of the discovery stage: the similarity graph over activities
/// whose bags are non-empty, the peeled clusters (node indices into that
/// graph), and the activities skipped for having no n-gram at all.
#[derive(Debug)]
pub struct Discovery {
    pub matrix: SimilarityMatrix,
    pub result: ClusterResult,
    pub skipped: Vec<String>,
}

/// `clusters.json`: discovered classes with members, membership weights,
/// and cohesiveness, plus the leftover activities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassesFile {
    pub classes: Vec<ClassEntry>,
    pub leftover: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEntry {
    pub members: Vec<String>,
    pub weights: BTreeMap<String, f64>,
    pub cohesiveness: f64,
}

/// Histograms all activities and peels dominant sets off the similarity
/// graph. Activities too short to produce a single n-gram are routed
/// straight to the leftover with a warning.
pub fn run_discovery(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<Discovery, PipelineError> {
    if dataset.activities.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let mut ids = Vec::new();
    let mut histograms: Vec<NGramHistogram> = Vec::new();
    let mut skipped = Vec::new();
    for activity in &dataset.activities {
        let histogram = build_histogram(activity, config.n)?;
        if histogram.is_empty() {
            warn!(
                "activity {:?} is shorter than n = {}; routed to leftover",
                activity.id, config.n
            );
            skipped.push(activity.id.clone());
        } else {
            ids.push(activity.id.clone());
            histograms.push(histogram);
        }
    }
    let matrix = build_matrix(&ids, &histograms)?;
    let result = peel_clusters(&matrix, &config.solver_params());
    Ok(Discovery {
        matrix,
        result,
        skipped,
    })
}

impl Discovery {
    /// Maps node indices back to activity ids. Skipped activities join
    /// the leftover; the whole leftover is reported in dataset order.
    pub fn to_classes_file(&self, dataset: &Dataset) -> ClassesFile {
        let classes = self
            .result
            .classes
            .iter()
            .map(|class| ClassEntry {
                members: class
                    .members
                    .iter()
                    .map(|node| self.matrix.id(node).to_string())
                    .collect(),
                weights: class
                    .membership_weights
                    .iter()
                    .map(|(&node, &w)| (self.matrix.id(node).to_string(), w))
                    .collect(),
                cohesiveness: class.cohesiveness,
            })
            .collect();
        let mut leftover_ids: HashSet<&str> = self
            .result
            .leftover
            .iter()
            .map(|node| self.matrix.id(node))
            .collect();
        for id in &self.skipped {
            leftover_ids.insert(id);
        }
        let leftover = dataset
            .activities
            .iter()
            .filter(|a| leftover_ids.contains(a.id.as_str()))
            .map(|a| a.id.clone())
            .collect();
        ClassesFile { classes, leftover }
    }

    /// Node ordering for the clustered matrix image: classes in peel
    /// order, then the leftover in original input order.
    pub fn sorted_ordering(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.matrix.size());
        for class in &self.result.classes {
            order.extend(class.members.iter());
        }
        order.extend(self.result.leftover.iter());
        order
    }
}

/// Output of the motif stage: the per-class models, their motif sets, and
/// the assignment they were trained on.
#[derive(Debug)]
pub struct MotifOutcome {
    pub assignment: ClassAssignment,
    pub models: Vec<ClassModel>,
    pub objective: Vec<ObjectiveReport>,
}

/// Builds the class assignment from discovered clusters (class ids are
/// `class-1`, `class-2`, ... in peel order; leftover activities are
/// excluded), learns one pruned model per class, and evaluates the
/// objective diagnostics.
pub fn run_motifs(
    dataset: &Dataset,
    classes: &ClassesFile,
    config: &PipelineConfig,
) -> Result<MotifOutcome, PipelineError> {
    let known: HashSet<&str> = dataset.activities.iter().map(|a| a.id.as_str()).collect();
    let mut groups = Vec::with_capacity(classes.classes.len());
    for (index, entry) in classes.classes.iter().enumerate() {
        for member in &entry.members {
            if !known.contains(member.as_str()) {
                return Err(PipelineError::UnknownActivity(member.clone()));
            }
        }
        groups.push((format!("class-{}", index + 1), entry.members.clone()));
    }
    let assignment = ClassAssignment::from_members(groups)?;

    let by_id: HashMap<&str, &ActivityInstance> = dataset
        .activities
        .iter()
        .map(|a| (a.id.as_str(), a))
        .collect();
    for (slot, class_id) in assignment.class_ids().iter().enumerate() {
        let events: usize = assignment
            .members_of(slot)
            .iter()
            .map(|id| by_id[id.as_str()].len())
            .sum();
        if events < 2 {
            warn!("class {class_id} has fewer than 2 events; its model will be empty");
        }
    }

    let trie = build_counts(dataset, &assignment, config.max_depth)?;
    let ell = dataset.total_length() as u64;
    let models: Vec<ClassModel> = (0..assignment.len())
        .map(|slot| prune(&trie, slot, config.k_param, ell))
        .collect();
    let objective = objective(&models, &assignment, dataset, config.smoothing)?;
    Ok(MotifOutcome {
        assignment,
        models,
        objective,
    })
}

/// `motifs.json`: per class, motifs in rank order with event names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotifsFile {
    pub classes: Vec<MotifSetEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotifSetEntry {
    pub class_id: String,
    pub motifs: Vec<MotifEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotifEntry {
    /// Events oldest first, the order they occur in an activity.
    pub events: Vec<String>,
    pub depth: usize,
    pub psi_bits: f64,
    pub next_event_distribution: BTreeMap<String, f64>,
}

/// Extracts and name-maps the ranked motifs of every model.
pub fn motifs_file(models: &[ClassModel], vocabulary: &Vocabulary) -> MotifsFile {
    let name = |id: EventId| vocabulary.name(id).expect("model ids in range").to_string();
    let classes = models
        .iter()
        .map(|model| {
            let set = extract_motifs(model);
            MotifSetEntry {
                class_id: set.class_id,
                motifs: set
                    .motifs
                    .into_iter()
                    .map(|motif| MotifEntry {
                        events: motif.events.iter().map(|&e| name(e)).collect(),
                        depth: motif.depth,
                        psi_bits: motif.psi_bits,
                        next_event_distribution: motif
                            .next_event_distribution
                            .iter()
                            .map(|(&y, &p)| (name(y), p))
                            .collect(),
                    })
                    .collect(),
            }
        })
        .collect();
    MotifsFile { classes }
}

/// `models.json`: versioned serialized form of the pruned class models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelsFile {
    pub version: u32,
    pub vocabulary: Vec<String>,
    pub max_depth: usize,
    pub classes: Vec<ModelEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub k_param: f64,
    pub ell: u64,
    pub nodes: Vec<ModelNodeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelNodeEntry {
    /// Context events oldest first; empty for the root.
    pub context: Vec<String>,
    pub occurrences: u64,
    pub next: BTreeMap<String, u64>,
    pub psi: f64,
    pub structural: bool,
}

pub const MODELS_FILE_VERSION: u32 = 1;

pub fn models_to_file(models: &[ClassModel], vocabulary: &Vocabulary) -> ModelsFile {
    let name = |id: EventId| vocabulary.name(id).expect("model ids in range").to_string();
    let max_depth = models.iter().map(ClassModel::max_depth).max().unwrap_or(1);
    let classes = models
        .iter()
        .map(|model| {
            let mut nodes = Vec::with_capacity(model.node_count());
            let (root_occurrences, root_next) = model.root_slice();
            nodes.push(ModelNodeEntry {
                context: Vec::new(),
                occurrences: root_occurrences,
                next: root_next.iter().map(|(&y, &c)| (name(y), c)).collect(),
                psi: 0.0,
                structural: false,
            });
            for (context, node) in model.retained() {
                nodes.push(ModelNodeEntry {
                    context: context.chronological().iter().map(|&e| name(e)).collect(),
                    occurrences: node.occurrences,
                    next: node.next.iter().map(|(&y, &c)| (name(y), c)).collect(),
                    psi: node.psi,
                    structural: node.structural,
                });
            }
            ModelEntry {
                id: model.class_id().to_string(),
                k_param: model.k_param(),
                ell: model.ell(),
                nodes,
            }
        })
        .collect();
    ModelsFile {
        version: MODELS_FILE_VERSION,
        vocabulary: vocabulary.names().to_vec(),
        max_depth,
        classes,
    }
}

pub fn models_from_file(file: &ModelsFile) -> Result<(Vocabulary, Vec<ClassModel>), PipelineError> {
    if file.version != MODELS_FILE_VERSION {
        return Err(PipelineError::UnsupportedModelVersion(file.version));
    }
    let vocabulary = Vocabulary::from_names(file.vocabulary.clone())?;
    let resolve = |class: &str, name: &str| {
        vocabulary
            .id(name)
            .ok_or_else(|| PipelineError::ModelVocabularyMismatch {
                class: class.to_string(),
                event: name.to_string(),
            })
    };
    let mut models = Vec::with_capacity(file.classes.len());
    for entry in &file.classes {
        let mut parts = Vec::with_capacity(entry.nodes.len());
        for node in &entry.nodes {
            let context = node
                .context
                .iter()
                .map(|name| resolve(&entry.id, name))
                .collect::<Result<Vec<_>, _>>()?;
            let next = node
                .next
                .iter()
                .map(|(name, &count)| resolve(&entry.id, name).map(|id| (id, count)))
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            parts.push((context, node.occurrences, next, node.psi, node.structural));
        }
        models.push(ClassModel::from_parts(
            entry.id.clone(),
            entry.k_param,
            entry.ell,
            vocabulary.len(),
            file.max_depth,
            parts,
        )?);
    }
    Ok((vocabulary, models))
}

/// `classification.json`: per-activity winning class and posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationFile {
    pub results: Vec<ClassificationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationEntry {
    pub activity: String,
    /// Absent when the activity is impossible under every model.
    pub class: Option<String>,
    pub posterior: BTreeMap<String, f64>,
}

pub fn classify_dataset(
    dataset: &Dataset,
    models: &[ClassModel],
    smoothing: f64,
) -> ClassificationFile {
    let results = dataset
        .activities
        .iter()
        .map(|activity| match classify(activity, models, smoothing) {
            Classification::Assigned {
                class_id,
                posterior,
            } => ClassificationEntry {
                activity: activity.id.clone(),
                class: Some(class_id),
                posterior,
            },
            Classification::Unclassifiable => ClassificationEntry {
                activity: activity.id.clone(),
                class: None,
                posterior: BTreeMap::new(),
            },
        })
        .collect();
    ClassificationFile { results }
}

/// Comparison against planted ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthComparison {
    /// Fraction of clustered activities whose planted label matches the
    /// majority label of their discovered class.
    pub purity: f64,
    pub clustered: usize,
    pub leftover: usize,
    /// Whether the leftover is exactly the set of planted noise activities.
    pub leftover_matches_noise: bool,
    /// Fraction of planted motifs matched by a top-5 motif of their class.
    pub motif_recall: f64,
    pub recovered_motifs: usize,
    pub planted_motifs: usize,
}

/// Majority planted label per discovered class; `None` wins only if noise
/// activities dominate the class.
pub fn class_majority_labels(classes: &ClassesFile, truth: &GroundTruth) -> Vec<Option<usize>> {
    classes
        .classes
        .iter()
        .map(|entry| {
            let mut votes: BTreeMap<Option<usize>, usize> = BTreeMap::new();
            for member in &entry.members {
                let label = truth.class_of.get(member).copied().flatten();
                *votes.entry(label).or_insert(0) += 1;
            }
            votes
                .into_iter()
                .max_by_key(|&(_, count)| count)
                .map(|(label, _)| label)
                .unwrap_or(None)
        })
        .collect()
}

/// Purity over clustered activities: an activity counts as pure when its
/// planted label equals its discovered class's majority label.
pub fn clustering_purity(classes: &ClassesFile, truth: &GroundTruth) -> f64 {
    let majorities = class_majority_labels(classes, truth);
    let mut clustered = 0usize;
    let mut pure = 0usize;
    for (entry, majority) in classes.classes.iter().zip(&majorities) {
        for member in &entry.members {
            clustered += 1;
            let label = truth.class_of.get(member).copied().flatten();
            if label == *majority {
                pure += 1;
            }
        }
    }
    if clustered == 0 {
        0.0
    } else {
        pure as f64 / clustered as f64
    }
}

fn is_contiguous_subsequence<T: PartialEq>(needle: &[T], haystack: &[T]) -> bool {
    if needle.is_empty() {
        return true;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// A planted motif counts as recovered when one of the top-5 ranked motifs
/// of its class matches it as a contiguous subsequence (in either
/// containment direction).
pub fn motif_matches(planted: &[String], discovered: &[String]) -> bool {
    is_contiguous_subsequence(discovered, planted) || is_contiguous_subsequence(planted, discovered)
}

/// Counts planted motifs recovered in the top-5 of their class's motif
/// set. A planted class is represented by the discovered class holding
/// most of its members (among those whose majority label is that class).
pub fn motif_recovery(
    classes: &ClassesFile,
    motifs: &MotifsFile,
    truth: &GroundTruth,
) -> (usize, usize) {
    let majorities = class_majority_labels(classes, truth);
    let planted_total: usize = truth.motifs.iter().map(Vec::len).sum();
    let mut recovered = 0usize;
    for (planted_class, class_motifs) in truth.motifs.iter().enumerate() {
        // The discovered class that best represents this planted class.
        let representative = classes
            .classes
            .iter()
            .enumerate()
            .filter(|(idx, _)| majorities[*idx] == Some(planted_class))
            .max_by_key(|(_, entry)| {
                entry
                    .members
                    .iter()
                    .filter(|m| truth.class_of.get(*m).copied().flatten() == Some(planted_class))
                    .count()
            })
            .map(|(idx, _)| idx);
        let Some(class_index) = representative else {
            continue;
        };
        let top5 = &motifs.classes[class_index].motifs;
        for planted in class_motifs {
            if top5
                .iter()
                .take(5)
                .any(|m| motif_matches(planted, &m.events))
            {
                recovered += 1;
            }
        }
    }
    (recovered, planted_total)
}

pub fn compare_with_truth(
    classes: &ClassesFile,
    motifs: &MotifsFile,
    truth: &GroundTruth,
) -> GroundTruthComparison {
    let clustered: usize = classes.classes.iter().map(|c| c.members.len()).sum();
    let leftover = classes.leftover.len();
    let noise_ids: HashSet<&String> = truth
        .class_of
        .iter()
        .filter(|(_, label)| label.is_none())
        .map(|(id, _)| id)
        .collect();
    let leftover_ids: HashSet<&String> = classes.leftover.iter().collect();
    let leftover_matches_noise = leftover_ids == noise_ids;
    let (recovered_motifs, planted_motifs) = motif_recovery(classes, motifs, truth);
    GroundTruthComparison {
        purity: clustering_purity(classes, truth),
        clustered,
        leftover,
        leftover_matches_noise,
        motif_recall: if planted_motifs == 0 {
            0.0
        } else {
            recovered_motifs as f64 / planted_motifs as f64
        },
        recovered_motifs,
        planted_motifs,
    }
}

/// `report.json`: the self-contained run report. Re-running the pipeline
/// with the embedded config (and spec, for synthetic data) reproduces it.
#[derive(Debug, Clone, Serialize)]
pub struct DiscoveryReport {
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub clusters: ClassesFile,
    pub motifs: MotifsFile,
    pub objective: Vec<ObjectiveReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_spec: Option<crate::synth::SyntheticSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthComparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub activities: usize,
    pub vocabulary_size: usize,
    pub total_length: usize,
    /// Activities shorter than n, routed straight to leftover.
    pub skipped: Vec<String>,
}

/// Runs discovery + motifs and assembles the report.
pub fn run_report(
    dataset: &Dataset,
    config: &PipelineConfig,
    truth: Option<&GroundTruth>,
) -> Result<(DiscoveryReport, Discovery, MotifOutcome), PipelineError> {
    let discovery = run_discovery(dataset, config)?;
    let classes = discovery.to_classes_file(dataset);
    let outcome = run_motifs(dataset, &classes, config)?;
    let motifs = motifs_file(&outcome.models, &dataset.vocabulary);
    let ground_truth = truth.map(|t| compare_with_truth(&classes, &motifs, t));
    let report = DiscoveryReport {
        config: config.clone(),
        dataset: DatasetSummary {
            activities: dataset.activities.len(),
            vocabulary_size: dataset.vocabulary.len(),
            total_length: dataset.total_length(),
            skipped: discovery.skipped.clone(),
        },
        clusters: classes,
        motifs,
        objective: outcome.objective.clone(),
        synthetic_spec: None,
        ground_truth,
    };
    Ok((report, discovery, outcome))
}
