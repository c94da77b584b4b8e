//! Per-class variable-memory Markov chain models and event motifs.
//!
//! A context is the variable-length history used to predict the next
//! event. All contexts up to a depth bound are counted into one trie with
//! a count slice per class; the trie's parent edge removes the oldest
//! event of a context, so a node's parent is exactly its suffix.
//!
//! Each context earns a per-class bit saving: how many bits encoding the
//! events that follow it would save over using its suffix as the context
//! instead. The bit gain of a context for its owning class is that saving
//! minus the savings the same context provides to every other class, so
//! patterns shared across classes earn little. Contexts whose gain clears
//! the complexity threshold `k * log2(corpus length)` survive pruning and
//! become the class's motifs, ranked by gain.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::event::{ActivityInstance, Dataset, EventId};

#[derive(Debug, thiserror::Error)]
pub enum VmmcError {
    #[error("max_depth must be at least 1")]
    InvalidMaxDepth,
    #[error("class {0:?} has no activities")]
    EmptyClass(String),
    #[error("activity {activity:?} is assigned to both {first:?} and {second:?}")]
    DuplicateAssignment {
        activity: String,
        first: String,
        second: String,
    },
    #[error("assigned activity {0:?} is not in the dataset")]
    UnknownActivity(String),
    #[error("model node context {0:?} has no parent in the node set")]
    MissingSuffix(String),
}

/// Maps each clustered activity to exactly one class. Leftover activities
/// are simply absent.
#[derive(Debug, Clone)]
pub struct ClassAssignment {
    classes: Vec<String>,
    members: Vec<Vec<String>>,
    by_activity: HashMap<String, usize>,
}

impl ClassAssignment {
    pub fn from_members(groups: Vec<(String, Vec<String>)>) -> Result<Self, VmmcError> {
        let mut classes: Vec<String> = Vec::with_capacity(groups.len());
        let mut members = Vec::with_capacity(groups.len());
        let mut by_activity: HashMap<String, usize> = HashMap::new();
        for (class_id, activity_ids) in groups {
            let slot = classes.len();
            for activity in &activity_ids {
                if let Some(&previous) = by_activity.get(activity) {
                    return Err(VmmcError::DuplicateAssignment {
                        activity: activity.clone(),
                        first: classes[previous].clone(),
                        second: class_id,
                    });
                }
                by_activity.insert(activity.clone(), slot);
            }
            classes.push(class_id);
            members.push(activity_ids);
        }
        Ok(ClassAssignment {
            classes,
            members,
            by_activity,
        })
    }

    pub fn class_ids(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn members_of(&self, slot: usize) -> &[String] {
        &self.members[slot]
    }

    pub fn class_of(&self, activity: &str) -> Option<&str> {
        self.by_activity
            .get(activity)
            .map(|&slot| self.classes[slot].as_str())
    }
}

/// A context stored most-recent-first: element 0 is the event immediately
/// before the prediction point. The empty context has depth 0.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context(Vec<EventId>);

impl Context {
    pub fn root() -> Self {
        Context(Vec::new())
    }

    /// From most-recent-first event order (the internal convention).
    pub fn from_recent_first(events: Vec<EventId>) -> Self {
        Context(events)
    }

    /// From chronological (oldest first) event order, the human-facing form.
    pub fn from_chronological(events: &[EventId]) -> Self {
        Context(events.iter().rev().copied().collect())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn recent_first(&self) -> &[EventId] {
        &self.0
    }

    pub fn chronological(&self) -> Vec<EventId> {
        self.0.iter().rev().copied().collect()
    }

    /// The context with its oldest event removed; `None` for the root.
    pub fn suffix(&self) -> Option<Context> {
        if self.0.is_empty() {
            None
        } else {
            Some(Context(self.0[..self.0.len() - 1].to_vec()))
        }
    }
}

/// Next-event counts of one context restricted to one class's corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassSlice {
    /// Occurrences of the context that are followed by another event.
    pub occurrences: u64,
    pub next: BTreeMap<EventId, u64>,
}

#[derive(Debug, Clone)]
struct TrieNode {
    event: Option<EventId>,
    depth: usize,
    parent: Option<usize>,
    children: BTreeMap<EventId, usize>,
    slices: Vec<ClassSlice>,
}

/// Shared count trie over all classes: every context of depth up to
/// `max_depth` occurring in any class corpus, with exact window counts
/// that never span activity boundaries.
#[derive(Debug, Clone)]
pub struct ContextTrie {
    classes: Vec<String>,
    vocab_size: usize,
    max_depth: usize,
    nodes: Vec<TrieNode>,
}

const ROOT: usize = 0;

impl ContextTrie {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn node_index(&self, context: &Context) -> Option<usize> {
        let mut node = ROOT;
        for &event in context.recent_first() {
            node = *self.nodes[node].children.get(&event)?;
        }
        Some(node)
    }

    /// The count slice of a context for one class; empty if never seen.
    pub fn slice(&self, context: &Context, class: usize) -> ClassSlice {
        self.node_index(context)
            .map(|idx| self.nodes[idx].slices[class].clone())
            .unwrap_or_default()
    }

    /// Every stored context of depth >= 1, in depth-first order.
    pub fn contexts(&self) -> Vec<Context> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<EventId>)> = vec![(ROOT, Vec::new())];
        while let Some((idx, path)) = stack.pop() {
            if idx != ROOT {
                out.push(Context::from_recent_first(path.clone()));
            }
            for (&event, &child) in self.nodes[idx].children.iter().rev() {
                let mut next = path.clone();
                next.push(event);
                stack.push((child, next));
            }
        }
        out
    }

    fn delta_node(&self, idx: usize, class: usize) -> f64 {
        let node = &self.nodes[idx];
        let slice = &node.slices[class];
        if slice.occurrences == 0 {
            return 0.0;
        }
        let parent = node
            .parent
            .expect("delta is only defined for contexts of depth >= 1");
        let parent_slice = &self.nodes[parent].slices[class];
        let mut bits = 0.0;
        for (y, &count) in &slice.next {
            let parent_count = parent_slice.next[y];
            // Counts nest, so parent_count >= count > 0. Cross-multiplied
            // integer ratios keep identical distributions at exactly zero.
            let num = count as u128 * parent_slice.occurrences as u128;
            let den = slice.occurrences as u128 * parent_count as u128;
            bits += count as f64 * (num as f64 / den as f64).log2();
        }
        bits
    }

    /// Bits saved by predicting with `context` instead of its suffix, on
    /// the given class's corpus. Zero when the context never occurs there.
    pub fn delta(&self, context: &Context, class: usize) -> f64 {
        match self.node_index(context) {
            Some(idx) if context.depth() >= 1 => self.delta_node(idx, class),
            _ => 0.0,
        }
    }

    /// Bit gain: the owning class's saving minus every competitor's.
    pub fn psi(&self, context: &Context, owner: usize) -> f64 {
        match self.node_index(context) {
            Some(idx) if context.depth() >= 1 => self.psi_node(idx, owner),
            _ => 0.0,
        }
    }

    fn psi_node(&self, idx: usize, owner: usize) -> f64 {
        let own = self.delta_node(idx, owner);
        let competitors: f64 = (0..self.classes.len())
            .filter(|&c| c != owner)
            .map(|c| self.delta_node(idx, c))
            .sum();
        own - competitors
    }

    fn record(&mut self, idx: usize, class: usize, y: EventId) {
        let slice = &mut self.nodes[idx].slices[class];
        slice.occurrences += 1;
        *slice.next.entry(y).or_insert(0) += 1;
    }

    fn child_or_insert(&mut self, idx: usize, event: EventId, class_count: usize) -> usize {
        if let Some(&child) = self.nodes[idx].children.get(&event) {
            return child;
        }
        let child = self.nodes.len();
        let depth = self.nodes[idx].depth + 1;
        self.nodes.push(TrieNode {
            event: Some(event),
            depth,
            parent: Some(idx),
            children: BTreeMap::new(),
            slices: vec![ClassSlice::default(); class_count],
        });
        self.nodes[idx].children.insert(event, child);
        child
    }
}

/// Counts every context of depth <= `max_depth` in every class corpus.
/// Windows are confined to single activities; the root context counts
/// total event occurrences per class.
pub fn build_counts(
    dataset: &Dataset,
    assignment: &ClassAssignment,
    max_depth: usize,
) -> Result<ContextTrie, VmmcError> {
    if max_depth < 1 {
        return Err(VmmcError::InvalidMaxDepth);
    }
    for (slot, class_id) in assignment.classes.iter().enumerate() {
        if assignment.members[slot].is_empty() {
            return Err(VmmcError::EmptyClass(class_id.clone()));
        }
    }
    let by_id: HashMap<&str, &ActivityInstance> = dataset
        .activities
        .iter()
        .map(|a| (a.id.as_str(), a))
        .collect();

    let class_count = assignment.classes.len();
    let mut trie = ContextTrie {
        classes: assignment.classes.clone(),
        vocab_size: dataset.vocabulary.len(),
        max_depth,
        nodes: vec![TrieNode {
            event: None,
            depth: 0,
            parent: None,
            children: BTreeMap::new(),
            slices: vec![ClassSlice::default(); class_count],
        }],
    };

    for (slot, member_ids) in assignment.members.iter().enumerate() {
        for id in member_ids {
            let activity = by_id
                .get(id.as_str())
                .ok_or_else(|| VmmcError::UnknownActivity(id.clone()))?;
            let events = &activity.events;
            for target in 0..events.len() {
                let y = events[target];
                let mut node = ROOT;
                trie.record(node, slot, y);
                for back in 1..=target.min(max_depth) {
                    node = trie.child_or_insert(node, events[target - back], class_count);
                    trie.record(node, slot, y);
                }
            }
        }
    }
    Ok(trie)
}

/// One retained context of a pruned class model. Edges to children carry
/// the event that extends the context one step deeper into the past.
#[derive(Debug, Clone)]
pub struct ModelNode {
    children: BTreeMap<EventId, usize>,
    /// Owning-class occurrence count of this context.
    pub occurrences: u64,
    /// Owning-class next-event counts.
    pub next: BTreeMap<EventId, u64>,
    pub psi: f64,
    /// Retained only to keep the tree suffix-closed, not by its own gain.
    pub structural: bool,
}

/// A pruned per-class model: the suffix-closed tree of retained contexts
/// with the class's own counts, ready for likelihood scoring.
#[derive(Debug, Clone)]
pub struct ClassModel {
    class_id: String,
    k_param: f64,
    ell: u64,
    vocab_size: usize,
    max_depth: usize,
    nodes: Vec<ModelNode>,
}

/// Distinguished value for "this activity is impossible under the model"
/// (zero-probability event with no smoothing).
pub const IMPOSSIBLE: f64 = f64::NEG_INFINITY;

impl ClassModel {
    pub fn class_id(&self) -> &str {
        &self.class_id
    }

    pub fn set_class_id(&mut self, id: impl Into<String>) {
        self.class_id = id.into();
    }

    pub fn k_param(&self) -> f64 {
        self.k_param
    }

    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Number of retained contexts including the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Root occurrence count and next-event counts (the class marginal).
    pub fn root_slice(&self) -> (u64, &BTreeMap<EventId, u64>) {
        (self.nodes[ROOT].occurrences, &self.nodes[ROOT].next)
    }

    /// The retained contexts of depth >= 1 with their node data, in
    /// depth-first order.
    pub fn retained(&self) -> Vec<(Context, &ModelNode)> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<EventId>)> = vec![(ROOT, Vec::new())];
        while let Some((idx, path)) = stack.pop() {
            if idx != ROOT {
                out.push((Context::from_recent_first(path.clone()), &self.nodes[idx]));
            }
            for (&event, &child) in self.nodes[idx].children.iter().rev() {
                let mut next = path.clone();
                next.push(event);
                stack.push((child, next));
            }
        }
        out
    }

    pub fn contains(&self, context: &Context) -> bool {
        self.lookup(context).is_some()
    }

    fn lookup(&self, context: &Context) -> Option<usize> {
        let mut node = ROOT;
        for &event in context.recent_first() {
            node = *self.nodes[node].children.get(&event)?;
        }
        Some(node)
    }

    /// Deepest retained context that is a suffix of the history before
    /// position `target`.
    fn matching_node(&self, events: &[EventId], target: usize) -> usize {
        let mut node = ROOT;
        for back in 1..=target.min(self.max_depth) {
            match self.nodes[node].children.get(&events[target - back]) {
                Some(&child) => node = child,
                None => break,
            }
        }
        node
    }

    /// Log2 likelihood of the activity under this model with add-epsilon
    /// smoothing. Each event is predicted from the deepest retained
    /// context matching its history. Returns [`IMPOSSIBLE`] instead of
    /// failing when an unsmoothed model meets an unseen transition.
    pub fn log_likelihood(&self, activity: &ActivityInstance, smoothing: f64) -> f64 {
        let vocab = self.vocab_size as f64;
        let mut total = 0.0;
        for target in 0..activity.events.len() {
            let node = &self.nodes[self.matching_node(&activity.events, target)];
            let seen = node
                .next
                .get(&activity.events[target])
                .copied()
                .unwrap_or(0);
            let numerator = seen as f64 + smoothing;
            if numerator == 0.0 {
                return IMPOSSIBLE;
            }
            let denominator = node.occurrences as f64 + smoothing * vocab;
            total += (numerator / denominator).log2();
        }
        total
    }

    /// Rebuilds a model from serialized parts; contexts are given in
    /// chronological event order and must be suffix-closed.
    pub fn from_parts(
        class_id: String,
        k_param: f64,
        ell: u64,
        vocab_size: usize,
        max_depth: usize,
        parts: Vec<(Vec<EventId>, u64, BTreeMap<EventId, u64>, f64, bool)>,
    ) -> Result<ClassModel, VmmcError> {
        let mut model = ClassModel {
            class_id,
            k_param,
            ell,
            vocab_size,
            max_depth,
            nodes: vec![ModelNode {
                children: BTreeMap::new(),
                occurrences: 0,
                next: BTreeMap::new(),
                psi: 0.0,
                structural: false,
            }],
        };
        let mut sorted = parts;
        sorted.sort_by_key(|(events, ..)| events.len());
        for (chronological, occurrences, next, psi, structural) in sorted {
            let context = Context::from_chronological(&chronological);
            if context.depth() == 0 {
                model.nodes[ROOT].occurrences = occurrences;
                model.nodes[ROOT].next = next;
                continue;
            }
            let suffix = context.suffix().expect("depth >= 1");
            let parent = model
                .lookup(&suffix)
                .ok_or_else(|| VmmcError::MissingSuffix(format!("{chronological:?}")))?;
            let event = *context.recent_first().last().expect("depth >= 1");
            let idx = model.nodes.len();
            model.nodes.push(ModelNode {
                children: BTreeMap::new(),
                occurrences,
                next,
                psi,
                structural,
            });
            model.nodes[parent].children.insert(event, idx);
        }
        Ok(model)
    }
}

/// Prunes the trie down to one class's model: a context survives iff its
/// bit gain exceeds `k_param * log2(ell)`; ancestors of survivors are
/// force-retained as structural so the tree stays suffix-closed.
pub fn prune(trie: &ContextTrie, owner: usize, k_param: f64, ell: u64) -> ClassModel {
    let threshold = k_param * (ell as f64).log2();
    let n = trie.nodes.len();
    let mut by_gain = vec![false; n];
    for (idx, node) in trie.nodes.iter().enumerate() {
        if node.depth >= 1 && trie.psi_node(idx, owner) > threshold {
            by_gain[idx] = true;
        }
    }
    // Suffix closure: walk ancestors of every survivor.
    let mut keep = by_gain.clone();
    keep[ROOT] = true;
    for idx in 0..n {
        if by_gain[idx] {
            let mut cursor = trie.nodes[idx].parent;
            while let Some(parent) = cursor {
                keep[parent] = true;
                cursor = trie.nodes[parent].parent;
            }
        }
    }

    let mut mapping = vec![usize::MAX; n];
    let mut nodes: Vec<ModelNode> = Vec::new();
    // Trie nodes are created parents-first, so a single pass suffices.
    for idx in 0..n {
        if !keep[idx] {
            continue;
        }
        let node = &trie.nodes[idx];
        let slice = &node.slices[owner];
        mapping[idx] = nodes.len();
        nodes.push(ModelNode {
            children: BTreeMap::new(),
            occurrences: slice.occurrences,
            next: slice.next.clone(),
            psi: if node.depth >= 1 {
                trie.psi_node(idx, owner)
            } else {
                0.0
            },
            structural: node.depth >= 1 && !by_gain[idx],
        });
        if let Some(parent) = node.parent {
            let event = node.event.expect("non-root nodes have an edge event");
            let mapped_parent = mapping[parent];
            let mapped = mapping[idx];
            nodes[mapped_parent].children.insert(event, mapped);
        }
    }

    ClassModel {
        class_id: trie.classes[owner].clone(),
        k_param,
        ell,
        vocab_size: trie.vocab_size,
        max_depth: trie.max_depth,
        nodes,
    }
}

/// One ranked motif: a retained context reported in chronological order.
#[derive(Debug, Clone, Serialize)]
pub struct Motif {
    /// Events oldest first, the order they occur in an activity.
    pub events: Vec<EventId>,
    pub depth: usize,
    pub psi_bits: f64,
    /// Maximum-likelihood next-event distribution of the context.
    pub next_event_distribution: BTreeMap<EventId, f64>,
}

/// The motifs of one class, sorted by descending bit gain with ties broken
/// by depth and then lexicographic event order.
#[derive(Debug, Clone, Serialize)]
pub struct MotifSet {
    pub class_id: String,
    pub motifs: Vec<Motif>,
}

/// Lists the non-structural retained contexts of depth >= 1 as motifs.
pub fn extract_motifs(model: &ClassModel) -> MotifSet {
    let mut motifs: Vec<Motif> = model
        .retained()
        .into_iter()
        .filter(|(_, node)| !node.structural)
        .map(|(context, node)| {
            let next_event_distribution = node
                .next
                .iter()
                .map(|(&y, &count)| (y, count as f64 / node.occurrences as f64))
                .collect();
            Motif {
                events: context.chronological(),
                depth: context.depth(),
                psi_bits: node.psi,
                next_event_distribution,
            }
        })
        .collect();
    motifs.sort_by(|a, b| {
        b.psi_bits
            .total_cmp(&a.psi_bits)
            .then(a.depth.cmp(&b.depth))
            .then(a.events.cmp(&b.events))
    });
    MotifSet {
        class_id: model.class_id().to_string(),
        motifs,
    }
}

/// Classification outcome: the winning class and the posterior over all
/// classes, or a distinguished unclassifiable result when every model
/// assigns zero probability.
#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    Assigned {
        class_id: String,
        posterior: BTreeMap<String, f64>,
    },
    Unclassifiable,
}

/// Log2 posterior over classes for one activity, computed stably in the
/// log domain; `None` when every likelihood is impossible.
pub fn log2_posteriors(
    activity: &ActivityInstance,
    models: &[ClassModel],
    smoothing: f64,
) -> Option<BTreeMap<String, f64>> {
    assert!(!models.is_empty(), "at least one model is required");
    let lls: BTreeMap<&str, f64> = models
        .iter()
        .map(|m| (m.class_id(), m.log_likelihood(activity, smoothing)))
        .collect();
    let max = lls.values().copied().fold(IMPOSSIBLE, f64::max);
    if max == IMPOSSIBLE {
        return None;
    }
    let log2_total = lls
        .values()
        .map(|&ll| (ll - max).exp2())
        .sum::<f64>()
        .log2();
    Some(
        lls.into_iter()
            .map(|(id, ll)| (id.to_string(), ll - max - log2_total))
            .collect(),
    )
}

/// Picks the maximum-posterior class, breaking ties by class-id order.
pub fn classify(
    activity: &ActivityInstance,
    models: &[ClassModel],
    smoothing: f64,
) -> Classification {
    let Some(log_posteriors) = log2_posteriors(activity, models, smoothing) else {
        return Classification::Unclassifiable;
    };
    let posterior: BTreeMap<String, f64> = log_posteriors
        .iter()
        .map(|(id, &lp)| (id.clone(), lp.exp2()))
        .collect();
    let mut best: Option<(&String, f64)> = None;
    for (id, &p) in &posterior {
        match best {
            Some((_, best_p)) if p <= best_p => {}
            _ => best = Some((id, p)),
        }
    }
    Classification::Assigned {
        class_id: best.expect("posterior is non-empty").0.clone(),
        posterior,
    }
}

/// Diagnostic objective for one class: how well its motifs characterize
/// its own activities (gamma) versus how well competitors characterize
/// theirs (the lambda sum).
#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveReport {
    pub class_id: String,
    /// log2 of the product of own-class posteriors.
    pub log2_gamma: f64,
    /// Per competitor, log2 of the product of its own-class posteriors.
    pub competitor_log2: BTreeMap<String, f64>,
    /// gamma - lambda in linear domain, absent when magnitudes underflow.
    pub q: Option<f64>,
    pub underflowed: bool,
}

/// log2 magnitude below which linear-domain evaluation is refused.
const UNDERFLOW_LOG2: f64 = -1000.0;

/// Computes the per-class objective diagnostics. The optimization itself
/// happens in [`prune`]; this reports how separable the result is.
pub fn objective(
    models: &[ClassModel],
    assignment: &ClassAssignment,
    dataset: &Dataset,
    smoothing: f64,
) -> Result<Vec<ObjectiveReport>, VmmcError> {
    let by_id: HashMap<&str, &ActivityInstance> = dataset
        .activities
        .iter()
        .map(|a| (a.id.as_str(), a))
        .collect();

    // log2 gamma per class: sum of log2 p(c|a) over the class's members.
    let mut log2_gamma: BTreeMap<String, f64> = BTreeMap::new();
    for (slot, class_id) in assignment.class_ids().iter().enumerate() {
        let mut total = 0.0;
        for id in assignment.members_of(slot) {
            let activity = by_id
                .get(id.as_str())
                .ok_or_else(|| VmmcError::UnknownActivity(id.clone()))?;
            match log2_posteriors(activity, models, smoothing) {
                Some(posteriors) => total += posteriors[class_id],
                None => total = IMPOSSIBLE,
            }
        }
        log2_gamma.insert(class_id.clone(), total);
    }

    let reports = assignment
        .class_ids()
        .iter()
        .map(|class_id| {
            let own = log2_gamma[class_id];
            let competitor_log2: BTreeMap<String, f64> = log2_gamma
                .iter()
                .filter(|(id, _)| *id != class_id)
                .map(|(id, &lg)| (id.clone(), lg))
                .collect();
            let underflowed =
                own < UNDERFLOW_LOG2 || competitor_log2.values().any(|&lg| lg < UNDERFLOW_LOG2);
            let q = if underflowed {
                None
            } else {
                let gamma = own.exp2();
                let lambda: f64 = competitor_log2.values().map(|&lg| lg.exp2()).sum();
                Some(gamma - lambda)
            };
            ObjectiveReport {
                class_id: class_id.clone(),
                log2_gamma: own,
                competitor_log2,
                q,
                underflowed,
            }
        })
        .collect();
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Vocabulary;
    use proptest::prelude::*;

    fn vocab_ab() -> Vocabulary {
        Vocabulary::from_names(["a", "b"]).unwrap()
    }

    fn ids(events: &[u32]) -> Vec<EventId> {
        events.iter().map(|&e| EventId(e)).collect()
    }

    fn ctx_chrono(events: &[u32]) -> Context {
        Context::from_chronological(&ids(events))
    }

    /// One activity "a b a b a b" in class c.
    fn alternating_dataset() -> (Dataset, ClassAssignment) {
        let dataset = Dataset::new(
            vocab_ab(),
            vec![ActivityInstance::new("x", ids(&[0, 1, 0, 1, 0, 1]))],
        );
        let assignment =
            ClassAssignment::from_members(vec![("c".into(), vec!["x".into()])]).unwrap();
        (dataset, assignment)
    }

    /// Class c = "a b a b a b", class c2 = "b a b a b a".
    fn two_class_dataset() -> (Dataset, ClassAssignment) {
        let dataset = Dataset::new(
            vocab_ab(),
            vec![
                ActivityInstance::new("x", ids(&[0, 1, 0, 1, 0, 1])),
                ActivityInstance::new("y", ids(&[1, 0, 1, 0, 1, 0])),
            ],
        );
        let assignment = ClassAssignment::from_members(vec![
            ("c".into(), vec!["x".into()]),
            ("c2".into(), vec!["y".into()]),
        ])
        .unwrap();
        (dataset, assignment)
    }

    #[test]
    fn counts_on_alternating_corpus() {
        let (dataset, assignment) = alternating_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let root = trie.slice(&Context::root(), 0);
        assert_eq!(root.occurrences, 6);
        assert_eq!(root.next[&EventId(0)], 3);
        assert_eq!(root.next[&EventId(1)], 3);
        let a = trie.slice(&ctx_chrono(&[0]), 0);
        assert_eq!(a.occurrences, 3);
        assert_eq!(a.next[&EventId(1)], 3);
        let b = trie.slice(&ctx_chrono(&[1]), 0);
        assert_eq!(b.occurrences, 2);
        assert_eq!(b.next[&EventId(0)], 2);
    }

    #[test]
    fn single_event_activity_only_counts_root() {
        let dataset = Dataset::new(vocab_ab(), vec![ActivityInstance::new("x", ids(&[0]))]);
        let assignment =
            ClassAssignment::from_members(vec![("c".into(), vec!["x".into()])]).unwrap();
        let trie = build_counts(&dataset, &assignment, 3).unwrap();
        assert_eq!(trie.slice(&Context::root(), 0).occurrences, 1);
        assert_eq!(trie.node_count(), 1);
    }

    #[test]
    fn windows_do_not_cross_activity_boundaries() {
        let dataset = Dataset::new(
            vocab_ab(),
            vec![
                ActivityInstance::new("x", ids(&[0, 1])),
                ActivityInstance::new("y", ids(&[0, 1])),
            ],
        );
        let assignment =
            ClassAssignment::from_members(vec![("c".into(), vec!["x".into(), "y".into()])])
                .unwrap();
        let trie = build_counts(&dataset, &assignment, 2).unwrap();
        let a = trie.slice(&ctx_chrono(&[0]), 0);
        assert_eq!(a.occurrences, 2);
        assert_eq!(a.next[&EventId(1)], 2);
        // "b a" never occurs inside a single activity.
        assert_eq!(trie.slice(&ctx_chrono(&[1, 0]), 0).occurrences, 0);
    }

    #[test]
    fn empty_class_is_rejected() {
        let (dataset, _) = alternating_dataset();
        let assignment = ClassAssignment::from_members(vec![
            ("c".into(), vec!["x".into()]),
            ("hollow".into(), vec![]),
        ])
        .unwrap();
        let err = build_counts(&dataset, &assignment, 2).unwrap_err();
        assert!(matches!(err, VmmcError::EmptyClass(name) if name == "hollow"));
    }

    #[test]
    fn duplicate_assignment_is_rejected() {
        let err = ClassAssignment::from_members(vec![
            ("c".into(), vec!["x".into()]),
            ("d".into(), vec!["x".into()]),
        ])
        .unwrap_err();
        assert!(matches!(err, VmmcError::DuplicateAssignment { .. }));
    }

    #[test]
    fn delta_worked_example_is_exactly_three_bits() {
        let (dataset, assignment) = alternating_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let delta = trie.delta(&ctx_chrono(&[0]), 0);
        assert!((delta - 3.0).abs() < 1e-12);
    }

    #[test]
    fn delta_is_zero_when_distributions_match() {
        // "a a a a": p(a|a) = p(a|root) = 1, so the context saves nothing.
        let dataset = Dataset::new(
            Vocabulary::from_names(["a"]).unwrap(),
            vec![ActivityInstance::new("x", ids(&[0, 0, 0, 0]))],
        );
        let assignment =
            ClassAssignment::from_members(vec![("c".into(), vec!["x".into()])]).unwrap();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        assert_eq!(trie.delta(&ctx_chrono(&[0]), 0), 0.0);
    }

    #[test]
    fn delta_of_unseen_context_is_zero_by_convention() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 2).unwrap();
        // "a a" occurs in neither corpus.
        assert_eq!(trie.delta(&ctx_chrono(&[0, 0]), 0), 0.0);
    }

    #[test]
    fn psi_worked_example() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let delta_own = trie.delta(&ctx_chrono(&[0]), 0);
        let delta_other = trie.delta(&ctx_chrono(&[0]), 1);
        assert!((delta_own - 3.0).abs() < 1e-12);
        assert!((delta_other - 2.0).abs() < 1e-12);
        assert!((trie.psi(&ctx_chrono(&[0]), 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_equals_delta_for_a_single_class() {
        let (dataset, assignment) = alternating_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        assert_eq!(
            trie.psi(&ctx_chrono(&[0]), 0),
            trie.delta(&ctx_chrono(&[0]), 0)
        );
    }

    #[test]
    fn prune_drops_shared_context_at_the_worked_threshold() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let ell = dataset.total_length() as u64;
        assert_eq!(ell, 12);
        // Psi("a") = 1.0 < 0.5 * log2(12) ~ 1.79, so "a" is pruned.
        let model = prune(&trie, 0, 0.5, ell);
        assert!(!model.contains(&ctx_chrono(&[0])));
        assert!(model.contains(&Context::root()));
    }

    #[test]
    fn prune_extremes() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 2).unwrap();
        let ell = dataset.total_length() as u64;
        let huge = prune(&trie, 0, 1e6, ell);
        assert_eq!(huge.node_count(), 1);
        // With k -> 0+ every strictly positive gain survives.
        let tiny = prune(&trie, 0, 1e-9, ell);
        assert!(tiny.contains(&ctx_chrono(&[0])));
        assert!(extract_motifs(&tiny).motifs.iter().all(|m| m.psi_bits > 0.0));
    }

    #[test]
    fn retained_tree_is_suffix_closed() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 3).unwrap();
        let model = prune(&trie, 0, 1e-9, dataset.total_length() as u64);
        for (context, _) in model.retained() {
            let mut cursor = context;
            while let Some(suffix) = cursor.suffix() {
                assert!(model.contains(&suffix), "suffix chain must stay present");
                cursor = suffix;
            }
        }
    }

    #[test]
    fn motifs_are_sorted_by_descending_gain() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 3).unwrap();
        let model = prune(&trie, 0, 1e-9, dataset.total_length() as u64);
        let motifs = extract_motifs(&model);
        for pair in motifs.motifs.windows(2) {
            assert!(pair[0].psi_bits >= pair[1].psi_bits);
        }
    }

    #[test]
    fn fully_pruned_model_has_no_motifs() {
        let (dataset, assignment) = alternating_dataset();
        let trie = build_counts(&dataset, &assignment, 2).unwrap();
        let model = prune(&trie, 0, 1e6, dataset.total_length() as u64);
        assert!(extract_motifs(&model).motifs.is_empty());
    }

    #[test]
    fn monotone_parsimony_in_k() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 3).unwrap();
        let ell = dataset.total_length() as u64;
        let mut previous: Option<usize> = None;
        for k in [1e-9, 0.01, 0.1, 0.5, 1.0, 10.0] {
            let model = prune(&trie, 0, k, ell);
            let gained = model
                .retained()
                .iter()
                .filter(|(_, node)| !node.structural)
                .count();
            if let Some(prev) = previous {
                assert!(gained <= prev, "retained set must shrink as k grows");
            }
            previous = Some(gained);
        }
    }

    #[test]
    fn uniform_root_model_scores_minus_four_bits() {
        let model = ClassModel::from_parts(
            "c".into(),
            0.5,
            8,
            2,
            4,
            vec![(
                vec![],
                8,
                [(EventId(0), 4u64), (EventId(1), 4u64)]
                    .into_iter()
                    .collect(),
                0.0,
                false,
            )],
        )
        .unwrap();
        let activity = ActivityInstance::new("t", ids(&[0, 1, 1, 0]));
        let ll = model.log_likelihood(&activity, 0.5);
        assert!((ll - (-4.0)).abs() < 1e-12);
    }

    #[test]
    fn impossible_transition_without_smoothing() {
        let model = ClassModel::from_parts(
            "c".into(),
            0.5,
            4,
            2,
            4,
            vec![(
                vec![],
                4,
                [(EventId(0), 4u64)].into_iter().collect(),
                0.0,
                false,
            )],
        )
        .unwrap();
        let activity = ActivityInstance::new("t", ids(&[1]));
        assert_eq!(model.log_likelihood(&activity, 0.0), IMPOSSIBLE);
        assert!(model.log_likelihood(&activity, 0.5) > IMPOSSIBLE);
    }

    #[test]
    fn first_event_is_scored_from_the_root() {
        // Depth-1 contexts exist but position 0 has no history to match.
        let (dataset, assignment) = alternating_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let model = prune(&trie, 0, 1e-9, dataset.total_length() as u64);
        let single = ActivityInstance::new("t", ids(&[0]));
        let expected = ((3.0 + 0.5) / (6.0 + 0.5 * 2.0_f64)).log2();
        assert!((model.log_likelihood(&single, 0.5) - expected).abs() < 1e-12);
    }

    fn toy_models() -> Vec<ClassModel> {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 2).unwrap();
        let ell = dataset.total_length() as u64;
        vec![prune(&trie, 0, 1e-9, ell), prune(&trie, 1, 1e-9, ell)]
    }

    #[test]
    fn classify_prefers_the_generating_class() {
        let models = toy_models();
        let activity = ActivityInstance::new("t", ids(&[0, 1, 0, 1]));
        match classify(&activity, &models, 0.5) {
            Classification::Assigned {
                class_id,
                posterior,
            } => {
                assert_eq!(class_id, "c");
                let total: f64 = posterior.values().sum();
                assert!((total - 1.0).abs() < 1e-9);
                assert!(posterior["c"] > posterior["c2"]);
            }
            Classification::Unclassifiable => panic!("expected an assignment"),
        }
    }

    #[test]
    fn identical_models_split_the_posterior_and_tie_break_by_id() {
        let (dataset, assignment) = alternating_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let ell = dataset.total_length() as u64;
        let mut first = prune(&trie, 0, 0.5, ell);
        first.set_class_id("m1");
        let mut second = first.clone();
        second.set_class_id("m2");
        let activity = ActivityInstance::new("t", ids(&[0, 1]));
        match classify(&activity, &[first, second], 0.5) {
            Classification::Assigned {
                class_id,
                posterior,
            } => {
                assert_eq!(class_id, "m1");
                assert!((posterior["m1"] - 0.5).abs() < 1e-12);
                assert!((posterior["m2"] - 0.5).abs() < 1e-12);
            }
            Classification::Unclassifiable => panic!("expected an assignment"),
        }
    }

    #[test]
    fn single_model_has_posterior_one() {
        let models = vec![toy_models().remove(0)];
        let activity = ActivityInstance::new("t", ids(&[0, 1]));
        match classify(&activity, &models, 0.5) {
            Classification::Assigned { posterior, .. } => {
                assert_eq!(posterior["c"], 1.0);
            }
            Classification::Unclassifiable => panic!("expected an assignment"),
        }
    }

    #[test]
    fn unclassifiable_when_every_model_is_impossible() {
        let model = ClassModel::from_parts(
            "c".into(),
            0.5,
            4,
            2,
            4,
            vec![(
                vec![],
                4,
                [(EventId(0), 4u64)].into_iter().collect(),
                0.0,
                false,
            )],
        )
        .unwrap();
        let activity = ActivityInstance::new("t", ids(&[1]));
        assert_eq!(
            classify(&activity, &[model], 0.0),
            Classification::Unclassifiable
        );
    }

    #[test]
    fn objective_single_class_q_equals_gamma() {
        let (dataset, assignment) = alternating_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let models = vec![prune(&trie, 0, 0.5, dataset.total_length() as u64)];
        let reports = objective(&models, &assignment, &dataset, 0.5).unwrap();
        assert_eq!(reports.len(), 1);
        let report = &reports[0];
        assert!(report.competitor_log2.is_empty());
        assert_eq!(report.log2_gamma, 0.0);
        assert_eq!(report.q, Some(1.0));
    }

    #[test]
    fn objective_identical_models_split_gamma() {
        let (dataset, assignment) = two_class_dataset();
        let trie = build_counts(&dataset, &assignment, 1).unwrap();
        let ell = dataset.total_length() as u64;
        // Same counts under both ids: clone class 0's model for both.
        let mut m1 = prune(&trie, 0, 1e6, ell);
        m1.set_class_id("c");
        let mut m2 = m1.clone();
        m2.set_class_id("c2");
        let reports = objective(&[m1, m2], &assignment, &dataset, 0.5).unwrap();
        for report in reports {
            // p(c|a) = 1/2 for the class's single activity.
            assert!((report.log2_gamma - (-1.0)).abs() < 1e-12);
        }
    }

    // Independent recount: collect (chronological context, next event)
    // windows straight off the sequences, no trie involved.
    fn naive_recount(
        dataset: &Dataset,
        assignment: &ClassAssignment,
        max_depth: usize,
    ) -> HashMap<(usize, Vec<EventId>, EventId), u64> {
        let mut counts = HashMap::new();
        for slot in 0..assignment.len() {
            for id in assignment.members_of(slot) {
                let activity = dataset.activity(id).unwrap();
                let events = &activity.events;
                for target in 0..events.len() {
                    for depth in 0..=target.min(max_depth) {
                        let context = events[target - depth..target].to_vec();
                        *counts.entry((slot, context, events[target])).or_insert(0) += 1;
                    }
                }
            }
        }
        counts
    }

    fn random_corpus(seed: u64, classes: usize, vocab: usize) -> (Dataset, ClassAssignment) {
        let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        let names: Vec<String> = (0..vocab).map(|i| format!("e{i}")).collect();
        let vocabulary = Vocabulary::from_names(names).unwrap();
        let mut activities = Vec::new();
        let mut groups = Vec::new();
        let mut total = 0usize;
        for class in 0..classes {
            let mut ids_in_class = Vec::new();
            let instances = 1 + next() % 3;
            for instance in 0..instances {
                let length = 1 + next() % 40;
                if total + length > 200 {
                    break;
                }
                total += length;
                let events = (0..length)
                    .map(|_| EventId((next() % vocab) as u32))
                    .collect();
                let id = format!("c{class}-i{instance}");
                activities.push(ActivityInstance::new(id.clone(), events));
                ids_in_class.push(id);
            }
            if ids_in_class.is_empty() {
                let id = format!("c{class}-i0");
                activities.push(ActivityInstance::new(id.clone(), vec![EventId(0)]));
                ids_in_class.push(id);
            }
            groups.push((format!("class{class}"), ids_in_class));
        }
        (
            Dataset::new(vocabulary, activities),
            ClassAssignment::from_members(groups).unwrap(),
        )
    }

    #[test]
    fn counts_match_naive_recount_on_random_corpora() {
        for seed in 0..20 {
            let (dataset, assignment) = random_corpus(seed, 2, 5);
            let trie = build_counts(&dataset, &assignment, 4).unwrap();
            let naive = naive_recount(&dataset, &assignment, 4);
            // Every naive window is in the trie with the same count.
            for ((slot, chrono, y), &count) in &naive {
                let context = Context::from_chronological(chrono);
                let slice = trie.slice(&context, *slot);
                assert_eq!(slice.next.get(y).copied().unwrap_or(0), count);
            }
            // And the trie holds nothing the naive recount missed.
            for context in trie.contexts() {
                for slot in 0..assignment.len() {
                    let slice = trie.slice(&context, slot);
                    for (y, &count) in &slice.next {
                        let key = (slot, context.chronological(), *y);
                        assert_eq!(naive.get(&key).copied().unwrap_or(0), count);
                    }
                }
            }
        }
    }

    // Second route to delta: straight probability-ratio KL, no integer
    // cross-multiplication.
    fn delta_kl_oracle(trie: &ContextTrie, context: &Context, class: usize) -> f64 {
        let slice = trie.slice(context, class);
        if slice.occurrences == 0 {
            return 0.0;
        }
        let parent = trie.slice(&context.suffix().unwrap(), class);
        let n = slice.occurrences as f64;
        let kl: f64 = slice
            .next
            .iter()
            .map(|(y, &count)| {
                let p = count as f64 / n;
                let q = parent.next[y] as f64 / parent.occurrences as f64;
                p * (p / q).log2()
            })
            .sum();
        n * kl
    }

    #[test]
    fn delta_is_nonnegative_and_matches_kl_oracle() {
        for seed in 0..20 {
            let (dataset, assignment) = random_corpus(seed + 100, 2, 4);
            let trie = build_counts(&dataset, &assignment, 4).unwrap();
            for context in trie.contexts() {
                for slot in 0..assignment.len() {
                    let delta = trie.delta(&context, slot);
                    assert!(delta >= 0.0, "delta must be nonnegative, got {delta}");
                    let oracle = delta_kl_oracle(&trie, &context, slot);
                    assert!((delta - oracle).abs() < 1e-9);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn count_nesting_holds(seed in 0u64..500) {
            let (dataset, assignment) = random_corpus(seed, 2, 4);
            let trie = build_counts(&dataset, &assignment, 4).unwrap();
            for context in trie.contexts() {
                let suffix = context.suffix().unwrap();
                for slot in 0..assignment.len() {
                    let own = trie.slice(&context, slot).occurrences;
                    let parent = trie.slice(&suffix, slot).occurrences;
                    prop_assert!(own <= parent, "context occurs more often than its suffix");
                }
            }
        }
    }
}
