//! Discovery and characterization of activity classes from event-streams.
//!
//! The pipeline represents each activity as a bag of overlapping event
//! n-grams, builds a pairwise similarity graph over activities, peels
//! dominant sets (edge-weighted maximal cliques) off the graph to discover
//! activity classes, and then learns a variable-memory Markov chain per
//! class whose retained contexts are the class's characteristic event
//! motifs, ranked by how many bits they save for their own class versus
//! all others.

pub mod config;
pub mod dominant;
pub mod event;
pub mod io;
pub mod ngram;
pub mod pipeline;
pub mod render;
pub mod similarity;
pub mod synth;
pub mod vmmc;

pub use config::PipelineConfig;
pub use event::{ActivityInstance, Dataset, EventId, Vocabulary};
