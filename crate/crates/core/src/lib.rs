//! Prompt-based multi-intent spoken language understanding.
//!
//! Intent detection, slot filling and slot prediction are all cast as text
//! generation over a shared "belief span" output format:
//!
//! - [`lexicon`] maps raw dataset labels to natural-language descriptions.
//! - [`belief_span`] serializes and parses the generation targets.
//! - [`bio`] converts BIO-tagged tokens to ordered slot-value pairs and back.
//! - [`prompt`] renders the task prompts, with or without intent guidance.
//! - [`dataset`] loads corpora and emits training examples.
//! - [`training`] is the reference arithmetic for the training losses.
//! - [`backend`] abstracts the text generator (oracle, HTTP, stub server).
//! - [`pipeline`] runs staged inference over utterances and corpora.
//! - [`eval`] computes Slot F1, Intent Acc and Overall Acc.

pub mod backend;
pub mod belief_span;
pub mod bio;
pub mod dataset;
pub mod eval;
pub mod lexicon;
pub mod pipeline;
pub mod prompt;
pub mod training;

pub use belief_span::{IntentSpan, PairSpan, Parsed, SlotSpan, SlotValuePair};
pub use bio::{BioSequence, BioTag, Utterance};
pub use dataset::{RawSample, TrainingExample};
pub use eval::MetricsReport;
pub use lexicon::{LabelLexicon, Namespace};
pub use prompt::{Prompt, TaskKind};
