//! Benchmark library for multi-label code-comment classification.
//!
//! Sentences from Java, Python and Pharo comments are featurized, classified
//! per label by an interchangeable head, and scored on F1 plus the runtime
//! and FLOP cost of inference.

pub mod corpus;
pub mod cost;
pub mod featurize;
pub mod harness;
pub mod heads;
pub mod metrics;
pub mod pairgen;
pub mod score;

pub use corpus::{CommentSentence, LabelSet, LabelTaxonomy, Language, SplitDataset};
pub use cost::{CostReport, EncoderSpec, FlopCount, MeasurementProtocol};
pub use featurize::{FeatureVector, Featurizer};
pub use heads::{HeadSpec, LabelModel};
pub use metrics::{AggregateReport, AggregationMode};
pub use score::{submission_score, ScoreBreakdown, SubmissionInputs};
