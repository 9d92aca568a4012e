//! Held-out perplexity, document retrieval, topic coherence, word inspection and
//! text categorization over learned representations.

mod classify;
mod coherence;
mod inspect;
mod perplexity;
mod retrieval;

use serde::Serialize;

pub use self::classify::{evaluate_classification, ClassificationReport, Classifier};
pub use self::coherence::{coherence_npmi, CoherenceReport, TopicCoherence};
pub use self::inspect::{nearest_neighbors, topic_top_words, topic_summaries, TopicSummary};
pub use self::perplexity::{perplexity, perplexity_report, PerplexityReport};
pub use self::retrieval::{
    document_representations, glove_sum_representation, glove_sum_representations,
    retrieval_precision,
    retrieval_precision_from_representations, IrPoint,
};

/// Collected results of an evaluation run, serialized as the JSON summary.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<PerplexityReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ir_curve: Vec<IrPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence: Option<CoherenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
}
