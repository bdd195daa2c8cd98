//! Topic-quality metrics, classification from topic proportions and
//! word-intrusion items.

pub mod classify;
pub mod coherence;
pub mod intrusion;

pub use classify::{classification_eval, suggest_mapping, ClassMetrics, ClassificationReport};
pub use coherence::{
    evaluate_topics, npmi, topic_coherence, topic_diversity, topic_quality, CooccurrenceStats, MetricsReport,
};
pub use intrusion::{make_intrusion_items, score_intrusion, AnswerKey, IntrusionItem, IntrusionSet, Response};
