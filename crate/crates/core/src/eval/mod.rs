//! Retrieval and clustering-quality metrics.

mod ami;
mod retrieval;

pub use ami::{ami, entropy, expected_mutual_information, mutual_information, Contingency};
pub use retrieval::{
    average_precision, cmc, evaluate_retrieval, rank_gallery, RetrievalProtocol, RetrievalReport,
    DEFAULT_CMC_RANKS,
};

use serde::{Deserialize, Serialize};

/// Metrics attached to one pipeline iteration or a final run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iteration: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ami: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalReport>,
}
