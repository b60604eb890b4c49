//! Metrics, cross-evaluation, transferability and rank statistics.

mod cross;
mod metrics;
mod report;
mod stats;
mod study;

pub use cross::{cross_evaluate, transfer_ratio, CrossEvalGrid, Metric};
pub use metrics::{aggregate_confusion, confusion, precision_recall, ConfusionMatrix, PrecisionRecall};
pub use report::{cross_eval_csv, similarity_csv, write_cross_eval_csv, write_similarity_csv};
pub use stats::{average_ranks, holm_adjust, spearman, Holm, Spearman, EXACT_MAX_N, MONTE_CARLO_DRAWS};
pub use study::{similarity_vs_transfer_study, AnchorTest, PairRow, SimilarityStudy};
