//! Segmentation and classification metrics, scene inference and reports.

pub mod confusion;
pub mod inference;
pub mod report;
pub mod sensitivity;
pub mod topk;

pub use confusion::{ClassCounts, ClassScores, ConfusionMatrix};
pub use inference::{sliding_inference, sliding_scores, tile_scores};
pub use report::{
    evaluate_segmentation, render_class_breakdown, render_segmentation_table, render_sensitivity_table, render_table,
    MetricsReport,
};
pub use sensitivity::{permutation_sensitivity, NamedPermutation, PermutationResult, SensitivityReport};
pub use topk::topk_accuracy;
