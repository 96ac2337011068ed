//! Depth-map lifting, accuracy/completeness metrics and error heatmaps.

mod cloud;
mod heatmap;
mod metrics;

pub use cloud::{nn_distance, nn_distance_brute, PointCloud};
pub use heatmap::{colormap, error_heatmap, error_scale, NO_ESTIMATE, NO_GROUND_TRUTH};
pub use metrics::{accuracy, completeness, evaluate_depth, EvalResult, Summary, DEFAULT_TRUNCATION_MM, METRES_TO_MM};
