//! Scene classification, accuracy metrics, class maps and generated-sample
//! diagnostics.

pub mod classify;
pub mod metrics;
pub mod render;
pub mod samples;

pub use classify::{
    classify_patches, classify_scene, confusion_for, raster_from_centers, ClassifyOptions, SceneResult,
};
pub use metrics::{metrics, ConfusionMatrix, MetricsReport};
pub use render::{invert_map, load_rgb, map_image, png_bytes, render_map, write_png, Palette};
pub use samples::{
    diversity_report, generate_class, mean_pairwise_distance, real_within_class_distance, sample_grid,
    sample_variance, DiversityReport,
};
