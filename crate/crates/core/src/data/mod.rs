//! Hyperspectral cubes: container I/O, spectral reduction, patch extraction,
//! stratified splitting and a synthetic scene generator.

pub mod cube;
pub mod pca;
pub mod patches;
pub mod split;
pub mod synth;

pub use cube::{load_hsc, save_hsc, HsiCube, HsiDataset, LabelRaster};
pub use pca::{normalize_range, pca_reduce, PcaModel};
pub use patches::{extract_patch, extract_patches, PatchSet};
pub use split::{allocate_proportional, split_indices, stratified_split, SplitCounts, SplitSpec};
pub use synth::{synth_dataset, SynthSpec};

/// PCA to `components` bands followed by per-band range normalization.
pub fn prepare_cube(cube: &HsiCube, components: usize) -> crate::Result<HsiCube> {
    Ok(normalize_range(&pca_reduce(cube, components)?))
}
