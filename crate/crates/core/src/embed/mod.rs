//! Two-dimensional embeddings of learned features for visual inspection.

pub mod plot;
pub mod tsne;

pub use plot::{export_plot_data, render_scatter, stratified_subsample, Embedding2D};
pub use tsne::{conditional_affinities, joint_affinities, tsne, tsne_from, TsneConfig, TsneOutput};
