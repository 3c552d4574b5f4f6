//! Synthetic galleries and simulated wearable-camera visits.

pub mod degrade;
pub mod gallery;
pub mod geometry;
pub mod presets;
pub mod scene;
pub mod texture;
pub mod visit;

pub use gallery::{generate_gallery, render_training_views, Gallery, GalleryParams, SyntheticArtwork, ViewSampling};
pub use presets::{build_scenario, Preset, Scenario, SimulatedDataset};
