//! Experiment configuration: one JSON document describing a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::read_json;
use crate::nn::NetworkSpec;
use crate::sim::{Preset, Scenario};
use crate::train::shapes::{DEFAULT_SHAPE_IMAGES, SHAPE_CLASSES};
use crate::train::{HyperGrid, HyperParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// Replaces the preset entirely when present.
    pub scenario: Option<Scenario>,
    /// Resize the gallery (auxiliary counts scale along).
    pub instances: Option<usize>,
    /// Fixed number of training photographs per instance.
    pub views: Option<usize>,
    /// Layer stack to use instead of VGG-nano; its class count is replaced
    /// per stage.
    pub network: Option<NetworkSpec>,
    pub pretrain_images: usize,
    pub pretrain: HyperParams,
    /// Fine-tuning grid; `grid.base.augment` is the augmentation policy.
    pub grid: HyperGrid,
    /// Cross-validation folds; empty means every test split.
    pub folds: Vec<String>,
    pub retrain_per_split: bool,
    pub seeds: Vec<u64>,
    pub max_k: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: Preset::PaintingsLike,
            scenario: None,
            instances: None,
            views: None,
            network: None,
            pretrain_images: DEFAULT_SHAPE_IMAGES,
            pretrain: HyperParams {
                epochs: 6,
                augment: None,
                ..HyperParams::default()
            },
            grid: HyperGrid::default(),
            folds: Vec::new(),
            retrain_per_split: false,
            seeds: vec![0],
            max_k: 10,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        if !path.exists() {
            return Err(Error::MissingInput {
                path: path.to_path_buf(),
                producer: "the user",
            });
        }
        read_json(path)
    }

    /// Preset or explicit scenario with the size overrides applied.
    pub fn resolved_scenario(&self) -> Scenario {
        let mut s = self.scenario.clone().unwrap_or_else(|| self.preset.scenario());
        if let Some(n) = self.instances {
            s = s.with_instances(n);
        }
        if let Some(v) = self.views {
            s.gallery.views_min = v;
            s.gallery.views_max = v;
        }
        s
    }

    /// Network with `classes` outputs over the gallery image size.
    pub fn network_spec(&self, classes: usize) -> Result<NetworkSpec> {
        match &self.network {
            Some(n) => n.with_classes(classes),
            None => {
                let size = self.resolved_scenario().gallery.image_size as usize;
                let spec = NetworkSpec::vgg_nano_with_input(classes, crate::nn::InputGeometry::new(size, size, 3));
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    pub fn pretrain_spec(&self) -> Result<NetworkSpec> {
        self.network_spec(SHAPE_CLASSES.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("config needs at least one seed".into()));
        }
        if self.max_k == 0 {
            return Err(Error::InvalidArgument("max_k must be >= 1".into()));
        }
        if self.pretrain_images == 0 {
            return Err(Error::InvalidArgument("pretrain_images must be >= 1".into()));
        }
        self.resolved_scenario().gallery.validate()?;
        self.pretrain.validate()?;
        self.grid.validate()?;
        self.pretrain_spec()?;
        Ok(())
    }
}
