//! Scenario presets: a gallery plus the camera splits captured in it.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{GalleryManifest, SplitRole};
use crate::error::{Error, Result};
use crate::fsio::derive_seed;
use crate::imaging::ImageStore;
use crate::sim::degrade::DegradationConfig;
use crate::sim::gallery::{generate_gallery, Gallery, GalleryParams, ViewSampling};
use crate::sim::visit::{simulate_clean_split, simulate_visit, FrameLog, VisitPlan, WalkPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaintingsLike,
    ClocksLike,
    SculpturesLike,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::PaintingsLike, Preset::ClocksLike, Preset::SculpturesLike];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaintingsLike => "paintings-like",
            Preset::ClocksLike => "clocks-like",
            Preset::SculpturesLike => "sculptures-like",
        }
    }

    pub fn scenario(self) -> Scenario {
        match self {
            Preset::PaintingsLike => paintings_like(),
            Preset::ClocksLike => clocks_like(),
            Preset::SculpturesLike => sculptures_like(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown preset '{s}' (expected paintings-like, clocks-like or sculptures-like)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub name: String,
    pub role: SplitRole,
    pub plan: VisitPlan,
    pub degradation: DegradationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanSplitSpec {
    pub name: String,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub gallery: GalleryParams,
    pub splits: Vec<SplitSpec>,
    #[serde(default)]
    pub clean_split: Option<CleanSplitSpec>,
}

impl Scenario {
    /// Resize the gallery, scaling auxiliary image counts with it.
    pub fn with_instances(mut self, n: usize) -> Scenario {
        let old = self.gallery.n_instances.max(1) as f64;
        let scale = |k: usize| {
            if k == 0 {
                0
            } else {
                ((k as f64 * n as f64 / old).round() as usize).max(2)
            }
        };
        self.gallery.n_background = scale(self.gallery.n_background);
        self.gallery.n_distractor = scale(self.gallery.n_distractor);
        self.gallery.n_descriptions = scale(self.gallery.n_descriptions);
        self.gallery.n_instances = n;
        self
    }
}

fn split(name: &str, plan: VisitPlan, degradation: &DegradationConfig) -> SplitSpec {
    SplitSpec {
        name: name.into(),
        role: SplitRole::Test,
        plan,
        degradation: degradation.clone(),
    }
}

/// Flat pieces along a clear linear route with mild degradations; six
/// volunteers with different mounts.
pub fn paintings_like() -> Scenario {
    let deg = DegradationConfig {
        perspective_jitter: 0.04,
        truncation_prob: 0.1,
        truncation_max: 0.2,
        clutter: 0,
        occluder_prob: 0.08,
        occluder_max_area: 0.2,
        glare_prob: 0.1,
        glare_intensity: 80.0,
        motionblur_len: 3,
        lowlight_gain: 0.85,
        sp_noise_density: 0.003,
    };
    let mounts = [(0.0, 0.0), (4.0, 0.05), (-4.0, -0.05), (8.0, 0.1), (0.0, -0.1), (-7.0, 0.0)];
    let splits = mounts
        .iter()
        .enumerate()
        .map(|(i, &(roll, height))| {
            split(
                &format!("volunteer{}", i + 1),
                VisitPlan {
                    walk: WalkPattern::LinearRoute,
                    roll_bias_deg: roll,
                    height_offset: height,
                    ..VisitPlan::default()
                },
                &deg,
            )
        })
        .collect();
    Scenario {
        gallery: GalleryParams {
            n_instances: 79,
            nonplanar_fraction: 0.0,
            id_prefix: "painting".into(),
            n_background: 27,
            n_distractor: 170,
            ..GalleryParams::default()
        },
        splits,
        clean_split: Some(CleanSplitSpec {
            name: "frontal".into(),
            distance: 1.15,
        }),
    }
}

/// Non-planar pieces behind glass: photographed from the front only, seen
/// close up along a perimeter loop, with heavy glare, low light and
/// crowds. The second split is a rotated mount.
pub fn clocks_like() -> Scenario {
    let deg = DegradationConfig {
        perspective_jitter: 0.06,
        truncation_prob: 0.15,
        truncation_max: 0.25,
        clutter: 0,
        occluder_prob: 0.2,
        occluder_max_area: 0.3,
        glare_prob: 0.6,
        glare_intensity: 150.0,
        motionblur_len: 4,
        lowlight_gain: 0.6,
        sp_noise_density: 0.008,
    };
    let plan = VisitPlan {
        walk: WalkPattern::PerimeterLoop,
        approach_min: 1.0,
        approach_max: 1.4,
        view_spread: 1,
        ..VisitPlan::default()
    };
    Scenario {
        gallery: GalleryParams {
            n_instances: 113,
            nonplanar_fraction: 1.0,
            id_prefix: "clock".into(),
            nonplanar_views: ViewSampling::FrontalOnly,
            n_background: 27,
            ..GalleryParams::default()
        },
        splits: vec![
            split("pocket", plan.clone(), &deg),
            split(
                "handbag",
                VisitPlan {
                    roll_bias_deg: 18.0,
                    height_offset: 0.1,
                    ..plan
                },
                &deg,
            ),
        ],
        clean_split: Some(CleanSplitSpec {
            name: "frontal".into(),
            distance: 1.15,
        }),
    }
}

/// Large non-planar pieces seen from every side along a zigzag path, set
/// against clutter, often truncated and occluded.
pub fn sculptures_like() -> Scenario {
    let deg = DegradationConfig {
        perspective_jitter: 0.1,
        truncation_prob: 0.35,
        truncation_max: 0.35,
        clutter: 3,
        occluder_prob: 0.3,
        occluder_max_area: 0.4,
        glare_prob: 0.1,
        glare_intensity: 90.0,
        motionblur_len: 6,
        lowlight_gain: 0.5,
        sp_noise_density: 0.015,
    };
    let plan = VisitPlan {
        walk: WalkPattern::Zigzag,
        approach_min: 0.8,
        approach_max: 1.4,
        lateral_jitter: 0.25,
        yaw_jitter_deg: 14.0,
        view_spread: 4,
        ..VisitPlan::default()
    };
    Scenario {
        gallery: GalleryParams {
            n_instances: 44,
            nonplanar_fraction: 1.0,
            id_prefix: "sculpture".into(),
            nonplanar_views: ViewSampling::AllViews,
            n_background: 27,
            n_descriptions: 12,
            zone_gap: 0.35,
            ..GalleryParams::default()
        },
        splits: vec![
            split(
                "clockwise",
                VisitPlan {
                    roll_bias_deg: 12.0,
                    ..plan.clone()
                },
                &deg,
            ),
            split(
                "counterclockwise",
                VisitPlan {
                    roll_bias_deg: -12.0,
                    ..plan
                },
                &deg,
            ),
        ],
        clean_split: Some(CleanSplitSpec {
            name: "frontal".into(),
            distance: 1.15,
        }),
    }
}

/// A scenario rendered end to end: gallery, manifest with every split,
/// all images and the per-frame effects log.
#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub gallery: Gallery,
    pub images: ImageStore,
    pub effects: Vec<FrameLog>,
}

impl SimulatedDataset {
    pub fn manifest(&self) -> &GalleryManifest {
        &self.gallery.manifest
    }
}

pub fn build_scenario(scenario: &Scenario, seed: u64) -> Result<SimulatedDataset> {
    let mut gallery = generate_gallery(&scenario.gallery, derive_seed(seed, "gallery", 0))?;
    let mut images = std::mem::take(&mut gallery.images);
    let mut effects = Vec::new();
    let mut names = std::collections::BTreeSet::new();
    for (i, spec) in scenario.splits.iter().enumerate() {
        if !names.insert(spec.name.as_str()) {
            return Err(Error::InvalidArgument(format!("split '{}' defined twice", spec.name)));
        }
        let mut s = simulate_visit(
            &gallery,
            &spec.name,
            spec.role,
            &spec.plan,
            &spec.degradation,
            derive_seed(seed, "split", i as u64),
        )?;
        images.extend(std::mem::take(&mut s.images));
        effects.extend(s.log);
        gallery.manifest.splits.push(s.split);
    }
    if let Some(clean) = &scenario.clean_split {
        if !names.insert(clean.name.as_str()) {
            return Err(Error::InvalidArgument(format!("split '{}' defined twice", clean.name)));
        }
        let mut s = simulate_clean_split(&gallery, &clean.name, clean.distance)?;
        images.extend(std::mem::take(&mut s.images));
        effects.extend(s.log);
        gallery.manifest.splits.push(s.split);
    }
    Ok(SimulatedDataset {
        gallery,
        images,
        effects,
    })
}
