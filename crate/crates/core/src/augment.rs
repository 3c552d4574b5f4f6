//! Training-set augmentation: anchored crops, left-right mirroring, a
//! rotation grid and contrast changes, every output resized to the network
//! input.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::GalleryManifest;
use crate::error::{Error, Result};
use crate::imaging::{self, Image, ImageStore};
use crate::nn::InputGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropAnchor {
    Left,
    Right,
    Top,
    Bottom,
    Center,
}

impl CropAnchor {
    pub const ALL: [CropAnchor; 5] = [
        CropAnchor::Left,
        CropAnchor::Right,
        CropAnchor::Top,
        CropAnchor::Bottom,
        CropAnchor::Center,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    pub crop_fraction: f64,
    pub crops: Vec<CropAnchor>,
    pub hflip: bool,
    pub rotation_degrees: Vec<f64>,
    pub contrast_factors: Vec<f64>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            crop_fraction: 0.875,
            crops: CropAnchor::ALL.to_vec(),
            hflip: true,
            rotation_degrees: vec![-15.0, 0.0, 15.0],
            contrast_factors: vec![0.8, 1.0, 1.2],
        }
    }
}

impl AugmentPolicy {
    /// Center crop at full size, nothing else.
    pub fn identity() -> Self {
        AugmentPolicy {
            crop_fraction: 1.0,
            crops: vec![CropAnchor::Center],
            hflip: false,
            rotation_degrees: vec![0.0],
            contrast_factors: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("augment policy: {m}")));
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return bad("crop_fraction must lie in (0, 1]");
        }
        if self.crops.is_empty() {
            return bad("crops must not be empty");
        }
        if self.rotation_degrees.is_empty() {
            return bad("rotation_degrees must not be empty");
        }
        if self.rotation_degrees.iter().any(|r| !r.is_finite()) {
            return bad("rotation_degrees must be finite");
        }
        if self.contrast_factors.is_empty() {
            return bad("contrast_factors must not be empty");
        }
        if self.contrast_factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return bad("contrast factors must be positive");
        }
        Ok(())
    }

    pub fn variants_per_image(&self) -> usize {
        self.crops.len()
            * if self.hflip { 2 } else { 1 }
            * self.rotation_degrees.len()
            * self.contrast_factors.len()
    }
}

fn crop_region(anchor: CropAnchor, fraction: f64, w: f64, h: f64) -> (f64, f64, f64, f64) {
    let (cw, ch) = (w * fraction, h * fraction);
    let (cx, cy) = ((w - cw) / 2.0, (h - ch) / 2.0);
    match anchor {
        CropAnchor::Left => (0.0, cy, cw, ch),
        CropAnchor::Right => (w - cw, cy, cw, ch),
        CropAnchor::Top => (cx, 0.0, cw, ch),
        CropAnchor::Bottom => (cx, h - ch, cw, ch),
        CropAnchor::Center => (cx, cy, cw, ch),
    }
}

/// All policy variants of one image, ordered crop → flip → rotation →
/// contrast (innermost last). The grid is fixed, so no randomness enters.
pub fn augment_image(img: &Image, policy: &AugmentPolicy, geom: InputGeometry) -> Result<Vec<Image>> {
    policy.validate()?;
    let (w, h) = img.dimensions();
    if w < 2 || h < 2 {
        return Err(Error::InvalidArgument(format!(
            "augmentation needs an image of at least 2x2, got {w}x{h}"
        )));
    }
    let (w, h) = (w as f64, h as f64);
    if w * policy.crop_fraction < 1.0 || h * policy.crop_fraction < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "crop fraction {} leaves an empty region of a {w}x{h} image",
            policy.crop_fraction
        )));
    }
    let (ow, oh) = (geom.width as u32, geom.height as u32);
    let mut out = Vec::with_capacity(policy.variants_per_image());
    for &anchor in &policy.crops {
        let region = crop_region(anchor, policy.crop_fraction, w, h);
        let cropped = imaging::crop_resize(img, region, ow, oh);
        let flips: &[bool] = if policy.hflip { &[false, true] } else { &[false] };
        for &flip in flips {
            let base = if flip { imaging::hflip(&cropped) } else { cropped.clone() };
            for &deg in &policy.rotation_degrees {
                let rotated = imaging::rotate(&base, deg);
                for &f in &policy.contrast_factors {
                    out.push(imaging::adjust_contrast(&rotated, f));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AugmentedSample {
    pub image: Image,
    pub label: String,
    /// Manifest path of the source image.
    pub source: String,
}

/// Augment every training image of the manifest. Sources are processed in
/// parallel; the final order is a seeded shuffle of the source-major list.
pub fn expand_training_set(
    manifest: &GalleryManifest,
    store: &ImageStore,
    policy: &AugmentPolicy,
    geom: InputGeometry,
    seed: u64,
) -> Result<Vec<AugmentedSample>> {
    policy.validate()?;
    let per_source: Vec<Vec<AugmentedSample>> = manifest
        .training_images
        .par_iter()
        .map(|t| {
            let img = store.get(&t.path)?;
            Ok(augment_image(&img, policy, geom)?
                .into_iter()
                .map(|image| AugmentedSample {
                    image,
                    label: t.label.clone(),
                    source: t.path.clone(),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut samples: Vec<AugmentedSample> = per_source.into_iter().flatten().collect();
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(samples)
}
