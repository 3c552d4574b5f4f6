//! Wearable-capture degradations, applied in a fixed order: perspective,
//! truncation, clutter, occluder, glare, motion blur, low light,
//! salt-and-pepper. Geometric effects also transform the label map so the
//! ground truth stays consistent with what is visible.

use image::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{self, sample_bilinear, to_rgb8, Image};
use crate::sim::geometry::Mat3;
use crate::sim::scene::LabelMap;
use crate::sim::texture::{nonplanar_views, planar_render};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationConfig {
    /// Largest corner displacement as a fraction of the frame side.
    pub perspective_jitter: f64,
    pub truncation_prob: f64,
    /// Largest fraction of the frame cut away by a truncation.
    pub truncation_max: f64,
    /// Up to this many unrelated objects are composited behind the art.
    pub clutter: u32,
    pub occluder_prob: f64,
    pub occluder_max_area: f64,
    pub glare_prob: f64,
    /// Peak brightness added at the center of a glare blob.
    pub glare_intensity: f64,
    /// Blur length is drawn from `1..=motionblur_len` pixels.
    pub motionblur_len: u32,
    /// Brightness gain is drawn from `[lowlight_gain, 1]`.
    pub lowlight_gain: f64,
    pub sp_noise_density: f64,
}

impl DegradationConfig {
    pub fn none() -> Self {
        DegradationConfig {
            perspective_jitter: 0.0,
            truncation_prob: 0.0,
            truncation_max: 0.0,
            clutter: 0,
            occluder_prob: 0.0,
            occluder_max_area: 0.0,
            glare_prob: 0.0,
            glare_intensity: 0.0,
            motionblur_len: 0,
            lowlight_gain: 1.0,
            sp_noise_density: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("truncation_prob", self.truncation_prob),
            ("occluder_prob", self.occluder_prob),
            ("glare_prob", self.glare_prob),
            ("sp_noise_density", self.sp_noise_density),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        let ranged = [
            ("perspective_jitter", self.perspective_jitter, 0.0, 0.5),
            ("truncation_max", self.truncation_max, 0.0, 0.5),
            ("occluder_max_area", self.occluder_max_area, 0.0, 0.4),
            ("glare_intensity", self.glare_intensity, 0.0, 255.0),
        ];
        for (name, v, lo, hi) in ranged {
            if !(lo..=hi).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must lie in [{lo}, {hi}]")));
            }
        }
        if !(self.lowlight_gain > 0.0 && self.lowlight_gain <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lowlight_gain = {} must lie in (0, 1]",
                self.lowlight_gain
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClutterItem {
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub seed: u64,
    pub silhouette: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    Perspective { corners: [(f64, f64); 4] },
    Truncation { x: f64, y: f64, width: f64, height: f64 },
    Clutter { items: Vec<ClutterItem> },
    Occluder { cx: f64, cy: f64, rx: f64, ry: f64, angle: f64, area_fraction: f64 },
    Glare { x: f64, y: f64, sigma: f64, peak: f64 },
    MotionBlur { length: u32, angle: f64 },
    LowLight { gain: f64 },
    SaltPepper { count: usize },
}

impl Effect {
    pub fn name(&self) -> &'static str {
        match self {
            Effect::Perspective { .. } => "perspective",
            Effect::Truncation { .. } => "truncation",
            Effect::Clutter { .. } => "clutter",
            Effect::Occluder { .. } => "occluder",
            Effect::Glare { .. } => "glare",
            Effect::MotionBlur { .. } => "motion_blur",
            Effect::LowLight { .. } => "low_light",
            Effect::SaltPepper { .. } => "salt_pepper",
        }
    }

    /// Position in the fixed application order.
    pub fn order(&self) -> usize {
        match self {
            Effect::Perspective { .. } => 0,
            Effect::Truncation { .. } => 1,
            Effect::Clutter { .. } => 2,
            Effect::Occluder { .. } => 3,
            Effect::Glare { .. } => 4,
            Effect::MotionBlur { .. } => 5,
            Effect::LowLight { .. } => 6,
            Effect::SaltPepper { .. } => 7,
        }
    }
}

/// Degrade an image on its own; see [`apply_degradations_labeled`].
pub fn apply_degradations(img: &Image, config: &DegradationConfig, seed: u64) -> Result<(Image, Vec<Effect>)> {
    let mut labels = LabelMap::new(img.width(), img.height());
    apply_degradations_labeled(img, &mut labels, config, seed)
}

/// Degrade a frame and keep its label map in step. Returns the new image
/// and one log entry per effect that fired, in application order.
pub fn apply_degradations_labeled(
    img: &Image,
    labels: &mut LabelMap,
    config: &DegradationConfig,
    seed: u64,
) -> Result<(Image, Vec<Effect>)> {
    config.validate()?;
    if (labels.width, labels.height) != img.dimensions() {
        return Err(Error::Shape(format!(
            "label map {}x{} for a {}x{} image",
            labels.width,
            labels.height,
            img.width(),
            img.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = img.dimensions();
    let (wf, hf) = (w as f64, h as f64);
    let mut img = img.clone();
    let mut log = Vec::new();

    if config.perspective_jitter > 0.0 {
        let j = config.perspective_jitter;
        let frame = [(0.0, 0.0), (wf, 0.0), (wf, hf), (0.0, hf)];
        let corners = frame.map(|(x, y)| {
            (
                x + rng.random_range(-j..=j) * wf,
                y + rng.random_range(-j..=j) * hf,
            )
        });
        // output pixel -> source pixel
        if let Some(hm) = Mat3::from_correspondences(&corners, &frame) {
            let map = |x: f64, y: f64| hm.apply(x, y).unwrap_or((-1.0, -1.0));
            img = imaging::warp(&img, w, h, map);
            *labels = labels.warp(map);
            log.push(Effect::Perspective { corners });
        }
    }

    if config.truncation_prob > 0.0 && rng.random_bool(config.truncation_prob) && config.truncation_max > 0.0 {
        let t = rng.random_range(0.0..=config.truncation_max);
        let (cw, ch) = (wf * (1.0 - t), hf * (1.0 - t));
        let x = if rng.random_bool(0.5) { 0.0 } else { wf - cw };
        let y = if rng.random_bool(0.5) { 0.0 } else { hf - ch };
        let (sx, sy) = (cw / wf, ch / hf);
        let map = |px: f64, py: f64| (x + px * sx, y + py * sy);
        img = imaging::warp(&img, w, h, map);
        *labels = labels.warp(map);
        log.push(Effect::Truncation {
            x,
            y,
            width: cw,
            height: ch,
        });
    }

    if config.clutter > 0 {
        let n = rng.random_range(0..=config.clutter);
        let items: Vec<ClutterItem> = (0..n)
            .map(|_| ClutterItem {
                x: rng.random_range(-0.2..0.9) * wf,
                y: rng.random_range(-0.2..0.9) * hf,
                size: rng.random_range(0.25..0.5) * wf,
                seed: rng.random(),
                silhouette: rng.random_bool(0.5),
            })
            .collect();
        for item in &items {
            composite_clutter(&mut img, labels, item);
        }
        if !items.is_empty() {
            log.push(Effect::Clutter { items });
        }
    }

    if config.occluder_prob > 0.0 && config.occluder_max_area > 0.0 && rng.random_bool(config.occluder_prob) {
        let lo = config.occluder_max_area.min(0.05);
        let area = rng.random_range(lo..=config.occluder_max_area) * wf * hf;
        let aspect: f64 = rng.random_range(0.5..2.0);
        let rx = (area / std::f64::consts::PI * aspect).sqrt();
        let ry = (area / std::f64::consts::PI / aspect).sqrt();
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        // people walk in from the sides, hands come up from the bottom
        let along = rng.random_range(0.15..0.85);
        let inset = rng.random_range(0.0..0.25);
        let (cx, cy) = match rng.random_range(0..3) {
            0 => (inset * wf, along * hf),
            1 => ((1.0 - inset) * wf, along * hf),
            _ => (along * wf, (1.0 - inset) * hf),
        };
        let shade = [rng.random_range(15.0..55.0), rng.random_range(15.0..50.0), rng.random_range(15.0..50.0)];
        let (sa, ca) = angle.sin_cos();
        let mut covered = 0usize;
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let (u, v) = (ca * dx + sa * dy, -sa * dx + ca * dy);
                if (u / rx).powi(2) + (v / ry).powi(2) <= 1.0 {
                    img.put_pixel(x, y, to_rgb8(shade));
                    labels.set(x, y, 0);
                    covered += 1;
                }
            }
        }
        log.push(Effect::Occluder {
            cx,
            cy,
            rx,
            ry,
            angle,
            area_fraction: covered as f64 / (wf * hf),
        });
    }

    if config.glare_prob > 0.0 && config.glare_intensity > 0.0 && rng.random_bool(config.glare_prob) {
        let (gx, gy) = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
        let sigma = rng.random_range(0.08..0.22) * wf;
        let peak = config.glare_intensity * rng.random_range(0.6..=1.0);
        for (x, y, p) in img.enumerate_pixels_mut() {
            let d2 = (x as f64 + 0.5 - gx).powi(2) + (y as f64 + 0.5 - gy).powi(2);
            let add = peak * (-d2 / (2.0 * sigma * sigma)).exp();
            *p = to_rgb8(p.0.map(|c| c as f64 + add));
        }
        log.push(Effect::Glare { x: gx, y: gy, sigma, peak });
    }

    if config.motionblur_len >= 2 {
        let length = rng.random_range(1..=config.motionblur_len);
        if length >= 2 {
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            img = motion_blur(&img, length, angle);
            log.push(Effect::MotionBlur { length, angle });
        }
    }

    if config.lowlight_gain < 1.0 {
        let gain = rng.random_range(config.lowlight_gain..=1.0);
        for p in img.pixels_mut() {
            *p = to_rgb8(p.0.map(|c| c as f64 * gain));
        }
        log.push(Effect::LowLight { gain });
    }

    if config.sp_noise_density > 0.0 {
        let n = (w * h) as usize;
        let count = (config.sp_noise_density * n as f64).round() as usize;
        for idx in rand::seq::index::sample(&mut rng, n, count).into_iter() {
            let v = if rng.random_bool(0.5) { 255 } else { 0 };
            img.put_pixel(idx as u32 % w, idx as u32 / w, Rgb([v, v, v]));
        }
        log.push(Effect::SaltPepper { count });
    }

    Ok((img, log))
}

/// Linear blur: average of `length` bilinear taps along `angle`.
pub fn motion_blur(img: &Image, length: u32, angle: f64) -> Image {
    if length <= 1 {
        return img.clone();
    }
    let (s, c) = angle.sin_cos();
    let half = (length - 1) as f64 / 2.0;
    Image::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = [0.0; 3];
        for k in 0..length {
            let t = k as f64 - half;
            let p = sample_bilinear(img, x as f64 + t * c, y as f64 + t * s);
            for ch in 0..3 {
                acc[ch] += p[ch];
            }
        }
        to_rgb8(acc.map(|a| a / length as f64))
    })
}

/// Paste an unrelated object behind the art: only pixels that currently
/// show no artwork are painted, so labels are untouched.
fn composite_clutter(img: &mut Image, labels: &LabelMap, item: &ClutterItem) {
    let size = item.size.round().max(4.0) as u32;
    let views;
    let rgba: &image::RgbaImage = if item.silhouette {
        views = nonplanar_views(item.seed, size);
        &views[(item.seed % views.len() as u64) as usize]
    } else {
        views = vec![image::DynamicImage::ImageRgb8(planar_render(item.seed, size)).to_rgba8()];
        &views[0]
    };
    let (x0, y0) = (item.x.round() as i64, item.y.round() as i64);
    for (px, py, p) in rgba.enumerate_pixels() {
        let (x, y) = (x0 + px as i64, y0 + py as i64);
        if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 || p.0[3] < 128 {
            continue;
        }
        let (x, y) = (x as u32, y as u32);
        if labels.get(x, y) == 0 {
            img.put_pixel(x, y, Rgb([p.0[0], p.0[1], p.0[2]]));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::pixel_diff_fraction;
    use rand::Rng;

    fn noise(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep away from the extremes so forced pixels are countable
        Image::from_fn(64, 64, |_, _| Rgb([rng.random_range(20..230), rng.random_range(20..230), rng.random_range(20..230)]))
    }

    fn all_on() -> DegradationConfig {
        DegradationConfig {
            perspective_jitter: 0.1,
            truncation_prob: 1.0,
            truncation_max: 0.3,
            clutter: 2,
            occluder_prob: 1.0,
            occluder_max_area: 0.4,
            glare_prob: 1.0,
            glare_intensity: 150.0,
            motionblur_len: 6,
            lowlight_gain: 0.5,
            sp_noise_density: 0.02,
        }
    }

    #[test]
    fn zero_config_is_identity() {
        let img = noise(1);
        let (out, log) = apply_degradations(&img, &DegradationConfig::none(), 5).unwrap();
        assert_eq!(out, img);
        assert!(log.is_empty());
    }

    #[test]
    fn salt_and_pepper_density() {
        let img = noise(2);
        let cfg = DegradationConfig {
            sp_noise_density: 0.05,
            ..DegradationConfig::none()
        };
        let (out, log) = apply_degradations(&img, &cfg, 3).unwrap();
        let forced = out
            .pixels()
            .filter(|p| p.0 == [0, 0, 0] || p.0 == [255, 255, 255])
            .count();
        let frac = forced as f64 / 4096.0;
        assert!((frac - 0.05).abs() <= 0.01, "{frac}");
        assert_eq!(log, vec![Effect::SaltPepper { count: forced }]);
    }

    #[test]
    fn unit_blur_is_identity() {
        let img = noise(3);
        let cfg = DegradationConfig {
            motionblur_len: 1,
            ..DegradationConfig::none()
        };
        assert_eq!(apply_degradations(&img, &cfg, 1).unwrap().0, img);
        assert_eq!(motion_blur(&img, 1, 0.7), img);
        assert_ne!(motion_blur(&img, 5, 0.7), img);
    }

    #[test]
    fn effects_fire_in_fixed_order_and_are_deterministic() {
        let img = noise(4);
        for seed in 0..10 {
            let (a, log) = apply_degradations(&img, &all_on(), seed).unwrap();
            let order: Vec<usize> = log.iter().map(Effect::order).collect();
            assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
            for always in [0, 1, 3, 4, 6, 7] {
                assert!(order.contains(&always), "seed {seed}: {order:?}");
            }
            let (b, log2) = apply_degradations(&img, &all_on(), seed).unwrap();
            assert_eq!(a, b);
            assert_eq!(log, log2);
        }
    }

    #[test]
    fn occluder_clears_labels_and_respects_area() {
        let img = noise(5);
        let cfg = DegradationConfig {
            occluder_prob: 1.0,
            occluder_max_area: 0.4,
            ..DegradationConfig::none()
        };
        for seed in 0..20 {
            let mut labels = LabelMap::new(64, 64);
            labels.data.iter_mut().for_each(|l| *l = 3);
            let (out, log) = apply_degradations_labeled(&img, &mut labels, &cfg, seed).unwrap();
            let Effect::Occluder { area_fraction, .. } = log[0] else { panic!() };
            assert!(area_fraction <= 0.4 + 1e-9);
            let cleared = labels.data.iter().filter(|&&l| l == 0).count();
            assert_eq!(cleared as f64 / 4096.0, area_fraction);
            assert!((pixel_diff_fraction(&out, &img) - area_fraction).abs() < 0.01);
        }
    }

    #[test]
    fn clutter_only_paints_unlabeled_pixels() {
        let img = noise(6);
        let mut labels = LabelMap::new(64, 64);
        for y in 0..64 {
            for x in 0..32 {
                labels.set(x, y, 1);
            }
        }
        let cfg = DegradationConfig {
            clutter: 4,
            ..DegradationConfig::none()
        };
        for seed in 0..10 {
            let mut l = labels.clone();
            let (out, _) = apply_degradations_labeled(&img, &mut l, &cfg, seed).unwrap();
            assert_eq!(l, labels);
            for y in 0..64 {
                for x in 0..32 {
                    assert_eq!(out.get_pixel(x, y), img.get_pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let img = noise(7);
        for cfg in [
            DegradationConfig { sp_noise_density: 1.5, ..DegradationConfig::none() },
            DegradationConfig { perspective_jitter: 0.6, ..DegradationConfig::none() },
            DegradationConfig { occluder_max_area: 0.5, ..DegradationConfig::none() },
            DegradationConfig { lowlight_gain: 0.0, ..DegradationConfig::none() },
        ] {
            assert!(apply_degradations(&img, &cfg, 0).is_err());
        }
    }
}
