//! Generic pre-training set: ten procedural shape and texture classes on
//! random backgrounds, half of them passed through simulated camera defects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsio::{derive_seed, sha256_hex};
use crate::imaging::{to_rgb8, Image};
use crate::sim::degrade::{apply_degradations, DegradationConfig};

pub const SHAPE_CLASSES: [&str; 10] = [
    "disk",
    "ring",
    "square",
    "triangle",
    "cross",
    "stripes",
    "checkerboard",
    "dots",
    "gradient",
    "frame",
];

pub const DEFAULT_SHAPE_IMAGES: usize = 5_000;

#[derive(Clone, Debug)]
pub struct ShapeDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl ShapeDataset {
    /// `n` images, classes cycling so every class gets `n/10` (±1).
    pub fn generate(n: usize, size: u32, seed: u64) -> Result<ShapeDataset> {
        if n == 0 || size < 8 {
            return Err(Error::InvalidArgument(format!(
                "shape dataset needs n >= 1 and size >= 8, got n={n}, size={size}"
            )));
        }
        let noise = capture_noise();
        let (images, labels) = (0..n)
            .into_par_iter()
            .map(|i| {
                let class = i % SHAPE_CLASSES.len();
                let img = render_shape(class, size, derive_seed(seed, "shape", i as u64));
                if i % 2 == 0 {
                    return Ok((img, class));
                }
                let (img, _) = apply_degradations(&img, &noise, derive_seed(seed, "shape_noise", i as u64))?;
                Ok((img, class))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(ShapeDataset { images, labels, seed })
    }

    pub fn classes(&self) -> usize {
        SHAPE_CLASSES.len()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Identifies the dataset in checkpoint provenance.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.len() * 4096);
        for (img, l) in self.images.iter().zip(&self.labels) {
            bytes.push(*l as u8);
            bytes.extend_from_slice(img.as_raw());
        }
        sha256_hex(&bytes)
    }

    pub fn labels_text(&self) -> Vec<String> {
        SHAPE_CLASSES.iter().map(|s| s.to_string()).collect()
    }
}

/// Camera defects applied to every second image, so the trunk learns
/// features that survive blur, low light, noise and partial occlusion.
pub fn capture_noise() -> DegradationConfig {
    DegradationConfig {
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
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [0, 1, 2].map(|_| rng.random_range(0.0..255.0))
}

/// Foreground colours cluster around a per-class hue with wide overlap
/// between neighbouring classes, so colour is a useful but unreliable cue.
fn class_color(class: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let hue = (class as f64 * 36.0 + rng.random_range(-50.0..50.0)).rem_euclid(360.0);
    let sat = rng.random_range(0.35..1.0);
    let val = rng.random_range(0.35..1.0);
    let c = val * sat;
    let h = hue / 60.0;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    [r, g, b].map(|v| (v + m) * 255.0)
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// A stroke drawn behind the class pattern.
struct Stroke {
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    width: f64,
    color: [f64; 3],
}

impl Stroke {
    fn covers(&self, u: f64, v: f64) -> bool {
        let len2 = self.dx * self.dx + self.dy * self.dy;
        let t = (((u - self.x0) * self.dx + (v - self.y0) * self.dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (self.x0 + t * self.dx - u, self.y0 + t * self.dy - v);
        px * px + py * py < self.width * self.width
    }
}

/// One image of `class`: the class pattern in a solid colour over a
/// two-colour gradient crossed by a few thin strokes.
pub fn render_shape(class: usize, size: u32, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg0 = random_color(&mut rng);
    let bg1 = random_color(&mut rng);
    let mut fg = class_color(class, &mut rng);
    while distance(fg, bg0) < 120.0 || distance(fg, bg1) < 120.0 {
        fg = class_color(class, &mut rng);
    }
    let (gs, gc) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
    let strokes: Vec<Stroke> = (0..rng.random_range(0..=5u32))
        .map(|_| {
            let (sa, ca) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
            let len = rng.random_range(0.2..0.7);
            Stroke {
                x0: rng.random_range(0.0..1.0),
                y0: rng.random_range(0.0..1.0),
                dx: ca * len,
                dy: sa * len,
                width: rng.random_range(0.01..0.03),
                color: random_color(&mut rng),
            }
        })
        .collect();
    let (cx, cy, r) = (rng.random_range(0.35..0.65), rng.random_range(0.35..0.65), rng.random_range(0.18..0.32));
    let (sa, ca) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
    let period = rng.random_range(0.08..0.16);
    let noise = rng.random_range(0.0..12.0);
    let s = size as f64;
    let mut img = Image::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
            let (u, v) = (px - cx, py - cy);
            // rotated coordinates
            let (a, b) = (ca * u + sa * v, -sa * u + ca * v);
            let d = (u * u + v * v).sqrt();
            let t: f64 = match class {
                0 => (d < r) as u8 as f64,
                1 => (d < r && d > r * 0.6) as u8 as f64,
                2 => (a.abs() < r * 0.85 && b.abs() < r * 0.85) as u8 as f64,
                3 => {
                    let h = r * 1.2;
                    (b > -h * 0.5 && b < h * 0.7 && a.abs() < (h * 0.7 - b) * 0.6) as u8 as f64
                }
                4 => ((a.abs() < r * 0.28 && b.abs() < r) || (b.abs() < r * 0.28 && a.abs() < r)) as u8 as f64,
                5 => ((a / period).rem_euclid(1.0) < 0.5) as u8 as f64,
                6 => (((a / period).floor() + (b / period).floor()).rem_euclid(2.0) < 1.0) as u8 as f64,
                7 => {
                    let (fa, fb) = ((a / period).rem_euclid(1.0) - 0.5, (b / period).rem_euclid(1.0) - 0.5);
                    ((fa * fa + fb * fb).sqrt() < 0.28) as u8 as f64
                }
                8 => (a / 1.2 + 0.5).clamp(0.0, 1.0),
                _ => {
                    let m = a.abs().max(b.abs());
                    (m < r && m > r * 0.7) as u8 as f64
                }
            };
            let g = ((gc * (px - 0.5) + gs * (py - 0.5)) + 0.5).clamp(0.0, 1.0);
            let mut back = [0, 1, 2].map(|k| bg0[k] * (1.0 - g) + bg1[k] * g);
            if let Some(st) = strokes.iter().rev().find(|st| st.covers(px, py)) {
                back = st.color;
            }
            let c = [0, 1, 2].map(|k| back[k] * (1.0 - t) + fg[k] * t + rng.random_range(-noise..=noise));
            img.put_pixel(x, y, to_rgb8(c));
        }
    }
    img
}
