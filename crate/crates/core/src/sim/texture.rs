//! Procedural artwork appearance keyed by a texture seed.

use image::{Rgb, Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{to_rgb8, Image};

/// Number of canonical viewpoints rendered for non-planar pieces.
pub const CANONICAL_VIEWS: usize = 8;

type Color = [f64; 3];

fn color(rng: &mut ChaCha8Rng) -> Color {
    // saturated-ish palette so pieces stay distinguishable after contrast
    // changes and low light
    let h: f64 = rng.random_range(0.0..6.0);
    let s: f64 = rng.random_range(0.45..1.0);
    let v: f64 = rng.random_range(70.0..250.0);
    let f = h.fract();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match h as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn mix(a: Color, b: Color, t: f64) -> Color {
    [0, 1, 2].map(|i| a[i] * (1.0 - t) + b[i] * t)
}

enum Motif {
    Blob { cx: f64, cy: f64, rx: f64, ry: f64, c: Color },
    Stroke { x0: f64, y0: f64, x1: f64, y1: f64, width: f64, c: Color },
    Disk { cx: f64, cy: f64, r: f64, c: Color },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64, c: Color },
    Triangle { p: [(f64, f64); 3], c: Color },
    Stripes { angle: f64, period: f64, c: Color },
}

impl Motif {
    /// Coverage weight of the motif at unit-square point `(x, y)`.
    fn weight(&self, x: f64, y: f64) -> f64 {
        match *self {
            Motif::Blob { cx, cy, rx, ry, .. } => {
                let d = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
                (-d).exp() * 0.85
            }
            Motif::Stroke { x0, y0, x1, y1, width, .. } => {
                let (dx, dy) = (x1 - x0, y1 - y0);
                let t = (((x - x0) * dx + (y - y0) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                let d = ((x - x0 - t * dx).powi(2) + (y - y0 - t * dy).powi(2)).sqrt();
                if d < width { 1.0 } else { 0.0 }
            }
            Motif::Disk { cx, cy, r, .. } => {
                if (x - cx).powi(2) + (y - cy).powi(2) < r * r { 1.0 } else { 0.0 }
            }
            Motif::Rect { x0, y0, x1, y1, .. } => {
                if x >= x0 && x < x1 && y >= y0 && y < y1 { 1.0 } else { 0.0 }
            }
            Motif::Triangle { p, .. } => {
                let s = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                let (d0, d1, d2) = (s(p[0], p[1]), s(p[1], p[2]), s(p[2], p[0]));
                let neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
                let pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
                if neg && pos { 0.0 } else { 1.0 }
            }
            Motif::Stripes { angle, period, .. } => {
                let u = x * angle.cos() + y * angle.sin();
                if (u / period).rem_euclid(1.0) < 0.5 { 0.6 } else { 0.0 }
            }
        }
    }

    fn color(&self) -> Color {
        match *self {
            Motif::Blob { c, .. }
            | Motif::Stroke { c, .. }
            | Motif::Disk { c, .. }
            | Motif::Rect { c, .. }
            | Motif::Triangle { c, .. }
            | Motif::Stripes { c, .. } => c,
        }
    }
}

/// Layered texture over the unit square: a two-color gradient, soft color
/// fields, strokes and hard-edged geometric motifs.
pub struct Texture {
    g0: Color,
    g1: Color,
    gdir: (f64, f64),
    layers: Vec<Motif>,
}

impl Texture {
    pub fn new(seed: u64) -> Texture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g0 = color(&mut rng);
        let g1 = color(&mut rng);
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut layers = Vec::new();
        let u = |rng: &mut ChaCha8Rng| rng.random_range(0.0..1.0f64);
        for _ in 0..rng.random_range(2..5) {
            layers.push(Motif::Blob {
                cx: u(&mut rng),
                cy: u(&mut rng),
                rx: rng.random_range(0.15..0.4),
                ry: rng.random_range(0.15..0.4),
                c: color(&mut rng),
            });
        }
        if rng.random_bool(0.4) {
            layers.push(Motif::Stripes {
                angle: rng.random_range(0.0..std::f64::consts::PI),
                period: rng.random_range(0.12..0.3),
                c: color(&mut rng),
            });
        }
        for _ in 0..rng.random_range(2..6) {
            layers.push(Motif::Stroke {
                x0: u(&mut rng),
                y0: u(&mut rng),
                x1: u(&mut rng),
                y1: u(&mut rng),
                width: rng.random_range(0.02..0.06),
                c: color(&mut rng),
            });
        }
        for _ in 0..rng.random_range(2..5) {
            let c = color(&mut rng);
            let m = match rng.random_range(0..3) {
                0 => Motif::Disk {
                    cx: u(&mut rng),
                    cy: u(&mut rng),
                    r: rng.random_range(0.08..0.22),
                    c,
                },
                1 => {
                    let (x0, y0) = (rng.random_range(0.0..0.75), rng.random_range(0.0..0.75));
                    Motif::Rect {
                        x0,
                        y0,
                        x1: x0 + rng.random_range(0.1..0.35),
                        y1: y0 + rng.random_range(0.1..0.35),
                        c,
                    }
                }
                _ => Motif::Triangle {
                    p: [(u(&mut rng), u(&mut rng)), (u(&mut rng), u(&mut rng)), (u(&mut rng), u(&mut rng))],
                    c,
                },
            };
            layers.push(m);
        }
        Texture {
            g0,
            g1,
            gdir: (a.cos(), a.sin()),
            layers,
        }
    }

    /// Color at unit-square coordinates (wrapping horizontally is left to
    /// the caller).
    pub fn eval(&self, x: f64, y: f64) -> Color {
        let t = ((x - 0.5) * self.gdir.0 + (y - 0.5) * self.gdir.1 + 0.7) / 1.4;
        let mut c = mix(self.g0, self.g1, t.clamp(0.0, 1.0));
        for m in &self.layers {
            let w = m.weight(x, y);
            if w > 0.0 {
                c = mix(c, m.color(), w);
            }
        }
        c
    }

    pub fn render(&self, size: u32) -> Image {
        let s = size as f64;
        Image::from_fn(size, size, |x, y| {
            to_rgb8(self.eval((x as f64 + 0.5) / s, (y as f64 + 0.5) / s))
        })
    }
}

/// Flat artwork render filling a `size × size` frame, with a thin dark
/// frame like a mounted picture.
pub fn planar_render(seed: u64, size: u32) -> Image {
    let mut img = Texture::new(seed).render(size);
    let border = (size / 32).max(1);
    for (x, y, p) in img.enumerate_pixels_mut() {
        if x < border || y < border || x >= size - border || y >= size - border {
            *p = Rgb([38, 30, 24]);
        }
    }
    img
}

/// Canonical views of a non-planar piece: a textured solid of revolution
/// with an elliptic cross-section, lit from a fixed direction, so both the
/// silhouette and the shading change with the viewing angle. Alpha marks
/// the silhouette.
pub fn nonplanar_views(seed: u64, size: u32) -> Vec<RgbaImage> {
    let tex = Texture::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5ca1e);
    // width profile over height: a few random bumps on a base radius
    let base: f64 = rng.random_range(0.25..0.4);
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.1..0.9),
                rng.random_range(-0.15..0.2),
                rng.random_range(0.06..0.2),
            )
        })
        .collect();
    let depth: f64 = rng.random_range(0.35..1.0);
    let top: f64 = rng.random_range(0.02..0.12);
    let light: f64 = rng.random_range(-0.8..0.8);
    let profile = |v: f64| -> f64 {
        let mut r = base;
        for &(c, a, w) in &bumps {
            r += a * (-((v - c) / w).powi(2)).exp();
        }
        r.clamp(0.06, 0.48)
    };
    let s = size as f64;
    (0..CANONICAL_VIEWS)
        .map(|view| {
            let alpha = view as f64 * std::f64::consts::TAU / CANONICAL_VIEWS as f64;
            // projected half-width of an ellipse with semi-axes (1, depth)
            let span = (alpha.cos().powi(2) + (depth * alpha.sin()).powi(2)).sqrt();
            RgbaImage::from_fn(size, size, |x, y| {
                let v = (y as f64 + 0.5) / s;
                if v < top || v > 0.98 {
                    return Rgba([0, 0, 0, 0]);
                }
                let hw = profile(v) * span;
                let dx = (x as f64 + 0.5) / s - 0.5;
                if dx.abs() >= hw {
                    return Rgba([0, 0, 0, 0]);
                }
                let phi = alpha + (dx / hw).asin();
                let c = tex.eval((phi / std::f64::consts::TAU).rem_euclid(1.0), (v - top) / (0.98 - top));
                let shade = 0.4 + 0.6 * (phi - light).cos().max(0.0);
                let px = to_rgb8(c.map(|k| k * shade));
                Rgba([px.0[0], px.0[1], px.0[2], 255])
            })
        })
        .collect()
}

/// Description plaque: light card with dark text-like lines.
pub fn plaque_render(seed: u64, size: u32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paper = [rng.random_range(215.0..245.0), rng.random_range(205.0..240.0), rng.random_range(190.0..230.0)];
    let ink = [rng.random_range(20.0..70.0); 3];
    let lines = rng.random_range(4..9);
    let margin = rng.random_range(0.08..0.16);
    let words: Vec<Vec<(f64, f64)>> = (0..lines)
        .map(|_| {
            let mut x = margin;
            let mut w = Vec::new();
            while x < 1.0 - margin {
                let len: f64 = rng.random_range(0.04..0.16);
                w.push((x, (x + len).min(1.0 - margin)));
                x += len + rng.random_range(0.02..0.05);
            }
            w
        })
        .collect();
    let s = size as f64;
    Image::from_fn(size, size, |x, y| {
        let (u, v) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
        let row = ((v - margin) / ((1.0 - 2.0 * margin) / lines as f64)).floor();
        if v > margin && row >= 0.0 && (row as usize) < lines {
            let within = ((v - margin) / ((1.0 - 2.0 * margin) / lines as f64)).fract();
            if within < 0.45 && words[row as usize].iter().any(|&(a, b)| u >= a && u < b) {
                return to_rgb8(ink);
            }
        }
        to_rgb8(paper)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::pixel_diff_fraction;

    #[test]
    fn textures_are_deterministic_and_distinct() {
        assert_eq!(planar_render(5, 32), planar_render(5, 32));
        let renders: Vec<Image> = (0..12).map(|s| planar_render(s, 32)).collect();
        for i in 0..renders.len() {
            for j in 0..i {
                assert!(pixel_diff_fraction(&renders[i], &renders[j]) >= 0.05);
            }
        }
    }

    #[test]
    fn nonplanar_views_vary_with_angle() {
        let views = nonplanar_views(3, 32);
        assert_eq!(views.len(), CANONICAL_VIEWS);
        assert!(views.iter().all(|v| v.pixels().any(|p| p.0[3] == 255)));
        assert_ne!(views[0], views[2]);
        assert_ne!(views[0], views[4]);
    }

    #[test]
    fn plaque_has_ink_and_paper() {
        let p = plaque_render(1, 32);
        let dark = p.pixels().filter(|p| p.0[0] < 100).count();
        assert!(dark > 20 && dark < 32 * 32 / 2, "{dark}");
    }
}
