//! Pinhole view of a gallery wall: artworks placed in their display zones
//! on a procedural wall, rendered together with a per-pixel label map.

use image::RgbaImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DisplayZone;
use crate::imaging::{sample_bilinear, to_rgb8, Image};
use crate::sim::texture::CANONICAL_VIEWS;

type Color = [f64; 3];

/// Per-gallery wall, floor and ceiling look, evaluated at wall coordinates
/// `(u, v)` with `v` pointing down and artworks hanging in `0 ≤ v ≤ 1`.
#[derive(Clone, Debug)]
pub struct WallStyle {
    base: Color,
    floor: Color,
    ceiling: Color,
    panel_width: f64,
    phase: f64,
}

impl WallStyle {
    pub fn new(seed: u64) -> WallStyle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l: f64 = rng.random_range(150.0..215.0);
        let tint: [f64; 3] = [rng.random_range(-18.0..18.0), rng.random_range(-12.0..12.0), rng.random_range(-18.0..18.0)];
        let fl: f64 = rng.random_range(60.0..110.0);
        WallStyle {
            base: [l + tint[0], l + tint[1], l + tint[2]],
            floor: [fl + 25.0, fl + 10.0, fl - 5.0],
            ceiling: [l + 25.0, l + 25.0, l + 22.0],
            panel_width: rng.random_range(2.0..3.5),
            phase: rng.random_range(0.0..100.0),
        }
    }

    pub fn color(&self, u: f64, v: f64) -> Color {
        const FLOOR_V: f64 = 1.75;
        const CEILING_V: f64 = -0.9;
        if v >= FLOOR_V {
            // planks running along the wall, darker with distance from it
            let plank = ((u + self.phase) / 0.35).floor();
            let shade = 0.9 + 0.1 * (plank * 1.7).sin();
            return self.floor.map(|c| c * shade);
        }
        if v >= FLOOR_V - 0.08 {
            return self.floor.map(|c| c * 0.6);
        }
        if v < CEILING_V {
            return self.ceiling;
        }
        let seam = ((u + self.phase) / self.panel_width).rem_euclid(1.0);
        if seam < 0.012 {
            return self.base.map(|c| c * 0.82);
        }
        // soft lighting falloff between spotlights plus a faint plaster grain
        let light = 0.92 + 0.08 * ((u + self.phase) * 1.9).cos();
        let grain = 3.0 * ((u * 23.0 + v * 17.0 + self.phase).sin() * (v * 29.0 - u * 11.0).cos());
        self.base.map(|c| c * light + grain)
    }
}

#[derive(Clone, Debug)]
pub enum Appearance {
    Planar(Image),
    /// One RGBA render per canonical viewpoint; alpha marks the silhouette.
    Nonplanar(Vec<RgbaImage>),
}

pub struct SceneItem<'a> {
    pub zone: DisplayZone,
    pub appearance: &'a Appearance,
    /// Written into the label map wherever the item is visible; 0 is
    /// reserved for "no artwork".
    pub label: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Wall point straight ahead of the camera.
    pub cx: f64,
    pub cy: f64,
    pub distance: f64,
    pub yaw_deg: f64,
    pub roll_deg: f64,
    /// Canonical-view offset for non-planar pieces (the visitor's position
    /// around them).
    pub orbit: i32,
}

impl Pose {
    pub fn frontal(cx: f64, cy: f64, distance: f64) -> Pose {
        Pose {
            cx,
            cy,
            distance,
            yaw_deg: 0.0,
            roll_deg: 0.0,
            orbit: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32) -> LabelMap {
        LabelMap {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u16) {
        self.data[(y * self.width + x) as usize] = v;
    }

    /// Visible pixel count per label (index = label).
    pub fn counts(&self, n_labels: usize) -> Vec<usize> {
        let mut c = vec![0; n_labels + 1];
        for &l in &self.data {
            if (l as usize) < c.len() {
                c[l as usize] += 1;
            }
        }
        c
    }

    /// Nearest-neighbour resample through a source-coordinate map (pixel
    /// centers at +0.5), clamping at the edges like the image warps do.
    pub fn warp(&self, map: impl Fn(f64, f64) -> (f64, f64)) -> LabelMap {
        let mut out = LabelMap::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let (sx, sy) = map(x as f64 + 0.5, y as f64 + 0.5);
                let sx = (sx.floor().max(0.0) as u32).min(self.width - 1);
                let sy = (sy.floor().max(0.0) as u32).min(self.height - 1);
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }
}

fn sample_rgba_nearest(img: &RgbaImage, x: f64, y: f64) -> [u8; 4] {
    let (w, h) = img.dimensions();
    let xi = (x.floor().max(0.0) as u32).min(w - 1);
    let yi = (y.floor().max(0.0) as u32).min(h - 1);
    img.get_pixel(xi, yi).0
}

/// Render a `size × size` frame. Focal length equals the frame size, so a
/// frontal camera at distance `d` sees a `d × d` patch of wall.
pub fn render(wall: &WallStyle, items: &[SceneItem<'_>], pose: &Pose, size: u32) -> (Image, LabelMap) {
    let s = size as f64;
    let (sy, cy) = pose.yaw_deg.to_radians().sin_cos();
    let (sr, cr) = pose.roll_deg.to_radians().sin_cos();
    let mut labels = LabelMap::new(size, size);
    let mut img = Image::new(size, size);
    for py in 0..size {
        for px in 0..size {
            // camera ray, then R^T = Ry^T · Rz^T into wall coordinates
            let (dx, dy) = ((px as f64 + 0.5 - s / 2.0) / s, (py as f64 + 0.5 - s / 2.0) / s);
            let (rx, ry) = (cr * dx + sr * dy, -sr * dx + cr * dy);
            let (wx, wz) = (cy * rx - sy, sy * rx + cy);
            let color;
            let mut label = 0;
            if wz <= 1e-9 {
                color = wall.color(pose.cx, 99.0);
            } else {
                let t = pose.distance / wz;
                let (u, v) = (pose.cx + t * wx, pose.cy + t * ry);
                let mut c = None;
                for item in items {
                    if !item.zone.contains(u, v) {
                        continue;
                    }
                    let z = &item.zone;
                    match item.appearance {
                        Appearance::Planar(tex) => {
                            let (tw, th) = (tex.width() as f64, tex.height() as f64);
                            let tx = (u - z.x) / z.width * tw;
                            let ty = (v - z.y) / z.height * th;
                            c = Some(sample_bilinear(tex, tx - 0.5, ty - 0.5));
                            label = item.label;
                        }
                        Appearance::Nonplanar(views) => {
                            // the angle under which the piece is seen shifts
                            // the canonical view, as walking past it would
                            let (zc, _) = z.center();
                            let seen = (zc - pose.cx).atan2(pose.distance) + pose.yaw_deg.to_radians();
                            let step = std::f64::consts::TAU / CANONICAL_VIEWS as f64;
                            let idx = (pose.orbit as i64 + (seen / step).round() as i64)
                                .rem_euclid(views.len() as i64) as usize;
                            let tex = &views[idx];
                            let (tw, th) = (tex.width() as f64, tex.height() as f64);
                            let p = sample_rgba_nearest(tex, (u - z.x) / z.width * tw, (v - z.y) / z.height * th);
                            if p[3] >= 128 {
                                c = Some([p[0] as f64, p[1] as f64, p[2] as f64]);
                                label = item.label;
                            }
                        }
                    }
                    break;
                }
                color = c.unwrap_or_else(|| wall.color(u, v));
            }
            img.put_pixel(px, py, to_rgb8(color));
            labels.set(px, py, label);
        }
    }
    (img, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::texture::{nonplanar_views, planar_render};

    fn zone(x: f64) -> DisplayZone {
        DisplayZone {
            x,
            y: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }

    #[test]
    fn frontal_unit_distance_reproduces_texture() {
        let tex = planar_render(4, 32);
        let app = Appearance::Planar(tex.clone());
        let items = [SceneItem {
            zone: zone(3.0),
            appearance: &app,
            label: 1,
        }];
        let (img, labels) = render(&WallStyle::new(1), &items, &Pose::frontal(3.5, 0.5, 1.0), 32);
        assert_eq!(img, tex);
        assert!(labels.data.iter().all(|&l| l == 1));
    }

    #[test]
    fn farther_camera_sees_wall_around_artwork() {
        let app = Appearance::Planar(planar_render(4, 32));
        let items = [SceneItem {
            zone: zone(0.0),
            appearance: &app,
            label: 7,
        }];
        let (_, labels) = render(&WallStyle::new(1), &items, &Pose::frontal(0.5, 0.5, 2.0), 32);
        let c = labels.counts(7);
        // the artwork covers a quarter of the frame at twice the distance
        assert_eq!(c[7], 16 * 16);
        assert_eq!(c[0], 32 * 32 - 256);
    }

    #[test]
    fn nonplanar_silhouette_labels_only_opaque_pixels() {
        let app = Appearance::Nonplanar(nonplanar_views(2, 32));
        let items = [SceneItem {
            zone: zone(0.0),
            appearance: &app,
            label: 1,
        }];
        let (_, labels) = render(&WallStyle::new(1), &items, &Pose::frontal(0.5, 0.5, 1.0), 32);
        let c = labels.counts(1);
        assert!(c[1] > 0 && c[0] > 0);
        let Appearance::Nonplanar(views) = &app else { unreachable!() };
        let opaque = views[0].pixels().filter(|p| p.0[3] >= 128).count();
        assert_eq!(c[1], opaque);
    }

    #[test]
    fn yaw_and_roll_change_the_view() {
        let app = Appearance::Planar(planar_render(4, 32));
        let items = [SceneItem {
            zone: zone(0.0),
            appearance: &app,
            label: 1,
        }];
        let wall = WallStyle::new(1);
        let base = render(&wall, &items, &Pose::frontal(0.5, 0.5, 1.5), 32).0;
        let mut p = Pose::frontal(0.5, 0.5, 1.5);
        p.roll_deg = 10.0;
        assert_ne!(render(&wall, &items, &p, 32).0, base);
        p.roll_deg = 0.0;
        p.yaw_deg = 15.0;
        assert_ne!(render(&wall, &items, &p, 32).0, base);
    }
}
