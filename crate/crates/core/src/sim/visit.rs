//! Simulated wearable-camera visits: a walk past the gallery wall with
//! periodic captures, each frame degraded and annotated with the visible
//! artworks ordered by projected area.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AuxCategory, CaptureRecord, Split, SplitRole};
use crate::error::{Error, Result};
use crate::fsio::derive_seed;
use crate::imaging::ImageStore;
use crate::sim::degrade::{apply_degradations_labeled, DegradationConfig, Effect};
use crate::sim::gallery::Gallery;
use crate::sim::scene::{render, LabelMap, Pose, SceneItem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkPattern {
    /// Left to right along the wall.
    LinearRoute,
    /// Around the room in a direction picked by the seed.
    PerimeterLoop,
    /// Back and forth between neighbouring pieces.
    Zigzag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisitPlan {
    pub walk: WalkPattern,
    /// Steps spent in front of each piece, drawn uniformly.
    pub dwell_min: u32,
    pub dwell_max: u32,
    pub capture_interval_steps: u32,
    /// Wall units covered per step between pieces.
    pub walk_speed: f64,
    pub approach_min: f64,
    pub approach_max: f64,
    pub lateral_jitter: f64,
    /// Camera mount height relative to the artwork centers.
    pub height_offset: f64,
    pub yaw_jitter_deg: f64,
    pub roll_bias_deg: f64,
    pub roll_jitter_deg: f64,
    /// Canonical views of a non-planar piece seen while dwelling:
    /// `-view_spread..=view_spread` around the front.
    pub view_spread: i32,
    /// Smallest visible area, as a fraction of the frame, for a piece to
    /// enter the ground truth.
    pub min_visible_fraction: f64,
    /// Chance that a frame taken while walking points down at the floor.
    #[serde(default)]
    pub glance_prob: f64,
}

impl Default for VisitPlan {
    fn default() -> Self {
        VisitPlan {
            walk: WalkPattern::LinearRoute,
            dwell_min: 3,
            dwell_max: 6,
            capture_interval_steps: 1,
            walk_speed: 0.8,
            approach_min: 1.3,
            approach_max: 1.9,
            lateral_jitter: 0.15,
            height_offset: 0.0,
            yaw_jitter_deg: 8.0,
            roll_bias_deg: 0.0,
            roll_jitter_deg: 4.0,
            view_spread: 0,
            min_visible_fraction: 0.02,
            glance_prob: 0.15,
        }
    }
}

impl VisitPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("visit plan: {m}")));
        if self.capture_interval_steps < 1 {
            return bad("capture_interval_steps must be at least 1");
        }
        if self.dwell_min < 1 || self.dwell_min > self.dwell_max {
            return bad("dwell range must satisfy 1 <= dwell_min <= dwell_max");
        }
        if !(self.walk_speed > 0.0) {
            return bad("walk_speed must be positive");
        }
        if !(self.approach_min > 0.0 && self.approach_min <= self.approach_max) {
            return bad("approach range must satisfy 0 < approach_min <= approach_max");
        }
        if !(self.min_visible_fraction > 0.0 && self.min_visible_fraction < 1.0) {
            return bad("min_visible_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.glance_prob) {
            return bad("glance_prob must lie in [0, 1]");
        }
        if self.view_spread < 0 {
            return bad("view_spread must be non-negative");
        }
        Ok(())
    }
}

/// One JSON-lines record of the effects log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub split: String,
    pub frame: usize,
    pub step: u64,
    pub path: String,
    pub pose: Pose,
    /// Visible pixel area per piece after degradation, ground-truth order.
    pub visible: Vec<(String, usize)>,
    pub effects: Vec<Effect>,
}

#[derive(Clone, Debug)]
pub struct SimulatedSplit {
    pub split: Split,
    pub images: ImageStore,
    pub log: Vec<FrameLog>,
}

/// Visible pieces by descending area (ties by id), ignoring those below
/// `min_fraction` of the frame.
pub fn visibility_order(labels: &LabelMap, ids: &[String], min_fraction: f64) -> Vec<(String, usize)> {
    let counts = labels.counts(ids.len());
    let min = (min_fraction * labels.data.len() as f64).ceil() as usize;
    let mut vis: Vec<(String, usize)> = ids
        .iter()
        .enumerate()
        .filter(|&(i, _)| counts[i + 1] >= min.max(1))
        .map(|(i, id)| (id.clone(), counts[i + 1]))
        .collect();
    vis.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    vis
}

fn route(n: usize, walk: WalkPattern, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match walk {
        WalkPattern::LinearRoute => (0..n).collect(),
        WalkPattern::PerimeterLoop => {
            if rng.random_bool(0.5) {
                (0..n).collect()
            } else {
                (0..n).rev().collect()
            }
        }
        WalkPattern::Zigzag => {
            let mut r: Vec<usize> = (0..n).collect();
            for pair in r.chunks_mut(2) {
                pair.reverse();
            }
            r
        }
    }
}

fn walk_poses(gallery: &Gallery, plan: &VisitPlan, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let stops = route(gallery.artworks.len(), plan.walk, rng);
    let sym = |rng: &mut ChaCha8Rng, m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let mut poses = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &i in &stops {
        let (cx, cy) = gallery.artworks[i].zone.center();
        if let Some((px, py)) = prev {
            // the epsilon keeps exact multiples of the stride from gaining a step
            let steps = ((cx - px).abs() / plan.walk_speed - 1e-9).ceil() as usize;
            for k in 1..steps {
                let t = k as f64 / steps as f64;
                let glance = if plan.glance_prob > 0.0 && rng.random_bool(plan.glance_prob) {
                    rng.random_range(1.9..2.6)
                } else {
                    0.0
                };
                poses.push(Pose {
                    cx: px + t * (cx - px),
                    cy: py + t * (cy - py) + plan.height_offset + glance,
                    distance: plan.approach_max * 1.15,
                    yaw_deg: sym(rng, plan.yaw_jitter_deg),
                    roll_deg: plan.roll_bias_deg + sym(rng, plan.roll_jitter_deg),
                    orbit: 0,
                });
            }
        }
        let dwell = rng.random_range(plan.dwell_min..=plan.dwell_max);
        for _ in 0..dwell {
            poses.push(Pose {
                cx: cx + sym(rng, plan.lateral_jitter),
                cy: cy + plan.height_offset + sym(rng, plan.lateral_jitter * 0.5),
                distance: rng.random_range(plan.approach_min..=plan.approach_max),
                yaw_deg: sym(rng, plan.yaw_jitter_deg),
                roll_deg: plan.roll_bias_deg + sym(rng, plan.roll_jitter_deg),
                orbit: rng.random_range(-plan.view_spread..=plan.view_spread),
            });
        }
        prev = Some((cx, cy));
    }
    poses
}

/// Render, degrade and annotate one frame; `Err` only on configuration
/// problems.
fn capture(
    gallery: &Gallery,
    pose: &Pose,
    degradation: &DegradationConfig,
    min_visible: f64,
    seed: u64,
) -> Result<(crate::imaging::Image, Vec<(String, usize)>, Vec<Effect>)> {
    let size = gallery.params.image_size;
    // pieces outside the widest possible view cannot contribute
    let reach = pose.distance * 2.0 + 2.0;
    let items: Vec<SceneItem<'_>> = gallery
        .artworks
        .iter()
        .enumerate()
        .filter(|(_, a)| (a.zone.center().0 - pose.cx).abs() <= reach)
        .map(|(i, a)| SceneItem {
            zone: a.zone,
            appearance: &a.appearance,
            label: (i + 1) as u16,
        })
        .collect();
    let (img, mut labels) = render(&gallery.wall, &items, pose, size);
    let (img, effects) = apply_degradations_labeled(&img, &mut labels, degradation, seed)?;
    let ids: Vec<String> = gallery.artworks.iter().map(|a| a.id.clone()).collect();
    Ok((img, visibility_order(&labels, &ids, min_visible), effects))
}

fn assemble(
    gallery: &Gallery,
    name: &str,
    role: SplitRole,
    frames: Vec<(u64, Pose, crate::imaging::Image, Vec<(String, usize)>, Vec<Effect>)>,
) -> Result<SimulatedSplit> {
    if !gallery.manifest.auxiliary_categories.contains(&AuxCategory::Background) {
        return Err(Error::InvalidArgument(
            "visits need a background category for frames without artwork".into(),
        ));
    }
    let mut images = ImageStore::in_memory();
    let mut records = Vec::with_capacity(frames.len());
    let mut log = Vec::with_capacity(frames.len());
    for (k, (step, pose, img, visible, effects)) in frames.into_iter().enumerate() {
        let path = format!("images/{name}/frame_{k:04}.png");
        let ordered_gt = if visible.is_empty() {
            vec![AuxCategory::Background.as_str().to_string()]
        } else {
            visible.iter().map(|v| v.0.clone()).collect()
        };
        records.push(CaptureRecord {
            path: path.clone(),
            step,
            ordered_gt,
        });
        images.insert(path.clone(), img);
        log.push(FrameLog {
            split: name.into(),
            frame: k,
            step,
            path,
            pose,
            visible,
            effects,
        });
    }
    Ok(SimulatedSplit {
        split: Split {
            name: name.into(),
            role,
            records,
        },
        images,
        log,
    })
}

pub fn simulate_visit(
    gallery: &Gallery,
    name: &str,
    role: SplitRole,
    plan: &VisitPlan,
    degradation: &DegradationConfig,
    seed: u64,
) -> Result<SimulatedSplit> {
    if gallery.artworks.is_empty() {
        return Err(Error::InvalidArgument("cannot visit an empty gallery".into()));
    }
    plan.validate()?;
    degradation.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "walk", 0));
    let poses = walk_poses(gallery, plan, &mut rng);
    let captured: Vec<(u64, Pose)> = poses
        .into_iter()
        .enumerate()
        .filter(|(step, _)| step % plan.capture_interval_steps as usize == 0)
        .map(|(step, p)| (step as u64, p))
        .collect();
    let frames = captured
        .par_iter()
        .enumerate()
        .map(|(k, &(step, pose))| {
            let (img, vis, eff) = capture(
                gallery,
                &pose,
                degradation,
                plan.min_visible_fraction,
                derive_seed(seed, "frame", k as u64),
            )?;
            Ok((step, pose, img, vis, eff))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(gallery, name, role, frames)
}

/// One undegraded frontal capture per piece, `distance` away.
pub fn simulate_clean_split(gallery: &Gallery, name: &str, distance: f64) -> Result<SimulatedSplit> {
    if gallery.artworks.is_empty() {
        return Err(Error::InvalidArgument("cannot visit an empty gallery".into()));
    }
    let none = DegradationConfig::none();
    let frames = gallery
        .artworks
        .par_iter()
        .enumerate()
        .map(|(k, a)| {
            let (cx, cy) = a.zone.center();
            let pose = Pose::frontal(cx, cy, distance);
            let (img, vis, eff) = capture(gallery, &pose, &none, 0.02, 0)?;
            Ok((k as u64, pose, img, vis, eff))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(gallery, name, SplitRole::Clean, frames)
}

pub fn write_effects_log(log: &[FrameLog], path: &std::path::Path) -> Result<()> {
    let mut out = Vec::new();
    for rec in log {
        serde_json::to_writer(&mut out, rec).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
    }
    crate::fsio::write_atomic(path, &out)
}

pub fn read_effects_log(path: &std::path::Path) -> Result<Vec<FrameLog>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}
