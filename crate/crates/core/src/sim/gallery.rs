//! Synthetic galleries: procedural artworks laid out on a wall, their
//! training photographs, and auxiliary-category images.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    ArtworkInstance, ArtworkKind, AuxCategory, DeclaredTotal, DisplayZone, GalleryManifest,
    TrainingImage, MAX_VIEWS, MIN_VIEWS,
};
use crate::error::{Error, Result};
use crate::fsio::derive_seed;
use crate::imaging::{Image, ImageStore};
use crate::sim::scene::{render, Appearance, Pose, SceneItem, WallStyle};
use crate::sim::texture::{nonplanar_views, planar_render, plaque_render, CANONICAL_VIEWS};

/// Largest gallery the generator accepts; beyond this, texture-seed
/// collisions stop being negligible.
pub const MAX_INSTANCES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewSampling {
    /// Training photographs cover distinct canonical views.
    AllViews,
    /// Only the front is ever photographed (pieces behind glass).
    FrontalOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalleryParams {
    pub n_instances: usize,
    /// Fraction of instances that are non-planar.
    pub nonplanar_fraction: f64,
    pub image_size: u32,
    pub id_prefix: String,
    pub views_min: usize,
    pub views_max: usize,
    /// Scales the viewpoint/distance spread of training photographs; 0
    /// gives frontal shots only.
    pub viewpoint_jitter: f64,
    pub nonplanar_views: ViewSampling,
    pub n_background: usize,
    pub n_distractor: usize,
    pub n_descriptions: usize,
    /// Empty wall between neighbouring display zones, in artwork widths.
    pub zone_gap: f64,
}

impl Default for GalleryParams {
    fn default() -> Self {
        GalleryParams {
            n_instances: 20,
            nonplanar_fraction: 0.0,
            image_size: 64,
            id_prefix: "art".into(),
            views_min: MIN_VIEWS,
            views_max: MAX_VIEWS,
            viewpoint_jitter: 1.0,
            nonplanar_views: ViewSampling::AllViews,
            n_background: 8,
            n_distractor: 0,
            n_descriptions: 0,
            zone_gap: 0.6,
        }
    }
}

impl GalleryParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_instances == 0 {
            return bad("a gallery needs at least one instance".into());
        }
        if self.n_instances > MAX_INSTANCES {
            return bad(format!(
                "{} instances exceeds the distinctness budget of {MAX_INSTANCES}",
                self.n_instances
            ));
        }
        if !(0.0..=1.0).contains(&self.nonplanar_fraction) {
            return bad("nonplanar_fraction must lie in [0, 1]".into());
        }
        if self.image_size < 8 {
            return bad(format!("image_size {} is below the 8-pixel minimum", self.image_size));
        }
        if !(MIN_VIEWS <= self.views_min && self.views_min <= self.views_max && self.views_max <= MAX_VIEWS) {
            return bad(format!(
                "views range {}..={} must lie within {MIN_VIEWS}..={MAX_VIEWS}",
                self.views_min, self.views_max
            ));
        }
        if !(0.0..=2.0).contains(&self.viewpoint_jitter) {
            return bad("viewpoint_jitter must lie in [0, 2]".into());
        }
        if self.zone_gap < 0.0 || !self.zone_gap.is_finite() {
            return bad("zone_gap must be non-negative".into());
        }
        if self.n_background == 0 {
            return bad("at least one background image is needed for the background class".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticArtwork {
    pub id: String,
    pub kind: ArtworkKind,
    pub texture_seed: u64,
    /// One face for planar pieces, [`CANONICAL_VIEWS`] for non-planar ones.
    pub appearance: Appearance,
    pub zone: DisplayZone,
}

impl SyntheticArtwork {
    pub fn new(id: String, kind: ArtworkKind, texture_seed: u64, size: u32, zone: DisplayZone) -> Self {
        let appearance = match kind {
            ArtworkKind::Planar => Appearance::Planar(planar_render(texture_seed, size)),
            ArtworkKind::Nonplanar => Appearance::Nonplanar(nonplanar_views(texture_seed, size)),
        };
        SyntheticArtwork {
            id,
            kind,
            texture_seed,
            appearance,
            zone,
        }
    }

    /// Frontal canonical render on the given wall, filling the frame.
    pub fn base_render(&self, wall: &WallStyle, size: u32) -> Image {
        render_single(wall, &self.appearance, &Pose::frontal(0.5, 0.5, 1.0), size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewJitter {
    pub max_yaw_deg: f64,
    pub max_roll_deg: f64,
    pub max_extra_distance: f64,
    pub max_offset: f64,
}

impl ViewJitter {
    pub fn scaled(j: f64) -> ViewJitter {
        ViewJitter {
            max_yaw_deg: 25.0 * j,
            max_roll_deg: 8.0 * j,
            max_extra_distance: 1.2 * j,
            max_offset: 0.08 * j,
        }
    }

    /// With `stratum = (k, n)` the extra distance is drawn from the k-th of
    /// n equal slices of its range, so a handful of views still spans it.
    fn sample(&self, rng: &mut ChaCha8Rng, stratum: Option<(usize, usize)>) -> Pose {
        let mut sym = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        let (ox, oy, yaw, roll) = (sym(self.max_offset), sym(self.max_offset), sym(self.max_yaw_deg), sym(self.max_roll_deg));
        let extra = if self.max_extra_distance > 0.0 {
            let u = rng.random_range(0.0..=1.0);
            match stratum {
                Some((k, n)) => self.max_extra_distance * (k as f64 + u) / n as f64,
                None => self.max_extra_distance * u,
            }
        } else {
            0.0
        };
        Pose {
            cx: 0.5 + ox,
            cy: 0.5 + oy,
            distance: 1.0 + extra,
            yaw_deg: yaw,
            roll_deg: roll,
            orbit: 0,
        }
    }
}

fn unit_zone() -> DisplayZone {
    DisplayZone {
        x: 0.0,
        y: 0.0,
        width: 1.0,
        height: 1.0,
    }
}

fn render_single(wall: &WallStyle, app: &Appearance, pose: &Pose, size: u32) -> Image {
    let items = [SceneItem {
        zone: unit_zone(),
        appearance: app,
        label: 1,
    }];
    render(wall, &items, pose, size).0
}

/// Photographs of one artwork from `n_views` viewpoints. View 0 is the
/// exact frontal shot; the others jitter angle, roll, distance and
/// centering, and non-planar pieces additionally change canonical view
/// unless `sampling` is frontal-only.
pub fn render_training_views(
    art: &SyntheticArtwork,
    n_views: usize,
    jitter: ViewJitter,
    sampling: ViewSampling,
    wall: &WallStyle,
    size: u32,
    seed: u64,
) -> Result<Vec<Image>> {
    if !(MIN_VIEWS..=MAX_VIEWS).contains(&n_views) {
        return Err(Error::InvalidArgument(format!(
            "{n_views} training views requested, expected {MIN_VIEWS} to {MAX_VIEWS}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orbits: Vec<i32> = (1..CANONICAL_VIEWS as i32).collect();
    orbits.shuffle(&mut rng);
    let mut views = vec![render_single(wall, &art.appearance, &Pose::frontal(0.5, 0.5, 1.0), size)];
    for k in 1..n_views {
        let mut pose = jitter.sample(&mut rng, Some((k - 1, n_views - 1)));
        if art.kind == ArtworkKind::Nonplanar && sampling == ViewSampling::AllViews {
            pose.orbit = orbits[k - 1];
        }
        views.push(render_single(wall, &art.appearance, &pose, size));
    }
    Ok(views)
}

/// A generated gallery: its manifest, the procedural artworks behind it and
/// every rendered training image.
#[derive(Clone, Debug)]
pub struct Gallery {
    pub params: GalleryParams,
    pub seed: u64,
    pub wall: WallStyle,
    pub artworks: Vec<SyntheticArtwork>,
    pub manifest: GalleryManifest,
    pub images: ImageStore,
}

impl Gallery {
    pub fn artwork(&self, id: &str) -> Option<&SyntheticArtwork> {
        self.artworks.iter().find(|a| a.id == id)
    }
}

pub fn generate_gallery(params: &GalleryParams, seed: u64) -> Result<Gallery> {
    params.validate()?;
    let n = params.n_instances;
    let size = params.image_size;
    let wall = WallStyle::new(derive_seed(seed, "wall", 0));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "layout", 0));
    let n_nonplanar = (params.nonplanar_fraction * n as f64).round() as usize;
    let mut kinds: Vec<ArtworkKind> = (0..n)
        .map(|i| if i < n_nonplanar { ArtworkKind::Nonplanar } else { ArtworkKind::Planar })
        .collect();
    kinds.shuffle(&mut rng);
    let view_counts: Vec<usize> = (0..n)
        .map(|_| rng.random_range(params.views_min..=params.views_max))
        .collect();

    let artworks: Vec<SyntheticArtwork> = (0..n)
        .into_par_iter()
        .map(|i| {
            let zone = DisplayZone {
                x: i as f64 * (1.0 + params.zone_gap),
                y: 0.0,
                width: 1.0,
                height: 1.0,
            };
            SyntheticArtwork::new(
                format!("{}{i:04}", params.id_prefix),
                kinds[i],
                derive_seed(seed, "texture", i as u64),
                size,
                zone,
            )
        })
        .collect();

    let jitter = ViewJitter::scaled(params.viewpoint_jitter);
    let per_art: Vec<Vec<Image>> = artworks
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            render_training_views(
                a,
                view_counts[i],
                jitter,
                params.nonplanar_views,
                &wall,
                size,
                derive_seed(seed, "views", i as u64),
            )
        })
        .collect::<Result<_>>()?;

    let mut store = ImageStore::in_memory();
    let mut training_images = Vec::new();
    for (a, views) in artworks.iter().zip(per_art) {
        for (k, img) in views.into_iter().enumerate() {
            let path = format!("images/train/{}_v{k}.png", a.id);
            training_images.push(TrainingImage {
                path: path.clone(),
                label: a.id.clone(),
                viewpoint: k as u32,
            });
            store.insert(path, img);
        }
    }

    let mut aux = vec![AuxCategory::Background];
    let aux_jobs: Vec<(AuxCategory, usize)> = [
        (AuxCategory::Background, params.n_background),
        (AuxCategory::Distractor, params.n_distractor),
        (AuxCategory::Descriptions, params.n_descriptions),
    ]
    .into_iter()
    .filter(|&(_, count)| count > 0)
    .flat_map(|(cat, count)| (0..count).map(move |k| (cat, k)))
    .collect();
    for cat in [AuxCategory::Distractor, AuxCategory::Descriptions] {
        if aux_jobs.iter().any(|j| j.0 == cat) {
            aux.push(cat);
        }
    }
    let aux_images: Vec<Image> = aux_jobs
        .par_iter()
        .map(|&(cat, k)| render_aux(cat, k, &wall, jitter, size, seed))
        .collect();
    for ((cat, k), img) in aux_jobs.into_iter().zip(aux_images) {
        let path = format!("images/train/{cat}_{k:03}.png");
        training_images.push(TrainingImage {
            path: path.clone(),
            label: cat.as_str().into(),
            viewpoint: 0,
        });
        store.insert(path, img);
    }

    let mut sum_of = vec!["instances".to_string()];
    sum_of.extend(aux.iter().map(|c| c.as_str().to_string()));
    let manifest = GalleryManifest {
        instances: artworks
            .iter()
            .map(|a| ArtworkInstance {
                id: a.id.clone(),
                kind: a.kind,
                display_zone: a.zone,
            })
            .collect(),
        auxiliary_categories: aux,
        declared_totals: vec![DeclaredTotal {
            name: "training".into(),
            count: training_images.len(),
            sum_of,
        }],
        training_images,
        splits: Vec::new(),
    };
    Ok(Gallery {
        params: params.clone(),
        seed,
        wall,
        artworks,
        manifest,
        images: store,
    })
}

fn render_aux(cat: AuxCategory, k: usize, wall: &WallStyle, jitter: ViewJitter, size: u32, seed: u64) -> Image {
    let item_seed = derive_seed(seed, cat.as_str(), k as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
    match cat {
        AuxCategory::Background => {
            // empty stretches of wall, floor and ceiling from assorted poses;
            // a third look down the way a walking visitor's camera does
            let down = if rng.random_bool(1.0 / 3.0) {
                rng.random_range(1.9..2.6)
            } else {
                0.0
            };
            let pose = Pose {
                cx: rng.random_range(-20.0..20.0),
                cy: rng.random_range(0.0..1.3) + down,
                distance: rng.random_range(0.8..2.6),
                yaw_deg: rng.random_range(-30.0..30.0),
                roll_deg: rng.random_range(-10.0..10.0),
                orbit: 0,
            };
            render(wall, &[], &pose, size).0
        }
        AuxCategory::Distractor => {
            let app = Appearance::Planar(planar_render(rng.random(), size));
            render_single(wall, &app, &jitter.sample(&mut rng, None), size)
        }
        AuxCategory::Descriptions => {
            let app = Appearance::Planar(plaque_render(rng.random(), size));
            let mut pose = jitter.sample(&mut rng, None);
            pose.distance += rng.random_range(0.2..0.8);
            render_single(wall, &app, &pose, size)
        }
    }
}
