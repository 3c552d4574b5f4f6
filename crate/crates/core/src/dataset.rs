//! Gallery manifests: the label universe, training-image inventory, capture
//! splits with ordered ground truth, and declared-count bookkeeping.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtworkKind {
    Planar,
    Nonplanar,
}

/// Placement on the gallery wall, in wall units (one unit is roughly the
/// width of a typical exhibit).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplayZone {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl DisplayZone {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x && u < self.x + self.width && v >= self.y && v < self.y + self.height
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtworkInstance {
    pub id: String,
    pub kind: ArtworkKind,
    pub display_zone: DisplayZone,
}

/// Non-instance classes. The declaration order is the fixed label order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxCategory {
    Background,
    Distractor,
    Descriptions,
}

impl AuxCategory {
    pub const ALL: [AuxCategory; 3] = [
        AuxCategory::Background,
        AuxCategory::Distractor,
        AuxCategory::Descriptions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuxCategory::Background => "background",
            AuxCategory::Distractor => "distractor",
            AuxCategory::Descriptions => "descriptions",
        }
    }

    pub fn parse(s: &str) -> Option<AuxCategory> {
        AuxCategory::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for AuxCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingImage {
    pub path: String,
    pub label: String,
    pub viewpoint: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureRecord {
    pub path: String,
    pub step: u64,
    /// Most visible first.
    pub ordered_gt: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    /// Wearable-camera captures used as cross-validation folds.
    Test,
    /// Extra captures that may only ever be used for model selection.
    Validation,
    /// Undegraded frontal captures.
    Clean,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub name: String,
    pub role: SplitRole,
    pub records: Vec<CaptureRecord>,
}

/// An expected image count. `sum_of` names the inventory groups it
/// covers: `instances` (training images of any instance), an auxiliary
/// category name (its training images), or `split:<name>` (records of a
/// split).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredTotal {
    pub name: String,
    pub count: usize,
    pub sum_of: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalleryManifest {
    pub instances: Vec<ArtworkInstance>,
    pub auxiliary_categories: Vec<AuxCategory>,
    pub training_images: Vec<TrainingImage>,
    pub splits: Vec<Split>,
    #[serde(default)]
    pub declared_totals: Vec<DeclaredTotal>,
}

pub const MIN_VIEWS: usize = 2;
pub const MAX_VIEWS: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl GalleryManifest {
    pub fn split(&self, name: &str) -> Option<&Split> {
        self.splits.iter().find(|s| s.name == name)
    }

    pub fn instance(&self, id: &str) -> Option<&ArtworkInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn splits_with_role(&self, role: SplitRole) -> Vec<&Split> {
        self.splits.iter().filter(|s| s.role == role).collect()
    }

    /// Size of one inventory group as used by `declared_totals`.
    pub fn group_size(&self, group: &str) -> Option<usize> {
        if group == "instances" {
            let ids: BTreeSet<&str> = self.instances.iter().map(|i| i.id.as_str()).collect();
            return Some(
                self.training_images
                    .iter()
                    .filter(|t| ids.contains(t.label.as_str()))
                    .count(),
            );
        }
        if let Some(name) = group.strip_prefix("split:") {
            return self.split(name).map(|s| s.records.len());
        }
        let aux = AuxCategory::parse(group)?;
        Some(
            self.training_images
                .iter()
                .filter(|t| t.label == aux.as_str())
                .count(),
        )
    }

    /// Hex sha256 of the compact JSON encoding; recorded in checkpoint
    /// provenance.
    pub fn content_hash(&self) -> String {
        fsio::sha256_hex(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

pub fn validate_manifest(m: &GalleryManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.instances.is_empty() {
        out.push(Violation::new("instances", "must contain at least one artwork"));
    }
    let mut ids = BTreeSet::new();
    for (i, inst) in m.instances.iter().enumerate() {
        let field = format!("instances[{i}]");
        if inst.id.is_empty() {
            out.push(Violation::new(format!("{field}.id"), "must not be empty"));
        } else if AuxCategory::parse(&inst.id).is_some() {
            out.push(Violation::new(
                format!("{field}.id"),
                format!("'{}' collides with an auxiliary category name", inst.id),
            ));
        } else if !ids.insert(inst.id.as_str()) {
            out.push(Violation::new(
                format!("{field}.id"),
                format!("duplicate id '{}'", inst.id),
            ));
        }
        let z = &inst.display_zone;
        if ![z.x, z.y, z.width, z.height].iter().all(|v| v.is_finite()) || z.width <= 0.0 || z.height <= 0.0 {
            out.push(Violation::new(
                format!("{field}.display_zone"),
                "must be finite with positive width and height",
            ));
        }
    }
    let mut aux = BTreeSet::new();
    for (i, c) in m.auxiliary_categories.iter().enumerate() {
        if !aux.insert(*c) {
            out.push(Violation::new(
                format!("auxiliary_categories[{i}]"),
                format!("duplicate category '{c}'"),
            ));
        }
    }
    let valid_label = |l: &str| ids.contains(l) || AuxCategory::parse(l).is_some_and(|c| aux.contains(&c));

    let mut views: BTreeMap<&str, usize> = ids.iter().map(|id| (*id, 0)).collect();
    for (i, t) in m.training_images.iter().enumerate() {
        if t.path.is_empty() {
            out.push(Violation::new(format!("training_images[{i}].path"), "must not be empty"));
        }
        if !valid_label(&t.label) {
            out.push(Violation::new(
                format!("training_images[{i}].label"),
                format!("'{}' is neither an instance id nor a declared auxiliary category", t.label),
            ));
        }
        if let Some(n) = views.get_mut(t.label.as_str()) {
            *n += 1;
        }
    }
    for (id, n) in &views {
        if !(MIN_VIEWS..=MAX_VIEWS).contains(n) {
            out.push(Violation::new(
                "training_images",
                format!("instance '{id}' has {n} training views, expected {MIN_VIEWS} to {MAX_VIEWS}"),
            ));
        }
    }

    let mut split_names = BTreeSet::new();
    for (si, s) in m.splits.iter().enumerate() {
        if s.name.is_empty() {
            out.push(Violation::new(format!("splits[{si}].name"), "must not be empty"));
        } else if !split_names.insert(s.name.as_str()) {
            out.push(Violation::new(
                format!("splits[{si}].name"),
                format!("duplicate split name '{}'", s.name),
            ));
        }
        for (ri, r) in s.records.iter().enumerate() {
            let field = format!("splits[{si}].records[{ri}]");
            if r.path.is_empty() {
                out.push(Violation::new(format!("{field}.path"), "must not be empty"));
            }
            if r.ordered_gt.is_empty() {
                out.push(Violation::new(format!("{field}.ordered_gt"), "must not be empty"));
            }
            let mut seen = BTreeSet::new();
            for l in &r.ordered_gt {
                if !valid_label(l) {
                    out.push(Violation::new(
                        format!("{field}.ordered_gt"),
                        format!("unknown label '{l}'"),
                    ));
                }
                if !seen.insert(l.as_str()) {
                    out.push(Violation::new(
                        format!("{field}.ordered_gt"),
                        format!("label '{l}' listed twice"),
                    ));
                }
            }
        }
    }

    for (di, d) in m.declared_totals.iter().enumerate() {
        let field = format!("declared_totals[{di}] ({})", d.name);
        let mut actual = 0;
        let mut resolvable = true;
        for g in &d.sum_of {
            match m.group_size(g) {
                Some(n) => actual += n,
                None => {
                    resolvable = false;
                    out.push(Violation::new(&field, format!("unknown inventory group '{g}'")));
                }
            }
        }
        if resolvable && actual != d.count {
            out.push(Violation::new(
                &field,
                format!("declared {} but the inventory holds {actual}", d.count),
            ));
        }
    }
    out
}

pub fn parse_manifest(json: &str, origin: &Path) -> Result<GalleryManifest> {
    let m: GalleryManifest = serde_json::from_str(json).map_err(|e| Error::json(origin, e))?;
    let violations = validate_manifest(&m);
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(Error::InvalidManifest(violations))
    }
}

pub fn load_manifest(path: &Path) -> Result<GalleryManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn save_manifest(m: &GalleryManifest, path: &Path) -> Result<()> {
    fsio::write_json_atomic(path, m)
}

/// Class labels in index order: instance ids sorted lexicographically, then
/// the declared auxiliary categories in their fixed order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    n_instances: usize,
}

impl LabelSpace {
    pub fn from_labels(instance_ids: &[String], aux: &[AuxCategory]) -> LabelSpace {
        let mut ids = instance_ids.to_vec();
        ids.sort();
        ids.dedup();
        let n_instances = ids.len();
        let mut aux = aux.to_vec();
        aux.sort();
        aux.dedup();
        let mut labels = ids;
        labels.extend(aux.iter().map(|c| c.as_str().to_string()));
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        LabelSpace {
            labels,
            index,
            n_instances,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_instances(&self) -> usize {
        self.n_instances
    }

    pub fn is_instance(&self, index: usize) -> bool {
        index < self.n_instances
    }
}

pub fn build_label_space(m: &GalleryManifest) -> LabelSpace {
    let ids: Vec<String> = m.instances.iter().map(|i| i.id.clone()).collect();
    LabelSpace::from_labels(&ids, &m.auxiliary_categories)
}

/// Count-only manifests for tests: instances with evenly spread training
/// views, and splits whose records cycle through the instances.
pub mod fixtures {
    use super::*;

    pub fn zone(i: usize) -> DisplayZone {
        DisplayZone {
            x: i as f64 * 1.5,
            y: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }

    /// `n_instances` instances whose training views add up to `instance_images`
    /// (spread as evenly as possible, so every count stays within 2..=6).
    pub fn counted(
        prefix: &str,
        kind: ArtworkKind,
        n_instances: usize,
        instance_images: usize,
        aux: &[(AuxCategory, usize)],
        splits: &[(&str, SplitRole, usize)],
    ) -> GalleryManifest {
        let instances: Vec<ArtworkInstance> = (0..n_instances)
            .map(|i| ArtworkInstance {
                id: format!("{prefix}{i:03}"),
                kind,
                display_zone: zone(i),
            })
            .collect();
        let mut training_images = Vec::new();
        for k in 0..instance_images {
            let inst = &instances[k % n_instances];
            training_images.push(TrainingImage {
                path: format!("images/train/{}_{}.png", inst.id, k / n_instances),
                label: inst.id.clone(),
                viewpoint: (k / n_instances) as u32,
            });
        }
        for &(cat, n) in aux {
            for k in 0..n {
                training_images.push(TrainingImage {
                    path: format!("images/train/{cat}_{k}.png"),
                    label: cat.as_str().into(),
                    viewpoint: 0,
                });
            }
        }
        let splits = splits
            .iter()
            .map(|&(name, role, n)| Split {
                name: name.into(),
                role,
                records: (0..n)
                    .map(|k| CaptureRecord {
                        path: format!("images/{name}/{k:04}.png"),
                        step: k as u64,
                        ordered_gt: vec![instances[k % n_instances].id.clone()],
                    })
                    .collect(),
            })
            .collect();
        GalleryManifest {
            instances,
            auxiliary_categories: aux.iter().map(|a| a.0).collect(),
            training_images,
            splits,
            declared_totals: Vec::new(),
        }
    }

    pub fn minimal() -> GalleryManifest {
        counted("art", ArtworkKind::Planar, 1, 2, &[], &[("s0", SplitRole::Test, 1)])
    }

    pub fn total(name: &str, count: usize, groups: &[&str]) -> DeclaredTotal {
        DeclaredTotal {
            name: name.into(),
            count,
            sum_of: groups.iter().map(|g| g.to_string()).collect(),
        }
    }

    pub fn paintings() -> GalleryManifest {
        let splits: Vec<(String, usize)> = [86, 93, 54, 86, 91, 105]
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("volunteer{}", i + 1), n))
            .collect();
        let split_refs: Vec<(&str, SplitRole, usize)> =
            splits.iter().map(|(n, c)| (n.as_str(), SplitRole::Test, *c)).collect();
        let mut m = counted(
            "painting",
            ArtworkKind::Planar,
            79,
            369,
            &[(AuxCategory::Background, 27), (AuxCategory::Distractor, 170)],
            &split_refs,
        );
        m.declared_totals = vec![
            total("training", 566, &["instances", "background", "distractor"]),
            total("instance images", 369, &["instances"]),
            total(
                "testing",
                515,
                &splits.iter().map(|(n, _)| format!("split:{n}")).collect::<Vec<_>>().iter().map(String::as_str).collect::<Vec<_>>(),
            ),
        ];
        m
    }

    pub fn clocks() -> GalleryManifest {
        let mut m = counted(
            "clock",
            ArtworkKind::Nonplanar,
            113,
            394,
            &[(AuxCategory::Background, 27)],
            &[
                ("android", SplitRole::Validation, 259),
                ("pocket", SplitRole::Test, 182),
                ("handbag", SplitRole::Test, 141),
            ],
        );
        m.declared_totals = vec![
            total("training", 653, &["instances", "split:android"]),
            total("backgrounds", 27, &["background"]),
            total("testing", 323, &["split:pocket", "split:handbag"]),
        ];
        m
    }

    pub fn sculptures() -> GalleryManifest {
        let mut m = counted(
            "sculpture",
            ArtworkKind::Nonplanar,
            44,
            206,
            &[(AuxCategory::Background, 27), (AuxCategory::Descriptions, 12)],
            &[("clockwise", SplitRole::Test, 80), ("counterclockwise", SplitRole::Test, 50)],
        );
        m.declared_totals = vec![
            total("training", 233, &["instances", "background"]),
            total("testing", 130, &["split:clockwise", "split:counterclockwise"]),
        ];
        m
    }
}
