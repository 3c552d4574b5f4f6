//! Leave-one-split-out fine-tuning with grid search on the remaining splits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::augment::{expand_training_set, AugmentPolicy};
use crate::dataset::{build_label_space, CaptureRecord, GalleryManifest, LabelSpace, SplitRole};
use crate::error::{Error, Result};
use crate::fsio::derive_seed;
use crate::imaging::{Image, ImageStore};
use crate::nn::{argmax, Params};
use crate::train::checkpoint::{Checkpoint, Stage};
use crate::train::trainer::{predict_images, replace_head, train, ConsumptionLog, EpochStats, HyperGrid, HyperParams, TrainSet};

/// The augmented training set of a manifest with labels mapped through
/// `space`.
pub fn manifest_train_set(
    manifest: &GalleryManifest,
    store: &ImageStore,
    policy: &AugmentPolicy,
    space: &LabelSpace,
    geom: crate::nn::InputGeometry,
    seed: u64,
) -> Result<TrainSet> {
    let samples = expand_training_set(manifest, store, policy, geom, seed)?;
    let mut set = TrainSet::default();
    for s in samples {
        let label = space.index_of(&s.label).ok_or_else(|| {
            Error::InvalidArgument(format!("training label {:?} is not in the label space", s.label))
        })?;
        set.images.push(s.image);
        set.labels.push(label);
        set.sources.push(s.source);
    }
    Ok(set)
}

/// Frames and records of one split, in record order.
pub fn load_split(manifest: &GalleryManifest, store: &ImageStore, name: &str) -> Result<(Vec<Image>, Vec<CaptureRecord>)> {
    let split = manifest
        .split(name)
        .ok_or_else(|| Error::InvalidArgument(format!("manifest has no split {name:?}")))?;
    let images = split
        .records
        .iter()
        .map(|r| Ok(store.get(&r.path)?.into_owned()))
        .collect::<Result<Vec<_>>>()?;
    Ok((images, split.records.clone()))
}

/// Number of records whose top-1 prediction is the most visible label.
fn top1_hits(scores: &[Vec<f32>], records: &[CaptureRecord], space: &LabelSpace) -> usize {
    scores
        .iter()
        .zip(records)
        .filter(|(s, r)| space.label(argmax(s)) == r.ordered_gt.first().map(String::as_str))
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOptions {
    pub grid: HyperGrid,
    pub seed: u64,
    /// Cross-validation folds; each is held out once. Empty means every
    /// split with role `test`.
    #[serde(default)]
    pub folds: Vec<String>,
    /// Train a separate trajectory per held-out split (fold-specific seed)
    /// instead of sharing one per learning rate.
    #[serde(default)]
    pub retrain_per_split: bool,
}

impl FinetuneOptions {
    pub fn new(grid: HyperGrid, seed: u64) -> Self {
        FinetuneOptions {
            grid,
            seed,
            folds: Vec::new(),
            retrain_per_split: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub lr: f32,
    pub epochs: u32,
    pub hits: usize,
    pub total: usize,
    pub top1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection {
    pub held_out: String,
    pub validated_on: Vec<String>,
    pub scores: Vec<GridScore>,
    /// Index into `scores`; ties go to the earliest grid point.
    pub selected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionLog {
    pub folds: Vec<FoldSelection>,
    /// Number of independent SGD trajectories that were run.
    pub training_runs: usize,
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub selection: FoldSelection,
    pub checkpoint: Checkpoint,
    /// Image ids that influenced this fold's parameters or its selection.
    pub consumed: ConsumptionLog,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub label_space: LabelSpace,
    pub folds: Vec<FoldResult>,
    pub log: SelectionLog,
    /// Loss/accuracy history of every trajectory, keyed by run label.
    pub histories: BTreeMap<String, Vec<EpochStats>>,
}

impl CvOutcome {
    pub fn fold(&self, held_out: &str) -> Option<&FoldResult> {
        self.folds.iter().find(|f| f.selection.held_out == held_out)
    }

    /// `(fold, id)` for every held-out record id that reached training or
    /// selection of its own fold.
    pub fn isolation_violations(&self, manifest: &GalleryManifest) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for f in &self.folds {
            let Some(split) = manifest.split(&f.selection.held_out) else { continue };
            for r in &split.records {
                if f.consumed.ids.contains(&r.path) {
                    out.push((f.selection.held_out.clone(), r.path.clone()));
                }
            }
        }
        out
    }
}

/// Per-split top-1 hit counts for every snapshot epoch of one trajectory.
struct Trajectory {
    label: String,
    hits: BTreeMap<u32, BTreeMap<String, usize>>,
    snapshots: BTreeMap<u32, Params>,
    consumed: ConsumptionLog,
    history: Vec<EpochStats>,
}

#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    start: &Checkpoint,
    set: &TrainSet,
    hyper: &HyperParams,
    seed: u64,
    snapshot_epochs: &BTreeSet<u32>,
    eval_splits: &[(String, Vec<Image>, Vec<CaptureRecord>)],
    space: &LabelSpace,
    label: String,
) -> Result<Trajectory> {
    let mut params = start.params.clone();
    let mut consumed = ConsumptionLog::default();
    let mut hits = BTreeMap::new();
    let mut snapshots = BTreeMap::new();
    let history = train(&start.spec, &mut params, set, hyper, seed, &mut consumed, |stats, p| {
        if snapshot_epochs.contains(&stats.epoch) {
            let mut per = BTreeMap::new();
            for (name, images, records) in eval_splits {
                let scores = predict_images(&start.spec, p, images)?;
                per.insert(name.clone(), top1_hits(&scores, records, space));
            }
            hits.insert(stats.epoch, per);
            snapshots.insert(stats.epoch, p.clone());
        }
        Ok(true)
    })?;
    Ok(Trajectory {
        label,
        hits,
        snapshots,
        consumed,
        history,
    })
}

/// For each fold: fine-tune every grid point from `pretrained`, score it by
/// top-1 on the union of the other folds and any `validation` splits, and
/// keep the best. The held-out split is never predicted on for its own fold.
///
/// Training data does not depend on the fold, so by default one trajectory
/// per learning rate is shared by all folds and the epoch axis of the grid is
/// read off snapshots of that trajectory.
pub fn finetune_cv(
    pretrained: &Checkpoint,
    manifest: &GalleryManifest,
    store: &ImageStore,
    opts: &FinetuneOptions,
) -> Result<CvOutcome> {
    opts.grid.validate()?;
    let folds: Vec<String> = if opts.folds.is_empty() {
        manifest
            .splits_with_role(SplitRole::Test)
            .iter()
            .map(|s| s.name.clone())
            .collect()
    } else {
        opts.folds.clone()
    };
    if folds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 2 splits, got {}",
            folds.len()
        )));
    }
    let extra: Vec<String> = manifest
        .splits_with_role(SplitRole::Validation)
        .iter()
        .map(|s| s.name.clone())
        .filter(|n| !folds.contains(n))
        .collect();

    let space = build_label_space(manifest);
    let labels = space.labels().to_vec();
    let start = replace_head(pretrained, space.len(), labels, opts.seed)?;
    let policy = opts.grid.base.augment.clone().unwrap_or_else(AugmentPolicy::identity);
    let set = manifest_train_set(manifest, store, &policy, &space, start.spec.input, derive_seed(opts.seed, "augment", 0))?;

    let mut eval_splits = Vec::new();
    for name in folds.iter().chain(&extra) {
        let (images, records) = load_split(manifest, store, name)?;
        eval_splits.push((name.clone(), images, records));
    }
    let snapshot_epochs: BTreeSet<u32> = opts.grid.epochs.iter().copied().collect();
    let max_epochs = *snapshot_epochs.iter().next_back().expect("grid validated");

    // trajectories[fold or shared][lr index]
    let mut per_fold: Vec<Vec<Trajectory>> = Vec::new();
    let mut histories = BTreeMap::new();
    let mut training_runs = 0;
    let groups: Vec<Option<usize>> = if opts.retrain_per_split {
        (0..folds.len()).map(Some).collect()
    } else {
        vec![None]
    };
    for g in &groups {
        let mut runs = Vec::new();
        for (li, &lr) in opts.grid.lrs.iter().enumerate() {
            let hyper = HyperParams {
                lr,
                epochs: max_epochs,
                ..opts.grid.base.clone()
            };
            let (seed, label, visible): (u64, String, Vec<_>) = match g {
                None => (opts.seed, format!("lr{li}"), eval_splits.iter().collect()),
                Some(f) => (
                    derive_seed(opts.seed, "fold", *f as u64),
                    format!("{}/lr{li}", folds[*f]),
                    eval_splits.iter().filter(|(n, _, _)| n != &folds[*f]).collect(),
                ),
            };
            let visible: Vec<_> = visible.into_iter().cloned().collect();
            let t = run_trajectory(&start, &set, &hyper, seed, &snapshot_epochs, &visible, &space, label)?;
            histories.insert(t.label.clone(), t.history.clone());
            training_runs += 1;
            runs.push(t);
        }
        per_fold.push(runs);
    }

    let points = opts.grid.points();
    let mut results = Vec::new();
    for (fi, held_out) in folds.iter().enumerate() {
        let runs = &per_fold[if opts.retrain_per_split { fi } else { 0 }];
        let validated_on: Vec<String> = folds
            .iter()
            .chain(&extra)
            .filter(|n| *n != held_out)
            .cloned()
            .collect();
        let total: usize = eval_splits
            .iter()
            .filter(|(n, _, _)| validated_on.contains(n))
            .map(|(_, _, r)| r.len())
            .sum();
        let mut scores = Vec::new();
        for p in &points {
            let li = opts.grid.lrs.iter().position(|&l| l == p.lr).expect("point from grid");
            let per = &runs[li].hits[&p.epochs];
            let hits: usize = validated_on.iter().map(|n| per[n]).sum();
            scores.push(GridScore {
                lr: p.lr,
                epochs: p.epochs,
                hits,
                total,
                top1: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            });
        }
        // every point shares the same validation set, so hit counts compare directly
        let mut selected = 0;
        for (i, s) in scores.iter().enumerate() {
            if s.hits > scores[selected].hits {
                selected = i;
            }
        }
        let best = &points[selected];
        let li = opts.grid.lrs.iter().position(|&l| l == best.lr).expect("point from grid");
        let run = &runs[li];
        let mut consumed = run.consumed.clone();
        for (name, _, records) in &eval_splits {
            if validated_on.contains(name) {
                consumed.ids.extend(records.iter().map(|r| r.path.clone()));
            }
        }
        let mut provenance = start.provenance.clone();
        provenance.stage = Stage::Finetuned;
        provenance.seed = opts.seed;
        provenance.epochs = best.epochs;
        provenance.hyper = best.clone();
        provenance.source_hash = manifest.content_hash();
        provenance.held_out = Some(held_out.clone());
        let checkpoint = Checkpoint::new(start.spec.clone(), run.snapshots[&best.epochs].clone(), provenance)?;
        results.push(FoldResult {
            selection: FoldSelection {
                held_out: held_out.clone(),
                validated_on,
                scores,
                selected,
            },
            checkpoint,
            consumed,
        });
    }
    let log = SelectionLog {
        folds: results.iter().map(|r| r.selection.clone()).collect(),
        training_runs,
    };
    Ok(CvOutcome {
        label_space: space,
        folds: results,
        log,
        histories,
    })
}
