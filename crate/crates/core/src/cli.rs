//! Command-line front end: every pipeline stage as a subcommand over a fixed
//! output layout (`manifests/`, `images/`, `checkpoints/`, `reports/`).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{build_label_space, load_manifest, save_manifest, GalleryManifest, SplitRole};
use crate::error::{Error, Result};
use crate::eval::{read_report, write_report, EvalReport, Prediction, SplitPredictions};
use crate::fsio::{derive_seed, read_json, write_json_atomic};
use crate::imaging::ImageStore;
use crate::sim::visit::write_effects_log;
use crate::sim::{build_scenario, generate_gallery, Preset, Scenario};
use crate::train::{
    finetune_cv, load_checkpoint, load_split, predict_images, pretrain, save_checkpoint, FinetuneOptions,
    ShapeDataset,
};

#[derive(Debug, Parser)]
#[command(name = "gscope", version, about = "Artwork identification from simulated wearable-camera visits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    #[arg(long, global = true)]
    pub instances: Option<usize>,
    /// Training photographs per instance.
    #[arg(long, global = true)]
    pub views: Option<usize>,
    /// Comma-separated learning rates for the fine-tuning grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub lr: Option<Vec<f32>>,
    /// Comma-separated epoch counts for the fine-tuning grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub epochs: Option<Vec<u32>>,
    #[arg(long, global = true)]
    pub pretrain_epochs: Option<u32>,
    #[arg(long, global = true)]
    pub pretrain_images: Option<usize>,
    #[arg(long, global = true)]
    pub max_k: Option<usize>,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse::<Preset>().map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the gallery and its training photographs.
    GenGallery,
    /// Simulate the camera splits over a generated gallery.
    GenVisit,
    /// Pre-train the network on the generic shape set.
    Pretrain,
    /// Leave-one-split-out fine-tuning with grid search.
    Finetune,
    /// Predict every test and clean split with its fold's checkpoint.
    Predict,
    /// Score predictions against the manifest.
    Evaluate,
    /// Render evaluation reports as JSON, CSV and SVG.
    Report,
    /// All stages in order, once per configured seed.
    FullRun,
}

impl CommonArgs {
    /// Config file (or defaults) with the flags applied.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            c.out = Some(o.clone());
        }
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if let Some(p) = self.preset {
            c.preset = p;
            c.scenario = None;
        }
        if let Some(n) = self.instances {
            c.instances = Some(n);
        }
        if let Some(v) = self.views {
            c.views = Some(v);
        }
        if let Some(l) = &self.lr {
            c.grid.lrs = l.clone();
        }
        if let Some(e) = &self.epochs {
            c.grid.epochs = e.clone();
        }
        if let Some(e) = self.pretrain_epochs {
            c.pretrain.epochs = e;
        }
        if let Some(n) = self.pretrain_images {
            c.pretrain_images = n;
        }
        if let Some(k) = self.max_k {
            c.max_k = k;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Fixed locations of every artifact under an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Layout {
        Layout { root: root.into() }
    }

    pub fn manifests(&self) -> PathBuf {
        self.root.join("manifests")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn scenario(&self) -> PathBuf {
        self.manifests().join("scenario.json")
    }
    pub fn gallery_manifest(&self) -> PathBuf {
        self.manifests().join("gallery.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.manifests().join("manifest.json")
    }
    pub fn effects(&self) -> PathBuf {
        self.manifests().join("effects.jsonl")
    }
    pub fn pretrained(&self) -> PathBuf {
        self.checkpoints().join("pretrained.gsck")
    }
    pub fn finetuned(&self, held_out: &str) -> PathBuf {
        self.checkpoints().join(format!("finetuned_{held_out}.gsck"))
    }
    pub fn selection_log(&self) -> PathBuf {
        self.reports().join("selection_log.json")
    }
    pub fn predictions(&self, split: &str) -> PathBuf {
        self.reports().join("predictions").join(format!("{split}.json"))
    }
    pub fn eval(&self, group: &str) -> PathBuf {
        self.reports().join(format!("eval_{group}.json"))
    }
}

fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput {
            path: path.to_path_buf(),
            producer,
        })
    }
}

/// What `gen-gallery` hands to `gen-visit`: the scenario and seed needed to
/// re-derive the procedural artworks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub seed: u64,
    pub scenario: Scenario,
}

pub fn gen_gallery(cfg: &ExperimentConfig, seed: u64, layout: &Layout) -> Result<GalleryManifest> {
    let scenario = cfg.resolved_scenario();
    let gallery = generate_gallery(&scenario.gallery, derive_seed(seed, "gallery", 0))?;
    gallery.images.write_all(&layout.root)?;
    save_manifest(&gallery.manifest, &layout.gallery_manifest())?;
    write_json_atomic(&layout.scenario(), &ScenarioRecord { seed, scenario })?;
    Ok(gallery.manifest)
}

pub fn gen_visit(layout: &Layout) -> Result<GalleryManifest> {
    require(&layout.scenario(), "gen-gallery")?;
    require(&layout.gallery_manifest(), "gen-gallery")?;
    let rec: ScenarioRecord = read_json(&layout.scenario())?;
    let gallery = load_manifest(&layout.gallery_manifest())?;
    let data = build_scenario(&rec.scenario, rec.seed)?;
    let mut regenerated = data.manifest().clone();
    regenerated.splits.clear();
    if regenerated.content_hash() != gallery.content_hash() {
        return Err(Error::InvalidArgument(format!(
            "{} no longer matches {}; re-run gen-gallery",
            layout.gallery_manifest().display(),
            layout.scenario().display()
        )));
    }
    // training photographs are already on disk
    let mut visits = ImageStore::in_memory();
    for split in &data.manifest().splits {
        for r in &split.records {
            visits.insert(r.path.clone(), data.images.get(&r.path)?.into_owned());
        }
    }
    visits.write_all(&layout.root)?;
    write_effects_log(&data.effects, &layout.effects())?;
    save_manifest(data.manifest(), &layout.manifest())?;
    Ok(data.manifest().clone())
}

pub fn run_pretrain(cfg: &ExperimentConfig, seed: u64, layout: &Layout) -> Result<()> {
    let spec = cfg.pretrain_spec()?;
    let ds = ShapeDataset::generate(cfg.pretrain_images, spec.input.width as u32, derive_seed(seed, "shapes", 0))?;
    let (ckpt, history) = pretrain(&spec, &ds, &cfg.pretrain, seed)?;
    save_checkpoint(&ckpt, &layout.pretrained())?;
    write_json_atomic(&layout.reports().join("pretrain_history.json"), &history)
}

/// Per-fold audit of which held-out records reached training or selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvAudit {
    pub folds: Vec<FoldAudit>,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub held_out: String,
    pub consumed_ids: usize,
    pub violating_ids: Vec<String>,
}

pub fn run_finetune(cfg: &ExperimentConfig, seed: u64, layout: &Layout) -> Result<CvAudit> {
    require(&layout.manifest(), "gen-visit")?;
    require(&layout.pretrained(), "pretrain")?;
    let manifest = load_manifest(&layout.manifest())?;
    let pretrained = load_checkpoint(&layout.pretrained())?;
    let store = ImageStore::on_disk(&layout.root);
    let opts = FinetuneOptions {
        grid: cfg.grid.clone(),
        seed,
        folds: cfg.folds.clone(),
        retrain_per_split: cfg.retrain_per_split,
    };
    let outcome = finetune_cv(&pretrained, &manifest, &store, &opts)?;
    for f in &outcome.folds {
        save_checkpoint(&f.checkpoint, &layout.finetuned(&f.selection.held_out))?;
    }
    write_json_atomic(&layout.selection_log(), &outcome.log)?;
    let violations = outcome.isolation_violations(&manifest);
    let audit = CvAudit {
        folds: outcome
            .folds
            .iter()
            .map(|f| FoldAudit {
                held_out: f.selection.held_out.clone(),
                consumed_ids: f.consumed.ids.len(),
                violating_ids: violations
                    .iter()
                    .filter(|(h, _)| *h == f.selection.held_out)
                    .map(|(_, id)| id.clone())
                    .collect(),
            })
            .collect(),
        violations: violations.len(),
    };
    write_json_atomic(&layout.reports().join("cv_audit.json"), &audit)?;
    write_json_atomic(&layout.reports().join("train_history.json"), &outcome.histories)?;
    Ok(audit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionSet {
    pub split: String,
    /// Payload hash of the checkpoint that produced the scores.
    pub checkpoint: String,
    pub labels: Vec<String>,
    pub predictions: Vec<Prediction>,
}

/// Each fold's checkpoint predicts its held-out split; clean splits use the
/// first fold's checkpoint.
pub fn run_predict(layout: &Layout) -> Result<Vec<PredictionSet>> {
    require(&layout.manifest(), "gen-visit")?;
    require(&layout.selection_log(), "finetune")?;
    let manifest = load_manifest(&layout.manifest())?;
    let log: crate::train::SelectionLog = read_json(&layout.selection_log())?;
    let space = build_label_space(&manifest);
    let store = ImageStore::on_disk(&layout.root);
    let first = log
        .folds
        .first()
        .ok_or_else(|| Error::InvalidArgument("selection log has no folds".into()))?
        .held_out
        .clone();
    let mut jobs: Vec<(String, String)> = log.folds.iter().map(|f| (f.held_out.clone(), f.held_out.clone())).collect();
    for s in manifest.splits_with_role(SplitRole::Clean) {
        jobs.push((s.name.clone(), first.clone()));
    }
    let mut out = Vec::new();
    for (split, fold) in jobs {
        let path = layout.finetuned(&fold);
        require(&path, "finetune")?;
        let ckpt = load_checkpoint(&path)?;
        if ckpt.provenance.labels != space.labels() {
            return Err(Error::InvalidArgument(format!(
                "{} was trained on a different label space",
                path.display()
            )));
        }
        let (images, records) = load_split(&manifest, &store, &split)?;
        let scores = predict_images(&ckpt.spec, &ckpt.params, &images)?;
        let predictions = records
            .iter()
            .zip(scores)
            .map(|(r, s)| Prediction::from_scores(r.path.clone(), s, &space))
            .collect::<Result<Vec<_>>>()?;
        let set = PredictionSet {
            split: split.clone(),
            checkpoint: ckpt.params_hash(),
            labels: space.labels().to_vec(),
            predictions,
        };
        write_json_atomic(&layout.predictions(&split), &set)?;
        out.push(set);
    }
    Ok(out)
}

/// `eval_test.json` over the test splits and `eval_clean.json` over clean
/// splits, when there are any.
pub fn run_evaluate(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<EvalReport>> {
    require(&layout.manifest(), "gen-visit")?;
    let manifest = load_manifest(&layout.manifest())?;
    let echo = serde_json::to_value(portable(cfg)).map_err(|e| Error::json(&layout.manifest(), e))?;
    let mut reports = Vec::new();
    for (group, role) in [("test", SplitRole::Test), ("clean", SplitRole::Clean)] {
        let splits = manifest.splits_with_role(role);
        if splits.is_empty() {
            continue;
        }
        let mut sets = Vec::new();
        for s in &splits {
            let p = layout.predictions(&s.name);
            require(&p, "predict")?;
            let set: PredictionSet = read_json(&p)?;
            sets.push(set);
        }
        let inputs: Vec<SplitPredictions> = splits
            .iter()
            .zip(&sets)
            .map(|(s, set)| SplitPredictions {
                split: &s.name,
                predictions: &set.predictions,
                records: &s.records,
            })
            .collect();
        let report = EvalReport::build(&inputs, &manifest, cfg.max_k, echo.clone())?;
        write_json_atomic(&layout.eval(group), &report)?;
        reports.push(report);
    }
    Ok(reports)
}

pub fn run_report(layout: &Layout) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for group in ["test", "clean"] {
        let p = layout.eval(group);
        if !p.exists() {
            continue;
        }
        let report = read_report(&p)?;
        let files = write_report(&report, &layout.reports(), &format!("eval_{group}"))?;
        written.extend([files.json, files.csv, files.svg]);
    }
    if written.is_empty() {
        return Err(Error::MissingInput {
            path: layout.eval("test"),
            producer: "evaluate",
        });
    }
    Ok(written)
}

/// The config without its output directory, so artifacts do not depend on
/// where they were written.
fn portable(cfg: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        out: None,
        ..cfg.clone()
    }
}

pub fn full_run(cfg: &ExperimentConfig, seed: u64, layout: &Layout) -> Result<Vec<EvalReport>> {
    write_json_atomic(&layout.manifests().join("config.json"), &portable(cfg))?;
    gen_gallery(cfg, seed, layout)?;
    gen_visit(layout)?;
    run_pretrain(cfg, seed, layout)?;
    run_finetune(cfg, seed, layout)?;
    run_predict(layout)?;
    let reports = run_evaluate(cfg, layout)?;
    run_report(layout)?;
    Ok(reports)
}

fn layout_for(cfg: &ExperimentConfig) -> Result<Layout> {
    cfg.out
        .clone()
        .map(Layout::new)
        .ok_or_else(|| Error::InvalidArgument("no output directory: pass --out or set \"out\" in the config".into()))
}

/// Run a parsed command line; single-seed stages use the first seed.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.common.resolve()?;
    let layout = layout_for(&cfg)?;
    let seed = cfg.seeds[0];
    match cli.command {
        Command::GenGallery => {
            let m = gen_gallery(&cfg, seed, &layout)?;
            println!("{} instances, {} training images", m.instances.len(), m.training_images.len());
        }
        Command::GenVisit => {
            let m = gen_visit(&layout)?;
            for s in &m.splits {
                println!("{}: {} frames", s.name, s.records.len());
            }
        }
        Command::Pretrain => run_pretrain(&cfg, seed, &layout)?,
        Command::Finetune => {
            let audit = run_finetune(&cfg, seed, &layout)?;
            println!("isolation violations: {}", audit.violations);
        }
        Command::Predict => {
            for s in run_predict(&layout)? {
                println!("{}: {} predictions", s.split, s.predictions.len());
            }
        }
        Command::Evaluate => {
            for r in run_evaluate(&cfg, &layout)? {
                print_summary(&r);
            }
        }
        Command::Report => {
            for p in run_report(&layout)? {
                println!("{}", p.display());
            }
        }
        Command::FullRun => {
            let multi = cfg.seeds.len() > 1;
            for &s in &cfg.seeds {
                let l = if multi {
                    Layout::new(layout.root.join(format!("seed_{s}")))
                } else {
                    layout.clone()
                };
                for r in full_run(&cfg, s, &l)? {
                    print_summary(&r);
                }
            }
        }
    }
    Ok(())
}

/// Parse `args` (without the program name) and run them.
pub fn run_args<I: IntoIterator<Item = String>>(args: I) -> Result<()> {
    let argv = std::iter::once("gscope".to_string()).chain(args);
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    run(&cli)
}

fn print_summary(r: &EvalReport) {
    let names: Vec<&str> = r.splits.iter().map(|s| s.split.as_str()).collect();
    println!(
        "{}: mean top-1 {} (±{}), coverage {}/{}",
        names.join(","),
        crate::eval::percent(r.mean[0]),
        crate::eval::percent(r.std[0]),
        r.coverage.recognized,
        r.coverage.instances
    );
}

/// Size the global worker pool from `GSCOPE_THREADS` (default: all cores).
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("GSCOPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("GSCOPE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("cannot size the worker pool: {e}")))
}
