//! Minibatch SGD over in-memory image sets, generic pre-training and head
//! replacement.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentPolicy;
use crate::error::{Error, Result};
use crate::fsio::derive_seed;
use crate::imaging::{to_input, Image};
use crate::nn::network::init_tensor;
use crate::nn::{argmax, batch_gradients, predict_scores, sgd_momentum_step, Gradients, NetworkSpec, Params};
use crate::tensor::Tensor;
use crate::train::checkpoint::{Checkpoint, Provenance, Stage};
use crate::train::shapes::ShapeDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub lr: f32,
    pub momentum: f32,
    pub batch_size: usize,
    pub epochs: u32,
    /// Multiplies the learning rate every `lr_decay_every` epochs; 0 disables.
    pub lr_decay: f32,
    pub lr_decay_every: u32,
    /// Applied to fine-tuning images only; `None` trains on the raw views.
    pub augment: Option<AugmentPolicy>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lr: 0.01,
            momentum: 0.9,
            batch_size: 16,
            epochs: 20,
            lr_decay: 1.0,
            lr_decay_every: 0,
            augment: Some(AugmentPolicy::default()),
        }
    }
}

impl HyperParams {
    /// A zero learning rate is accepted so a run can be checked to leave
    /// parameters untouched.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a finite value >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if let Some(p) = &self.augment {
            p.validate()?;
        }
        Ok(())
    }

    /// Learning rate in effect during 0-based epoch `e`.
    pub fn lr_at(&self, e: u32) -> f32 {
        if self.lr_decay_every == 0 {
            self.lr
        } else {
            self.lr * self.lr_decay.powi((e / self.lr_decay_every) as i32)
        }
    }
}

/// Cartesian grid over learning rate and epoch count; everything else comes
/// from `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    pub lrs: Vec<f32>,
    pub epochs: Vec<u32>,
    pub base: HyperParams,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            lrs: vec![0.01, 0.003],
            epochs: vec![20, 40],
            base: HyperParams::default(),
        }
    }
}

impl HyperGrid {
    pub fn single(hyper: HyperParams) -> HyperGrid {
        HyperGrid {
            lrs: vec![hyper.lr],
            epochs: vec![hyper.epochs],
            base: hyper,
        }
    }

    /// Learning-rate-major, epochs in the listed order.
    pub fn points(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &lr in &self.lrs {
            for &epochs in &self.epochs {
                out.push(HyperParams {
                    lr,
                    epochs,
                    ..self.base.clone()
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.lrs.is_empty() || self.epochs.is_empty() {
            return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
        }
        self.points().iter().try_for_each(HyperParams::validate)
    }
}

/// Labelled images plus the id each one was derived from.
#[derive(Clone, Debug, Default)]
pub struct TrainSet {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub sources: Vec<String>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn check(&self, classes: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        if self.labels.len() != self.len() || self.sources.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} images, {} labels, {} sources",
                self.len(),
                self.labels.len(),
                self.sources.len()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        Ok(())
    }
}

impl From<ShapeDataset> for TrainSet {
    fn from(ds: ShapeDataset) -> TrainSet {
        let sources = (0..ds.len()).map(|i| format!("shape:{i}")).collect();
        TrainSet {
            images: ds.images,
            labels: ds.labels,
            sources,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: u32,
    pub lr: f32,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Every source id that contributed to a parameter update.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumptionLog {
    pub ids: BTreeSet<String>,
}

fn all_finite(tensors: &[Tensor]) -> bool {
    tensors.iter().all(|t| t.data().iter().all(|v| v.is_finite()))
}

/// Train `params` in place. Epoch `e` visits the set in the order of a
/// shuffle seeded by `(seed, "epoch", e)`. `on_epoch` sees the parameters
/// after every epoch and may stop early by returning `false`.
pub fn train(
    spec: &NetworkSpec,
    params: &mut Params,
    set: &TrainSet,
    hyper: &HyperParams,
    seed: u64,
    log: &mut ConsumptionLog,
    mut on_epoch: impl FnMut(&EpochStats, &Params) -> Result<bool>,
) -> Result<Vec<EpochStats>> {
    hyper.validate()?;
    params.check_congruent(spec)?;
    set.check(spec.classes)?;
    let mut velocity = Gradients::zeros_like(params);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut history = Vec::new();
    for e in 0..hyper.epochs {
        let lr = hyper.lr_at(e);
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "epoch", e as u64)));
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (step, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let inputs: Vec<Tensor> = chunk
                .par_iter()
                .map(|&i| to_input(&set.images[i], spec.input))
                .collect::<Result<_>>()?;
            let batch: Vec<(&Tensor, usize)> =
                inputs.iter().zip(chunk).map(|(x, &i)| (x, set.labels[i])).collect();
            let mut out = batch_gradients(spec, params, &batch)?;
            let diverged = Error::NonFiniteLoss {
                epoch: e + 1,
                step,
                lr,
            };
            if !out.loss_sum.is_finite() || !all_finite(&out.grads.tensors) {
                return Err(diverged);
            }
            loss_sum += out.loss_sum;
            correct += out.correct;
            out.grads.scale(1.0 / chunk.len() as f32);
            sgd_momentum_step(params, &out.grads, &mut velocity, lr, hyper.momentum)?;
            if !all_finite(&params.tensors) {
                return Err(diverged);
            }
            for &i in chunk {
                if !log.ids.contains(&set.sources[i]) {
                    log.ids.insert(set.sources[i].clone());
                }
            }
        }
        let stats = EpochStats {
            epoch: e + 1,
            lr,
            mean_loss: loss_sum / set.len() as f64,
            accuracy: correct as f64 / set.len() as f64,
        };
        let go_on = on_epoch(&stats, params)?;
        history.push(stats);
        if !go_on {
            break;
        }
    }
    Ok(history)
}

/// Class scores for every image, in input order.
pub fn predict_images(spec: &NetworkSpec, params: &Params, images: &[Image]) -> Result<Vec<Vec<f32>>> {
    params.check_congruent(spec)?;
    images
        .par_iter()
        .map(|img| Ok(predict_scores(spec, params, &to_input(img, spec.input)?)?.into_data()))
        .collect()
}

/// Fraction of images whose argmax equals the label.
pub fn accuracy(spec: &NetworkSpec, params: &Params, images: &[Image], labels: &[usize]) -> Result<f64> {
    if images.len() != labels.len() || images.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} images against {} labels",
            images.len(),
            labels.len()
        )));
    }
    let scores = predict_images(spec, params, images)?;
    let hits = scores.iter().zip(labels).filter(|(s, &l)| argmax(s) == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Pre-train `spec` from He initialisation on the generic shape set.
pub fn pretrain(
    spec: &NetworkSpec,
    dataset: &ShapeDataset,
    hyper: &HyperParams,
    seed: u64,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    if dataset.classes() != spec.classes {
        return Err(Error::InvalidArgument(format!(
            "generic dataset has {} classes but the network outputs {}",
            dataset.classes(),
            spec.classes
        )));
    }
    let mut params = Params::init(spec, derive_seed(seed, "init", 0))?;
    let set = TrainSet::from(dataset.clone());
    let history = train(spec, &mut params, &set, hyper, seed, &mut ConsumptionLog::default(), |_, _| Ok(true))?;
    let ckpt = Checkpoint::new(
        spec.clone(),
        params,
        Provenance {
            stage: Stage::Pretrained,
            seed,
            epochs: history.len() as u32,
            hyper: HyperParams {
                augment: None,
                ..hyper.clone()
            },
            source_hash: dataset.content_hash(),
            labels: dataset.labels_text(),
            held_out: None,
            parent: None,
        },
    )?;
    Ok((ckpt, history))
}

/// Copy of a pretrained checkpoint with the classification head redrawn for
/// `new_classes` outputs. The returned provenance is still `pretrained`; it
/// becomes `finetuned` once trained.
pub fn replace_head(ckpt: &Checkpoint, new_classes: usize, labels: Vec<String>, seed: u64) -> Result<Checkpoint> {
    if ckpt.provenance.stage != Stage::Pretrained {
        return Err(Error::InvalidArgument(
            "only a pretrained checkpoint can have its head replaced".into(),
        ));
    }
    if new_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "a classifier needs at least 2 classes, got {new_classes}"
        )));
    }
    if labels.len() != new_classes {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {new_classes} classes",
            labels.len()
        )));
    }
    let spec = ckpt.spec.with_classes(new_classes)?;
    let shapes = spec.param_shapes()?;
    let n = shapes.len();
    // the head is the last weight/bias pair
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "head", new_classes as u64));
    let mut tensors = ckpt.params.tensors[..n - 2].to_vec();
    tensors.push(init_tensor(&shapes[n - 2], &mut rng));
    tensors.push(init_tensor(&shapes[n - 1], &mut rng));
    let mut provenance = ckpt.provenance.clone();
    provenance.parent = Some(ckpt.params_hash());
    provenance.labels = labels;
    Checkpoint::new(spec, Params { tensors }, provenance)
}
