//! Layer-list network description, parameters, and whole-network
//! forward/backward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{
    conv2d_backward, conv2d_forward, conv_out_extent, dense_backward, dense_forward,
    maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, softmax,
    softmax_cross_entropy, PoolMask,
};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputGeometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputGeometry {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        InputGeometry {
            height,
            width,
            channels,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

fn default_kernel() -> usize {
    3
}

fn default_stride() -> usize {
    1
}

fn default_pad() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default = "default_pad")]
        pad: usize,
    },
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool,
    Dense {
        out_units: usize,
    },
    /// Only valid as the final layer.
    Softmax,
}

impl LayerSpec {
    pub fn conv3(out_channels: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel: 3,
            stride: 1,
            pad: 1,
        }
    }

    fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

/// An ordered stack of layers over a fixed input geometry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: InputGeometry,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
}

pub const VGG_NANO_INPUT: InputGeometry = InputGeometry::new(64, 64, 3);

impl NetworkSpec {
    /// Four conv3/relu/pool blocks (8, 16, 32, 32 channels), dense-64, relu,
    /// dense-C over a 64×64 RGB input.
    pub fn vgg_nano(classes: usize) -> Self {
        Self::vgg_nano_with_input(classes, VGG_NANO_INPUT)
    }

    pub fn vgg_nano_with_input(classes: usize, input: InputGeometry) -> Self {
        let mut layers = Vec::new();
        for ch in [8, 16, 32, 32] {
            layers.extend([LayerSpec::conv3(ch), LayerSpec::Relu, LayerSpec::MaxPool]);
        }
        layers.extend([
            LayerSpec::Dense { out_units: 64 },
            LayerSpec::Relu,
            LayerSpec::Dense { out_units: classes },
        ]);
        NetworkSpec {
            input,
            layers,
            classes,
        }
    }

    /// Output shape of every layer, checking that geometry propagates and the
    /// final width equals `classes`.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let g = self.input;
        if g.height == 0 || g.width == 0 || g.channels == 0 {
            return Err(Error::Shape(format!("degenerate input geometry {g:?}")));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        let mut shape = g.shape().to_vec();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    let [_, h, w] = shape[..] else {
                        return Err(Error::Shape(format!(
                            "layer {i} (conv) needs a [C, H, W] input, got {shape:?}"
                        )));
                    };
                    if out_channels == 0 {
                        return Err(Error::Shape(format!("layer {i} (conv) has 0 outputs")));
                    }
                    match (
                        conv_out_extent(h, kernel, stride, pad),
                        conv_out_extent(w, kernel, stride, pad),
                    ) {
                        (Some(oh), Some(ow)) => vec![out_channels, oh, ow],
                        _ => {
                            return Err(Error::Shape(format!(
                                "layer {i} (conv k={kernel}, stride {stride}, pad {pad}) does not fit input {shape:?}"
                            )))
                        }
                    }
                }
                LayerSpec::Relu => shape,
                LayerSpec::MaxPool => {
                    let [c, h, w] = shape[..] else {
                        return Err(Error::Shape(format!(
                            "layer {i} (maxpool) needs a [C, H, W] input, got {shape:?}"
                        )));
                    };
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::Shape(format!(
                            "layer {i} (maxpool) needs even extents, got {shape:?}"
                        )));
                    }
                    vec![c, h / 2, w / 2]
                }
                LayerSpec::Dense { out_units } => {
                    if out_units == 0 {
                        return Err(Error::Shape(format!("layer {i} (dense) has 0 outputs")));
                    }
                    vec![out_units]
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::InvalidArgument(format!(
                            "softmax is only allowed as the last layer (found at {i})"
                        )));
                    }
                    shape
                }
            };
            shapes.push(shape.clone());
        }
        if shape != [self.classes] {
            return Err(Error::Shape(format!(
                "network output {shape:?} does not match {} classes",
                self.classes
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes().map(|_| ())
    }

    /// Shapes of the learnable tensors, weight then bias per layer.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let shapes = self.layer_shapes()?;
        let mut in_shape = self.input.shape().to_vec();
        let mut out = Vec::new();
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    ..
                } => {
                    out.push(vec![out_channels, in_shape[0], kernel, kernel]);
                    out.push(vec![out_channels]);
                }
                LayerSpec::Dense { out_units } => {
                    out.push(vec![out_units, in_shape.iter().product()]);
                    out.push(vec![out_units]);
                }
                _ => {}
            }
            in_shape = shape.clone();
        }
        Ok(out)
    }

    /// Human-readable names matching `param_shapes`, e.g. `conv0.weight`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let (mut conv, mut dense) = (0, 0);
        for layer in &self.layers {
            let prefix = match layer {
                LayerSpec::Conv { .. } => {
                    conv += 1;
                    format!("conv{}", conv - 1)
                }
                LayerSpec::Dense { .. } => {
                    dense += 1;
                    format!("dense{}", dense - 1)
                }
                _ => continue,
            };
            names.push(format!("{prefix}.weight"));
            names.push(format!("{prefix}.bias"));
        }
        names
    }

    /// Index of the last dense layer (the classification head).
    pub fn head_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
    }

    /// Same network with the classification head resized to `classes`.
    pub fn with_classes(&self, classes: usize) -> Result<Self> {
        let head = self
            .head_layer()
            .ok_or_else(|| Error::InvalidArgument("network has no dense head".into()))?;
        let mut spec = self.clone();
        spec.layers[head] = LayerSpec::Dense { out_units: classes };
        spec.classes = classes;
        spec.validate()?;
        Ok(spec)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }
}

/// Learnable tensors of a network, in `NetworkSpec::param_shapes` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub tensors: Vec<Tensor>,
}

/// One gradient tensor per learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Params {
    /// He (fan-in) normal weights, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = spec
            .param_shapes()?
            .into_iter()
            .map(|shape| init_tensor(&shape, &mut rng))
            .collect();
        Ok(Params { tensors })
    }

    pub fn check_congruent(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.param_shapes()?;
        if shapes.len() != self.tensors.len()
            || shapes
                .iter()
                .zip(&self.tensors)
                .any(|(s, t)| s.as_slice() != t.shape())
        {
            return Err(Error::Shape(format!(
                "parameters {:?} are not congruent with the network spec {:?}",
                self.tensors.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>(),
                shapes
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Weight tensors have rank > 1; biases are rank 1 and start at zero.
pub(crate) fn init_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    if shape.len() == 1 {
        return Tensor::zeros(shape);
    }
    let fan_in: usize = shape[1..].iter().product();
    let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("finite std");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}

impl Gradients {
    pub fn zeros_like(params: &Params) -> Self {
        Gradients {
            tensors: params
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape("gradient sets differ in length".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for t in &mut self.tensors {
            t.scale(factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0))
    }
}

/// Per-layer inputs and pool masks recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    layer_inputs: Vec<Tensor>,
    masks: Vec<Option<PoolMask>>,
    logits: Tensor,
}

impl Activations {
    /// Scores before any trailing softmax.
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }
}

fn check_input(spec: &NetworkSpec, input: &Tensor) -> Result<()> {
    if input.shape() != spec.input.shape() {
        return Err(Error::Shape(format!(
            "input {:?} does not match network geometry {:?}",
            input.shape(),
            spec.input.shape()
        )));
    }
    Ok(())
}

/// Forward pass. Returns the class scores (softmax probabilities when the
/// spec ends in a softmax layer, logits otherwise) and the cache needed by
/// [`network_backward`].
pub fn network_forward(
    spec: &NetworkSpec,
    params: &Params,
    input: &Tensor,
) -> Result<(Tensor, Activations)> {
    params.check_congruent(spec)?;
    check_input(spec, input)?;
    let mut layer_inputs = Vec::with_capacity(spec.layers.len());
    let mut masks = Vec::with_capacity(spec.layers.len());
    let mut x = input.clone();
    let mut logits = None;
    let mut p = 0;
    for layer in &spec.layers {
        let (next, mask) = apply_layer(layer, &params.tensors, &mut p, &x)?;
        if matches!(layer, LayerSpec::Softmax) {
            logits = Some(x.clone());
        }
        layer_inputs.push(std::mem::replace(&mut x, next));
        masks.push(mask);
    }
    let logits = logits.unwrap_or_else(|| x.clone());
    Ok((
        x,
        Activations {
            layer_inputs,
            masks,
            logits,
        },
    ))
}

fn apply_layer(
    layer: &LayerSpec,
    params: &[Tensor],
    p: &mut usize,
    x: &Tensor,
) -> Result<(Tensor, Option<PoolMask>)> {
    Ok(match *layer {
        LayerSpec::Conv { stride, pad, .. } => {
            let y = conv2d_forward(x, &params[*p], &params[*p + 1], stride, pad)?;
            *p += 2;
            (y, None)
        }
        LayerSpec::Dense { .. } => {
            let y = dense_forward(x, &params[*p], &params[*p + 1])?;
            *p += 2;
            (y, None)
        }
        LayerSpec::Relu => (relu_forward(x), None),
        LayerSpec::MaxPool => {
            let (y, m) = maxpool2x2_forward(x)?;
            (y, Some(m))
        }
        LayerSpec::Softmax => (softmax(x), None),
    })
}

/// Inference-only forward pass; keeps no activations.
pub fn predict_scores(spec: &NetworkSpec, params: &Params, input: &Tensor) -> Result<Tensor> {
    params.check_congruent(spec)?;
    check_input(spec, input)?;
    let mut x = input.clone();
    let mut p = 0;
    for layer in &spec.layers {
        x = apply_layer(layer, &params.tensors, &mut p, &x)?.0;
    }
    Ok(x)
}

/// Backpropagates `grad_logits` (the gradient with respect to the scores
/// before any trailing softmax) through the network.
pub fn network_backward(
    spec: &NetworkSpec,
    params: &Params,
    cache: &Activations,
    grad_logits: &Tensor,
) -> Result<Gradients> {
    params.check_congruent(spec)?;
    let shapes = spec.layer_shapes()?;
    if cache.layer_inputs.len() != spec.layers.len() || cache.masks.len() != spec.layers.len() {
        return Err(Error::Shape(format!(
            "activation cache has {} layers, spec has {}",
            cache.layer_inputs.len(),
            spec.layers.len()
        )));
    }
    let mut expected_in = spec.input.shape().to_vec();
    for (i, (x, out_shape)) in cache.layer_inputs.iter().zip(&shapes).enumerate() {
        if x.shape() != expected_in.as_slice() {
            return Err(Error::Shape(format!(
                "cached input of layer {i} is {:?}, spec expects {expected_in:?}",
                x.shape()
            )));
        }
        expected_in = out_shape.clone();
    }
    if grad_logits.shape() != cache.logits.shape() {
        return Err(Error::Shape(format!(
            "logit gradient {:?} does not match logits {:?}",
            grad_logits.shape(),
            cache.logits.shape()
        )));
    }

    let mut grads: Vec<Option<Tensor>> = vec![None; params.tensors.len()];
    let mut p = params.tensors.len();
    let mut g = grad_logits.clone();
    let first_param_layer = spec.layers.iter().position(LayerSpec::has_params);
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &cache.layer_inputs[i];
        g = match *layer {
            LayerSpec::Softmax => g,
            LayerSpec::Relu => relu_backward(x, &g)?,
            LayerSpec::MaxPool => {
                let mask = cache.masks[i]
                    .as_ref()
                    .ok_or_else(|| Error::Shape(format!("missing pool mask for layer {i}")))?;
                maxpool2x2_backward(&g, mask)?
            }
            LayerSpec::Conv { stride, pad, .. } => {
                p -= 2;
                let need_input = Some(i) != first_param_layer;
                let cg = conv2d_backward(x, &params.tensors[p], &g, stride, pad, need_input)?;
                grads[p] = Some(cg.weights);
                grads[p + 1] = Some(cg.bias);
                match cg.input {
                    Some(gi) => gi,
                    // nothing upstream needs it
                    None => break,
                }
            }
            LayerSpec::Dense { .. } => {
                p -= 2;
                let dg = dense_backward(x, &params.tensors[p], &g)?;
                grads[p] = Some(dg.weights);
                grads[p + 1] = Some(dg.bias);
                dg.input
            }
        };
    }
    Ok(Gradients {
        tensors: grads
            .into_iter()
            .zip(&params.tensors)
            .map(|(g, t)| g.unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect(),
    })
}

/// Cross-entropy loss of one labelled sample.
pub fn sample_loss(spec: &NetworkSpec, params: &Params, input: &Tensor, target: usize) -> Result<f32> {
    let (_, cache) = network_forward(spec, params, input)?;
    Ok(softmax_cross_entropy(cache.logits(), target)?.0)
}

/// Loss and gradient of one labelled sample.
pub fn sample_gradients(
    spec: &NetworkSpec,
    params: &Params,
    input: &Tensor,
    target: usize,
) -> Result<(f32, bool, Gradients)> {
    let (_, cache) = network_forward(spec, params, input)?;
    let (loss, grad_logits) = softmax_cross_entropy(cache.logits(), target)?;
    let correct = argmax(cache.logits().data()) == target;
    let grads = network_backward(spec, params, &cache, &grad_logits)?;
    Ok((loss, correct, grads))
}

/// Summed loss and gradient over a minibatch.
#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub loss_sum: f64,
    pub correct: usize,
    pub grads: Gradients,
}

/// Per-sample passes run on the current rayon pool; the reduction is a
/// sequential sum in batch order, so the result does not depend on the
/// number of workers.
pub fn batch_gradients(
    spec: &NetworkSpec,
    params: &Params,
    batch: &[(&Tensor, usize)],
) -> Result<BatchOutcome> {
    let per_sample: Vec<Result<(f32, bool, Gradients)>> = batch
        .par_iter()
        .map(|(x, t)| sample_gradients(spec, params, x, *t))
        .collect();
    let mut grads = Gradients::zeros_like(params);
    let mut loss_sum = 0.0f64;
    let mut correct = 0;
    for r in per_sample {
        let (loss, ok, g) = r?;
        loss_sum += loss as f64;
        correct += ok as usize;
        grads.add_assign(&g)?;
    }
    Ok(BatchOutcome {
        loss_sum,
        correct,
        grads,
    })
}

/// Index of the largest score; the first one wins ties.
pub fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn vgg_nano_geometry() {
        let spec = NetworkSpec::vgg_nano(81);
        let shapes = spec.layer_shapes().unwrap();
        assert_eq!(shapes[11], vec![32, 4, 4]);
        assert_eq!(shapes.last().unwrap(), &vec![81]);
        let p = spec.param_shapes().unwrap();
        assert_eq!(p.len(), 12);
        assert_eq!(p[8], vec![64, 512]);
        assert_eq!(spec.param_names()[11], "dense1.bias");
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let mut spec = NetworkSpec::vgg_nano(10);
        spec.classes = 11;
        assert!(spec.validate().is_err());

        let odd = NetworkSpec::vgg_nano_with_input(10, InputGeometry::new(24, 24, 3));
        // 24 -> 12 -> 6 -> 3 -> pool on odd extent
        assert!(odd.validate().is_err());

        let mut soft = NetworkSpec::vgg_nano(10);
        soft.layers.insert(0, LayerSpec::Softmax);
        assert!(soft.validate().is_err());
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let spec = NetworkSpec::vgg_nano_with_input(5, InputGeometry::new(16, 16, 3));
        let params = Params::init(&spec, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_fn(&[3, 16, 16], |_| rng.random_range(-1.0..1.0));
        let (a, _) = network_forward(&spec, &params, &x).unwrap();
        let (b, _) = network_forward(&spec, &params, &x).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(predict_scores(&spec, &params, &x).unwrap(), a);
    }

    #[test]
    fn zero_logit_gradient_gives_zero_gradients() {
        let spec = NetworkSpec::vgg_nano_with_input(4, InputGeometry::new(16, 16, 3));
        let params = Params::init(&spec, 1).unwrap();
        let x = Tensor::filled(&[3, 16, 16], 0.3);
        let (_, cache) = network_forward(&spec, &params, &x).unwrap();
        let g = network_backward(&spec, &params, &cache, &Tensor::zeros(&[4])).unwrap();
        assert!(g.is_zero());
        assert_eq!(g.tensors.len(), params.tensors.len());
    }

    #[test]
    fn single_dense_layer_backward_is_outer_product() {
        let spec = NetworkSpec {
            input: InputGeometry::new(1, 1, 3),
            layers: vec![LayerSpec::Dense { out_units: 2 }],
            classes: 2,
        };
        let params = Params {
            tensors: vec![
                Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, -0.4, 0.5, -0.6]).unwrap(),
                Tensor::new(vec![2], vec![0.01, -0.02]).unwrap(),
            ],
        };
        let x = Tensor::new(vec![3, 1, 1], vec![1.0, -2.0, 3.0]).unwrap();
        let (_, cache) = network_forward(&spec, &params, &x).unwrap();
        let gl = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
        let g = network_backward(&spec, &params, &cache, &gl).unwrap();
        let want_w = [0.5, -1.0, 1.5, -1.5, 3.0, -4.5];
        assert_eq!(g.tensors[0].data(), &want_w);
        assert_eq!(g.tensors[1].data(), gl.data());
    }

    #[test]
    fn cache_mismatch_rejected() {
        let spec_a = NetworkSpec::vgg_nano_with_input(4, InputGeometry::new(16, 16, 3));
        let spec_b = NetworkSpec::vgg_nano_with_input(4, InputGeometry::new(32, 32, 3));
        let pa = Params::init(&spec_a, 0).unwrap();
        let pb = Params::init(&spec_b, 0).unwrap();
        let (_, cache) = network_forward(&spec_a, &pa, &Tensor::zeros(&[3, 16, 16])).unwrap();
        assert!(network_backward(&spec_b, &pb, &cache, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn softmax_head_outputs_probabilities() {
        let mut spec = NetworkSpec::vgg_nano_with_input(6, InputGeometry::new(16, 16, 3));
        spec.layers.push(LayerSpec::Softmax);
        let params = Params::init(&spec, 2).unwrap();
        let x = Tensor::filled(&[3, 16, 16], 0.7);
        let (scores, cache) = network_forward(&spec, &params, &x).unwrap();
        let sum: f32 = scores.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
        assert_eq!(argmax(scores.data()), argmax(cache.logits().data()));
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.1, 0.7, 0.7, 0.2]), 1);
    }
}
