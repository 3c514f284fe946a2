use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{self, Tensor};
use super::{LayerSpec, NetworkConfig};
use crate::augment::Label;
use crate::numerics::CineSequence;
use crate::{Error, Result};

/// A learnable array with its Adadelta running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    /// Running average of squared gradients.
    pub sq_grad_avg: Vec<f64>,
    /// Running average of squared updates.
    pub sq_update_avg: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let n = value.len();
        Self { value, sq_grad_avg: vec![0.0; n], sq_update_avg: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Param,
    pub biases: Param,
}

/// Learnable state of every layer, `None` for parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub layers: Vec<Option<LayerParams>>,
}

fn param_shapes(spec: &LayerSpec) -> Option<(usize, usize)> {
    match *spec {
        LayerSpec::Conv3d { in_ch, out_ch, kernel } => Some((out_ch * in_ch * kernel.iter().product::<usize>(), out_ch)),
        LayerSpec::Dense { in_units, out_units } => Some((in_units * out_units, out_units)),
        _ => None,
    }
}

impl ParameterSet {
    /// Zero-mean Gaussian weights with `config.init_std`, zero biases.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::InvalidNetwork(e.to_string()))?;
        let layers = config
            .layers
            .iter()
            .map(|spec| {
                param_shapes(spec).map(|(nw, nb)| LayerParams {
                    weights: Param::new((0..nw).map(|_| normal.sample(&mut rng)).collect()),
                    biases: Param::new(vec![0.0; nb]),
                })
            })
            .collect();
        Ok(Self { layers })
    }

    /// Rebuilds a parameter set from flat values in layer order
    /// (weights then biases per layer), with fresh optimizer state.
    pub fn from_flat(config: &NetworkConfig, values: &[f64]) -> Result<Self> {
        config.validate()?;
        let mut it = values.iter().copied();
        let mut layers = Vec::with_capacity(config.layers.len());
        for spec in &config.layers {
            layers.push(match param_shapes(spec) {
                Some((nw, nb)) => {
                    let w: Vec<f64> = it.by_ref().take(nw).collect();
                    let b: Vec<f64> = it.by_ref().take(nb).collect();
                    if w.len() != nw || b.len() != nb {
                        return Err(Error::ShapeMismatch("too few parameter values for network".into()));
                    }
                    Some(LayerParams { weights: Param::new(w), biases: Param::new(b) })
                }
                None => None,
            });
        }
        if it.next().is_some() {
            return Err(Error::ShapeMismatch("too many parameter values for network".into()));
        }
        Ok(Self { layers })
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|l| l.weights.value.iter().chain(&l.biases.value).copied())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().flatten().map(|l| l.weights.value.len() + l.biases.value.len()).sum()
    }
}

/// Per-layer `(weight, bias)` gradients, aligned with [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| l.as_ref().map(|p| (vec![0.0; p.weights.value.len()], vec![0.0; p.biases.value.len()])))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a, b) {
                for (x, y) in aw.iter_mut().zip(bw).chain(ab.iter_mut().zip(bb)) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in self.layers.iter_mut().flatten() {
            for x in w.iter_mut().chain(b.iter_mut()) {
                *x *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flatten().all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }
}

enum Cache {
    Conv(Tensor),
    Relu(Tensor),
    Pool { argmax: Vec<usize>, in_shape: [usize; 4] },
    Dropout(Option<Vec<f64>>),
    Dense { input: Vec<f64>, in_shape: [usize; 4] },
    Softmax,
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace {
    caches: Vec<Cache>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub prob_artefact: f64,
    pub label: Label,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: ParameterSet,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let params = ParameterSet::init(&config)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: NetworkConfig, params: ParameterSet) -> Result<Self> {
        config.validate()?;
        let ok = params.layers.len() == config.layers.len()
            && config.layers.iter().zip(&params.layers).all(|(spec, p)| match (param_shapes(spec), p) {
                (Some((nw, nb)), Some(p)) => p.weights.value.len() == nw && p.biases.value.len() == nb,
                (None, None) => true,
                _ => false,
            });
        if !ok {
            return Err(Error::ShapeMismatch("parameter set does not match network layers".into()));
        }
        Ok(Self { config, params })
    }

    pub fn input_tensor(&self, seq: &CineSequence) -> Result<Tensor> {
        let (t, h, w) = seq.dims();
        if [t, h, w] != self.config.input_dims {
            return Err(Error::ShapeMismatch(format!(
                "sequence {t}x{h}x{w} for network input {:?}",
                self.config.input_dims
            )));
        }
        Tensor::new([1, t, h, w], seq.data().to_vec())
    }

    /// Forward pass. `dropout` carries the default rate and the mask RNG in
    /// training mode; `None` disables dropout.
    pub fn forward(&self, input: &Tensor, mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<Trace> {
        let [t, h, w] = self.config.input_dims;
        if input.shape != [1, t, h, w] {
            return Err(Error::ShapeMismatch(format!("input {:?} for network {:?}", input.shape, [1, t, h, w])));
        }
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.config.layers.len());
        let mut logits = Vec::new();
        let mut probs = Vec::new();
        for (spec, params) in self.config.layers.iter().zip(&self.params.layers) {
            match *spec {
                LayerSpec::Conv3d { kernel, .. } => {
                    let p = params.as_ref().expect("conv parameters");
                    let y = layers::conv3d_forward(&x, &p.weights.value, &p.biases.value, kernel)?;
                    caches.push(Cache::Conv(std::mem::replace(&mut x, y)));
                }
                LayerSpec::Relu => {
                    let y = layers::relu(&x);
                    caches.push(Cache::Relu(std::mem::replace(&mut x, y)));
                }
                LayerSpec::Maxpool3d { window } => {
                    let (y, argmax) = layers::maxpool3d(&x, window)?;
                    caches.push(Cache::Pool { argmax, in_shape: x.shape });
                    x = y;
                }
                LayerSpec::Dropout { rate } => match dropout.as_mut() {
                    Some((default_p, rng)) => {
                        let (y, mask) = layers::dropout(&x, rate.unwrap_or(*default_p), &mut **rng, true);
                        caches.push(Cache::Dropout(mask));
                        x = y;
                    }
                    None => caches.push(Cache::Dropout(None)),
                },
                LayerSpec::Dense { .. } => {
                    let p = params.as_ref().expect("dense parameters");
                    let y = layers::dense(&x.data, &p.weights.value, &p.biases.value)?;
                    let in_shape = x.shape;
                    let prev = std::mem::replace(&mut x, Tensor::vector(y));
                    caches.push(Cache::Dense { input: prev.data, in_shape });
                }
                LayerSpec::Softmax => {
                    probs = layers::softmax(&x.data);
                    logits = std::mem::take(&mut x.data);
                    caches.push(Cache::Softmax);
                }
            }
        }
        Ok(Trace { caches, logits, probs })
    }

    /// Backpropagates `grad_logits` (the gradient at the softmax input).
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, grad_logits: &[f64]) -> Result<(Gradients, Tensor)> {
        let mut grads = Gradients { layers: vec![None; self.config.layers.len()] };
        let mut g = Tensor::vector(grad_logits.to_vec());
        for (i, (spec, cache)) in self.config.layers.iter().zip(&trace.caches).enumerate().rev() {
            match (spec, cache) {
                (LayerSpec::Softmax, Cache::Softmax) => {}
                (LayerSpec::Dense { .. }, Cache::Dense { input, in_shape }) => {
                    let p = self.params.layers[i].as_ref().expect("dense parameters");
                    let d = layers::dense_backward(&g.data, input, &p.weights.value)?;
                    grads.layers[i] = Some((d.weights, d.biases));
                    g = Tensor::new(*in_shape, d.input)?;
                }
                (LayerSpec::Dropout { .. }, Cache::Dropout(mask)) => {
                    g = layers::dropout_backward(&g, mask.as_deref());
                }
                (LayerSpec::Maxpool3d { .. }, Cache::Pool { argmax, in_shape }) => {
                    g = layers::maxpool3d_backward(&g, argmax, *in_shape)?;
                }
                (LayerSpec::Relu, Cache::Relu(input)) => {
                    g = layers::relu_backward(&g, input);
                }
                (LayerSpec::Conv3d { kernel, .. }, Cache::Conv(input)) => {
                    let p = self.params.layers[i].as_ref().expect("conv parameters");
                    let c = layers::conv3d_backward(&g, input, &p.weights.value, *kernel)?;
                    grads.layers[i] = Some((c.weights, c.biases));
                    g = c.input;
                }
                _ => return Err(Error::ShapeMismatch(format!("trace does not match layer {i}"))),
            }
        }
        Ok((grads, g))
    }

    /// Class probabilities `[good, artefact]` with dropout disabled.
    pub fn probabilities(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(input, None)?.probs)
    }

    /// Artefact probability and hard label; exactly 0.5 counts as artefact.
    pub fn predict(&self, seq: &CineSequence) -> Result<Prediction> {
        let start = Instant::now();
        let x = self.input_tensor(seq)?;
        let probs = self.probabilities(&x)?;
        let prob_artefact = probs[Label::Artefact.index()];
        let label = if prob_artefact >= 0.5 { Label::Artefact } else { Label::Good };
        Ok(Prediction { prob_artefact, label, elapsed: start.elapsed() })
    }
}
