//! Spatio-temporal 3D CNN: layer primitives, network assembly, Adadelta
//! and the early-stopping training loop.

mod adadelta;
mod checkpoint;
pub mod layers;
mod network;
mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adadelta::adadelta_step;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::Tensor;
pub use network::{Gradients, LayerParams, Network, Param, ParameterSet, Prediction, Trace};
pub use train::{train, EpochRecord, History, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride 1 with same padding, so `(T, H, W)` is preserved.
    Conv3d { in_ch: usize, out_ch: usize, kernel: [usize; 3] },
    Relu,
    /// Stride equals the window; partial edge windows are kept (ceil mode).
    Maxpool3d { window: [usize; 3] },
    /// `rate: None` takes the rate from [`TrainConfig::dropout_p`].
    Dropout { rate: Option<f64> },
    Dense { in_units: usize, out_units: usize },
    Softmax,
}

/// Layer-count profile a configuration must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 6 conv, 4 pool, 2 dense, softmax.
    Full,
    /// 2 conv, 2 pool, 2 dense, softmax.
    Desk,
}

impl Profile {
    fn counts(self) -> [usize; 4] {
        match self {
            Profile::Full => [6, 4, 2, 1],
            Profile::Desk => [2, 2, 2, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub profile: Profile,
    /// `(T, H, W)` of the single-channel input.
    pub input_dims: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub init_std: f64,
    pub seed: u64,
}

impl NetworkConfig {
    fn block(layers: &mut Vec<LayerSpec>, in_ch: usize, out_ch: usize, pool: bool) {
        layers.push(LayerSpec::Conv3d { in_ch, out_ch, kernel: [3, 3, 3] });
        layers.push(LayerSpec::Relu);
        if pool {
            layers.push(LayerSpec::Maxpool3d { window: [2, 2, 2] });
        }
        layers.push(LayerSpec::Dropout { rate: None });
    }

    fn head(layers: &mut Vec<LayerSpec>, flat: usize, hidden: usize) {
        layers.push(LayerSpec::Dense { in_units: flat, out_units: hidden });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { rate: None });
        layers.push(LayerSpec::Dense { in_units: hidden, out_units: 2 });
        layers.push(LayerSpec::Softmax);
    }

    /// Six 3x3x3 conv layers (8-8-16-16-32-32 channels) with pooling after
    /// conv 2, 4, 5 and 6, then dense 128 and dense 2.
    pub fn full(input_dims: [usize; 3], seed: u64) -> Self {
        let mut layers = Vec::new();
        let chans = [1, 8, 8, 16, 16, 32, 32];
        let pooled = [false, true, false, true, true, true];
        let mut dims = input_dims;
        for i in 0..6 {
            Self::block(&mut layers, chans[i], chans[i + 1], pooled[i]);
            if pooled[i] {
                dims = dims.map(|d| d.div_ceil(2));
            }
        }
        Self::head(&mut layers, 32 * dims.iter().product::<usize>(), 128);
        Self { profile: Profile::Full, input_dims, layers, init_std: 0.05, seed }
    }

    /// Two conv layers (4 and 8 channels), each followed by pooling, then
    /// dense 32 and dense 2.
    pub fn desk(input_dims: [usize; 3], seed: u64) -> Self {
        let mut layers = Vec::new();
        Self::block(&mut layers, 1, 4, true);
        Self::block(&mut layers, 4, 8, true);
        let dims = input_dims.map(|d| d.div_ceil(4));
        Self::head(&mut layers, 8 * dims.iter().product::<usize>(), 32);
        Self { profile: Profile::Desk, input_dims, layers, init_std: 0.05, seed }
    }

    /// Checks that the layer list chains and matches the declared profile.
    /// Returns the output shape of every layer.
    pub fn validate(&self) -> Result<Vec<[usize; 4]>> {
        let bad = |m: String| Err(Error::InvalidNetwork(m));
        if self.input_dims.contains(&0) {
            return bad(format!("input dims {:?}", self.input_dims));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std {}", self.init_std));
        }
        let [t, h, w] = self.input_dims;
        let mut shape = [1, t, h, w];
        let mut flat = false;
        let mut counts = [0usize; 4];
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv3d { in_ch, out_ch, kernel } => {
                    if flat || in_ch != shape[0] || out_ch == 0 || kernel.contains(&0) {
                        return bad(format!("layer {i}: conv {in_ch}->{out_ch} on {shape:?}"));
                    }
                    shape[0] = out_ch;
                    counts[0] += 1;
                }
                LayerSpec::Maxpool3d { window } => {
                    if flat || window.contains(&0) {
                        return bad(format!("layer {i}: pool {window:?} on {shape:?}"));
                    }
                    shape = layers::pooled_shape(shape, window);
                    counts[1] += 1;
                }
                LayerSpec::Dense { in_units, out_units } => {
                    let n: usize = shape.iter().product();
                    if in_units != n || out_units == 0 {
                        return bad(format!("layer {i}: dense {in_units}->{out_units} on {n} units"));
                    }
                    shape = [out_units, 1, 1, 1];
                    flat = true;
                    counts[2] += 1;
                }
                LayerSpec::Dropout { rate } => {
                    if let Some(p) = rate {
                        if !(0.0..1.0).contains(&p) {
                            return bad(format!("layer {i}: dropout rate {p}"));
                        }
                    }
                }
                LayerSpec::Relu => {}
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() || shape != [2, 1, 1, 1] {
                        return bad(format!("layer {i}: softmax must be last and over 2 classes"));
                    }
                    counts[3] += 1;
                }
            }
            shapes.push(shape);
        }
        if counts[3] != 1 {
            return bad("network must end in a softmax".into());
        }
        if counts != self.profile.counts() {
            return bad(format!(
                "{:?} profile expects conv/pool/dense/softmax counts {:?}, found {:?}",
                self.profile,
                self.profile.counts(),
                counts
            ));
        }
        Ok(shapes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Multiplier on the Adadelta update.
    pub learning_rate: f64,
    /// Adadelta decay of both running averages.
    pub rho: f64,
    pub epsilon: f64,
    /// Epochs without sufficient validation improvement before stopping.
    pub patience_epochs: usize,
    /// Relative validation-accuracy gain that counts as an improvement.
    pub min_rel_improvement: f64,
    pub dropout_p: f64,
    pub validation_frac: f64,
    /// Hard cap on epochs.
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            learning_rate: 1e-4,
            rho: 0.90,
            epsilon: 1e-7,
            patience_epochs: 50,
            min_rel_improvement: 0.005,
            dropout_p: 0.5,
            validation_frac: 0.1,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the two-conv desk profile on small phantom datasets.
    pub fn desk() -> Self {
        Self {
            batch_size: 10,
            learning_rate: 1.0,
            epsilon: 1e-6,
            patience_epochs: 15,
            max_epochs: 30,
            dropout_p: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTrainConfig(m));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.rho) || !(self.epsilon > 0.0) {
            return bad(format!("lr {} rho {} eps {}", self.learning_rate, self.rho, self.epsilon));
        }
        if !(0.0..1.0).contains(&self.dropout_p) || !(0.0..1.0).contains(&self.validation_frac) {
            return bad(format!("dropout {} validation fraction {}", self.dropout_p, self.validation_frac));
        }
        if self.min_rel_improvement < 0.0 {
            return bad("min_rel_improvement must be non-negative".into());
        }
        Ok(())
    }
}
