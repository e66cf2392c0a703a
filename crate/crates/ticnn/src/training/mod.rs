//! Network assembly from declarative specs, the SGD training loop,
//! checkpointing, and evaluation.

mod checkpoint;
mod eval;
mod gradcheck;
mod network;
mod sgd;

pub use checkpoint::{load_checkpoint, load_checkpoint_into, save_checkpoint};
pub use eval::{evaluate, EvalReport};
pub use gradcheck::{
    finite_difference_check, grad_check_spec, randomize_params_uniform, GradCheckReport,
};
pub use network::{Layer, Network};
pub use sgd::{learning_rate, train, LogRow, TrainHooks, TrainReport};

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Real, Result};

fn one_real() -> Real {
    1.0
}

fn one_usize() -> usize {
    1
}

fn no_lr_step() -> usize {
    usize::MAX
}

fn ti_mu_s() -> Real {
    1.0
}

fn ti_sigma_theta() -> Real {
    30.0
}

fn ti_sigma_s() -> Real {
    0.15
}

fn ti_sigma_d() -> Real {
    0.2
}

/// One layer in a [`NetworkSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one_usize")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Maxpool {
        window: usize,
        #[serde(default = "one_usize")]
        stride: usize,
    },
    Relu,
    /// Random feature-map transform. Defaults are the distorted-MNIST
    /// settings; when `seed` is absent one is derived from the network seed
    /// and the layer's position.
    Ti {
        #[serde(default)]
        mu_theta: Real,
        #[serde(default = "ti_sigma_theta")]
        sigma_theta: Real,
        #[serde(default = "ti_mu_s")]
        mu_s: Real,
        #[serde(default = "ti_sigma_s")]
        sigma_s: Real,
        #[serde(default)]
        mu_d: Real,
        #[serde(default = "ti_sigma_d")]
        sigma_d: Real,
        #[serde(default)]
        isotropic: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Dense {
        units: usize,
    },
}

/// Declarative architecture: input planes (c, h, w), an init seed, and the
/// ordered layer list. The final layer feeds a softmax cross-entropy head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// (channels, height, width) of one example.
    pub input: [usize; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSpec>,
}

/// Optimization schedule. `weight_clip = 0` disables clipping,
/// `eval_every = 0` disables interleaved evaluation, `checkpoint_every = 0`
/// disables periodic checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub base_lr: Real,
    #[serde(default = "one_real")]
    pub lr_gamma: Real,
    #[serde(default = "no_lr_step")]
    pub lr_step: usize,
    #[serde(default)]
    pub momentum: Real,
    #[serde(default)]
    pub weight_decay: Real,
    #[serde(default)]
    pub weight_clip: Real,
    #[serde(default = "one_real")]
    pub bias_lr_mult: Real,
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.lr_step == 0 {
            return Err(Error::Spec(
                "iterations, batch_size and lr_step must be >= 1".into(),
            ));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::Spec(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(Error::Spec(format!(
                "lr_gamma must lie in (0, 1], got {}",
                self.lr_gamma
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Spec(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || self.weight_clip < 0.0 || self.bias_lr_mult <= 0.0 {
            return Err(Error::Spec(
                "weight_decay/weight_clip must be >= 0 and bias_lr_mult > 0".into(),
            ));
        }
        Ok(())
    }
}

/// A whole experiment file: `[network]` plus `[train]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub train: TrainConfig,
}

/// Parse a TOML experiment config.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    cfg.train.validate()?;
    Ok(cfg)
}

/// The two-conv MNIST architecture (9×9 conv, 2×2 pool, 7×7 conv, 2×2 pool,
/// 10-way classifier) for a given canvas size, optionally with the random
/// transform ahead of the second convolution. Canvases whose shape chain
/// would leave a partial pooling window get one pixel of padding on the
/// first convolution.
pub fn mnist_network_spec(filters: usize, canvas: usize, with_ti: bool, seed: u64) -> NetworkSpec {
    let first = canvas as isize - 8;
    // need: first conv output even, and its half minus 6 even and positive
    let padding = if first > 0 && first % 2 == 0 && (first / 2 - 6) % 2 == 0 { 0 } else { 1 };
    let mut layers = vec![
        LayerSpec::Conv { filters, kernel: 9, stride: 1, padding },
        LayerSpec::Relu,
        LayerSpec::Maxpool { window: 2, stride: 2 },
    ];
    if with_ti {
        layers.push(LayerSpec::Ti {
            mu_theta: 0.0,
            sigma_theta: 30.0,
            mu_s: 1.0,
            sigma_s: 0.15,
            mu_d: 0.0,
            sigma_d: 0.2,
            isotropic: false,
            seed: None,
        });
    }
    layers.extend([
        LayerSpec::Conv { filters, kernel: 7, stride: 1, padding: 0 },
        LayerSpec::Relu,
        LayerSpec::Maxpool { window: 2, stride: 2 },
        LayerSpec::Dense { units: 10 },
    ]);
    NetworkSpec { input: [1, canvas, canvas], seed, layers }
}

/// Desk-scale schedule: 16 filters are trained for 15000 iterations at
/// batch 64. The published protocol (64 filters, 150000 iterations, batch
/// 256) is available via [`full_train_config`].
pub fn desk_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 15_000,
        batch_size: 64,
        base_lr: 0.01,
        lr_gamma: 0.1,
        lr_step: 50_000,
        momentum: 0.0,
        weight_decay: 0.0,
        weight_clip: 0.0,
        bias_lr_mult: 1.0,
        eval_every: 1000,
        checkpoint_every: 0,
        seed,
    }
}

pub fn full_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 150_000,
        batch_size: 256,
        base_lr: 0.01,
        lr_gamma: 0.1,
        lr_step: 50_000,
        momentum: 0.0,
        weight_decay: 0.0,
        weight_clip: 0.0,
        bias_lr_mult: 1.0,
        eval_every: 5000,
        checkpoint_every: 50_000,
        seed,
    }
}
