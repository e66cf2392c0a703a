//! Assembling a [`NetworkSpec`] into runnable layers and driving the
//! forward/backward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, NetworkSpec};
use crate::layers::{ConvLayer, DenseLayer, MaxPoolLayer, Mode, ParamSlot, ReluLayer};
use crate::tensor::{Shape, Tensor};
use crate::ti_layer::{TiConfig, TiLayer};
use crate::{Error, Real, Result};

pub enum Layer {
    Conv(ConvLayer),
    MaxPool(MaxPoolLayer),
    Relu(ReluLayer),
    Ti(TiLayer),
    Dense(DenseLayer),
}

impl Layer {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.forward(x, mode),
            Layer::MaxPool(l) => l.forward(x, mode),
            Layer::Relu(l) => l.forward(x, mode),
            Layer::Ti(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
        }
    }

    fn backward(&mut self, dout: &Tensor, want_dx: bool) -> Result<Option<Tensor>> {
        match self {
            Layer::Conv(l) => l.backward(dout, want_dx),
            Layer::MaxPool(l) => l.backward(dout).map(Some),
            Layer::Relu(l) => l.backward(dout).map(Some),
            Layer::Ti(l) => l.backward(dout, Mode::Train).map(Some),
            Layer::Dense(l) => l.backward(dout).map(Some),
        }
    }
}

/// Intermediate activation captured by [`Network::forward_with_taps`].
pub(crate) struct Tap {
    /// Index into the layer list.
    pub layer: usize,
    pub output: Tensor,
}

/// A runnable network: ordered layers ending in an implicit softmax
/// cross-entropy head during training.
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    output_features: usize,
}

impl Network {
    /// Build and initialize from a spec, validating the whole shape chain.
    /// Parameters are drawn from a ChaCha8 stream seeded with `spec.seed`,
    /// layer by layer in order; transform layers without an explicit seed
    /// get `spec.seed + (i+1)·0x9E3779B97F4A7C15` for the i-th transform
    /// layer.
    pub fn build(spec: &NetworkSpec) -> Result<Network> {
        let [c0, h0, w0] = spec.input;
        if c0 == 0 || h0 == 0 || w0 == 0 {
            return Err(Error::Spec(format!("input dims must be >= 1, got {:?}", spec.input)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        let (mut c, mut h, mut w) = (c0, h0, w0);
        let mut ti_ordinal: u64 = 0;
        fn stage(i: usize, e: Error) -> Error {
            Error::Spec(format!("layer {i}: {e}"))
        }
        for (i, ls) in spec.layers.iter().enumerate() {
            match *ls {
                LayerSpec::Conv { filters, kernel, stride, padding } => {
                    let mut conv = ConvLayer::new(c, filters, kernel, kernel, stride, padding)
                        .map_err(|e| stage(i, e))?;
                    conv.init_params(&mut rng);
                    let (oh, ow) =
                        conv.out_dims(Shape::new(1, c, h, w)).map_err(|e| stage(i, e))?;
                    c = filters;
                    h = oh;
                    w = ow;
                    layers.push(Layer::Conv(conv));
                }
                LayerSpec::Maxpool { window, stride } => {
                    let pool = MaxPoolLayer::new(window, stride).map_err(|e| stage(i, e))?;
                    let (oh, ow) =
                        pool.out_dims(Shape::new(1, c, h, w)).map_err(|e| stage(i, e))?;
                    h = oh;
                    w = ow;
                    layers.push(Layer::MaxPool(pool));
                }
                LayerSpec::Relu => layers.push(Layer::Relu(ReluLayer::new())),
                LayerSpec::Ti {
                    mu_theta,
                    sigma_theta,
                    mu_s,
                    sigma_s,
                    mu_d,
                    sigma_d,
                    isotropic,
                    seed,
                } => {
                    ti_ordinal += 1;
                    let seed = seed.unwrap_or_else(|| {
                        spec.seed.wrapping_add(ti_ordinal.wrapping_mul(0x9E37_79B9_7F4A_7C15))
                    });
                    let ti = TiLayer::new(TiConfig {
                        mu_theta,
                        sigma_theta,
                        mu_s,
                        sigma_s,
                        mu_d,
                        sigma_d,
                        isotropic,
                        seed,
                    })
                    .map_err(|e| stage(i, e))?;
                    layers.push(Layer::Ti(ti));
                }
                LayerSpec::Dense { units } => {
                    let mut dense =
                        DenseLayer::new(c * h * w, units).map_err(|e| stage(i, e))?;
                    dense.init_params(&mut rng);
                    c = units;
                    h = 1;
                    w = 1;
                    layers.push(Layer::Dense(dense));
                }
            }
        }
        Ok(Network { spec: spec.clone(), layers, output_features: c * h * w })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Class count produced by the final layer.
    pub fn output_features(&self) -> usize {
        self.output_features
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        let [c, h, w] = self.spec.input;
        (c, h, w)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = x.shape();
        let (c, h, w) = self.input_shape();
        if (s.c, s.h, s.w) != (c, h, w) {
            return Err(Error::Shape(format!(
                "network expects ({c}, {h}, {w}) examples, got {s}"
            )));
        }
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    /// Forward pass that also clones the output of every layer, for
    /// activation probing.
    pub(crate) fn forward_with_taps(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Vec<Tap>)> {
        let mut taps = Vec::new();
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            cur = layer.forward(&cur, mode)?;
            taps.push(Tap { layer: i, output: cur.clone() });
        }
        Ok((cur, taps))
    }

    /// Backpropagate the loss gradient through every layer. The first
    /// layer's input gradient is not materialized.
    pub fn backward(&mut self, dlogits: &Tensor) -> Result<()> {
        let mut grad = dlogits.clone();
        let count = self.layers.len();
        for (rev, layer) in self.layers.iter_mut().rev().enumerate() {
            let is_first = rev + 1 == count;
            match layer.backward(&grad, !is_first)? {
                Some(dx) => grad = dx,
                None => break,
            }
        }
        Ok(())
    }

    /// Freeze or unfreeze the sampled plans of every transform layer.
    pub fn set_ti_frozen(&mut self, frozen: bool) {
        for layer in &mut self.layers {
            if let Layer::Ti(ti) = layer {
                ti.set_frozen(frozen);
            }
        }
    }

    pub fn has_ti(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Ti(_)))
    }

    /// Parameter buffers with their gradients, in checkpoint order.
    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(l) => slots.extend(l.param_slots()),
                Layer::Dense(l) => slots.extend(l.param_slots()),
                _ => {}
            }
        }
        slots
    }

    /// (name, dims, values) of every parameter tensor. Names number the
    /// parameterized layers per kind (`conv1.weight`, `dense1.bias`, ...),
    /// so checkpoints swap cleanly between specs that differ only in
    /// parameterless layers.
    pub fn param_tensors(&self) -> Vec<(String, Vec<usize>, &[Real])> {
        let mut out = Vec::new();
        let (mut convs, mut denses) = (0usize, 0usize);
        for layer in &self.layers {
            match layer {
                Layer::Conv(l) => {
                    convs += 1;
                    out.push((
                        format!("conv{convs}.weight"),
                        l.weight_dims().to_vec(),
                        l.weight(),
                    ));
                    out.push((format!("conv{convs}.bias"), vec![l.weight_dims()[0]], l.bias()));
                }
                Layer::Dense(l) => {
                    denses += 1;
                    let (in_dim, out_dim) = l.dims();
                    out.push((
                        format!("dense{denses}.weight"),
                        vec![out_dim, in_dim],
                        l.weight(),
                    ));
                    out.push((format!("dense{denses}.bias"), vec![out_dim], l.bias()));
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable view of the same tensors as [`Self::param_tensors`].
    pub fn param_tensors_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [Real])> {
        let mut out: Vec<(String, Vec<usize>, &mut [Real])> = Vec::new();
        let (mut convs, mut denses) = (0usize, 0usize);
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(l) => {
                    convs += 1;
                    let dims = l.weight_dims();
                    let [slot_w, slot_b] = l.param_slots();
                    out.push((format!("conv{convs}.weight"), dims.to_vec(), slot_w.values));
                    out.push((format!("conv{convs}.bias"), vec![dims[0]], slot_b.values));
                }
                Layer::Dense(l) => {
                    denses += 1;
                    let (in_dim, out_dim) = l.dims();
                    let [slot_w, slot_b] = l.param_slots();
                    out.push((format!("dense{denses}.weight"), vec![out_dim, in_dim], slot_w.values));
                    out.push((format!("dense{denses}.bias"), vec![out_dim], slot_b.values));
                }
                _ => {}
            }
        }
        out
    }

    /// Clone of every parameter gradient, aligned with
    /// [`Self::param_tensors`].
    pub fn param_grads(&mut self) -> Vec<(String, Vec<Real>)> {
        let names: Vec<String> = self.param_tensors().iter().map(|(n, _, _)| n.clone()).collect();
        let grads: Vec<Vec<Real>> =
            self.param_slots().iter().map(|s| s.grad.to_vec()).collect();
        names.into_iter().zip(grads).collect()
    }
}
