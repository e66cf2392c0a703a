//! Fully connected layer over flattened feature maps.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Mode, INIT_BIAS, INIT_WEIGHT_STD};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

#[derive(Clone, Debug)]
struct DenseCache {
    in_shape: Shape,
    /// Flattened input, n × in_dim.
    x: Vec<Real>,
}

/// Affine map y = W·x + b with W of shape (out_dim, in_dim).
#[derive(Clone, Debug)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<Real>,
    bias: Vec<Real>,
    grad_weight: Vec<Real>,
    grad_bias: Vec<Real>,
    cache: Option<DenseCache>,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize) -> Result<DenseLayer> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape(format!(
                "dense dims must be >= 1, got {in_dim} -> {out_dim}"
            )));
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
            grad_weight: vec![0.0; out_dim * in_dim],
            grad_bias: vec![0.0; out_dim],
            cache: None,
        })
    }

    pub fn init_params(&mut self, rng: &mut ChaCha8Rng) {
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).unwrap();
        for w in &mut self.weight {
            *w = normal.sample(rng);
        }
        self.bias.fill(INIT_BIAS);
    }

    pub fn weight(&self) -> &[Real] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [Real] {
        &mut self.weight
    }

    pub fn bias(&self) -> &[Real] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [Real] {
        &mut self.bias
    }

    pub fn grad_weight(&self) -> &[Real] {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &[Real] {
        &self.grad_bias
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.in_dim, self.out_dim)
    }

    pub fn param_slots(&mut self) -> [super::ParamSlot<'_>; 2] {
        [
            super::ParamSlot { is_bias: false, values: &mut self.weight, grad: &self.grad_weight },
            super::ParamSlot { is_bias: true, values: &mut self.bias, grad: &self.grad_bias },
        ]
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = x.shape();
        if s.features() != self.in_dim {
            return Err(Error::Shape(format!(
                "dense expects {} features, got {} (shape {s})",
                self.in_dim,
                s.features()
            )));
        }
        let mut out = Tensor::zeros(Shape::new(s.n, self.out_dim, 1, 1))?;
        for n in 0..s.n {
            let xn = x.example(n);
            let on = &mut out.data_mut()[n * self.out_dim..(n + 1) * self.out_dim];
            for (o, ov) in on.iter_mut().enumerate() {
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.bias[o];
                for (w, xv) in row.iter().zip(xn) {
                    acc += w * xv;
                }
                *ov = acc;
            }
        }
        self.cache = match mode {
            Mode::Train => Some(DenseCache { in_shape: s, x: x.data().to_vec() }),
            Mode::Test => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward without cached forward".into()))?;
        let n_examples = cache.in_shape.n;
        if dout.shape() != Shape::new(n_examples, self.out_dim, 1, 1) {
            return Err(Error::Shape(format!(
                "dense backward expects dout ({n_examples}, {}, 1, 1), got {}",
                self.out_dim,
                dout.shape()
            )));
        }
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
        let mut dx = Tensor::zeros(cache.in_shape)?;
        for n in 0..n_examples {
            let gn = &dout.data()[n * self.out_dim..(n + 1) * self.out_dim];
            let xn = &cache.x[n * self.in_dim..(n + 1) * self.in_dim];
            let dxn = &mut dx.data_mut()[n * self.in_dim..(n + 1) * self.in_dim];
            for (o, &g) in gn.iter().enumerate() {
                self.grad_bias[o] += g;
                let wrow = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                let grow = &mut self.grad_weight[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    grow[i] += g * xn[i];
                    dxn[i] += g * wrow[i];
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let mut layer = DenseLayer::new(3, 3).unwrap();
        for i in 0..3 {
            layer.weight_mut()[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec(Shape::new(2, 3, 1, 1), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .unwrap();
        let out = layer.forward(&x, Mode::Test).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn feature_mismatch_rejected() {
        let mut layer = DenseLayer::new(4, 2).unwrap();
        let x = Tensor::zeros(Shape::new(1, 3, 1, 1)).unwrap();
        assert!(matches!(layer.forward(&x, Mode::Test), Err(Error::Shape(_))));
    }

    #[test]
    fn flattens_spatial_input() {
        let mut layer = DenseLayer::new(4, 1).unwrap();
        layer.weight_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let out = layer.forward(&x, Mode::Test).unwrap();
        assert_eq!(out.data(), &[10.0]);
    }
}
