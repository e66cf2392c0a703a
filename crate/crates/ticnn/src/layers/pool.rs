//! Max pooling with argmax bookkeeping for the backward pass. Ties go to
//! the first maximum in row-major window order, so backward is
//! deterministic.

use super::Mode;
use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

#[derive(Clone, Debug)]
struct PoolCache {
    in_shape: Shape,
    out_shape: Shape,
    /// Flat input offset of the recorded maximum, one per output element.
    argmax: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct MaxPoolLayer {
    window: usize,
    stride: usize,
    cache: Option<PoolCache>,
}

impl MaxPoolLayer {
    pub fn new(window: usize, stride: usize) -> Result<MaxPoolLayer> {
        if window == 0 || stride == 0 {
            return Err(Error::Shape(format!(
                "pool window and stride must be >= 1, got {window}/{stride}"
            )));
        }
        Ok(MaxPoolLayer { window, stride, cache: None })
    }

    /// Output spatial dims; trailing partial windows are rejected.
    pub fn out_dims(&self, s: Shape) -> Result<(usize, usize)> {
        let fit = |dim: usize| -> Result<usize> {
            if dim < self.window || (dim - self.window) % self.stride != 0 {
                return Err(Error::Shape(format!(
                    "pool window {} stride {} leaves a partial window on extent {dim}",
                    self.window, self.stride
                )));
            }
            Ok((dim - self.window) / self.stride + 1)
        };
        Ok((fit(s.h)?, fit(s.w)?))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = x.shape();
        let (oh, ow) = self.out_dims(s)?;
        let out_shape = Shape::new(s.n, s.c, oh, ow);
        let mut out = Tensor::zeros(out_shape)?;
        let mut argmax = if mode == Mode::Train {
            Vec::with_capacity(out_shape.len())
        } else {
            Vec::new()
        };
        for n in 0..s.n {
            for c in 0..s.c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = Real::NEG_INFINITY;
                        let mut best_off = 0usize;
                        for ky in 0..self.window {
                            for kx in 0..self.window {
                                let off =
                                    x.offset(n, c, oy * self.stride + ky, ox * self.stride + kx);
                                let v = x.data()[off];
                                if v > best {
                                    best = v;
                                    best_off = off;
                                }
                            }
                        }
                        *out.at_mut(n, c, oy, ox) = best;
                        if mode == Mode::Train {
                            argmax.push(best_off as u32);
                        }
                    }
                }
            }
        }
        self.cache = match mode {
            Mode::Train => Some(PoolCache { in_shape: s, out_shape, argmax }),
            Mode::Test => None,
        };
        Ok(out)
    }

    /// Route each output gradient to its recorded argmax position.
    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("pool backward without cached forward".into()))?;
        if dout.shape() != cache.out_shape {
            return Err(Error::Shape(format!(
                "pool backward expects dout {}, got {}",
                cache.out_shape,
                dout.shape()
            )));
        }
        let mut dx = Tensor::zeros(cache.in_shape)?;
        for (&off, &g) in cache.argmax.iter().zip(dout.data()) {
            dx.data_mut()[off as usize] += g;
        }
        Ok(dx)
    }
}
