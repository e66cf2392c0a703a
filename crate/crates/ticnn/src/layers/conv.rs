//! 2D convolution with zero padding, realized as im2col plus a matrix
//! product. The kernel-as-matrix view is never materialized beyond the
//! per-batch patch matrix; the backward pass runs the exact adjoint of the
//! same product.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Mode, INIT_BIAS, INIT_WEIGHT_STD};
use crate::linalg::{col2im, gemm, im2col, PatchGeom};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

/// Examples per gradient-accumulation chunk. Chunks are fixed so the
/// summation order never depends on thread scheduling.
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Debug)]
struct ConvCache {
    in_shape: Shape,
    geom: PatchGeom,
    /// Patch matrix of the whole batch: n × (out_h·out_w) × (c·kh·kw).
    col: Vec<Real>,
}

/// Convolution layer: weights (out_c, in_c, kh, kw), one bias per output
/// channel, square stride and zero padding on both axes.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    in_c: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    weight: Vec<Real>,
    bias: Vec<Real>,
    grad_weight: Vec<Real>,
    grad_bias: Vec<Real>,
    cache: Option<ConvCache>,
}

impl ConvLayer {
    pub fn new(
        in_c: usize,
        out_c: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    ) -> Result<ConvLayer> {
        if in_c == 0 || out_c == 0 || kh == 0 || kw == 0 || stride == 0 {
            return Err(Error::Shape(format!(
                "conv dims must be >= 1: in_c={in_c} out_c={out_c} kernel={kh}x{kw} stride={stride}"
            )));
        }
        let wlen = out_c * in_c * kh * kw;
        Ok(ConvLayer {
            in_c,
            out_c,
            kh,
            kw,
            stride,
            padding,
            weight: vec![0.0; wlen],
            bias: vec![0.0; out_c],
            grad_weight: vec![0.0; wlen],
            grad_bias: vec![0.0; out_c],
            cache: None,
        })
    }

    /// Draw weights from N(0, 0.01²) in row-major order and set biases to
    /// 0.1.
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

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_c, self.in_c, self.kh, self.kw]
    }

    pub fn param_slots(&mut self) -> [super::ParamSlot<'_>; 2] {
        [
            super::ParamSlot { is_bias: false, values: &mut self.weight, grad: &self.grad_weight },
            super::ParamSlot { is_bias: true, values: &mut self.bias, grad: &self.grad_bias },
        ]
    }

    pub fn out_channels(&self) -> usize {
        self.out_c
    }

    /// Output spatial dims for an input shape, or a shape error when the
    /// channel count disagrees or the stride does not divide cleanly.
    pub fn out_dims(&self, s: Shape) -> Result<(usize, usize)> {
        if s.c != self.in_c {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_c, s.c
            )));
        }
        let span_h = (s.h + 2 * self.padding) as isize - self.kh as isize;
        let span_w = (s.w + 2 * self.padding) as isize - self.kw as isize;
        if span_h < 0 || span_w < 0 || span_h as usize % self.stride != 0
            || span_w as usize % self.stride != 0
        {
            return Err(Error::Shape(format!(
                "conv {}x{} stride {} pad {} does not produce integral output dims on {}x{}",
                self.kh, self.kw, self.stride, self.padding, s.h, s.w
            )));
        }
        Ok((
            span_h as usize / self.stride + 1,
            span_w as usize / self.stride + 1,
        ))
    }

    fn geom(&self, s: Shape) -> Result<PatchGeom> {
        let (out_h, out_w) = self.out_dims(s)?;
        Ok(PatchGeom {
            c: s.c,
            h: s.h,
            w: s.w,
            kh: self.kh,
            kw: self.kw,
            stride: self.stride,
            padding: self.padding,
            out_h,
            out_w,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = x.shape();
        let geom = self.geom(s)?;
        let px = geom.out_len();
        let patch = geom.patch_len();
        let mut out = Tensor::zeros(Shape::new(s.n, self.out_c, geom.out_h, geom.out_w))?;

        let out_c = self.out_c;
        let weight = &self.weight;
        let bias = &self.bias;
        let run_one = |out_n: &mut [Real], col_n: &mut [Real], x_n: &[Real]| {
            im2col(x_n, &geom, col_n);
            // out_n viewed as (px, out_c) with element (p, o) at o*px + p
            gemm(
                px, patch, out_c, 1.0, col_n, patch as isize, 1, weight, 1,
                patch as isize, 0.0, out_n, 1, px as isize,
            );
            for (o, plane) in out_n.chunks_exact_mut(px).enumerate() {
                let b = bias[o];
                for v in plane {
                    *v += b;
                }
            }
        };

        if mode == Mode::Train {
            // the whole-batch patch matrix is kept for the backward pass
            let mut col = vec![0.0; s.n * px * patch];
            out.data_mut()
                .par_chunks_exact_mut(out_c * px)
                .zip(col.par_chunks_exact_mut(px * patch))
                .zip(x.data().par_chunks_exact(s.features()))
                .for_each(|((out_n, col_n), x_n)| run_one(out_n, col_n, x_n));
            self.cache = Some(ConvCache { in_shape: s, geom, col });
        } else {
            out.data_mut()
                .par_chunks_exact_mut(out_c * px)
                .zip(x.data().par_chunks_exact(s.features()))
                .for_each(|(out_n, x_n)| {
                    let mut col_n = vec![0.0; px * patch];
                    run_one(out_n, &mut col_n, x_n);
                });
            self.cache = None;
        }
        Ok(out)
    }

    /// Gradients of the loss w.r.t. weights, biases, and (optionally) the
    /// input. The input gradient is skipped for the first layer of a net.
    pub fn backward(&mut self, dout: &Tensor, want_dx: bool) -> Result<Option<Tensor>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv backward without cached forward".into()))?;
        let geom = cache.geom;
        let s = cache.in_shape;
        let px = geom.out_len();
        let patch = geom.patch_len();
        let expect = Shape::new(s.n, self.out_c, geom.out_h, geom.out_w);
        if dout.shape() != expect {
            return Err(Error::Shape(format!(
                "conv backward expects dout {expect}, got {}",
                dout.shape()
            )));
        }

        for (o, g) in self.grad_bias.iter_mut().enumerate() {
            let mut acc = 0.0;
            for n in 0..s.n {
                let plane = &dout.data()[(n * self.out_c + o) * px..][..px];
                acc += plane.iter().sum::<Real>();
            }
            *g = acc;
        }

        // dW[o, j] = Σ_n Σ_p dout[n, o, p] · col[n, p, j], accumulated over
        // fixed example chunks so the reduction order is deterministic.
        let out_c = self.out_c;
        let chunks: Vec<Vec<Real>> = (0..s.n)
            .step_by(GRAD_CHUNK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let end = (start + GRAD_CHUNK).min(s.n);
                let mut partial = vec![0.0; out_c * patch];
                for n in start..end {
                    let dout_n = &dout.data()[n * out_c * px..][..out_c * px];
                    let col_n = &cache.col[n * px * patch..][..px * patch];
                    gemm(
                        out_c, px, patch, 1.0, dout_n, px as isize, 1, col_n,
                        patch as isize, 1, 1.0, &mut partial, patch as isize, 1,
                    );
                }
                partial
            })
            .collect();
        self.grad_weight.fill(0.0);
        for partial in chunks {
            for (g, p) in self.grad_weight.iter_mut().zip(&partial) {
                *g += p;
            }
        }

        if !want_dx {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(s)?;
        let weight = &self.weight;
        dx.data_mut()
            .par_chunks_exact_mut(s.features())
            .enumerate()
            .for_each(|(n, dx_n)| {
                let dout_n = &dout.data()[n * out_c * px..][..out_c * px];
                let mut dcol = vec![0.0; px * patch];
                // dcol[p, j] = Σ_o dout[n, o, p] · W[o, j]
                gemm(
                    px, out_c, patch, 1.0, dout_n, 1, px as isize, weight,
                    patch as isize, 1, 0.0, &mut dcol, patch as isize, 1,
                );
                col2im(&dcol, &geom, dx_n);
            });
        Ok(Some(dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Six-nested-loop reference convolution.
    fn conv_oracle(layer: &ConvLayer, x: &Tensor) -> Tensor {
        let s = x.shape();
        let (oh, ow) = layer.out_dims(s).unwrap();
        let mut out = Tensor::zeros(Shape::new(s.n, layer.out_c, oh, ow)).unwrap();
        for n in 0..s.n {
            for o in 0..layer.out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = layer.bias[o];
                        for c in 0..layer.in_c {
                            for ky in 0..layer.kh {
                                for kx in 0..layer.kw {
                                    let sy = (oy * layer.stride + ky) as isize
                                        - layer.padding as isize;
                                    let sx = (ox * layer.stride + kx) as isize
                                        - layer.padding as isize;
                                    if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize
                                    {
                                        continue;
                                    }
                                    let widx = ((o * layer.in_c + c) * layer.kh + ky) * layer.kw
                                        + kx;
                                    acc += layer.weight[widx]
                                        * x.at(n, c, sy as usize, sx as usize);
                                }
                            }
                        }
                        *out.at_mut(n, o, oy, ox) = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut layer = ConvLayer::new(1, 1, 1, 1, 1, 0).unwrap();
        layer.weight_mut()[0] = 1.0;
        let x = Tensor::from_vec(
            Shape::new(1, 1, 2, 3),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let out = layer.forward(&x, Mode::Test).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let mut layer = ConvLayer::new(1, 1, 2, 2, 1, 0).unwrap();
        layer.weight_mut().fill(1.0);
        let x = Tensor::filled(Shape::new(1, 1, 2, 2), 1.0).unwrap();
        let out = layer.forward(&x, Mode::Test).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (n, ci, co, hw, k, stride, pad) in [
            (1usize, 1usize, 1usize, 5usize, 3usize, 1usize, 0usize),
            (2, 3, 4, 9, 3, 1, 1),
            (2, 2, 3, 9, 3, 2, 0),
            (1, 3, 2, 9, 5, 2, 2),
        ] {
            let mut layer = ConvLayer::new(ci, co, k, k, stride, pad).unwrap();
            layer.init_params(&mut rng);
            for w in layer.weight_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
            for b in layer.bias_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
            let shape = Shape::new(n, ci, hw, hw);
            let x = Tensor::from_vec(
                shape,
                (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let fast = layer.forward(&x, Mode::Test).unwrap();
            let slow = conv_oracle(&layer, &x);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn non_integral_output_dims_rejected() {
        let layer = ConvLayer::new(1, 1, 3, 3, 2, 0).unwrap();
        // (6 - 3) % 2 != 0
        assert!(matches!(
            layer.out_dims(Shape::new(1, 1, 6, 6)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut layer = ConvLayer::new(1, 1, 1, 1, 1, 0).unwrap();
        let dout = Tensor::zeros(Shape::new(1, 1, 2, 2)).unwrap();
        assert!(matches!(layer.backward(&dout, true), Err(Error::State(_))));
    }

    #[test]
    fn zero_dout_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut layer = ConvLayer::new(2, 3, 3, 3, 1, 1).unwrap();
        layer.init_params(&mut rng);
        let shape = Shape::new(2, 2, 5, 5);
        let x = Tensor::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let out = layer.forward(&x, Mode::Train).unwrap();
        let dout = Tensor::zeros(out.shape()).unwrap();
        let dx = layer.backward(&dout, true).unwrap().unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(layer.grad_weight().iter().all(|&v| v == 0.0));
        assert!(layer.grad_bias().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_backward_passes_dout_through() {
        let mut layer = ConvLayer::new(1, 1, 1, 1, 1, 0).unwrap();
        layer.weight_mut()[0] = 1.0;
        let x = Tensor::filled(Shape::new(1, 1, 3, 3), 0.5).unwrap();
        layer.forward(&x, Mode::Train).unwrap();
        let dout = Tensor::from_vec(
            Shape::new(1, 1, 3, 3),
            (0..9).map(|i| i as Real).collect(),
        )
        .unwrap();
        let dx = layer.backward(&dout, true).unwrap().unwrap();
        assert_eq!(dx.data(), dout.data());
    }
}
