//! The random-transform layer: on every training forward pass each example's
//! feature maps are warped by a freshly sampled affine transform, and the
//! backward pass multiplies by the transpose of the interpolation matrix. In
//! test mode the layer is the identity, so a trained network's weights can
//! be used in a plain CNN unchanged.
//!
//! Randomness contract: the layer owns a ChaCha8 stream seeded from
//! `TiConfig::seed`. Each example consumes draws in the fixed order θ, s_x,
//! s_y, d_x, d_y (s_y is copied from s_x instead of drawn when `isotropic`),
//! and examples are drawn in batch order before any parallel work starts, so
//! the stream never depends on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::layers::Mode;
use crate::tensor::Tensor;
use crate::transform::{apply_into, apply_transpose_into, build_sampler, compose, AffineParams,
                       SamplerPlan};
use crate::{Error, Real, Result};

/// Sampling distributions for one transform layer: θ ~ N(mu_theta,
/// sigma_theta²) degrees, s_x/s_y ~ N(mu_s, sigma_s²), d_x/d_y ~ N(mu_d,
/// sigma_d²) as fractions of the map extent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TiConfig {
    pub mu_theta: Real,
    pub sigma_theta: Real,
    pub mu_s: Real,
    pub sigma_s: Real,
    pub mu_d: Real,
    pub sigma_d: Real,
    /// Force s_y = s_x.
    pub isotropic: bool,
    pub seed: u64,
}

impl Default for TiConfig {
    /// The distorted-MNIST settings: θ ~ N(0, 30²), s ~ N(1, 0.15²),
    /// d ~ N(0, 0.2²).
    fn default() -> TiConfig {
        TiConfig {
            mu_theta: 0.0,
            sigma_theta: 30.0,
            mu_s: 1.0,
            sigma_s: 0.15,
            mu_d: 0.0,
            sigma_d: 0.2,
            isotropic: false,
            seed: 0,
        }
    }
}

/// Rare Gaussian tails are clamped so samplers stay well conditioned.
const THETA_CLAMP: Real = 180.0;
const SCALE_MIN: Real = 0.05;
const SCALE_MAX: Real = 20.0;

#[derive(Clone, Debug)]
pub struct TiLayer {
    config: TiConfig,
    rng: ChaCha8Rng,
    plans: Option<Vec<SamplerPlan>>,
    frozen: bool,
}

impl TiLayer {
    pub fn new(config: TiConfig) -> Result<TiLayer> {
        if config.sigma_theta < 0.0 || config.sigma_s < 0.0 || config.sigma_d < 0.0 {
            return Err(Error::Input(format!(
                "transform sigmas must be >= 0: {config:?}"
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(TiLayer { config, rng, plans: None, frozen: false })
    }

    pub fn config(&self) -> &TiConfig {
        &self.config
    }

    /// Keep reusing the plans cached by the last training forward instead of
    /// sampling fresh ones. Used by gradient checks, where the transform
    /// must be a constant.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Draw one transform instance; θ is clamped to ±180°, scales to
    /// [0.05, 20].
    pub fn sample_params(&mut self) -> AffineParams {
        let theta = Normal::new(self.config.mu_theta, self.config.sigma_theta)
            .unwrap()
            .sample(&mut self.rng);
        let scale = Normal::new(self.config.mu_s, self.config.sigma_s).unwrap();
        let sx = scale.sample(&mut self.rng);
        let sy = if self.config.isotropic { sx } else { scale.sample(&mut self.rng) };
        let shift = Normal::new(self.config.mu_d, self.config.sigma_d).unwrap();
        let dx = shift.sample(&mut self.rng);
        let dy = shift.sample(&mut self.rng);
        AffineParams {
            theta_deg: theta.clamp(-THETA_CLAMP, THETA_CLAMP),
            sx: sx.clamp(SCALE_MIN, SCALE_MAX),
            sy: sy.clamp(SCALE_MIN, SCALE_MAX),
            dx,
            dy,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Test {
            // a test-mode pass invalidates cached plans so backward can
            // never pick up a transform from an older training batch
            if !self.frozen {
                self.plans = None;
            }
            return Ok(x.clone());
        }
        let s = x.shape();
        if !(self.frozen && self.plans.is_some()) {
            let params: Vec<AffineParams> = (0..s.n).map(|_| self.sample_params()).collect();
            let plans = params
                .par_iter()
                .map(|p| build_sampler(&compose(p, s.h, s.w)?, s.h, s.w))
                .collect::<Result<Vec<_>>>()?;
            self.plans = Some(plans);
        }
        let plans = self.plans.as_ref().unwrap();
        if plans.len() != s.n || plans[0].height() != s.h || plans[0].width() != s.w {
            return Err(Error::State(format!(
                "frozen plans were built for a different batch than {s}"
            )));
        }
        let mut out = Tensor::zeros(s)?;
        out.data_mut()
            .par_chunks_exact_mut(s.features())
            .zip(x.data().par_chunks_exact(s.features()))
            .zip(plans.par_iter())
            .for_each(|((out_n, x_n), plan)| apply_into(plan, x_n, out_n));
        Ok(out)
    }

    /// Multiply each example's gradient by the transpose of the plan cached
    /// for it by the immediately preceding forward.
    pub fn backward(&mut self, dout: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Test {
            return Ok(dout.clone());
        }
        let s = dout.shape();
        let plans = self
            .plans
            .as_ref()
            .ok_or_else(|| Error::State("transform backward without cached forward".into()))?;
        if plans.len() != s.n || plans[0].height() != s.h || plans[0].width() != s.w {
            return Err(Error::Shape(format!(
                "cached plans do not match gradient shape {s}"
            )));
        }
        let mut dx = Tensor::zeros(s)?;
        dx.data_mut()
            .par_chunks_exact_mut(s.features())
            .zip(dout.data().par_chunks_exact(s.features()))
            .zip(plans.par_iter())
            .for_each(|((dx_n, dout_n), plan)| apply_transpose_into(plan, dout_n, dx_n));
        Ok(dx)
    }

    /// Plans cached by the last training forward, if any.
    pub fn cached_plans(&self) -> Option<&[SamplerPlan]> {
        self.plans.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{dot, Shape};
    use rand::Rng;

    fn degenerate_config(seed: u64) -> TiConfig {
        TiConfig {
            sigma_theta: 0.0,
            sigma_s: 0.0,
            sigma_d: 0.0,
            seed,
            ..TiConfig::default()
        }
    }

    fn random_tensor(shape: Shape, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.gen::<Real>() - 0.5).collect())
            .unwrap()
    }

    #[test]
    fn degenerate_gaussians_give_identity_params() {
        let mut layer = TiLayer::new(degenerate_config(1)).unwrap();
        for _ in 0..10 {
            assert_eq!(layer.sample_params(), AffineParams::identity());
        }
    }

    #[test]
    fn sample_statistics_match_distribution() {
        let mut layer = TiLayer::new(TiConfig::default()).unwrap();
        let thetas: Vec<Real> = (0..10_000).map(|_| layer.sample_params().theta_deg).collect();
        let mean = thetas.iter().sum::<Real>() / thetas.len() as Real;
        let var = thetas.iter().map(|t| (t - mean) * (t - mean)).sum::<Real>()
            / (thetas.len() - 1) as Real;
        assert!(mean.abs() < 1.0, "sample mean {mean}");
        let std = var.sqrt();
        assert!((28.5..=31.5).contains(&std), "sample std {std}");
    }

    #[test]
    fn fixed_seed_reproduces_parameter_stream() {
        let mut a = TiLayer::new(TiConfig::default()).unwrap();
        let mut b = TiLayer::new(TiConfig::default()).unwrap();
        for _ in 0..100 {
            assert_eq!(a.sample_params(), b.sample_params());
        }
    }

    #[test]
    fn test_mode_is_bitwise_identity() {
        let mut layer = TiLayer::new(TiConfig::default()).unwrap();
        let x = random_tensor(Shape::new(3, 2, 6, 6), 2);
        let out = layer.forward(&x, Mode::Test).unwrap();
        assert_eq!(out, x);
        let back = layer.backward(&x, Mode::Test).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn degenerate_train_config_is_identity() {
        let mut layer = TiLayer::new(degenerate_config(3)).unwrap();
        let x = random_tensor(Shape::new(2, 3, 7, 7), 4);
        let out = layer.forward(&x, Mode::Train).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let dout = random_tensor(Shape::new(2, 3, 7, 7), 5);
        let back = layer.backward(&dout, Mode::Train).unwrap();
        for (a, b) in back.data().iter().zip(dout.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn each_example_gets_its_own_transform() {
        let mut layer = TiLayer::new(TiConfig::default()).unwrap();
        let x = random_tensor(Shape::new(2, 1, 8, 8), 6);
        layer.forward(&x, Mode::Train).unwrap();
        let plans = layer.cached_plans().unwrap();
        assert_eq!(plans.len(), 2);
        assert_ne!(plans[0], plans[1]);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut layer = TiLayer::new(TiConfig::default()).unwrap();
        let dout = random_tensor(Shape::new(1, 1, 4, 4), 7);
        assert!(matches!(
            layer.backward(&dout, Mode::Train),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn frozen_layer_is_linear_with_exact_adjoint() {
        let mut layer = TiLayer::new(TiConfig::default()).unwrap();
        let shape = Shape::new(2, 3, 9, 9);
        let x = random_tensor(shape, 8);
        layer.forward(&x, Mode::Train).unwrap();
        layer.set_frozen(true);

        let y = random_tensor(shape, 9);
        // linearity
        let fx = layer.forward(&x, Mode::Train).unwrap();
        let fy = layer.forward(&y, Mode::Train).unwrap();
        let combo = crate::tensor::axpy(2.5, &x, &y).unwrap();
        let fcombo = layer.forward(&combo, Mode::Train).unwrap();
        for ((a, b), c) in fcombo.data().iter().zip(fx.data()).zip(fy.data()) {
            assert!((a - (2.5 * b + c)).abs() <= 1e-10);
        }
        // adjoint identity <T x, y> == <x, Tᵀ y>
        let lhs = dot(&fx, &y).unwrap();
        let rhs = dot(&x, &layer.backward(&y, Mode::Train).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn determinism_same_seed_same_output() {
        let x = random_tensor(Shape::new(4, 2, 10, 10), 10);
        let run = || {
            let mut layer = TiLayer::new(TiConfig { seed: 42, ..TiConfig::default() }).unwrap();
            let a = layer.forward(&x, Mode::Train).unwrap();
            let b = layer.forward(&x, Mode::Train).unwrap();
            (a, b)
        };
        let (a1, b1) = run();
        let (a2, b2) = run();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        // resampling between passes actually changes the warp
        assert_ne!(a1, b1);
    }
}
