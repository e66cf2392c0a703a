//! Central finite-difference verification of every parameter gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use crate::layers::{softmax_xent_loss, Mode};
use crate::tensor::Tensor;
use crate::{Real, Result};

/// Overwrite every parameter with U[−scale, scale] draws. Gradient checks
/// run on O(1) weights; the training init (σ = 0.01) leaves mid-network
/// gradients so small that finite-difference rounding noise dominates the
/// relative error.
pub fn randomize_params_uniform(net: &mut Network, scale: Real, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for slot in net.param_slots() {
        for v in slot.values {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

/// Build a network from a spec and gradient-check it on a deterministic
/// synthetic batch: parameters re-drawn at O(1) scale, four input examples
/// in [0, 1], labels cycling over the classes.
pub fn grad_check_spec(spec: &super::NetworkSpec, eps: Real) -> Result<GradCheckReport> {
    let mut net = Network::build(spec)?;
    randomize_params_uniform(&mut net, 0.5, spec.seed.wrapping_add(100));
    let [c, h, w] = spec.input;
    let batch = 4usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(200));
    let x = Tensor::from_vec(
        crate::tensor::Shape::new(batch, c, h, w),
        (0..batch * c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )?;
    let classes = net.output_features();
    let labels: Vec<u8> = (0..batch).map(|i| (i % classes) as u8).collect();
    finite_difference_check(&mut net, &x, &labels, eps)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct GradCheckReport {
    /// Largest relative error over all parameters.
    pub max_rel_error: Real,
    /// Parameter tensor and flat index where it occurred.
    pub worst_param: String,
    pub worst_index: usize,
    pub params_checked: usize,
}

fn loss_of(net: &mut Network, x: &Tensor, labels: &[u8]) -> Result<Real> {
    let logits = net.forward(x, Mode::Train)?;
    Ok(softmax_xent_loss(&logits, labels)?.0)
}

/// Compare backprop gradients of the softmax cross-entropy loss against
/// central finite differences with the given step. Transform layers are
/// frozen to the plans sampled on the first pass so the loss stays a fixed
/// deterministic function of the parameters.
///
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
pub fn finite_difference_check(
    net: &mut Network,
    x: &Tensor,
    labels: &[u8],
    eps: Real,
) -> Result<GradCheckReport> {
    // sample transforms once, then freeze them
    net.forward(x, Mode::Train)?;
    net.set_ti_frozen(true);

    let logits = net.forward(x, Mode::Train)?;
    let (_, dlogits) = softmax_xent_loss(&logits, labels)?;
    net.backward(&dlogits)?;
    let analytic = net.param_grads();

    let layout: Vec<(String, usize)> = net
        .param_tensors()
        .iter()
        .map(|(name, _, values)| (name.clone(), values.len()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        params_checked: 0,
    };
    for (slot, (name, len)) in layout.iter().enumerate() {
        for j in 0..*len {
            let nudge = |net: &mut Network, delta: Real| {
                net.param_tensors_mut()[slot].2[j] += delta;
            };
            nudge(net, eps);
            let plus = loss_of(net, x, labels)?;
            nudge(net, -2.0 * eps);
            let minus = loss_of(net, x, labels)?;
            nudge(net, eps);
            let numeric = (plus - minus) / (2.0 * eps);
            let g = analytic[slot].1[j];
            let denom = g.abs().max(numeric.abs()).max(1e-8);
            let rel = (g - numeric).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = j;
            }
            report.params_checked += 1;
        }
    }
    net.set_ti_frozen(false);
    Ok(report)
}
