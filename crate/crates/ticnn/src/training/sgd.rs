//! The SGD training loop: momentum, step learning-rate schedule, optional
//! per-element weight clipping, interleaved evaluation, and a divergence
//! guard.

use super::eval::evaluate;
use super::network::Network;
use super::TrainConfig;
use crate::data::{Batcher, LabeledImageSet};
use crate::layers::{softmax_xent_loss, Mode};
use crate::{Error, Real, Result};

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub lr: Real,
    pub loss: Real,
    pub eval_error: Option<Real>,
}

/// Step schedule: `base_lr · lr_gamma^⌊iter / lr_step⌋`.
pub fn learning_rate(cfg: &TrainConfig, iter: usize) -> Real {
    cfg.base_lr * cfg.lr_gamma.powi((iter / cfg.lr_step) as i32)
}

/// Observers of the training loop. Both default to no-ops.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub on_log: Option<&'a mut dyn FnMut(&LogRow)>,
    pub on_checkpoint: Option<&'a mut dyn FnMut(usize, &Network) -> Result<()>>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub iterations: usize,
    pub final_loss: Real,
    pub log: Vec<LogRow>,
    pub final_eval_error: Option<Real>,
}

/// Run `cfg.iterations` SGD steps:
///
///   v ← momentum·v − lr·(g + weight_decay·w);  w ← w + v
///
/// followed by per-element clipping to ±weight_clip when configured. Biases
/// see `lr · bias_lr_mult`. Aborts with a divergence error the moment the
/// loss stops being finite.
pub fn train(
    net: &mut Network,
    train_set: &LabeledImageSet,
    eval_set: Option<&LabeledImageSet>,
    cfg: &TrainConfig,
    hooks: &mut TrainHooks<'_>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let batcher = Batcher::new(train_set.len(), cfg.batch_size, cfg.seed)?;
    let mut velocity: Option<Vec<Vec<Real>>> = None;
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut queue: Vec<Vec<usize>> = Vec::new();
    let mut epoch = 0u64;
    let mut final_loss = Real::NAN;
    let mut final_eval_error = None;

    for iter in 0..cfg.iterations {
        if queue.is_empty() {
            queue = batcher.batches(epoch);
            queue.reverse(); // pop from the back in epoch order
            epoch += 1;
        }
        let indices = queue.pop().expect("an epoch always yields batches");
        let (x, labels) = train_set.gather(&indices)?;

        let logits = net.forward(&x, Mode::Train)?;
        let (loss, dlogits) = softmax_xent_loss(&logits, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "loss became {loss} at iteration {iter}"
            )));
        }
        net.backward(&dlogits)?;

        let lr = learning_rate(cfg, iter);
        let mut slots = net.param_slots();
        let velocity = velocity.get_or_insert_with(|| {
            slots.iter().map(|s| vec![0.0; s.values.len()]).collect()
        });
        for (slot, vel) in slots.iter_mut().zip(velocity.iter_mut()) {
            let lr_eff = if slot.is_bias { lr * cfg.bias_lr_mult } else { lr };
            for ((w, &g), v) in slot.values.iter_mut().zip(slot.grad).zip(vel.iter_mut()) {
                *v = cfg.momentum * *v - lr_eff * (g + cfg.weight_decay * *w);
                *w += *v;
                if cfg.weight_clip > 0.0 {
                    *w = w.clamp(-cfg.weight_clip, cfg.weight_clip);
                }
            }
        }

        final_loss = loss;
        let mut row = LogRow { iter, lr, loss, eval_error: None };
        if cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0 {
            if let Some(eval) = eval_set {
                let report = evaluate(net, eval, 1)?;
                row.eval_error = Some(report.error_rate);
                final_eval_error = Some(report.error_rate);
            }
        }
        if let Some(on_log) = hooks.on_log.as_deref_mut() {
            on_log(&row);
        }
        log.push(row);

        if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
            if let Some(on_checkpoint) = hooks.on_checkpoint.as_deref_mut() {
                on_checkpoint(iter + 1, net)?;
            }
        }
    }

    Ok(TrainReport { iterations: cfg.iterations, final_loss, log, final_eval_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule_cfg() -> TrainConfig {
        TrainConfig {
            iterations: 1,
            batch_size: 1,
            base_lr: 0.01,
            lr_gamma: 0.1,
            lr_step: 50_000,
            momentum: 0.0,
            weight_decay: 0.0,
            weight_clip: 0.0,
            bias_lr_mult: 1.0,
            eval_every: 0,
            checkpoint_every: 0,
            seed: 0,
        }
    }

    #[test]
    fn published_schedule_arithmetic() {
        let cfg = schedule_cfg();
        assert!((learning_rate(&cfg, 0) - 0.01).abs() < 1e-15);
        assert!((learning_rate(&cfg, 49_999) - 0.01).abs() < 1e-15);
        assert!((learning_rate(&cfg, 50_000) - 0.001).abs() < 1e-15);
        assert!((learning_rate(&cfg, 100_000) - 0.0001).abs() < 1e-16);
    }
}
