//! Softmax cross-entropy loss with its gradient in one pass.

use crate::tensor::Tensor;
use crate::{Error, Real, Result};

/// Mean negative log-likelihood over the batch plus the logit gradient
/// `(softmax − onehot) / batch`.
///
/// Logits must be (n, classes, 1, 1); labels are class indices per example.
pub fn softmax_xent_loss(logits: &Tensor, labels: &[u8]) -> Result<(Real, Tensor)> {
    let s = logits.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::Shape(format!(
            "softmax expects (n, classes, 1, 1) logits, got {s}"
        )));
    }
    if labels.len() != s.n {
        return Err(Error::Input(format!(
            "{} labels for {} examples",
            labels.len(),
            s.n
        )));
    }
    let classes = s.c;
    for (i, &label) in labels.iter().enumerate() {
        if label as usize >= classes {
            return Err(Error::Input(format!(
                "label {label} out of range for {classes} classes (example {i})"
            )));
        }
    }
    let mut dlogits = Tensor::zeros(s)?;
    let batch = s.n as Real;
    let mut loss = 0.0;
    for n in 0..s.n {
        let row = &logits.data()[n * classes..(n + 1) * classes];
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let exps: Vec<Real> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: Real = exps.iter().sum();
        let drow = &mut dlogits.data_mut()[n * classes..(n + 1) * classes];
        for (k, &e) in exps.iter().enumerate() {
            let p = e / sum;
            drow[k] = p / batch;
        }
        let label = labels[n] as usize;
        loss += -(exps[label] / sum).ln();
        drow[label] -= 1.0 / batch;
    }
    Ok((loss / batch, dlogits))
}

/// Stateless marker for the loss head of a network spec.
#[derive(Clone, Copy, Debug, Default)]
pub struct SoftmaxXent;

/// Row-wise softmax probabilities, used by evaluation and analysis.
pub fn softmax_probs(logits: &[Real]) -> Vec<Real> {
    let max = logits.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let exps: Vec<Real> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: Real = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn uniform_logits_give_ln_k() {
        for k in [2usize, 5, 10] {
            let logits = Tensor::filled(Shape::new(3, k, 1, 1), 0.7).unwrap();
            let (loss, _) = softmax_xent_loss(&logits, &[0, 1, (k - 1) as u8]).unwrap();
            assert!((loss - (k as Real).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_correct_class_has_tiny_loss() {
        let logits = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![10.0, -10.0]).unwrap();
        let (loss, dlogits) = softmax_xent_loss(&logits, &[0]).unwrap();
        assert!(loss < 1e-8);
        assert!(dlogits.data()[0].abs() < 1e-8);
    }

    #[test]
    fn out_of_range_label_rejected() {
        let logits = Tensor::zeros(Shape::new(1, 3, 1, 1)).unwrap();
        assert!(matches!(
            softmax_xent_loss(&logits, &[3]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn probabilities_sum_to_one_and_loss_nonnegative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let row: Vec<Real> = (0..7).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let probs = softmax_probs(&row);
            let sum: Real = probs.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(probs.iter().all(|&p| p >= 0.0));
            let logits = Tensor::from_vec(Shape::new(1, 7, 1, 1), row).unwrap();
            let (loss, _) = softmax_xent_loss(&logits, &[rng.gen_range(0..7) as u8]).unwrap();
            assert!(loss >= 0.0);
        }
    }
}
