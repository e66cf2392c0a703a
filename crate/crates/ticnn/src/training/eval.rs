//! Test-mode evaluation: error rate, per-class accuracy, top-k error.

use serde::Serialize;

use super::network::Network;
use crate::data::LabeledImageSet;
use crate::layers::Mode;
use crate::{Error, Real, Result};

/// Examples per forward chunk, to bound activation memory on big sets.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// Fraction of argmax misclassifications. Ties pick the lowest class.
    pub error_rate: Real,
    pub per_class_accuracy: Vec<Real>,
    pub top_k: usize,
    pub top_k_error: Real,
}

/// Evaluate in test mode (transform layers are the identity). `top_k`
/// additionally reports the fraction of examples whose label is not among
/// the k best logits, ties again resolved toward lower class indices.
pub fn evaluate(net: &mut Network, set: &LabeledImageSet, top_k: usize) -> Result<EvalReport> {
    if set.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty set".into()));
    }
    let classes = net.output_features();
    if top_k == 0 || top_k > classes {
        return Err(Error::Input(format!(
            "top_k must lie in [1, {classes}], got {top_k}"
        )));
    }
    let mut correct_per_class = vec![0usize; classes];
    let mut count_per_class = vec![0usize; classes];
    let mut errors = 0usize;
    let mut top_k_errors = 0usize;

    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, labels) = set.gather(chunk)?;
        let logits = net.forward(&x, Mode::Test)?;
        for (n, &label) in labels.iter().enumerate() {
            let label = label as usize;
            if label >= classes {
                return Err(Error::Input(format!(
                    "label {label} out of range for {classes} classes"
                )));
            }
            let row = &logits.data()[n * classes..(n + 1) * classes];
            let mut argmax = 0usize;
            for (k, &v) in row.iter().enumerate() {
                if v > row[argmax] {
                    argmax = k;
                }
            }
            count_per_class[label] += 1;
            if argmax == label {
                correct_per_class[label] += 1;
            } else {
                errors += 1;
            }
            // rank of the label under (logit desc, class index asc)
            let rank = row
                .iter()
                .enumerate()
                .filter(|&(k, &v)| v > row[label] || (v == row[label] && k < label))
                .count();
            if rank >= top_k {
                top_k_errors += 1;
            }
        }
    }

    let n = set.len() as Real;
    let per_class_accuracy = correct_per_class
        .iter()
        .zip(&count_per_class)
        .map(|(&c, &t)| if t == 0 { 1.0 } else { c as Real / t as Real })
        .collect();
    Ok(EvalReport {
        error_rate: errors as Real / n,
        per_class_accuracy,
        top_k,
        top_k_error: top_k_errors as Real / n,
    })
}
