//! ReLU with a cached pre-activation mask.

use super::Mode;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ReluLayer {
    mask: Option<Vec<bool>>,
}

impl ReluLayer {
    pub fn new() -> ReluLayer {
        ReluLayer { mask: None }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.mask = match mode {
            Mode::Train => Some(x.data().iter().map(|&v| v > 0.0).collect()),
            Mode::Test => None,
        };
        Ok(x.map(|v| v.max(0.0)))
    }

    /// Pass gradient where the cached pre-activation was positive.
    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::State("relu backward without cached forward".into()))?;
        if mask.len() != dout.shape().len() {
            return Err(Error::Shape(format!(
                "relu backward expects {} elements, got {}",
                mask.len(),
                dout.shape().len()
            )));
        }
        let data = dout
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Tensor::from_vec(dout.shape(), data)
    }
}
