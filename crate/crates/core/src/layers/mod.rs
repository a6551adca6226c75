//! Layer kinds used by the disaggregation network.
//!
//! Every forward pass returns its output together with a cache holding exactly
//! what the matching backward pass needs. Backward passes return the gradient
//! with respect to the layer input and a parameter block of the same type and
//! shape as the layer's parameters, filled with gradients.

mod conv;
mod dense;
mod lstm;
mod pool;

pub use conv::{conv1d_backward, conv1d_forward, ConvCache, ConvParams, Padding};
pub use dense::{dense_backward, dense_forward, Activation, DenseCache, DenseParams};
pub use lstm::{lstm_backward, lstm_forward, lstm_step, LstmCache, LstmParams};
pub use pool::{maxpool1d_backward, maxpool1d_forward, PoolCache, PoolParams};

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// A block of learnable tensors visited in a fixed order.
pub trait Params: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    /// Same structure with every value set to zero.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Concatenates every tensor, in visiting order, into one vector.
    fn flatten(&self) -> Tensor {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        Tensor::vector(out)
    }

    /// Inverse of [`Params::flatten`].
    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return shape_err(format!(
                "flat parameter vector has {} values, block holds {}",
                flat.len(),
                self.num_params()
            ));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

pub(crate) fn uniform_fill<R: Rng>(t: &mut Tensor, limit: f64, rng: &mut R) {
    if limit == 0.0 {
        t.fill(0.0);
        return;
    }
    for v in t.data_mut() {
        *v = rng.gen_range(-limit..limit);
    }
}

pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
