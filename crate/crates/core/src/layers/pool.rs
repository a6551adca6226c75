use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolParams {
    pub pool_size: usize,
    pub stride: usize,
}

impl PoolParams {
    /// Non-overlapping windows (`stride == pool_size`).
    pub fn new(pool_size: usize) -> Self {
        PoolParams { pool_size, stride: pool_size }
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        if self.pool_size == 0 || self.stride == 0 || len < self.pool_size {
            return None;
        }
        Some((len - self.pool_size) / self.stride + 1)
    }
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    input_shape: [usize; 2],
    /// Input row of the winning element, per output `[j, f]`.
    argmax: Vec<usize>,
}

/// Max over each window, per channel. Ties go to the first occurrence.
pub fn maxpool1d_forward(input: &Tensor, p: &PoolParams) -> Result<(Tensor, PoolCache)> {
    if input.shape().len() != 2 {
        return shape_err(format!("maxpool1d expects [T, F] input, got {:?}", input.shape()));
    }
    let (t_in, f_n) = (input.shape()[0], input.shape()[1]);
    let t_out = p.output_len(t_in).ok_or_else(|| {
        Error::Shape(format!(
            "maxpool1d needs at least {} samples (pool size), got {}",
            p.pool_size, t_in
        ))
    })?;
    let mut out = Tensor::zeros(&[t_out, f_n]);
    let mut argmax = vec![0; t_out * f_n];
    for j in 0..t_out {
        let start = j * p.stride;
        for f in 0..f_n {
            let mut best = start;
            let mut best_v = input.data()[start * f_n + f];
            for t in start + 1..start + p.pool_size {
                let v = input.data()[t * f_n + f];
                if v > best_v {
                    best_v = v;
                    best = t;
                }
            }
            out.data_mut()[j * f_n + f] = best_v;
            argmax[j * f_n + f] = best;
        }
    }
    Ok((out, PoolCache { input_shape: [t_in, f_n], argmax }))
}

/// Routes each output gradient to its window's argmax.
pub fn maxpool1d_backward(grad_out: &Tensor, cache: &PoolCache) -> Result<Tensor> {
    let f_n = cache.input_shape[1];
    grad_out.expect_shape(&[cache.argmax.len() / f_n.max(1), f_n])?;
    let mut grad_in = Tensor::zeros(&cache.input_shape);
    for (idx, (&g, &row)) in grad_out.data().iter().zip(&cache.argmax).enumerate() {
        grad_in.data_mut()[row * f_n + idx % f_n] += g;
    }
    Ok(grad_in)
}
