use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_limit, uniform_fill, Params};
use crate::error::{shape_err, Result};
use crate::tensor::{matvec_acc, matvec_t_acc, outer_acc, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative at the pre-activation; ReLU takes 0 at the kink.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected layer, weights `[out_dim, in_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub activation: Activation,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseParams {
            activation,
            weights: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let mut p = Self::zeros(in_dim, out_dim, activation);
        uniform_fill(&mut p.weights, glorot_limit(in_dim, out_dim), rng);
        p
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }
}

impl Params for DenseParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
}

pub fn dense_forward(x: &Tensor, p: &DenseParams) -> Result<(Tensor, DenseCache)> {
    if x.len() != p.in_dim() {
        return shape_err(format!("dense expects {} inputs, got {}", p.in_dim(), x.len()));
    }
    let mut pre = p.bias.data().to_vec();
    matvec_acc(p.weights.data(), x.data(), &mut pre);
    let out = pre.iter().map(|&v| p.activation.apply(v)).collect();
    Ok((Tensor::vector(out), DenseCache { input: x.data().to_vec(), pre }))
}

pub fn dense_backward(grad_out: &Tensor, cache: &DenseCache, p: &DenseParams) -> Result<(Tensor, DenseParams)> {
    grad_out.expect_shape(&[p.out_dim()])?;
    if cache.input.len() != p.in_dim() || cache.pre.len() != p.out_dim() {
        return shape_err("dense cache does not match parameters");
    }
    let delta: Vec<f64> = grad_out
        .data()
        .iter()
        .zip(&cache.pre)
        .map(|(&g, &z)| g * p.activation.derivative(z))
        .collect();
    let mut grads = p.zeros_like();
    outer_acc(&delta, &cache.input, grads.weights.data_mut());
    grads.bias.data_mut().copy_from_slice(&delta);
    let mut grad_in = vec![0.0; p.in_dim()];
    matvec_t_acc(p.weights.data(), &delta, &mut grad_in);
    Ok((Tensor::vector(grad_in), grads))
}
