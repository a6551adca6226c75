use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_limit, uniform_fill, Params};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero-pad so the output keeps the input length. Even kernels get the
    /// extra zero on the right.
    #[default]
    Same,
    Valid,
}

/// 1D convolution weights laid out `[num_filters, kernel_width, in_channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub padding: Padding,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn zeros(num_filters: usize, kernel_width: usize, in_channels: usize, padding: Padding) -> Self {
        ConvParams {
            padding,
            weights: Tensor::zeros(&[num_filters, kernel_width, in_channels]),
            bias: Tensor::zeros(&[num_filters]),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng>(
        num_filters: usize,
        kernel_width: usize,
        in_channels: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(num_filters, kernel_width, in_channels, padding);
        let limit = glorot_limit(kernel_width * in_channels, kernel_width * num_filters);
        uniform_fill(&mut p.weights, limit, rng);
        p
    }

    pub fn num_filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn kernel_width(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[2]
    }

    /// Output length for an input of `len` samples.
    pub fn output_len(&self, len: usize) -> Option<usize> {
        match self.padding {
            Padding::Same => Some(len),
            Padding::Valid => (len + 1).checked_sub(self.kernel_width()).filter(|&n| n >= 1),
        }
    }

    fn pads(&self) -> (usize, usize) {
        match self.padding {
            Padding::Same => {
                let total = self.kernel_width() - 1;
                (total / 2, total - total / 2)
            }
            Padding::Valid => (0, 0),
        }
    }
}

impl Params for ConvParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct ConvCache {
    padded: Tensor,
    input_len: usize,
    pad_left: usize,
    output_len: usize,
}

/// Convolves `input: [T, C_in]` into `[T_out, F]`. No activation is applied.
pub fn conv1d_forward(input: &Tensor, p: &ConvParams) -> Result<(Tensor, ConvCache)> {
    let (f_n, k_n, c_n) = (p.num_filters(), p.kernel_width(), p.in_channels());
    if input.shape().len() != 2 || input.shape()[1] != c_n {
        return shape_err(format!(
            "conv1d expects [T, {}] input, got {:?}",
            c_n,
            input.shape()
        ));
    }
    let t_in = input.shape()[0];
    let Some(t_out) = p.output_len(t_in) else {
        return shape_err(format!(
            "conv1d kernel width {} exceeds input length {} under valid padding",
            k_n, t_in
        ));
    };
    let (pad_left, pad_right) = p.pads();
    let padded_len = t_in + pad_left + pad_right;
    let mut padded = Tensor::zeros(&[padded_len, c_n]);
    padded.data_mut()[pad_left * c_n..(pad_left + t_in) * c_n].copy_from_slice(input.data());

    let w = p.weights.data();
    let pd = padded.data();
    let mut out = Tensor::zeros(&[t_out, f_n]);
    for t in 0..t_out {
        let patch = &pd[t * c_n..(t + k_n) * c_n];
        let row = out.row_mut(t);
        for (f, o) in row.iter_mut().enumerate() {
            let kernel = &w[f * k_n * c_n..(f + 1) * k_n * c_n];
            *o = p.bias.data()[f] + kernel.iter().zip(patch).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok((out, ConvCache { padded, input_len: t_in, pad_left, output_len: t_out }))
}

pub fn conv1d_backward(grad_out: &Tensor, cache: &ConvCache, p: &ConvParams) -> Result<(Tensor, ConvParams)> {
    let (f_n, k_n, c_n) = (p.num_filters(), p.kernel_width(), p.in_channels());
    grad_out.expect_shape(&[cache.output_len, f_n])?;
    cache.padded.expect_shape(&[cache.padded.rows(), c_n])?;

    let mut grads = p.zeros_like();
    let mut grad_padded = vec![0.0; cache.padded.len()];
    let w = p.weights.data();
    let pd = cache.padded.data();
    {
        let dw = grads.weights.data_mut();
        for t in 0..cache.output_len {
            let patch = &pd[t * c_n..(t + k_n) * c_n];
            let gpatch = &mut grad_padded[t * c_n..(t + k_n) * c_n];
            for (f, &g) in grad_out.row(t).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let range = f * k_n * c_n..(f + 1) * k_n * c_n;
                for ((dwv, &x), (gp, &wv)) in dw[range.clone()]
                    .iter_mut()
                    .zip(patch)
                    .zip(gpatch.iter_mut().zip(&w[range]))
                {
                    *dwv += g * x;
                    *gp += g * wv;
                }
            }
        }
    }
    for t in 0..cache.output_len {
        for (db, &g) in grads.bias.data_mut().iter_mut().zip(grad_out.row(t)) {
            *db += g;
        }
    }
    let start = cache.pad_left * c_n;
    let grad_in = Tensor::from_vec(
        &[cache.input_len, c_n],
        grad_padded[start..start + cache.input_len * c_n].to_vec(),
    )?;
    Ok((grad_in, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[v.len(), 1], v.to_vec()).unwrap()
    }

    fn single_filter(kernel: &[f64], padding: Padding) -> ConvParams {
        let mut p = ConvParams::zeros(1, kernel.len(), 1, padding);
        p.weights.data_mut().copy_from_slice(kernel);
        p
    }

    #[test]
    fn sliding_sum_same_padding() {
        let p = single_filter(&[1.0, 1.0, 1.0], Padding::Same);
        let (out, _) = conv1d_forward(&column(&[1.0, 2.0, 3.0, 4.0]), &p).unwrap();
        assert_eq!(out.data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn identity_kernel() {
        let p = single_filter(&[0.0, 1.0, 0.0], Padding::Same);
        let x = column(&[4.0, -1.0, 2.5, 0.0, 9.0]);
        let (out, _) = conv1d_forward(&x, &p).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = ConvParams::zeros(3, 2, 2, Padding::Same);
        let x = Tensor::filled(&[6, 2], 1.5);
        let (out, _) = conv1d_forward(&x, &p).unwrap();
        assert_eq!(out, Tensor::zeros(&[6, 3]));
    }

    #[test]
    fn even_kernel_pads_extra_on_right() {
        // pads (1 left, 2 right) for width 4
        let p = single_filter(&[1.0, 0.0, 0.0, 0.0], Padding::Same);
        let (out, _) = conv1d_forward(&column(&[1.0, 2.0, 3.0]), &p).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn valid_padding_shrinks_and_rejects_short_input() {
        let p = single_filter(&[1.0, 1.0, 1.0], Padding::Valid);
        let (out, _) = conv1d_forward(&column(&[1.0, 2.0, 3.0, 4.0]), &p).unwrap();
        assert_eq!(out.data(), &[6.0, 9.0]);
        assert!(conv1d_forward(&column(&[1.0, 2.0]), &p).is_err());
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let p = ConvParams::zeros(1, 3, 2, Padding::Same);
        assert!(conv1d_forward(&column(&[1.0, 2.0, 3.0]), &p).is_err());
    }

    #[test]
    fn same_padding_preserves_length() {
        for k in 1..=5 {
            for t in k..12 {
                let p = ConvParams::zeros(2, k, 1, Padding::Same);
                let (out, _) = conv1d_forward(&Tensor::zeros(&[t, 1]), &p).unwrap();
                assert_eq!(out.shape(), &[t, 2]);
            }
        }
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let p = ConvParams::init(3, 3, 2, Padding::Same, &mut rng);
        let x = Tensor::filled(&[5, 2], 0.7);
        let (out, cache) = conv1d_forward(&x, &p).unwrap();
        let (gi, gp) = conv1d_backward(&Tensor::zeros(out.shape()), &cache, &p).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gp.flatten().data().iter().all(|&v| v == 0.0));
    }
}
