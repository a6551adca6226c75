//! The disaggregation network: Conv1D → MaxPool → LSTM → LSTM → Dense → Dense.
//!
//! A window of normalized mains samples, `[window_len]`, is treated as a
//! single-channel sequence `[window_len, 1]`. The convolution extracts
//! `conv_filters` feature maps, max-pooling shortens the sequence, two stacked
//! LSTMs summarize it, and two dense layers map the summary back to a
//! `[window_len]` window of the target appliance.

mod checkpoint;

pub use checkpoint::{load_checkpoint, load_model, save_checkpoint, save_model, CheckpointMeta, CHECKPOINT_EXTENSION, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, lstm_backward, lstm_forward,
    maxpool1d_backward, maxpool1d_forward, Activation, ConvCache, ConvParams, DenseCache,
    DenseParams, LstmCache, LstmParams, Padding, Params, PoolCache, PoolParams,
};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub window_len: usize,
    pub conv_filters: usize,
    pub conv_kernel_width: usize,
    pub conv_padding: Padding,
    /// Apply ReLU between the convolution and the pooling layer.
    pub conv_relu: bool,
    pub pool_size: usize,
    pub lstm1_hidden: usize,
    pub lstm2_hidden: usize,
    /// When set, the second LSTM returns every hidden state and the dense
    /// head sees the flattened `[pooled_len * lstm2_hidden]` sequence.
    pub lstm2_returns_sequences: bool,
    pub dense1_units: usize,
    pub dense1_activation: Activation,
    pub output_units: usize,
    /// Initial forget-gate bias for both LSTMs.
    pub forget_bias: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window_len: 100,
            conv_filters: 48,
            conv_kernel_width: 4,
            conv_padding: Padding::Same,
            conv_relu: false,
            pool_size: 3,
            lstm1_hidden: 256,
            lstm2_hidden: 128,
            lstm2_returns_sequences: false,
            dense1_units: 128,
            dense1_activation: Activation::Relu,
            output_units: 100,
            forget_bias: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A config for `window_len` with every other size at its default.
    pub fn with_window(window_len: usize) -> Self {
        ModelConfig { window_len, output_units: window_len, ..Default::default() }
    }

    pub fn conv_output_len(&self) -> Option<usize> {
        match self.conv_padding {
            Padding::Same => Some(self.window_len),
            Padding::Valid => (self.window_len + 1).checked_sub(self.conv_kernel_width).filter(|&n| n >= 1),
        }
    }

    pub fn pooled_len(&self) -> Option<usize> {
        PoolParams::new(self.pool_size).output_len(self.conv_output_len()?)
    }

    /// Width of the vector entering the first dense layer.
    pub fn dense1_input(&self) -> Option<usize> {
        if self.lstm2_returns_sequences {
            Some(self.pooled_len()? * self.lstm2_hidden)
        } else {
            Some(self.lstm2_hidden)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("window_len", self.window_len),
            ("conv_filters", self.conv_filters),
            ("conv_kernel_width", self.conv_kernel_width),
            ("pool_size", self.pool_size),
            ("lstm1_hidden", self.lstm1_hidden),
            ("lstm2_hidden", self.lstm2_hidden),
            ("dense1_units", self.dense1_units),
            ("output_units", self.output_units),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.output_units != self.window_len {
            return Err(Error::Config(format!(
                "output_units ({}) must equal window_len ({})",
                self.output_units, self.window_len
            )));
        }
        if self.conv_output_len().is_none() {
            return Err(Error::Config(format!(
                "conv kernel width {} leaves no output for window {}",
                self.conv_kernel_width, self.window_len
            )));
        }
        if self.pooled_len().is_none() {
            return Err(Error::Config(format!(
                "pool size {} leaves no output for window {}",
                self.pool_size, self.window_len
            )));
        }
        if !self.forget_bias.is_finite() {
            return Err(Error::Config("forget_bias must be finite".into()));
        }
        Ok(())
    }
}

/// Closed-form number of learnable parameters for `config`.
pub fn param_count(config: &ModelConfig) -> Result<usize> {
    config.validate()?;
    let conv = config.conv_filters * config.conv_kernel_width + config.conv_filters;
    let lstm = |d: usize, h: usize| 4 * (h * (d + h) + h);
    let dense = |i: usize, o: usize| o * i + o;
    let dense1_in = config.dense1_input().expect("validated");
    Ok(conv
        + lstm(config.conv_filters, config.lstm1_hidden)
        + lstm(config.lstm1_hidden, config.lstm2_hidden)
        + dense(dense1_in, config.dense1_units)
        + dense(config.dense1_units, config.output_units))
}

/// The five parameter blocks, visited conv, lstm1, lstm2, dense1, dense2.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub conv: ConvParams,
    pub lstm1: LstmParams,
    pub lstm2: LstmParams,
    pub dense1: DenseParams,
    pub dense2: DenseParams,
}

impl Params for ModelParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.conv.tensors();
        v.extend(self.lstm1.tensors());
        v.extend(self.lstm2.tensors());
        v.extend(self.dense1.tensors());
        v.extend(self.dense2.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.conv.tensors_mut();
        v.extend(self.lstm1.tensors_mut());
        v.extend(self.lstm2.tensors_mut());
        v.extend(self.dense1.tensors_mut());
        v.extend(self.dense2.tensors_mut());
        v
    }
}

impl ModelParams {
    /// Names of every tensor, aligned with [`Params::tensors`].
    pub fn tensor_names() -> Vec<String> {
        let mut names = vec!["conv.weights".to_string(), "conv.bias".to_string()];
        for layer in ["lstm1", "lstm2"] {
            for part in ["w_forget", "w_input", "w_candidate", "w_output", "b_forget", "b_input", "b_candidate", "b_output"] {
                names.push(format!("{layer}.{part}"));
            }
        }
        for layer in ["dense1", "dense2"] {
            names.push(format!("{layer}.weights"));
            names.push(format!("{layer}.bias"));
        }
        names
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Everything [`Model::backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ModelCache {
    conv: ConvCache,
    conv_pre: Tensor,
    pool: PoolCache,
    lstm1: LstmCache,
    lstm2: LstmCache,
    lstm2_shape: Vec<usize>,
    dense1: DenseCache,
    dense2: DenseCache,
}

impl Model {
    /// Builds a model with seeded initial weights.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = &config;
        let conv = ConvParams::init(c.conv_filters, c.conv_kernel_width, 1, c.conv_padding, &mut rng);
        let lstm1 = LstmParams::init(c.conv_filters, c.lstm1_hidden, true, c.forget_bias, &mut rng);
        let lstm2 = LstmParams::init(c.lstm1_hidden, c.lstm2_hidden, c.lstm2_returns_sequences, c.forget_bias, &mut rng);
        let dense1_in = c.dense1_input().expect("validated");
        let dense1 = DenseParams::init(dense1_in, c.dense1_units, c.dense1_activation, &mut rng);
        let dense2 = DenseParams::init(c.dense1_units, c.output_units, Activation::Linear, &mut rng);
        Ok(Model { config, params: ModelParams { conv, lstm1, lstm2, dense1, dense2 } })
    }

    /// A model whose every weight and bias is zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        let mut m = Model::new(config)?;
        m.params = m.params.zeros_like();
        Ok(m)
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    pub fn forward(&self, window: &[f64]) -> Result<(Tensor, ModelCache)> {
        let c = &self.config;
        if window.len() != c.window_len {
            return shape_err(format!(
                "model expects a window of {} samples, got {}",
                c.window_len,
                window.len()
            ));
        }
        let input = Tensor::from_vec(&[c.window_len, 1], window.to_vec())?;
        let (conv_pre, conv) = conv1d_forward(&input, &self.params.conv)?;
        let conv_out = if c.conv_relu { conv_pre.map(|v| v.max(0.0)) } else { conv_pre.clone() };
        let (pooled, pool) = maxpool1d_forward(&conv_out, &PoolParams::new(c.pool_size))?;
        let (seq1, lstm1) = lstm_forward(&pooled, &self.params.lstm1)?;
        let (seq2, lstm2) = lstm_forward(&seq1, &self.params.lstm2)?;
        let lstm2_shape = seq2.shape().to_vec();
        let flat = seq2.reshape(&[lstm2_shape.iter().product()])?;
        let (hidden, dense1) = dense_forward(&flat, &self.params.dense1)?;
        let (out, dense2) = dense_forward(&hidden, &self.params.dense2)?;
        Ok((out, ModelCache { conv, conv_pre, pool, lstm1, lstm2, lstm2_shape, dense1, dense2 }))
    }

    pub fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(window)?.0.into_data())
    }

    /// Gradients of `grad_out · forward(window)` with respect to every parameter.
    pub fn backward(&self, cache: &ModelCache, grad_out: &Tensor) -> Result<ModelParams> {
        let c = &self.config;
        grad_out.expect_shape(&[c.output_units])?;
        let (g_hidden, dense2) = dense_backward(grad_out, &cache.dense2, &self.params.dense2)?;
        let (g_flat, dense1) = dense_backward(&g_hidden, &cache.dense1, &self.params.dense1)?;
        let g_seq2 = g_flat.reshape(&cache.lstm2_shape)?;
        let (g_seq1, lstm2) = lstm_backward(&g_seq2, &cache.lstm2, &self.params.lstm2)?;
        let (g_pooled, lstm1) = lstm_backward(&g_seq1, &cache.lstm1, &self.params.lstm1)?;
        let mut g_conv = maxpool1d_backward(&g_pooled, &cache.pool)?;
        if c.conv_relu {
            for (g, &pre) in g_conv.data_mut().iter_mut().zip(cache.conv_pre.data()) {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let (_, conv) = conv1d_backward(&g_conv, &cache.conv, &self.params.conv)?;
        Ok(ModelParams { conv, lstm1, lstm2, dense1, dense2 })
    }

    /// Shapes of the activations between layers, input first.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        let c = &self.config;
        let pooled = c.pooled_len().expect("validated");
        let conv_len = c.conv_output_len().expect("validated");
        let lstm2 = if c.lstm2_returns_sequences { vec![pooled, c.lstm2_hidden] } else { vec![c.lstm2_hidden] };
        vec![
            vec![c.window_len, 1],
            vec![conv_len, c.conv_filters],
            vec![pooled, c.conv_filters],
            vec![pooled, c.lstm1_hidden],
            lstm2,
            vec![c.dense1_units],
            vec![c.output_units],
        ]
    }
}
