//! MAE-loss training with Adam over windowed datasets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::layers::Params;
use crate::model::{Model, ModelParams};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Epoch interval for checkpoint callbacks; 0 disables them.
    pub checkpoint_every: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            shuffle_each_epoch: true,
            checkpoint_every: 0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be >= 0".into()));
        }
        Ok(())
    }
}

/// Mean absolute error and its subgradient, `sign(pred - target) / W` with `sign(0) = 0`.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mae needs equal nonempty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, grad))
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: Params>(params: &P) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        OptimizerState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<P: Params>(params: &mut P, grads: &P, state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    let grads = grads.tensors();
    let mut targets = params.tensors_mut();
    if grads.len() != targets.len() || state.m.len() != targets.len() {
        return Err(Error::Shape("optimizer state does not mirror the parameters".into()));
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (((p, g), m), v) in targets.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        p.expect_shape(g.shape())?;
        p.expect_shape(m.shape())?;
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

fn global_norm<P: Params>(p: &P) -> f64 {
    p.tensors().iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-window MAE over the epoch's batches, before each update.
    pub train_loss: f64,
    /// Mean per-window MAE on the validation set after the epoch.
    pub valid_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: Model,
    /// Parameters at the epoch with the lowest validation loss.
    pub best_model: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mean per-window MAE of `model` over `set`.
pub fn dataset_loss(model: &Model, set: &WindowedDataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..set.len() {
        let pred = model.predict(set.input(i))?;
        total += mae_loss(&pred, set.target(i))?.0;
    }
    Ok(total / set.len() as f64)
}

/// `[N, W]` predictions for every window of `set`.
pub fn predict_dataset(model: &Model, set: &WindowedDataset) -> Result<Tensor> {
    let mut out = Vec::with_capacity(set.len() * set.window_len);
    for i in 0..set.len() {
        out.extend(model.predict(set.input(i))?);
    }
    Tensor::from_vec(&[set.len(), set.window_len], out)
}

/// Averaged gradient of the batch MAE, reduced in index order.
fn batch_gradient(model: &Model, set: &WindowedDataset, batch: &[usize]) -> Result<(f64, ModelParams)> {
    let mut acc = model.params.zeros_like();
    let mut loss_sum = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        let (pred, cache) = model.forward(set.input(i))?;
        let (loss, mut grad) = mae_loss(pred.data(), set.target(i))?;
        loss_sum += loss;
        grad.iter_mut().for_each(|g| *g *= scale);
        let g = model.backward(&cache, &Tensor::vector(grad))?;
        for (a, b) in acc.tensors_mut().into_iter().zip(g.tensors()) {
            a.add_assign(b)?;
        }
    }
    Ok((loss_sum, acc))
}

pub fn train(model: Model, train_set: &WindowedDataset, valid_set: &WindowedDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, train_set, valid_set, cfg, |_, _| Ok(()))
}

/// Trains `model`, calling `on_epoch` after each epoch with its record and the
/// current parameters.
pub fn train_with<F>(
    mut model: Model,
    train_set: &WindowedDataset,
    valid_set: &WindowedDataset,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &Model) -> Result<()>,
{
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Empty("training and validation sets must be nonempty".into()));
    }
    let w = model.config.window_len;
    if train_set.window_len != w || valid_set.window_len != w {
        return Err(Error::Shape(format!(
            "model window is {w} but datasets use {} / {}",
            train_set.window_len, valid_set.window_len
        )));
    }

    let mut state = OptimizerState::new(&model.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            // Stream per epoch: the order depends only on (seed, epoch).
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(epoch as u64);
            order.sort_unstable();
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (batch_loss, mut grads) = batch_gradient(&model, train_set, batch)?;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: batch_loss });
            }
            loss_sum += batch_loss;
            let norm = global_norm(&grads);
            if !norm.is_finite() {
                return Err(Error::Diverged { epoch, loss: norm });
            }
            if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
                let k = cfg.clip_norm / norm;
                grads.tensors_mut().into_iter().for_each(|t| t.scale(k));
            }
            adam_step(&mut model.params, &grads, &mut state, cfg)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            valid_loss: dataset_loss(&model, valid_set)?,
        };
        if !record.train_loss.is_finite() || !record.valid_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: record.valid_loss });
        }
        if best.as_ref().map_or(true, |(l, _, _)| record.valid_loss < *l) {
            best = Some((record.valid_loss, epoch, model.clone()));
        }
        on_epoch(&record, &model)?;
        history.push(record);
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_model, best_epoch, history })
}

/// Writes `epoch,train_loss,valid_loss` rows.
pub fn write_history_csv(history: &[EpochRecord], path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "valid_loss"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.valid_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NormStats;
    use crate::layers::DenseParams;
    use crate::model::ModelConfig;

    #[test]
    fn mae_examples() {
        let (l, g) = mae_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
        let (l, g) = mae_loss(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!((l, g), (1.5, vec![0.5, 0.5]));
        let (l2, g2) = mae_loss(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l2, 1.5);
        assert_eq!(g2, vec![-0.5, -0.5]);
        assert!(mae_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn adam_single_scalar_step() {
        let mut p = DenseParams::zeros(1, 1, crate::layers::Activation::Linear);
        let mut g = p.zeros_like();
        g.weights.fill(1.0);
        let mut st = OptimizerState::new(&p);
        let cfg = TrainConfig { learning_rate: 0.1, ..Default::default() };
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        assert!((p.weights.data()[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(p.bias.data()[0], 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(2);
        let mut p = DenseParams::init(3, 2, crate::layers::Activation::Relu, &mut rng);
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = OptimizerState::new(&p);
        for _ in 0..25 {
            adam_step(&mut p, &g, &mut st, &TrainConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_identical_gradients_identical_updates() {
        let mut p = DenseParams::zeros(2, 1, crate::layers::Activation::Linear);
        let mut g = p.zeros_like();
        g.weights.fill(-0.3);
        let mut st = OptimizerState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, &TrainConfig::default()).unwrap();
        }
        assert_eq!(p.weights.data()[0], p.weights.data()[1]);
    }

    fn tiny_sets() -> (WindowedDataset, WindowedDataset) {
        let w = 6;
        let make = |n: usize, off: f64| {
            let inputs: Vec<f64> = (0..n * w).map(|i| ((i as f64 + off) * 0.7).sin()).collect();
            let targets: Vec<f64> = inputs.iter().map(|v| v.max(0.0)).collect();
            WindowedDataset {
                inputs: Tensor::from_vec(&[n, w], inputs).unwrap(),
                targets: Tensor::from_vec(&[n, w], targets).unwrap(),
                starts: (0..n).collect(),
                input_stats: NormStats::identity(),
                target_stats: NormStats::identity(),
                window_len: w,
                stride: 1,
            }
        };
        (make(10, 0.0), make(4, 100.0))
    }

    fn tiny_model() -> Model {
        Model::new(ModelConfig {
            conv_filters: 2,
            conv_kernel_width: 3,
            pool_size: 2,
            lstm1_hidden: 3,
            lstm2_hidden: 2,
            dense1_units: 4,
            seed: 3,
            ..ModelConfig::with_window(6)
        })
        .unwrap()
    }

    #[test]
    fn history_length_and_zero_epochs() {
        let (tr, va) = tiny_sets();
        let cfg = TrainConfig { epochs: 1, batch_size: 4, ..Default::default() };
        let out = train(tiny_model(), &tr, &va, &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert!(train(tiny_model(), &tr, &va, &cfg).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let (tr, va) = tiny_sets();
        let m = tiny_model();
        let cfg = TrainConfig { epochs: 3, batch_size: 3, learning_rate: 0.0, ..Default::default() };
        let out = train(m.clone(), &tr, &va, &cfg).unwrap();
        assert_eq!(out.model.params, m.params);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let (tr, va) = tiny_sets();
        let cfg = TrainConfig { epochs: 4, batch_size: 3, learning_rate: 1e-2, seed: 8, ..Default::default() };
        let a = train(tiny_model(), &tr, &va, &cfg).unwrap();
        let b = train(tiny_model(), &tr, &va, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn window_mismatch_rejected() {
        let (tr, va) = tiny_sets();
        let m = Model::new(ModelConfig::with_window(8)).unwrap();
        assert!(matches!(train(m, &tr, &va, &TrainConfig::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_data_diverges() {
        let (mut tr, va) = tiny_sets();
        tr.inputs.data_mut()[0] = f64::NAN;
        let cfg = TrainConfig { epochs: 2, ..Default::default() };
        assert!(matches!(train(tiny_model(), &tr, &va, &cfg), Err(Error::Diverged { .. })));
    }
}
