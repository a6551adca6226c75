#![allow(dead_code)]

use nilm::layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, lstm_backward, lstm_forward,
    maxpool1d_backward, maxpool1d_forward, Activation, ConvParams, DenseParams, LstmParams, Padding, Params, PoolParams,
};
use nilm::model::{Model, ModelConfig};
use nilm::tensor::{finite_diff_gradient, max_relative_error, FD_EPS};
use nilm::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_FLOOR: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Worst relative error of analytic gradients against central differences
/// for `L = sum(forward(x; θ) · r)`, over both the input and the parameters.
pub fn check_layer<P, F, B>(params: &P, input: &Tensor, r: &Tensor, forward: F, backward: B) -> Result<(f64, f64)>
where
    P: Params,
    F: Fn(&Tensor, &P) -> Result<Tensor>,
    B: Fn(&Tensor, &Tensor, &P) -> Result<(Tensor, P)>,
{
    let (grad_in, grad_p) = backward(input, r, params)?;
    let fd_in = finite_diff_gradient(|x| forward(x, params)?.dot(r), input, FD_EPS)?;
    let flat = params.flatten();
    let fd_p = finite_diff_gradient(
        |theta| {
            let mut p = params.clone();
            p.assign_flat(theta.data())?;
            forward(input, &p)?.dot(r)
        },
        &flat,
        FD_EPS,
    )?;
    Ok((
        max_relative_error(&grad_in, &fd_in, GRAD_FLOOR)?,
        max_relative_error(&grad_p.flatten(), &fd_p, GRAD_FLOOR)?,
    ))
}

pub fn conv_case(seed: u64) -> Result<(f64, f64)> {
    let mut g = rng(seed);
    let t = g.gen_range(4..=12);
    let c = g.gen_range(1..=3);
    let k = g.gen_range(1..=3);
    let padding = if seed % 2 == 0 { Padding::Same } else { Padding::Valid };
    let mut p = ConvParams::init(3, k, c, padding, &mut g);
    p.bias = random_tensor(&[3], &mut g);
    let x = random_tensor(&[t, c], &mut g);
    let r = random_tensor(&[p.output_len(t).unwrap(), 3], &mut g);
    check_layer(
        &p,
        &x,
        &r,
        |x, p| Ok(conv1d_forward(x, p)?.0),
        |x, r, p| {
            let (_, cache) = conv1d_forward(x, p)?;
            conv1d_backward(r, &cache, p)
        },
    )
}

/// Max-pool has no parameters; only the input gradient is checked. Inputs
/// are drawn distinct enough that no window has a near-tie within `eps`.
pub fn pool_case(seed: u64) -> Result<f64> {
    let mut g = rng(seed);
    let t = g.gen_range(6..=12);
    let f = g.gen_range(1..=3);
    let pool = PoolParams::new(g.gen_range(2..=3));
    let mut vals: Vec<f64> = (0..t * f).map(|i| i as f64 * 0.1).collect();
    for i in (1..vals.len()).rev() {
        let j = g.gen_range(0..=i);
        vals.swap(i, j);
    }
    let x = Tensor::from_vec(&[t, f], vals)?;
    let out_len = pool.output_len(t).unwrap();
    let r = random_tensor(&[out_len, f], &mut g);
    let (_, cache) = maxpool1d_forward(&x, &pool)?;
    let grad_in = maxpool1d_backward(&r, &cache)?;
    let fd = finite_diff_gradient(|x| maxpool1d_forward(x, &pool)?.0.dot(&r), &x, FD_EPS)?;
    max_relative_error(&grad_in, &fd, GRAD_FLOOR)
}

pub fn lstm_case(seed: u64) -> Result<(f64, f64)> {
    let mut g = rng(seed);
    let t = g.gen_range(1..=12);
    let d = g.gen_range(1..=3);
    let h = g.gen_range(1..=4);
    let ret = seed % 2 == 0;
    let mut p = LstmParams::init(d, h, ret, 1.0, &mut g);
    for b in [&mut p.b_forget, &mut p.b_input, &mut p.b_candidate, &mut p.b_output] {
        *b = random_tensor(&[h], &mut g);
    }
    let x = random_tensor(&[t, d], &mut g);
    let r = if ret { random_tensor(&[t, h], &mut g) } else { random_tensor(&[h], &mut g) };
    check_layer(
        &p,
        &x,
        &r,
        |x, p| Ok(lstm_forward(x, p)?.0),
        |x, r, p| {
            let (_, cache) = lstm_forward(x, p)?;
            lstm_backward(r, &cache, p)
        },
    )
}

pub fn dense_case(seed: u64) -> Result<(f64, f64)> {
    let mut g = rng(seed);
    let i = g.gen_range(1..=6);
    let o = g.gen_range(1..=5);
    let act = if seed % 2 == 0 { Activation::Relu } else { Activation::Linear };
    let mut p = DenseParams::init(i, o, act, &mut g);
    p.bias = random_tensor(&[o], &mut g);
    let x = random_tensor(&[i], &mut g);
    let r = random_tensor(&[o], &mut g);
    check_layer(
        &p,
        &x,
        &r,
        |x, p| Ok(dense_forward(x, p)?.0),
        |x, r, p| {
            let (_, cache) = dense_forward(x, p)?;
            dense_backward(r, &cache, p)
        },
    )
}

pub fn tiny_config(seed: u64) -> ModelConfig {
    let mut g = rng(seed ^ 0xA5A5);
    let window = g.gen_range(6..=12);
    ModelConfig {
        window_len: window,
        output_units: window,
        conv_filters: g.gen_range(1..=3),
        conv_kernel_width: g.gen_range(1..=3),
        pool_size: 2,
        lstm1_hidden: g.gen_range(1..=4),
        lstm2_hidden: g.gen_range(1..=4),
        lstm2_returns_sequences: seed % 3 == 0,
        dense1_units: g.gen_range(1..=4),
        dense1_activation: if seed % 2 == 0 { Activation::Relu } else { Activation::Linear },
        seed,
        ..ModelConfig::default()
    }
}

/// Full-model parameter gradient check on a tiny config. Returns the worst
/// relative error over the flattened parameter vector.
pub fn model_case(seed: u64) -> Result<f64> {
    let model = Model::new(tiny_config(seed))?;
    let mut g = rng(seed + 1000);
    let w = model.config.window_len;
    let x: Vec<f64> = (0..w).map(|_| g.gen_range(-1.5..1.5)).collect();
    let r = random_tensor(&[w], &mut g);
    let (_, cache) = model.forward(&x)?;
    let analytic = model.backward(&cache, &r)?.flatten();
    let fd = finite_diff_gradient(
        |theta| {
            let mut m = model.clone();
            m.params.assign_flat(theta.data())?;
            Tensor::vector(m.predict(&x)?).dot(&r)
        },
        &model.params.flatten(),
        FD_EPS,
    )?;
    max_relative_error(&analytic, &fd, GRAD_FLOOR)
}

// ---- metric brute force ------------------------------------------------------

pub fn brute_rmse(t: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..t.len() {
        s += (t[i] - p[i]) * (t[i] - p[i]);
    }
    (s / t.len() as f64).sqrt()
}

pub fn brute_ane(t: &[f64], p: &[f64]) -> f64 {
    let (mut st, mut sp) = (0.0, 0.0);
    for i in 0..t.len() {
        st += t[i];
        sp += p[i];
    }
    (st - sp).abs() / st
}

pub fn brute_counts(t: &[f64], p: &[f64], thr: f64) -> [u64; 4] {
    let mut c = [0u64; 4]; // tp fp tn fn
    for i in 0..t.len() {
        let (a, b) = (t[i] > thr, p[i] > thr);
        if a && b {
            c[0] += 1;
        } else if !a && b {
            c[1] += 1;
        } else if !a && !b {
            c[2] += 1;
        } else {
            c[3] += 1;
        }
    }
    c
}

pub fn brute_accuracy_f1(t: &[f64], p: &[f64], thr: f64) -> (f64, f64) {
    let [tp, fp, tn, fn_] = brute_counts(t, p, thr).map(|v| v as f64);
    let acc = (tp + tn) / (tp + tn + fp + fn_);
    let f1 = if tp == 0.0 {
        0.0
    } else {
        let precision = tp / (tp + fp);
        let recall = tp / (tp + fn_);
        2.0 * precision * recall / (precision + recall)
    };
    (acc, f1)
}

pub fn random_pair(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(1..=200);
    let t: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.0..3000.0) } else { rng.gen_range(0.0..12.0) }).collect();
    let p: Vec<f64> = t.iter().map(|v| (v + rng.gen_range(-200.0..200.0)).max(0.0)).collect();
    (t, p)
}
