use rand::Rng;

use super::{uniform_fill, Params};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, Tensor};

/// LSTM weights. Each gate matrix is `[H, H + D]` and multiplies the
/// concatenation `[h_prev, x_t]`, hidden state first.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub return_sequences: bool,
    pub w_forget: Tensor,
    pub w_input: Tensor,
    pub w_candidate: Tensor,
    pub w_output: Tensor,
    pub b_forget: Tensor,
    pub b_input: Tensor,
    pub b_candidate: Tensor,
    pub b_output: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, return_sequences: bool) -> Self {
        let w = || Tensor::zeros(&[hidden_dim, hidden_dim + input_dim]);
        let b = || Tensor::zeros(&[hidden_dim]);
        LstmParams {
            return_sequences,
            w_forget: w(),
            w_input: w(),
            w_candidate: w(),
            w_output: w(),
            b_forget: b(),
            b_input: b(),
            b_candidate: b(),
            b_output: b(),
        }
    }

    /// Uniform `±sqrt(1/H)` weights; biases zero except the forget gate,
    /// which starts at `forget_bias`.
    pub fn init<R: Rng>(
        input_dim: usize,
        hidden_dim: usize,
        return_sequences: bool,
        forget_bias: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim, return_sequences);
        let limit = (1.0 / hidden_dim as f64).sqrt();
        for w in [&mut p.w_forget, &mut p.w_input, &mut p.w_candidate, &mut p.w_output] {
            uniform_fill(w, limit, rng);
        }
        p.b_forget.fill(forget_bias);
        p
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_forget.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w_forget.shape()[1] - self.hidden_dim()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return shape_err(format!(
                "lstm expects input dimension {}, got {}",
                self.input_dim(),
                len
            ));
        }
        Ok(())
    }
}

impl Params for LstmParams {
    /// Gate order f, i, c, o: weights first, then biases.
    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w_forget,
            &self.w_input,
            &self.w_candidate,
            &self.w_output,
            &self.b_forget,
            &self.b_input,
            &self.b_candidate,
            &self.b_output,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_forget,
            &mut self.w_input,
            &mut self.w_candidate,
            &mut self.w_output,
            &mut self.b_forget,
            &mut self.b_input,
            &mut self.b_candidate,
            &mut self.b_output,
        ]
    }
}

#[derive(Clone, Debug)]
struct StepCache {
    concat: Vec<f64>,
    forget: Vec<f64>,
    input: Vec<f64>,
    candidate: Vec<f64>,
    output: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    steps: Vec<StepCache>,
    return_sequences: bool,
}

fn step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>, StepCache) {
    let h_n = p.hidden_dim();
    let mut concat = Vec::with_capacity(h_n + x.len());
    concat.extend_from_slice(h_prev);
    concat.extend_from_slice(x);

    let gate = |w: &Tensor, b: &Tensor, act: fn(f64) -> f64| {
        let mut pre = b.data().to_vec();
        matvec_acc(w.data(), &concat, &mut pre);
        pre.into_iter().map(act).collect::<Vec<f64>>()
    };
    let forget = gate(&p.w_forget, &p.b_forget, sigmoid);
    let input = gate(&p.w_input, &p.b_input, sigmoid);
    let candidate = gate(&p.w_candidate, &p.b_candidate, f64::tanh);
    let output = gate(&p.w_output, &p.b_output, sigmoid);

    let c: Vec<f64> = (0..h_n).map(|j| forget[j] * c_prev[j] + input[j] * candidate[j]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = output.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
    let cache = StepCache {
        concat,
        forget,
        input,
        candidate,
        output,
        c_prev: c_prev.to_vec(),
        tanh_c,
    };
    (h, c, cache)
}

/// One recurrence step: returns `(h_t, c_t)`.
pub fn lstm_step(x_t: &Tensor, h_prev: &Tensor, c_prev: &Tensor, p: &LstmParams) -> Result<(Tensor, Tensor)> {
    p.check_input(x_t.len())?;
    let h_n = p.hidden_dim();
    if h_prev.len() != h_n || c_prev.len() != h_n {
        return shape_err(format!(
            "lstm state must have {} entries, got h {} / c {}",
            h_n,
            h_prev.len(),
            c_prev.len()
        ));
    }
    let (h, c, _) = step(x_t.data(), h_prev.data(), c_prev.data(), p);
    Ok((Tensor::vector(h), Tensor::vector(c)))
}

/// Runs `seq: [T, D]` left to right from a zero initial state.
///
/// Returns `[T, H]` when `return_sequences` is set, otherwise the final `[H]`.
pub fn lstm_forward(seq: &Tensor, p: &LstmParams) -> Result<(Tensor, LstmCache)> {
    if seq.shape().len() != 2 {
        return shape_err(format!("lstm expects [T, D] input, got {:?}", seq.shape()));
    }
    let t_n = seq.shape()[0];
    if t_n == 0 {
        return Err(Error::Empty("lstm input sequence has no time steps".into()));
    }
    p.check_input(seq.shape()[1])?;
    let h_n = p.hidden_dim();
    let mut h = vec![0.0; h_n];
    let mut c = vec![0.0; h_n];
    let mut steps = Vec::with_capacity(t_n);
    let mut all_h = Vec::with_capacity(if p.return_sequences { t_n * h_n } else { 0 });
    for t in 0..t_n {
        let (h_next, c_next, cache) = step(seq.row(t), &h, &c, p);
        h = h_next;
        c = c_next;
        if p.return_sequences {
            all_h.extend_from_slice(&h);
        }
        steps.push(cache);
    }
    let out = if p.return_sequences {
        Tensor::from_vec(&[t_n, h_n], all_h)?
    } else {
        Tensor::vector(h)
    };
    Ok((out, LstmCache { steps, return_sequences: p.return_sequences }))
}

/// Backpropagation through time over every cached step.
pub fn lstm_backward(grad_out: &Tensor, cache: &LstmCache, p: &LstmParams) -> Result<(Tensor, LstmParams)> {
    let t_n = cache.steps.len();
    let h_n = p.hidden_dim();
    let d_n = p.input_dim();
    if cache.return_sequences != p.return_sequences {
        return shape_err("lstm cache does not match parameters (return_sequences)");
    }
    if cache.return_sequences {
        grad_out.expect_shape(&[t_n, h_n])?;
    } else {
        grad_out.expect_shape(&[h_n])?;
    }
    if cache.steps.first().map_or(true, |s| s.concat.len() != h_n + d_n) {
        return shape_err("lstm cache does not match parameters (dimensions)");
    }

    let mut grads = p.zeros_like();
    let mut grad_in = Tensor::zeros(&[t_n, d_n]);
    let mut dh_next = vec![0.0; h_n];
    let mut dc_next = vec![0.0; h_n];
    let mut da_f = vec![0.0; h_n];
    let mut da_i = vec![0.0; h_n];
    let mut da_c = vec![0.0; h_n];
    let mut da_o = vec![0.0; h_n];

    for t in (0..t_n).rev() {
        let s = &cache.steps[t];
        for j in 0..h_n {
            let mut dh = dh_next[j];
            if cache.return_sequences {
                dh += grad_out.data()[t * h_n + j];
            } else if t == t_n - 1 {
                dh += grad_out.data()[j];
            }
            let (f, i, g, o, tc) = (s.forget[j], s.input[j], s.candidate[j], s.output[j], s.tanh_c[j]);
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            da_o[j] = dh * tc * o * (1.0 - o);
            da_f[j] = dc * s.c_prev[j] * f * (1.0 - f);
            da_i[j] = dc * g * i * (1.0 - i);
            da_c[j] = dc * i * (1.0 - g * g);
            dc_next[j] = dc * f;
        }

        let mut dz = vec![0.0; h_n + d_n];
        for (da, w, dw, db) in [
            (&da_f, &p.w_forget, &mut grads.w_forget, &mut grads.b_forget),
            (&da_i, &p.w_input, &mut grads.w_input, &mut grads.b_input),
            (&da_c, &p.w_candidate, &mut grads.w_candidate, &mut grads.b_candidate),
            (&da_o, &p.w_output, &mut grads.w_output, &mut grads.b_output),
        ] {
            outer_acc(da, &s.concat, dw.data_mut());
            for (b, &g) in db.data_mut().iter_mut().zip(da.iter()) {
                *b += g;
            }
            matvec_t_acc(w.data(), da, &mut dz);
        }
        dh_next.copy_from_slice(&dz[..h_n]);
        grad_in.row_mut(t).copy_from_slice(&dz[h_n..]);
    }
    Ok((grad_in, grads))
}
