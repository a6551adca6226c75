//! Dense row-major 64-bit arrays and the scalar math shared by every layer.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Shape-tagged row-major buffer of `f64`.
///
/// `shape.iter().product() == data.len()` holds for every constructed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return shape_err(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                len,
                data.len()
            ));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// One-dimensional tensor over `data`.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Builds a `[rows, cols]` tensor from nested rows. Panics on ragged input.
    pub fn matrix(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix literal");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor { shape: vec![rows.len(), cols], data }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Size of the trailing dimension (1 for scalars).
    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            1
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape(other.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_shape(other.shape())?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn expect_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return shape_err(format!("expected {:?}, got {:?}", shape, self.shape));
        }
        Ok(())
    }
}

/// Logistic function, stable over the whole finite range.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh_act(x: f64) -> f64 {
    x.tanh()
}

/// Matrix product of `a: [m, k]` and `b: [k, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return shape_err(format!("cannot multiply {:?} by {:?}", a.shape, b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor { shape: vec![m, n], data: out })
}

/// `out += W · x` for a row-major `W: [rows, x.len()]`.
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ · g` for a row-major `W: [g.len(), out.len()]`.
pub(crate) fn matvec_t_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), g.len() * cols);
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += gi * wv;
        }
    }
}

/// `W += g ⊗ x` (outer product accumulation).
pub(crate) fn outer_acc(g: &[f64], x: &[f64], w: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), g.len() * cols);
    for (&gi, row) in g.iter().zip(w.chunks_exact_mut(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (wv, &xv) in row.iter_mut().zip(x) {
            *wv += gi * xv;
        }
    }
}

/// Default step for [`finite_diff_gradient`].
pub const FD_EPS: f64 = 1e-5;

/// Central-difference gradient of a scalar function at `params`.
///
/// Coordinate `i` of the result is `(f(p + eps·e_i) − f(p − eps·e_i)) / (2·eps)`.
pub fn finite_diff_gradient<F>(mut f: F, params: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut probe = params.clone();
    let mut grad = Tensor::zeros(params.shape());
    for i in 0..params.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let up = f(&probe)?;
        probe.data[i] = orig - eps;
        let down = f(&probe)?;
        probe.data[i] = orig;
        grad.data[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// Elementwise relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest elementwise [`relative_error`] between two equally shaped tensors.
pub fn max_relative_error(a: &Tensor, b: &Tensor, floor: f64) -> Result<f64> {
    a.expect_shape(b.shape())?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| relative_error(x, y, floor))
        .fold(0.0, f64::max))
}
