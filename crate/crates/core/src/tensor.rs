//! Dense row-major `f64` tensors and the raw kernels behind the tape.
//!
//! Kernels here operate on plain slices and never allocate gradients; the
//! [`Tape`](crate::tape::Tape) wires them together and owns the backward
//! rules.

use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with an optional gradient accumulator.
/// Equality compares shape and values only.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .field("has_grad", &self.grad.is_some())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let data = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self {
            shape: vec![r, c],
            data,
            grad: None,
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Element of a rank-2 tensor.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        self.data[i * cols + j] = value;
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
            grad: None,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::shape("transpose", &self.shape, &[2]));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        transpose_into(&self.data, r, c, &mut out);
        Ok(Self {
            shape: vec![c, r],
            data: out,
            grad: None,
        })
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|x| *x = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the gradient accumulator, creating it if absent.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::shape("accumulate_grad", &self.shape, &[delta.len()]));
        }
        let g = self.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (a, d) in g.iter_mut().zip(delta) {
            *a += d;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// Rank-2 block `[rows, cols]` copied out of a matrix.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        debug_assert_eq!(self.rank(), 2);
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for i in rows.clone() {
            for j in cols.clone() {
                data.push(self.at(i, j));
            }
        }
        Self {
            shape: vec![rows.len(), cols.len()],
            data,
            grad: None,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn transpose_into(a: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
}

/// `out += A · B` where element `(i, p)` of `A` sits at `a[i·rsa + p·csa]`
/// and likewise for `B`; `out` is row-major `m×n`.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    out: &mut [f64],
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= (m - 1) * rsa + (k - 1) * csa + 1);
    assert!(b.len() >= (k - 1) * rsb + (n - 1) * csb + 1);
    assert!(out.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out += a · b` for row-major `a: m×k`, `b: k×n`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    gemm_acc(m, k, n, a, (k, 1), b, (n, 1), out);
}

/// `out += aᵀ · b` for `a: k×m`, `b: k×n`.
pub(crate) fn matmul_at_b_acc(
    a: &[f64],
    b: &[f64],
    k: usize,
    m: usize,
    n: usize,
    out: &mut [f64],
) {
    gemm_acc(m, k, n, a, (1, m), b, (n, 1), out);
}

/// `out += a · bᵀ` for `a: m×k`, `b: n×k`.
pub(crate) fn matmul_a_bt_acc(
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [f64],
) {
    gemm_acc(m, k, n, a, (k, 1), b, (1, k), out);
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dimensions of a batched causal convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len_in: usize,
    pub kernel: usize,
}

impl ConvDims {
    pub fn len_out(&self) -> usize {
        self.len_in + 1 - self.kernel
    }
}

/// `col[(c*K + k), m*lo + t] = x[m, c, t + k]`.
fn im2col(x: &[f64], d: ConvDims) -> Vec<f64> {
    let lo = d.len_out();
    let width = d.batch * lo;
    let mut col = vec![0.0; d.c_in * d.kernel * width];
    for c in 0..d.c_in {
        for k in 0..d.kernel {
            let row = &mut col[(c * d.kernel + k) * width..(c * d.kernel + k + 1) * width];
            for m in 0..d.batch {
                let base = (m * d.c_in + c) * d.len_in + k;
                row[m * lo..(m + 1) * lo].copy_from_slice(&x[base..base + lo]);
            }
        }
    }
    col
}

/// `y[m,o,t] = bias[o] + Σ_c Σ_k w[o,c,k] · x[m,c,t+k]`.
///
/// Computed as one `[c_out, c_in·K] × [c_in·K, batch·lo]` product.
pub(crate) fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    bias: Option<&[f64]>,
    d: ConvDims,
    y: &mut [f64],
) {
    let lo = d.len_out();
    let width = d.batch * lo;
    let col = im2col(x, d);
    let mut out = vec![0.0; d.c_out * width];
    if let Some(b) = bias {
        for (o, row) in out.chunks_mut(width).enumerate() {
            row.iter_mut().for_each(|v| *v = b[o]);
        }
    }
    matmul_acc(w, &col, d.c_out, d.c_in * d.kernel, width, &mut out);
    for o in 0..d.c_out {
        for m in 0..d.batch {
            y[(m * d.c_out + o) * lo..(m * d.c_out + o + 1) * lo]
                .copy_from_slice(&out[o * width + m * lo..o * width + (m + 1) * lo]);
        }
    }
}

/// Accumulates input, kernel and bias gradients of [`conv1d_forward`].
pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    d: ConvDims,
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let lo = d.len_out();
    let width = d.batch * lo;
    let ck = d.c_in * d.kernel;
    // dy rearranged to [c_out, batch·lo]
    let mut g = vec![0.0; d.c_out * width];
    for m in 0..d.batch {
        for o in 0..d.c_out {
            g[o * width + m * lo..o * width + (m + 1) * lo]
                .copy_from_slice(&dy[(m * d.c_out + o) * lo..(m * d.c_out + o + 1) * lo]);
        }
    }
    if let Some(db) = db {
        for (o, dbo) in db.iter_mut().enumerate() {
            *dbo += g[o * width..(o + 1) * width].iter().sum::<f64>();
        }
    }
    if let Some(dw) = dw {
        let col = im2col(x, d);
        matmul_a_bt_acc(&g, &col, d.c_out, width, ck, dw);
    }
    if let Some(dx) = dx {
        let mut dcol = vec![0.0; ck * width];
        matmul_at_b_acc(w, &g, d.c_out, ck, width, &mut dcol);
        for c in 0..d.c_in {
            for k in 0..d.kernel {
                let row = &dcol[(c * d.kernel + k) * width..(c * d.kernel + k + 1) * width];
                for m in 0..d.batch {
                    let base = (m * d.c_in + c) * d.len_in + k;
                    for (dxv, gv) in dx[base..base + lo].iter_mut().zip(&row[m * lo..(m + 1) * lo]) {
                        *dxv += gv;
                    }
                }
            }
        }
    }
}

/// Row sums of `a + 0` used by row normalization; rows of an `n×n` matrix.
pub(crate) fn row_normalize(a: &[f64], n: usize, out: &mut [f64], sums: &mut [f64]) {
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let s: f64 = row.iter().sum();
        sums[i] = s;
        for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
            *o = v / s;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
