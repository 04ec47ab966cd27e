//! Operation tape for reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value; [`Tape::backward`]
//! walks the nodes in reverse insertion order, which is a valid reverse
//! topological order because inputs always precede outputs. The op set is
//! closed: it covers exactly what the forecaster and the adjacency builders
//! need.

use crate::error::{Error, Result};
use crate::tensor::{self, ConvDims, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Threshold(Var, f64),
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        dims: ConvDims,
    },
    Propagate {
        adj: Var,
        features: Var,
        batch: usize,
        nodes: usize,
        width: usize,
    },
    RowNormalize {
        input: Var,
        sums: Vec<f64>,
    },
    Select {
        mask: Vec<bool>,
        on_true: Var,
        on_false: Var,
    },
    Reshape(Var),
    SliceMiddle {
        input: Var,
        outer: usize,
        middle: usize,
        keep: usize,
        inner: usize,
    },
    Sum(Var),
    MeanAbsError(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the seeded output with respect to `v`, if any flowed.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`get`](Self::get) but yields zeros of `len` when nothing flowed.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

/// Recorded computation. One tape serves a single forward pass and any
/// number of backward passes over it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        value.clear_grad();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn emit(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: name.to_string(),
            });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, rg))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        tensor::matmul_acc(self.data(a), self.data(b), m, k, n, &mut out);
        let value = Tensor::new(vec![m, n], out)?;
        self.emit("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        self.emit("transpose", value, Op::Transpose(a), &[a])
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.emit(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let data = self.data(a).iter().map(|x| f(*x)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.emit(name, value, op, &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.map("scale", a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, tensor::sigmoid, Op::Sigmoid(a))
    }

    /// Keeps entries `>= threshold`, zeroes the rest. Retained entries pass
    /// gradient through unchanged; pruned entries are gradient-dead.
    pub fn threshold(&mut self, a: Var, threshold: f64) -> Result<Var> {
        self.map(
            "threshold",
            a,
            |x| if x >= threshold { x } else { 0.0 },
            Op::Threshold(a, threshold),
        )
    }

    /// Causal 1-D convolution over the last axis.
    ///
    /// `input` is `[C_in, T]` or `[M, C_in, T]`, `kernel` is `[C_out, C_in, K]`
    /// and `bias`, when given, is `[C_out]`. Output position `t` combines
    /// input positions `t..t+K` only, giving length `T - K + 1`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        let (batch, c_in, len_in) = match si.as_slice() {
            [c, t] => (1, *c, *t),
            [m, c, t] => (*m, *c, *t),
            _ => return Err(Error::shape("conv1d", &si, &sk)),
        };
        if sk.len() != 3 || sk[1] != c_in {
            return Err(Error::shape("conv1d", &si, &sk));
        }
        let (c_out, k) = (sk[0], sk[2]);
        if k == 0 {
            return Err(Error::shape("conv1d", &si, &sk));
        }
        if len_in < k {
            return Err(Error::InsufficientLength {
                op: "conv1d",
                len: len_in,
                required: k,
            });
        }
        if let Some(b) = bias {
            if self.shape(b) != [c_out] {
                return Err(Error::shape("conv1d bias", self.shape(b), &[c_out]));
            }
        }
        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            len_in,
            kernel: k,
        };
        let mut out = vec![0.0; batch * c_out * dims.len_out()];
        tensor::conv1d_forward(
            self.data(input),
            self.data(kernel),
            bias.map(|b| self.data(b)),
            dims,
            &mut out,
        );
        let shape = if si.len() == 2 {
            vec![c_out, dims.len_out()]
        } else {
            vec![batch, c_out, dims.len_out()]
        };
        let value = Tensor::new(shape, out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.emit(
            "conv1d",
            value,
            Op::Conv1d {
                input,
                kernel,
                bias,
                dims,
            },
            &inputs,
        )
    }

    /// Graph propagation `out[b] = adj · features[b]` for
    /// `adj: [N, N]`, `features: [B, N, F]`.
    pub fn propagate(&mut self, adj: Var, features: Var) -> Result<Var> {
        let sa = self.shape(adj).to_vec();
        let sf = self.shape(features).to_vec();
        if sa.len() != 2 || sa[0] != sa[1] || sf.len() != 3 || sf[1] != sa[0] {
            return Err(Error::shape("propagate", &sa, &sf));
        }
        let (batch, nodes, width) = (sf[0], sf[1], sf[2]);
        let mut out = vec![0.0; batch * nodes * width];
        let a = self.data(adj);
        let h = self.data(features);
        let stride = nodes * width;
        for b in 0..batch {
            tensor::matmul_acc(
                a,
                &h[b * stride..(b + 1) * stride],
                nodes,
                nodes,
                width,
                &mut out[b * stride..(b + 1) * stride],
            );
        }
        let value = Tensor::new(sf, out)?;
        self.emit(
            "propagate",
            value,
            Op::Propagate {
                adj,
                features,
                batch,
                nodes,
                width,
            },
            &[adj, features],
        )
    }

    /// Divides each row of a square matrix by its sum. Rows must have a
    /// nonzero sum (callers add self-loops first).
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || s[0] != s[1] {
            return Err(Error::shape("row_normalize", &s, &[]));
        }
        let n = s[0];
        let mut out = vec![0.0; n * n];
        let mut sums = vec![0.0; n];
        tensor::row_normalize(self.data(a), n, &mut out, &mut sums);
        let value = Tensor::new(s, out)?;
        self.emit("row_normalize", value, Op::RowNormalize { input: a, sums }, &[a])
    }

    /// Elementwise `mask ? on_true : on_false`.
    pub fn select(&mut self, mask: Vec<bool>, on_true: Var, on_false: Var) -> Result<Var> {
        if self.shape(on_true) != self.shape(on_false) || mask.len() != self.value(on_true).len() {
            return Err(Error::shape(
                "select",
                self.shape(on_true),
                self.shape(on_false),
            ));
        }
        let data = mask
            .iter()
            .zip(self.data(on_true).iter().zip(self.data(on_false)))
            .map(|(m, (t, f))| if *m { *t } else { *f })
            .collect();
        let value = Tensor::new(self.shape(on_true).to_vec(), data)?;
        self.emit(
            "select",
            value,
            Op::Select {
                mask,
                on_true,
                on_false,
            },
            &[on_true, on_false],
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        self.emit("reshape", value, Op::Reshape(a), &[a])
    }

    /// Keeps the first `keep` entries along the middle axis of a rank-3
    /// tensor `[outer, middle, inner]`.
    pub fn slice_middle(&mut self, a: Var, keep: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || keep > s[1] {
            return Err(Error::shape("slice_middle", &s, &[keep]));
        }
        let (outer, middle, inner) = (s[0], s[1], s[2]);
        let src = self.data(a);
        let mut out = Vec::with_capacity(outer * keep * inner);
        for o in 0..outer {
            let start = o * middle * inner;
            out.extend_from_slice(&src[start..start + keep * inner]);
        }
        let value = Tensor::new(vec![outer, keep, inner], out)?;
        self.emit(
            "slice_middle",
            value,
            Op::SliceMiddle {
                input: a,
                outer,
                middle,
                keep,
                inner,
            },
            &[a],
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().sum();
        self.emit("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Mean of `|pred - target|` over all elements.
    pub fn mean_abs_error(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape(
                "mean_abs_error",
                self.shape(pred),
                self.shape(target),
            ));
        }
        let n = self.value(pred).len().max(1) as f64;
        let s: f64 = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(p, t)| (p - t).abs())
            .sum();
        self.emit(
            "mean_abs_error",
            Tensor::scalar(s / n),
            Op::MeanAbsError(pred, target),
            &[pred, target],
        )
    }

    /// Backward pass from a scalar output with seed 1.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::shape("backward", self.value(output).shape(), &[1]));
        }
        self.backward_with(output, &[1.0])
    }

    /// Backward pass from `output` seeded with an arbitrary cotangent.
    pub fn backward_with(&self, output: Var, seed: &[f64]) -> Result<Gradients> {
        if seed.len() != self.value(output).len() {
            return Err(Error::shape(
                "backward seed",
                self.value(output).shape(),
                &[seed.len()],
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed.to_vec());
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if wants(*a) {
                    // dA = dC · Bᵀ
                    let da = slot(grads, *a, m * k);
                    tensor::matmul_a_bt_acc(g, self.data(*b), m, n, k, da);
                }
                if wants(*b) {
                    // dB = Aᵀ · dC
                    let db = slot(grads, *b, k * n);
                    tensor::matmul_at_b_acc(self.data(*a), g, m, k, n, db);
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                let (r, c) = (s[0], s[1]);
                let mut t = vec![0.0; r * c];
                tensor::transpose_into(g, r, c, &mut t);
                add_into(slot(grads, *a, r * c), &t);
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if wants(*b) {
                    for (d, gv) in slot(grads, *b, g.len()).iter_mut().zip(g) {
                        *d -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let other = self.data(*b);
                    for ((d, gv), o) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(other) {
                        *d += gv * o;
                    }
                }
                if wants(*b) {
                    let other = self.data(*a);
                    for ((d, gv), o) in slot(grads, *b, g.len()).iter_mut().zip(g).zip(other) {
                        *d += gv * o;
                    }
                }
            }
            Op::Scale(a, f) => {
                for (d, gv) in slot(grads, *a, g.len()).iter_mut().zip(g) {
                    *d += gv * f;
                }
            }
            Op::Relu(a) => {
                let x = self.data(*a);
                for ((d, gv), xv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(x) {
                    if *xv > 0.0 {
                        *d += gv;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                for ((d, gv), yv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (1.0 - yv);
                }
            }
            Op::Threshold(a, r) => {
                let x = self.data(*a);
                for ((d, gv), xv) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(x) {
                    if *xv >= *r {
                        *d += gv;
                    }
                }
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
                dims,
            } => {
                let x = self.data(*input);
                let w = self.data(*kernel);
                let mut dx = wants(*input).then(|| vec![0.0; x.len()]);
                let mut dw = wants(*kernel).then(|| vec![0.0; w.len()]);
                let mut db = bias.filter(|b| wants(*b)).map(|_| vec![0.0; dims.c_out]);
                tensor::conv1d_backward(
                    x,
                    w,
                    g,
                    *dims,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(dx) = dx {
                    add_into(slot(grads, *input, x.len()), &dx);
                }
                if let Some(dw) = dw {
                    add_into(slot(grads, *kernel, w.len()), &dw);
                }
                if let (Some(db), Some(b)) = (db, bias) {
                    add_into(slot(grads, *b, dims.c_out), &db);
                }
            }
            Op::Propagate {
                adj,
                features,
                batch,
                nodes,
                width,
            } => {
                let (batch, nodes, width) = (*batch, *nodes, *width);
                let stride = nodes * width;
                let a = self.data(*adj);
                let h = self.data(*features);
                if wants(*features) {
                    let dh = slot(grads, *features, batch * stride);
                    for b in 0..batch {
                        tensor::matmul_at_b_acc(
                            a,
                            &g[b * stride..(b + 1) * stride],
                            nodes,
                            nodes,
                            width,
                            &mut dh[b * stride..(b + 1) * stride],
                        );
                    }
                }
                if wants(*adj) {
                    let da = slot(grads, *adj, nodes * nodes);
                    for b in 0..batch {
                        tensor::matmul_a_bt_acc(
                            &g[b * stride..(b + 1) * stride],
                            &h[b * stride..(b + 1) * stride],
                            nodes,
                            width,
                            nodes,
                            da,
                        );
                    }
                }
            }
            Op::RowNormalize { input, sums } => {
                // out_ij = a_ij / s_i  ⇒  da_ij = g_ij / s_i - Σ_k g_ik out_ik / s_i
                let n = sums.len();
                let out = node.value.data();
                let da = slot(grads, *input, n * n);
                for i in 0..n {
                    let row = i * n..(i + 1) * n;
                    let corr = tensor::dot(&g[row.clone()], &out[row.clone()]);
                    for j in row {
                        da[j] += (g[j] - corr) / sums[i];
                    }
                }
            }
            Op::Select {
                mask,
                on_true,
                on_false,
            } => {
                if wants(*on_true) {
                    let d = slot(grads, *on_true, g.len());
                    for ((dv, gv), m) in d.iter_mut().zip(g).zip(mask) {
                        if *m {
                            *dv += gv;
                        }
                    }
                }
                if wants(*on_false) {
                    let d = slot(grads, *on_false, g.len());
                    for ((dv, gv), m) in d.iter_mut().zip(g).zip(mask) {
                        if !*m {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::Reshape(a) => add_into(slot(grads, *a, g.len()), g),
            Op::SliceMiddle {
                input,
                outer,
                middle,
                keep,
                inner,
            } => {
                let d = slot(grads, *input, outer * middle * inner);
                for o in 0..*outer {
                    let src = &g[o * keep * inner..(o + 1) * keep * inner];
                    let start = o * middle * inner;
                    add_into(&mut d[start..start + keep * inner], src);
                }
            }
            Op::Sum(a) => {
                let len = self.value(*a).len();
                for d in slot(grads, *a, len) {
                    *d += g[0];
                }
            }
            Op::MeanAbsError(p, t) => {
                let pd = self.data(*p);
                let td = self.data(*t);
                let n = pd.len().max(1) as f64;
                let signs: Vec<f64> = pd
                    .iter()
                    .zip(td)
                    .map(|(p, t)| {
                        if p > t {
                            g[0] / n
                        } else if p < t {
                            -g[0] / n
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if wants(*p) {
                    add_into(slot(grads, *p, pd.len()), &signs);
                }
                if wants(*t) {
                    for (d, s) in slot(grads, *t, td.len()).iter_mut().zip(&signs) {
                        *d -= s;
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::identity(2));
        let m = tape.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let p = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = tape.constant(Tensor::from_rows(&[&[1.0, 0.0]]));
        let b = tape.constant(Tensor::from_rows(&[&[0.0], &[1.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[1, 1]);
        assert_eq!(tape.value(c).data(), &[0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
        assert!(err.contains("matmul"), "{err}");
    }

    #[test]
    fn conv1d_hand_case() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let k = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap());
        let y = tape.conv1d(x, k, None).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 3]);
        assert_eq!(tape.value(y).data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv1d_identity_kernel_is_passthrough() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..10).map(|v| v as f64 * 0.5 - 1.0).collect();
        let x = tape.constant(Tensor::new(vec![2, 5], data.clone()).unwrap());
        let mut eye = Tensor::zeros(&[2, 2, 1]);
        eye.data_mut()[0] = 1.0;
        eye.data_mut()[3] = 1.0;
        let k = tape.constant(eye);
        let y = tape.conv1d(x, k, None).unwrap();
        assert_eq!(tape.value(y).data(), data.as_slice());
    }

    #[test]
    fn conv1d_too_short_input() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        let k = tape.constant(Tensor::zeros(&[1, 1, 3]));
        assert!(matches!(
            tape.conv1d(x, k, None),
            Err(Error::InsufficientLength { len: 2, required: 3, .. })
        ));
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(r).unwrap();
        let g = tape.backward(s).unwrap();
        // subgradient at exactly zero is zero
        assert_eq!(g.get(x).unwrap(), &[0.0, 0.0, 1.0]);

        let z = tape.constant(Tensor::scalar(0.0));
        let sg = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(sg).data(), &[0.5]);
    }

    #[test]
    fn gradients_accumulate_across_uses() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![3.0]));
        let y = tape.add(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let p = tape.param(Tensor::from_vec(vec![1.0, 1.0]));
        let m = tape.mul(c, p).unwrap();
        let s = tape.sum(m).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let mut tape = Tape::new();
        let a = Tensor::from_rows(&[&[1.0, -2.0], &[3.0, 4.0]]);
        let va = tape.param(a.clone());
        let t = tape.transpose(va).unwrap();
        let m = tape.matmul(va, t).unwrap();
        let r = tape.relu(m).unwrap();
        let n = tape.row_normalize(r).unwrap();
        let s = tape.sum(n).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.value(va), &a);
    }

    #[test]
    fn mae_gradient_sign_and_ties() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::from_vec(vec![0.0, 2.0, 1.0]));
        let t = tape.constant(Tensor::from_vec(vec![1.0, 1.0, 1.0]));
        let l = tape.mean_abs_error(p, t).unwrap();
        assert!((tape.value(l).data()[0] - 2.0 / 3.0).abs() < 1e-15);
        let g = tape.backward(l).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(g.get(p).unwrap(), &[-third, third, 0.0]);
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![f64::MAX]));
        let err = tape.scale(x, 10.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }
}
