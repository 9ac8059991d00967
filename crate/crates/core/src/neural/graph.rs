//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! into every node that (transitively) depends on a trainable leaf.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{matmul, Real};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of a 2-D convolution with "same" padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub kf: usize,
    pub kt: usize,
    pub stride_f: usize,
    pub stride_t: usize,
    pub f_in: usize,
    pub t_in: usize,
    pub f_out: usize,
    pub t_out: usize,
    pub pad_f: usize,
    pub pad_t: usize,
}

impl ConvGeom {
    pub fn same(
        c_in: usize,
        c_out: usize,
        (kf, kt): (usize, usize),
        (stride_f, stride_t): (usize, usize),
        (f_in, t_in): (usize, usize),
    ) -> Self {
        let f_out = (f_in + stride_f - 1) / stride_f;
        let t_out = (t_in + stride_t - 1) / stride_t;
        let total_f = ((f_out - 1) * stride_f + kf).saturating_sub(f_in);
        let total_t = ((t_out - 1) * stride_t + kt).saturating_sub(t_in);
        Self { c_in, c_out, kf, kt, stride_f, stride_t, f_in, t_in, f_out, t_out, pad_f: total_f / 2, pad_t: total_t / 2 }
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kf * self.kt
    }

    fn positions(&self) -> usize {
        self.f_out * self.t_out
    }

    /// Unfolds `x` (`c_in x f_in x t_in`) into `patch_len x positions` columns.
    fn im2col<S: Real>(&self, x: &[S]) -> Vec<S> {
        let p = self.positions();
        let mut cols = vec![S::zero(); self.patch_len() * p];
        for ci in 0..self.c_in {
            for i in 0..self.kf {
                for j in 0..self.kt {
                    let row = (ci * self.kf + i) * self.kt + j;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for fo in 0..self.f_out {
                        let f = (fo * self.stride_f + i) as isize - self.pad_f as isize;
                        if f < 0 || f >= self.f_in as isize {
                            continue;
                        }
                        let src = &x[(ci * self.f_in + f as usize) * self.t_in..][..self.t_in];
                        for to in 0..self.t_out {
                            let t = (to * self.stride_t + j) as isize - self.pad_t as isize;
                            if t >= 0 && t < self.t_in as isize {
                                dst[fo * self.t_out + to] = src[t as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`ConvGeom::im2col`], accumulating into `dx`.
    fn col2im<S: Real>(&self, cols: &[S], dx: &mut [S]) {
        let p = self.positions();
        for ci in 0..self.c_in {
            for i in 0..self.kf {
                for j in 0..self.kt {
                    let row = (ci * self.kf + i) * self.kt + j;
                    let src = &cols[row * p..(row + 1) * p];
                    for fo in 0..self.f_out {
                        let f = (fo * self.stride_f + i) as isize - self.pad_f as isize;
                        if f < 0 || f >= self.f_in as isize {
                            continue;
                        }
                        let dst = &mut dx[(ci * self.f_in + f as usize) * self.t_in..][..self.t_in];
                        for to in 0..self.t_out {
                            let t = (to * self.stride_t + j) as isize - self.pad_t as isize;
                            if t >= 0 && t < self.t_in as isize {
                                dst[t as usize] += src[fo * self.t_out + to];
                            }
                        }
                    }
                }
            }
        }
    }
}

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias(Var, Var),
    Affine(Var, S, S),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    LeakyRelu(Var, S),
    PowConst(Var, S),
    SumSquares(Var),
    MulScalar(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Row(Var, usize),
    StackRows(Vec<Var>),
    ToChannels(Vec<Var>),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<S> },
    GlobalAvgPool(Var),
    SpectralNorm { w: Var, u: Vec<S>, v: Vec<S>, sigma: S },
    MseTarget(Var, Vec<S>),
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Real> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Recording tape for one forward/backward pass.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    nonfinite: Option<(usize, &'static str)>,
}

impl<S: Real> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch(format!("{what}: {a:?} vs {b:?}"))
}

impl<S: Real> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), nonfinite: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool, name: &'static str) -> Var {
        if self.nonfinite.is_none() && !value.all_finite() {
            self.nonfinite = Some((self.nodes.len(), name));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Fails if any recorded value is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.nonfinite {
            Some((idx, name)) => Err(Error::Diverged(format!("{name} (node {idx})"))),
            None => Ok(()),
        }
    }

    /// Leaf holding a trainable value.
    pub fn param(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true, "param")
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false, "constant")
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[S] {
        self.nodes[v.0].value.data()
    }

    /// `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![S::zero(); m * n];
        matmul(self.data(a), self.data(b), &mut out, m, k, n, false, false, false);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), ng, "matmul"))
    }

    fn zip(&mut self, a: Var, b: Var, what: &'static str, f: impl Fn(S, S) -> S, op: Op<S>) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(what, self.shape(a), self.shape(b)));
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, op, ng, what))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `[m, n] + [n]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (_, n) = self.value(x).dims2()?;
        if self.value(b).len() != n {
            return Err(shape_err("add_row_bias", self.shape(x), self.shape(b)));
        }
        let bias = self.data(b);
        let data = self.data(x).chunks(n).flat_map(|row| row.iter().zip(bias).map(|(&v, &c)| v + c)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(t, Op::AddRowBias(x, b), ng, "add_row_bias"))
    }

    fn map(&mut self, x: Var, what: &'static str, f: impl Fn(S) -> S, op: Op<S>) -> Var {
        let data = self.data(x).iter().map(|&v| f(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        let ng = self.ng(x);
        self.push(t, op, ng, what)
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: S, shift: S) -> Var {
        self.map(x, "affine", |v| scale * v + shift, Op::Affine(x, scale, shift))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(
            x,
            "sigmoid",
            |v| {
                if v >= S::zero() {
                    S::one() / (S::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (S::one() + e)
                }
            },
            Op::Sigmoid(x),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, "tanh", |v| v.tanh(), Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, "exp", |v| v.exp(), Op::Exp(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: S) -> Var {
        self.map(x, "leaky_relu", |v| if v > S::zero() { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    /// Entrywise `x^e` for a constant exponent; `x` must be non-negative.
    pub fn pow_const(&mut self, x: Var, e: S) -> Var {
        self.map(x, "pow_const", |v| v.powf(e), Op::PowConst(x, e))
    }

    /// `sum(x^2)` as a one-element tensor.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().fold(S::zero(), |acc, &v| acc + v * v);
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), ng, "sum_squares")
    }

    /// Multiplies every entry of `x` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(shape_err("mul_scalar", self.shape(x), self.shape(s)));
        }
        let c = self.data(s)[0];
        let data = self.data(x).iter().map(|&v| v * c).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(t, Op::MulScalar(x, s), ng, "mul_scalar"))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(shape_err("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.data(p)[r * w..(r + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::matrix(rows, total, data)?, Op::ConcatCols(parts.to_vec()), ng, "concat_cols"))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if start + len > cols {
            return Err(Error::ShapeMismatch(format!("slice {start}+{len} of {cols} columns")));
        }
        let data = self.data(x).chunks(cols).flat_map(|r| r[start..start + len].iter().copied()).collect();
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(rows, len, data)?, Op::SliceCols(x, start), ng, "slice_cols"))
    }

    /// Row `r` of a matrix as a `[1, cols]` matrix.
    pub fn row(&mut self, x: Var, r: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if r >= rows {
            return Err(Error::ShapeMismatch(format!("row {r} of {rows}")));
        }
        let data = self.data(x)[r * cols..(r + 1) * cols].to_vec();
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(1, cols, data)?, Op::Row(x, r), ng, "row"))
    }

    /// Vertical stack of `[1, n]` rows into `[rows.len(), n]`.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let n = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.value(r).len() != n {
                return Err(shape_err("stack_rows", self.shape(rows[0]), self.shape(r)));
            }
            data.extend_from_slice(self.data(r));
        }
        let ng = rows.iter().any(|&r| self.ng(r));
        Ok(self.push(Tensor::matrix(rows.len(), n, data)?, Op::StackRows(rows.to_vec()), ng, "stack_rows"))
    }

    /// Stacks `[T, F]` matrices as channels of a `[C, F, T]` map (transposing each).
    pub fn to_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let (t, f) = self.value(parts[0]).dims2()?;
        let mut data = Vec::with_capacity(parts.len() * t * f);
        for &p in parts {
            if self.shape(p) != [t, f] {
                return Err(shape_err("to_channels", self.shape(parts[0]), self.shape(p)));
            }
            let src = self.data(p);
            for fi in 0..f {
                data.extend((0..t).map(|ti| src[ti * f + fi]));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let out = Tensor::new(vec![parts.len(), f, t], data)?;
        Ok(self.push(out, Op::ToChannels(parts.to_vec()), ng, "to_channels"))
    }

    /// Cross-correlation of `x` (`[C_in, F, T]`) with `w` (`[C_out, C_in, kf, kt]`)
    /// plus bias `b` (`[C_out]`), zero "same" padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: (usize, usize)) -> Result<Var> {
        let (&[c_in, f_in, t_in], &[c_out, wc_in, kf, kt]) = (self.shape(x), self.shape(w)) else {
            return Err(shape_err("conv2d", self.shape(x), self.shape(w)));
        };
        if c_in != wc_in || self.value(b).len() != c_out || f_in == 0 || t_in == 0 {
            return Err(shape_err("conv2d channels", self.shape(x), self.shape(w)));
        }
        let geom = ConvGeom::same(c_in, c_out, (kf, kt), stride, (f_in, t_in));
        let cols = geom.im2col(self.data(x));
        let p = geom.positions();
        let mut out = vec![S::zero(); c_out * p];
        for (co, row) in out.chunks_mut(p).enumerate() {
            let bias = self.data(b)[co];
            row.iter_mut().for_each(|v| *v = bias);
        }
        matmul(self.data(w), &cols, &mut out, c_out, geom.patch_len(), p, false, false, true);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        let t = Tensor::new(vec![c_out, geom.f_out, geom.t_out], out)?;
        let cols = if self.ng(w) { cols } else { Vec::new() };
        Ok(self.push(t, Op::Conv2d { x, w, b, geom, cols }, ng, "conv2d"))
    }

    /// Per-channel mean of a `[C, F, T]` map as a `[1, C]` row.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() != 3 || shape[1] * shape[2] == 0 {
            return Err(Error::ShapeMismatch(format!("global_avg_pool needs a non-empty [C, F, T] map, got {shape:?}")));
        }
        let c = shape[0];
        let area = shape[1] * shape[2];
        let inv = S::one() / S::lit(area as f64);
        let data = self.data(x).chunks(area).map(|ch| ch.iter().fold(S::zero(), |a, &v| a + v) * inv).collect();
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(1, c, data)?, Op::GlobalAvgPool(x), ng, "global_avg_pool"))
    }

    /// `w / (u^T W v)` with `W` the `[rows, rest]` view of `w` and fixed
    /// singular-vector estimates `u`, `v`.
    pub fn spectral_norm(&mut self, w: Var, u: &[S], v: &[S]) -> Result<Var> {
        let (rows, cols) = self.value(w).as_matrix_dims();
        if u.len() != rows || v.len() != cols {
            return Err(Error::ShapeMismatch(format!(
                "spectral_norm: weight {rows}x{cols}, u {}, v {}",
                u.len(),
                v.len()
            )));
        }
        let sigma = sigma_estimate(self.data(w), rows, cols, u, v);
        if !(sigma.abs() > S::zero()) {
            return Err(Error::InvalidArgument("spectral_norm of a zero weight".into()));
        }
        let data = self.data(w).iter().map(|&x| x / sigma).collect();
        let t = Tensor::new(self.shape(w).to_vec(), data)?;
        let ng = self.ng(w);
        Ok(self.push(t, Op::SpectralNorm { w, u: u.to_vec(), v: v.to_vec(), sigma }, ng, "spectral_norm"))
    }

    /// Mean squared difference to a constant target.
    pub fn mse_target(&mut self, x: Var, target: &[S]) -> Result<Var> {
        if self.value(x).len() != target.len() {
            return Err(Error::ShapeMismatch(format!(
                "mse_target: {} predictions vs {} targets",
                self.value(x).len(),
                target.len()
            )));
        }
        let n = S::lit(target.len() as f64);
        let s = self.data(x).iter().zip(target).fold(S::zero(), |a, (&p, &t)| a + (p - t) * (p - t)) / n;
        let ng = self.ng(x);
        Ok(self.push(Tensor::scalar(s), Op::MseTarget(x, target.to_vec()), ng, "mse_target"))
    }

    /// Reverse pass from the one-element node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::ShapeMismatch(format!("loss must be a scalar, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let nodes = &self.nodes;
        // Accumulates `f(k)` into the gradient buffer of `v`, if it needs one.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [S])| {
            if nodes[v.0].needs_grad {
                let buf = grads[v.0].get_or_insert_with(|| vec![S::zero(); nodes[v.0].value.len()]);
                f(buf);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("matrix");
                let n = self.value(*b).dims2().expect("matrix").1;
                acc(*a, &mut |ga| matmul(g, self.data(*b), ga, m, n, k, false, true, true));
                acc(*b, &mut |gb| matmul(self.data(*a), g, gb, k, m, n, true, false, true));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(x, &d)| *x -= d));
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| ga.iter_mut().zip(g).zip(db).for_each(|((x, &d), &o)| *x += d * o));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).zip(da).for_each(|((x, &d), &o)| *x += d * o));
            }
            Op::AddRowBias(x, b) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(v, &d)| *v += d));
                let n = self.value(*b).len();
                acc(*b, &mut |gb| {
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(v, &d)| *v += d);
                    }
                });
            }
            Op::Affine(x, scale, _) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(v, &d)| *v += d * *scale));
            }
            Op::Sigmoid(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).zip(y).for_each(|((v, &d), &s)| *v += d * s * (S::one() - s)));
            }
            Op::Tanh(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).zip(y).for_each(|((v, &d), &t)| *v += d * (S::one() - t * t)));
            }
            Op::Exp(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).zip(y).for_each(|((v, &d), &e)| *v += d * e));
            }
            Op::LeakyRelu(x, slope) => {
                let xd = self.data(*x);
                acc(*x, &mut |gx| {
                    gx.iter_mut()
                        .zip(g)
                        .zip(xd)
                        .for_each(|((v, &d), &xi)| *v += if xi > S::zero() { d } else { d * *slope })
                });
            }
            Op::PowConst(x, e) => {
                let xd = self.data(*x);
                let em1 = *e - S::one();
                acc(*x, &mut |gx| {
                    gx.iter_mut().zip(g).zip(xd).for_each(|((v, &d), &xi)| {
                        if xi != S::zero() || em1 >= S::zero() {
                            *v += d * *e * xi.powf(em1)
                        }
                    })
                });
            }
            Op::SumSquares(x) => {
                let xd = self.data(*x);
                let two = S::lit(2.0) * g[0];
                acc(*x, &mut |gx| gx.iter_mut().zip(xd).for_each(|(v, &xi)| *v += two * xi));
            }
            Op::MulScalar(x, s) => {
                let c = self.data(*s)[0];
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(v, &d)| *v += d * c));
                let xd = self.data(*x);
                acc(*s, &mut |gs| gs[0] += g.iter().zip(xd).fold(S::zero(), |a, (&d, &xi)| a + d * xi));
            }
            Op::ConcatCols(parts) => {
                let total = self.value(Var(i)).dims2().expect("matrix").1;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).dims2().expect("matrix").1;
                    acc(p, &mut |gp| {
                        for (dst, src) in gp.chunks_mut(w).zip(g.chunks(total)) {
                            dst.iter_mut().zip(&src[offset..offset + w]).for_each(|(v, &d)| *v += d);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(x, start) => {
                let cols = self.value(*x).dims2().expect("matrix").1;
                let len = self.value(Var(i)).dims2().expect("matrix").1;
                acc(*x, &mut |gx| {
                    for (dst, src) in gx.chunks_mut(cols).zip(g.chunks(len)) {
                        dst[*start..*start + len].iter_mut().zip(src).for_each(|(v, &d)| *v += d);
                    }
                });
            }
            Op::Row(x, r) => {
                let n = g.len();
                acc(*x, &mut |gx| gx[r * n..(r + 1) * n].iter_mut().zip(g).for_each(|(v, &d)| *v += d));
            }
            Op::StackRows(rows) => {
                let n = self.value(rows[0]).len();
                for (k, &r) in rows.iter().enumerate() {
                    acc(r, &mut |gr| gr.iter_mut().zip(&g[k * n..(k + 1) * n]).for_each(|(v, &d)| *v += d));
                }
            }
            Op::ToChannels(parts) => {
                let (t, f) = self.value(parts[0]).dims2().expect("matrix");
                for (c, &p) in parts.iter().enumerate() {
                    let ch = &g[c * f * t..(c + 1) * f * t];
                    acc(p, &mut |gp| {
                        for fi in 0..f {
                            for ti in 0..t {
                                gp[ti * f + fi] += ch[fi * t + ti];
                            }
                        }
                    });
                }
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let p = geom.positions();
                let r = geom.patch_len();
                acc(*b, &mut |gb| {
                    for (v, row) in gb.iter_mut().zip(g.chunks(p)) {
                        *v += row.iter().fold(S::zero(), |a, &d| a + d);
                    }
                });
                acc(*w, &mut |gw| matmul(g, cols, gw, geom.c_out, p, r, false, true, true));
                if nodes[x.0].needs_grad {
                    let mut dcols = vec![S::zero(); r * p];
                    matmul(self.data(*w), g, &mut dcols, r, geom.c_out, p, true, false, false);
                    acc(*x, &mut |gx| geom.col2im(&dcols, gx));
                }
            }
            Op::GlobalAvgPool(x) => {
                let shape = self.shape(*x);
                let area = shape[1] * shape[2];
                let inv = S::one() / S::lit(area as f64);
                acc(*x, &mut |gx| {
                    for (ch, &d) in gx.chunks_mut(area).zip(g) {
                        ch.iter_mut().for_each(|v| *v += d * inv);
                    }
                });
            }
            Op::SpectralNorm { w, u, v, sigma } => {
                let wd = self.data(*w);
                let cols = v.len();
                let inner = g.iter().zip(wd).fold(S::zero(), |a, (&d, &x)| a + d * x);
                let coef = inner / (*sigma * *sigma);
                acc(*w, &mut |gw| {
                    for (idx, gv) in gw.iter_mut().enumerate() {
                        let (r, c) = (idx / cols, idx % cols);
                        *gv += g[idx] / *sigma - coef * u[r] * v[c];
                    }
                });
            }
            Op::MseTarget(x, target) => {
                let scale = S::lit(2.0) * g[0] / S::lit(target.len() as f64);
                let xd = self.data(*x);
                acc(*x, &mut |gx| {
                    gx.iter_mut().zip(xd).zip(target).for_each(|((v, &p), &t)| *v += scale * (p - t))
                });
            }
        }
    }
}

/// `u^T W v` for a row-major `rows x cols` matrix.
pub(crate) fn sigma_estimate<S: Real>(w: &[S], rows: usize, cols: usize, u: &[S], v: &[S]) -> S {
    (0..rows).fold(S::zero(), |acc, r| {
        let row = &w[r * cols..(r + 1) * cols];
        acc + u[r] * row.iter().zip(v).fold(S::zero(), |a, (&x, &y)| a + x * y)
    })
}
