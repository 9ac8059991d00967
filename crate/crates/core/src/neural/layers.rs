use rand::Rng;

use super::graph::{Graph, Var};
use super::init::{gaussian_unit, orthogonal, xavier_uniform};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const LEAKY_SLOPE: f64 = 0.3;
pub const SCALE_OFFSET: f64 = 1.5;
pub const SCALE_GAIN: f64 = 4.0;

pub fn leaky_relu<S: Real>(x: S, slope: S) -> S {
    if x > S::zero() {
        x
    } else {
        slope * x
    }
}

pub fn sigmoid<S: Real>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Bounded mask activation `exp(1.5 + 4 tanh(m))`, in `[e^-2.5, e^5.5]`.
pub fn scale_activation<S: Real>(m: S) -> S {
    (S::lit(SCALE_OFFSET) + S::lit(SCALE_GAIN) * m.tanh()).exp()
}

/// Graph version of [`scale_activation`].
pub fn scale_activation_var<S: Real>(g: &mut Graph<S>, m: Var) -> Var {
    let t = g.tanh(m);
    let a = g.affine(t, S::lit(SCALE_GAIN), S::lit(SCALE_OFFSET));
    g.exp(a)
}

/// Fully connected layer `y = x W + b`, with `W` stored as `[in, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new<S: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), xavier_uniform(rng, &[n_in, n_out], n_in, n_out))?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[n_out]))?;
        Ok(Self { w, b, n_in, n_out })
    }

    pub fn num_params(n_in: usize, n_out: usize) -> usize {
        n_in * n_out + n_out
    }

    /// `x` is `[rows, n_in]`.
    pub fn forward<S: Real>(&self, g: &mut Graph<S>, p: &[Var], x: Var) -> Result<Var> {
        self.forward_with_weight(g, p[self.w.0], p[self.b.0], x)
    }

    pub fn forward_with_weight<S: Real>(&self, g: &mut Graph<S>, w: Var, b: Var, x: Var) -> Result<Var> {
        let xw = g.matmul(x, w)?;
        g.add_row_bias(xw, b)
    }
}

/// Unidirectional LSTM with gate order (input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub hidden: usize,
    pub reverse: bool,
}

impl Lstm {
    pub fn new<S: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        n_in: usize,
        hidden: usize,
        reverse: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let h4 = 4 * hidden;
        let w_ih = store.add(format!("{name}.w_ih"), xavier_uniform(rng, &[n_in, h4], n_in, h4))?;
        let mut rec = vec![S::zero(); hidden * h4];
        for gate in 0..4 {
            let q = orthogonal(rng, hidden);
            for r in 0..hidden {
                for c in 0..hidden {
                    rec[r * h4 + gate * hidden + c] = S::lit(q[r * hidden + c]);
                }
            }
        }
        let w_hh = store.add(format!("{name}.w_hh"), Tensor::matrix(hidden, h4, rec)?)?;
        let mut bias = vec![S::zero(); h4];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = S::one());
        let b = store.add(format!("{name}.b"), Tensor::new(vec![h4], bias)?)?;
        Ok(Self { w_ih, w_hh, b, n_in, hidden, reverse })
    }

    pub fn num_params(n_in: usize, hidden: usize) -> usize {
        4 * hidden * (n_in + hidden + 1)
    }

    /// `x` is `[T, n_in]`; returns `[T, hidden]` in input time order, starting
    /// from zero hidden and cell state.
    pub fn forward<S: Real>(&self, g: &mut Graph<S>, p: &[Var], x: Var) -> Result<Var> {
        let (steps, n_in) = g.value(x).dims2()?;
        if n_in != self.n_in {
            return Err(Error::ShapeMismatch(format!("lstm expects {} inputs, got {n_in}", self.n_in)));
        }
        if steps == 0 {
            return Err(Error::EmptyInput);
        }
        let h = self.hidden;
        let xw = g.matmul(x, p[self.w_ih.0])?;
        let xw = g.add_row_bias(xw, p[self.b.0])?;
        let mut outputs = vec![None; steps];
        let mut state: Option<(Var, Var)> = None;
        for k in 0..steps {
            let t = if self.reverse { steps - 1 - k } else { k };
            let mut z = g.row(xw, t)?;
            if let Some((h_prev, _)) = state {
                let rec = g.matmul(h_prev, p[self.w_hh.0])?;
                z = g.add(z, rec)?;
            }
            let zi = g.slice_cols(z, 0, h)?;
            let zf = g.slice_cols(z, h, h)?;
            let zg = g.slice_cols(z, 2 * h, h)?;
            let zo = g.slice_cols(z, 3 * h, h)?;
            let i = g.sigmoid(zi);
            let o = g.sigmoid(zo);
            let cand = g.tanh(zg);
            let mut c = g.mul(i, cand)?;
            if let Some((_, c_prev)) = state {
                let f = g.sigmoid(zf);
                let keep = g.mul(f, c_prev)?;
                c = g.add(keep, c)?;
            }
            let tc = g.tanh(c);
            let h_new = g.mul(o, tc)?;
            outputs[t] = Some(h_new);
            state = Some((h_new, c));
        }
        let rows: Vec<Var> = outputs.into_iter().map(|v| v.expect("every step visited")).collect();
        g.stack_rows(&rows)
    }
}

/// Bidirectional LSTM: forward and backward outputs concatenated per frame.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new<S: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        n_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fwd = Lstm::new(store, &format!("{name}.fwd"), n_in, hidden, false, rng)?;
        let bwd = Lstm::new(store, &format!("{name}.bwd"), n_in, hidden, true, rng)?;
        Ok(Self { fwd, bwd })
    }

    pub fn num_params(n_in: usize, hidden: usize) -> usize {
        2 * Lstm::num_params(n_in, hidden)
    }

    pub fn output_width(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward<S: Real>(&self, g: &mut Graph<S>, p: &[Var], x: Var) -> Result<Var> {
        let a = self.fwd.forward(g, p, x)?;
        let b = self.bwd.forward(g, p, x)?;
        g.concat_cols(&[a, b])
    }
}

/// 2-D convolution with same padding over `[C, F, T]` maps.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        let area = kernel.0 * kernel.1;
        let w = store.add(
            format!("{name}.w"),
            xavier_uniform(rng, &[c_out, c_in, kernel.0, kernel.1], c_in * area, c_out * area),
        )?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[c_out]))?;
        Ok(Self { w, b, c_in, c_out, kernel, stride })
    }

    pub fn num_params(c_in: usize, c_out: usize, kernel: (usize, usize)) -> usize {
        c_out * c_in * kernel.0 * kernel.1 + c_out
    }

    pub fn forward<S: Real>(&self, g: &mut Graph<S>, p: &[Var], x: Var) -> Result<Var> {
        self.forward_with_weight(g, p[self.w.0], p[self.b.0], x)
    }

    pub fn forward_with_weight<S: Real>(&self, g: &mut Graph<S>, w: Var, b: Var, x: Var) -> Result<Var> {
        g.conv2d(x, w, b, self.stride)
    }
}

pub const SN_WARMUP_ITERATIONS: usize = 15;

/// Persistent singular-vector estimates for one spectrally normalized weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralNormState<S> {
    pub u: Vec<S>,
    pub v: Vec<S>,
    pub iterations: usize,
}

fn normalize<S: Real>(x: &mut [S]) -> Result<()> {
    let n = x.iter().fold(S::zero(), |a, &v| a + v * v).sqrt();
    if !n.is_finite() {
        return Err(Error::Diverged("spectral norm of an overflowing weight".into()));
    }
    if !(n > S::zero()) {
        return Err(Error::InvalidArgument("spectral normalization of a zero weight matrix".into()));
    }
    x.iter_mut().for_each(|v| *v /= n);
    Ok(())
}

impl<S: Real> SpectralNormState<S> {
    /// Random unit `u` for a weight whose 2-D view is `rows x cols`.
    pub fn new<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self { u: gaussian_unit(rng, rows), v: vec![S::zero(); cols], iterations: 1 }
    }

    /// State for `w`, warmed up with [`SN_WARMUP_ITERATIONS`] power iterations.
    /// Falls back to a cold state when `w` is zero.
    pub fn for_weight<R: Rng + ?Sized>(w: &Tensor<S>, rng: &mut R) -> Self {
        let (rows, cols) = w.as_matrix_dims();
        let mut st = Self::new(rows, cols, rng);
        if st.power_iterations(w, SN_WARMUP_ITERATIONS).is_err() {
            st = Self::new(rows, cols, rng);
        }
        st
    }

    /// Runs `iterations` power-iteration steps against `w` and returns the
    /// resulting estimate of its largest singular value.
    pub fn power_iteration(&mut self, w: &Tensor<S>) -> Result<S> {
        self.power_iterations(w, self.iterations)
    }

    pub fn power_iterations(&mut self, w: &Tensor<S>, n: usize) -> Result<S> {
        let (rows, cols) = w.as_matrix_dims();
        if self.u.len() != rows || self.v.len() != cols {
            return Err(Error::ShapeMismatch(format!(
                "spectral-norm state {}x{} for weight {rows}x{cols}",
                self.u.len(),
                self.v.len()
            )));
        }
        let wd = w.data();
        for _ in 0..n.max(1) {
            self.v.iter_mut().for_each(|x| *x = S::zero());
            for (r, &ur) in self.u.iter().enumerate() {
                for (vc, &x) in self.v.iter_mut().zip(&wd[r * cols..(r + 1) * cols]) {
                    *vc += ur * x;
                }
            }
            normalize(&mut self.v)?;
            for (r, ur) in self.u.iter_mut().enumerate() {
                *ur = wd[r * cols..(r + 1) * cols].iter().zip(&self.v).fold(S::zero(), |a, (&x, &y)| a + x * y);
            }
            normalize(&mut self.u)?;
        }
        Ok(super::graph::sigma_estimate(wd, rows, cols, &self.u, &self.v))
    }
}

/// Advances `state` by its configured power iterations and returns `W / sigma`.
pub fn spectral_normalize<S: Real>(w: &Tensor<S>, state: &mut SpectralNormState<S>) -> Result<Tensor<S>> {
    let sigma = state.power_iteration(w)?;
    let data = w.data().iter().map(|&x| x / sigma).collect();
    Tensor::new(w.shape().to_vec(), data)
}
