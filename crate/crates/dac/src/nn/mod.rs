//! Minimal feed-forward stack with exact reverse-mode gradients.
//!
//! Networks are two-hidden-layer ReLU MLPs by convention (sizes are free),
//! with a linear or sigmoid output. A forward pass can record a trace, and
//! [`Mlp::backward`] replays it to produce exact parameter gradients and the
//! gradient with respect to the input vector. There is no general tape: the
//! agent composes these pieces by hand, and every composition is checked
//! against central finite differences.

mod gaussian;

pub use gaussian::{GaussianPolicyHead, PolicySample, LOG_STD_MAX, LOG_STD_MIN};

use rand::Rng;

use crate::error::{DacError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out = W·x`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out[r] = acc;
        }
    }

    /// `out = Wᵀ·y`
    pub fn matvec_t(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += yr * w;
            }
        }
    }

    /// `W += y·xᵀ`
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (w, xi) in row.iter_mut().zip(x) {
                *w += yr * xi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

/// Fully-connected network: ReLU hidden layers, configurable output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub output_activation: OutputActivation,
}

/// Recorded forward pass: the input plus pre- and post-activation vectors
/// per layer. `post.last()` is the network output.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for w in &mut self.weights {
            w.data.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for v in &mut w.data {
                *v *= factor;
            }
        }
        for b in &mut self.biases {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.data.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Uniform fan-in initialization: `U(−1/√n_in, 1/√n_in)` per layer, with
    /// the final layer additionally scaled by `final_scale`.
    pub fn new(
        sizes: &[usize],
        output_activation: OutputActivation,
        final_scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let last = sizes.len() - 2;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let scale = if l == last { final_scale } else { 1.0 };
            let mut w = Matrix::zeros(n_out, n_in);
            for v in &mut w.data {
                *v = (rng.random::<f64>() * 2.0 - 1.0) * bound * scale;
            }
            let b = (0..n_out)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound * scale)
                .collect();
            weights.push(w);
            biases.push(b);
        }
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
            output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(DacError::validation(format!(
                "input length {} does not match first layer {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in 0..self.n_layers() {
            let mut pre = vec![0.0; self.sizes[l + 1]];
            self.weights[l].matvec(&x, &mut pre);
            for (p, b) in pre.iter_mut().zip(&self.biases[l]) {
                *p += b;
            }
            let last = l == self.n_layers() - 1;
            x = pre;
            if !last {
                for v in &mut x {
                    *v = v.max(0.0);
                }
            } else if self.output_activation == OutputActivation::Sigmoid {
                for v in &mut x {
                    *v = sigmoid(*v);
                }
            }
        }
        Ok(x)
    }

    /// Forward pass that records everything `backward` needs.
    pub fn forward_traced(&self, input: &[f64]) -> Result<MlpTrace> {
        self.check_input(input)?;
        let mut pre_all = Vec::with_capacity(self.n_layers());
        let mut post_all = Vec::with_capacity(self.n_layers());
        let mut x = input.to_vec();
        for l in 0..self.n_layers() {
            let mut pre = vec![0.0; self.sizes[l + 1]];
            self.weights[l].matvec(&x, &mut pre);
            for (p, b) in pre.iter_mut().zip(&self.biases[l]) {
                *p += b;
            }
            let last = l == self.n_layers() - 1;
            let mut post = pre.clone();
            if !last {
                for v in &mut post {
                    *v = v.max(0.0);
                }
            } else if self.output_activation == OutputActivation::Sigmoid {
                for v in &mut post {
                    *v = sigmoid(*v);
                }
            }
            pre_all.push(pre);
            x = post.clone();
            post_all.push(post);
        }
        Ok(MlpTrace {
            input: input.to_vec(),
            pre: pre_all,
            post: post_all,
        })
    }

    pub fn output_of<'a>(&self, trace: &'a MlpTrace) -> &'a [f64] {
        trace.post.last().unwrap()
    }

    /// Reverse pass. `out_adjoint` is ∂L/∂(network output); parameter
    /// gradients are accumulated into `grads` and the return value is
    /// ∂L/∂(input vector).
    pub fn backward(&self, trace: &MlpTrace, out_adjoint: &[f64], grads: &mut MlpGrads) -> Vec<f64> {
        assert_eq!(out_adjoint.len(), self.output_dim());
        let n = self.n_layers();
        // Adjoint with respect to the pre-activation of the output layer.
        let mut delta: Vec<f64> = match self.output_activation {
            OutputActivation::Linear => out_adjoint.to_vec(),
            OutputActivation::Sigmoid => trace.post[n - 1]
                .iter()
                .zip(out_adjoint)
                .map(|(&y, &g)| g * y * (1.0 - y))
                .collect(),
        };
        for l in (0..n).rev() {
            let below: &[f64] = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            grads.weights[l].add_outer(&delta, below);
            for (g, d) in grads.biases[l].iter_mut().zip(&delta) {
                *g += d;
            }
            let mut lower = vec![0.0; self.sizes[l]];
            self.weights[l].matvec_t(&delta, &mut lower);
            if l > 0 {
                // ReLU gate of the layer below.
                for (v, pre) in lower.iter_mut().zip(&trace.pre[l - 1]) {
                    if *pre <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = lower;
        }
        delta
    }

    /// Applies `f` to every (parameter, companion) pair in a fixed order.
    /// The order is shared by the optimizer, the EMA tracker, and the
    /// checkpoint writer.
    pub fn zip_params_mut(&mut self, grads: &MlpGrads, mut f: impl FnMut(&mut f64, f64)) {
        for (w, gw) in self.weights.iter_mut().zip(&grads.weights) {
            for (p, g) in w.data.iter_mut().zip(&gw.data) {
                f(p, *g);
            }
        }
        for (b, gb) in self.biases.iter_mut().zip(&grads.biases) {
            for (p, g) in b.iter_mut().zip(gb) {
                f(p, *g);
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for w in &self.weights {
            out.extend_from_slice(&w.data);
        }
        for b in &self.biases {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(DacError::validation(format!(
                "parameter count mismatch: got {}, expected {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut i = 0;
        for w in &mut self.weights {
            let n = w.data.len();
            w.data.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        for b in &mut self.biases {
            let n = b.len();
            b.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Standard normal draw by Box-Muller. One value per call (the companion
/// draw is discarded) so the consumption of the underlying stream is a
/// fixed two uniforms per sample, which keeps independently written
/// learners on shared seeds in lockstep.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Adam over one network's parameters, in the fixed `zip_params_mut` order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One descent step along `grads`. Pass ascent gradients negated.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut i = 0;
        net.zip_params_mut(grads, |p, g| {
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            *p -= lr * mh / (vh.sqrt() + eps);
            i += 1;
        });
    }
}

/// Exponential-moving-average shadow of a network's parameters:
/// `shadow ← (1−τ)·shadow + τ·source`.
#[derive(Debug, Clone)]
pub struct EmaTracker {
    pub shadow: Mlp,
    pub tau: f64,
}

impl EmaTracker {
    pub fn new(source: &Mlp, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(DacError::validation(format!(
                "smoothing coefficient must lie in (0,1), got {tau}"
            )));
        }
        Ok(EmaTracker {
            shadow: source.clone(),
            tau,
        })
    }

    pub fn update(&mut self, source: &Mlp) -> Result<()> {
        if source.sizes != self.shadow.sizes {
            return Err(DacError::validation("EMA source and shadow shapes differ"));
        }
        let tau = self.tau;
        let src = source.flatten_params();
        let mut i = 0;
        let dummy = MlpGrads::zeros_like(&self.shadow);
        self.shadow.zip_params_mut(&dummy, |p, _| {
            *p = (1.0 - tau) * *p + tau * src[i];
            i += 1;
        });
        Ok(())
    }
}
