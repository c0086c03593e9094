//! Dense layers, pointwise nonlinearities, and layer normalization with
//! exact reverse-mode backward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mat::Mat;
use crate::params::ParamVisitor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Softplus,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed in terms of the preactivation.
    #[inline]
    pub fn derivative_scalar(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(pre),
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(pre);
                s * (1.0 - s)
            }
        }
    }

    pub fn apply_mat(self, pre: &Mat) -> Mat {
        let mut out = pre.clone();
        out.data_mut().iter_mut().for_each(|x| *x = self.apply_scalar(*x));
        out
    }

    /// d_pre = d_out ⊙ act'(pre)
    pub fn backward_mat(self, pre: &Mat, d_out: &Mat) -> Mat {
        let mut d_pre = d_out.clone();
        for (dp, &p) in d_pre.data_mut().iter_mut().zip(pre.data()) {
            *dp *= self.derivative_scalar(p);
        }
        d_pre
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

/// Numerically stable ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// L1 subgradient: sign with sgn(0) = 0 (f64::signum maps 0 to 1).
#[inline]
pub fn l1_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fully-connected layer: y = x·W + b with W stored input-major (in×out).
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Mat,
    pub b: Vec<f64>,
    pub gw: Mat,
    pub gb: Vec<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        // Xavier-uniform keeps the small nets here well-scaled for both
        // rectifier and softplus stacks.
        let limit = (6.0 / (input + output) as f64).sqrt();
        let mut w = Mat::zeros(input, output);
        w.data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-limit..limit));
        Self {
            w,
            b: vec![0.0; output],
            gw: Mat::zeros(input, output),
            gb: vec![0.0; output],
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Mat::zeros(input, output),
            b: vec![0.0; output],
            gw: Mat::zeros(input, output),
            gb: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.w);
        y.add_row_broadcast(&self.b);
        y
    }

    /// Accumulates parameter gradients and returns d_input.
    pub fn backward(&mut self, x: &Mat, d_out: &Mat) -> Mat {
        x.t_matmul_acc(d_out, &mut self.gw);
        let gb = d_out.col_sums();
        crate::mat::axpy(&mut self.gb, 1.0, &gb);
        d_out.matmul_nt(&self.w)
    }

    /// Input gradient only (inference-time paths that do not train).
    pub fn backward_input(&self, d_out: &Mat) -> Mat {
        d_out.matmul_nt(&self.w)
    }

    pub fn visit(&mut self, prefix: &str, v: &mut ParamVisitor) {
        let (r, c) = (self.w.rows(), self.w.cols());
        v.tensor(
            &format!("{prefix}.w"),
            &[r, c],
            self.w.data_mut(),
            self.gw.data_mut(),
        );
        let n = self.b.len();
        v.tensor(&format!("{prefix}.b"), &[n], &mut self.b, &mut self.gb);
    }
}

/// Layer normalization over the feature axis with learned gain/bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub ggain: Vec<f64>,
    pub gbias: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Mat,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
            ggain: vec![0.0; dim],
            gbias: vec![0.0; dim],
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, LayerNormCache) {
        let (r, c) = (x.rows(), x.cols());
        let mut normalized = Mat::zeros(r, c);
        let mut out = Mat::zeros(r, c);
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[i] = is;
            let nrow = normalized.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                nrow[j] = (v - mean) * is;
            }
            let orow = out.row_mut(i);
            for j in 0..c {
                orow[j] = normalized.get(i, j) * self.gain[j] + self.bias[j];
            }
        }
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, d_out: &Mat) -> Mat {
        let (r, c) = (d_out.rows(), d_out.cols());
        let mut d_x = Mat::zeros(r, c);
        for i in 0..r {
            let dy = d_out.row(i);
            let xhat = cache.normalized.row(i);
            for j in 0..c {
                self.ggain[j] += dy[j] * xhat[j];
                self.gbias[j] += dy[j];
            }
            // dxhat = dy * gain; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
            let mut mean_dxhat = 0.0;
            let mut mean_dxhat_xhat = 0.0;
            for j in 0..c {
                let dxh = dy[j] * self.gain[j];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xhat[j];
            }
            mean_dxhat /= c as f64;
            mean_dxhat_xhat /= c as f64;
            let is = cache.inv_std[i];
            let dxrow = d_x.row_mut(i);
            for j in 0..c {
                let dxh = dy[j] * self.gain[j];
                dxrow[j] = is * (dxh - mean_dxhat - xhat[j] * mean_dxhat_xhat);
            }
        }
        d_x
    }

    pub fn visit(&mut self, prefix: &str, v: &mut ParamVisitor) {
        let n = self.gain.len();
        v.tensor(&format!("{prefix}.gain"), &[n], &mut self.gain, &mut self.ggain);
        v.tensor(&format!("{prefix}.bias"), &[n], &mut self.bias, &mut self.gbias);
    }
}

/// Row-wise softmax with its exact VJP; used by probability-vector heads.
pub fn softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// d_logits given softmax output s and upstream d_s:
/// d_logit = s ⊙ (d_s − <d_s, s>)
pub fn softmax_backward(s: &Mat, d_s: &Mat) -> Mat {
    let mut d_logits = Mat::zeros(s.rows(), s.cols());
    for i in 0..s.rows() {
        let srow = s.row(i);
        let dsrow = d_s.row(i);
        let inner: f64 = srow.iter().zip(dsrow).map(|(a, b)| a * b).sum();
        let drow = d_logits.row_mut(i);
        for j in 0..srow.len() {
            drow[j] = srow[j] * (dsrow[j] - inner);
        }
    }
    d_logits
}
