//! Gated recurrent unit, batched over rows, with truncated
//! backpropagation through time.
//!
//! Recurrence (update gate z, reset gate r, candidate hc):
//!   z  = σ(x·Wz + h·Uz + bz)
//!   r  = σ(x·Wr + h·Ur + br)
//!   hc = tanh(x·Wh + (r ⊙ h)·Uh + bh)
//!   h' = (1 − z) ⊙ h + z ⊙ hc
//!
//! With all-zero parameters z = ½ and hc = 0, so h' = ½·h.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::sigmoid;
use crate::mat::Mat;
use crate::params::{ParamVisitor, Parameterized};

#[derive(Debug, Clone)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    // gate blocks: [z, r, h] stacked in one matrix each for input and hidden
    wx: Mat, // input  -> 3*hidden
    wh: Mat, // hidden -> 3*hidden
    b: Vec<f64>,
    gwx: Mat,
    gwh: Mat,
    gb: Vec<f64>,
}

/// Everything the backward pass needs for one step.
#[derive(Debug, Clone)]
pub struct GruStepCache {
    x: Mat,
    h_prev: Mat,
    z: Mat,
    r: Mat,
    hc: Mat,
    rh: Mat,
}

impl GruCell {
    pub fn new(input_size: usize, hidden_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wx = Mat::zeros(input_size, 3 * hidden_size);
        let mut wh = Mat::zeros(hidden_size, 3 * hidden_size);
        let lim_x = (6.0 / (input_size + hidden_size) as f64).sqrt();
        let lim_h = (6.0 / (2 * hidden_size) as f64).sqrt();
        use rand::Rng;
        wx.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-lim_x..lim_x));
        wh.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-lim_h..lim_h));
        Self {
            input_size,
            hidden_size,
            gwx: Mat::zeros(input_size, 3 * hidden_size),
            gwh: Mat::zeros(hidden_size, 3 * hidden_size),
            gb: vec![0.0; 3 * hidden_size],
            wx,
            wh,
            b: vec![0.0; 3 * hidden_size],
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let mut cell = Self::new(input_size, hidden_size, 0);
        cell.wx.fill(0.0);
        cell.wh.fill(0.0);
        cell
    }

    pub fn initial_state(&self, batch: usize) -> Mat {
        Mat::zeros(batch, self.hidden_size)
    }

    pub fn step(&self, x: &Mat, h_prev: &Mat) -> (Mat, GruStepCache) {
        let batch = x.rows();
        assert_eq!(x.cols(), self.input_size);
        assert_eq!(h_prev.rows(), batch);
        assert_eq!(h_prev.cols(), self.hidden_size);
        let hs = self.hidden_size;

        let mut gates_x = x.matmul(&self.wx);
        gates_x.add_row_broadcast(&self.b);
        let gates_h = h_prev.matmul(&self.wh);

        let mut z = Mat::zeros(batch, hs);
        let mut r = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                z.set(i, j, sigmoid(gates_x.get(i, j) + gates_h.get(i, j)));
                r.set(i, j, sigmoid(gates_x.get(i, j + hs) + gates_h.get(i, j + hs)));
            }
        }
        // candidate uses the reset-gated hidden state through Uh
        let mut rh = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                rh.set(i, j, r.get(i, j) * h_prev.get(i, j));
            }
        }
        // recompute only the h-block of the hidden contribution with rh
        let rh_h = rh.matmul(&hblock(&self.wh, hs));
        let mut hc = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                hc.set(i, j, (gates_x.get(i, j + 2 * hs) + rh_h.get(i, j)).tanh());
            }
        }
        let mut h = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                let zi = z.get(i, j);
                h.set(i, j, (1.0 - zi) * h_prev.get(i, j) + zi * hc.get(i, j));
            }
        }
        (
            h,
            GruStepCache {
                x: x.clone(),
                h_prev: h_prev.clone(),
                z,
                r,
                hc,
                rh,
            },
        )
    }

    /// One BPTT step: given d_h (gradient w.r.t. this step's output),
    /// accumulates parameter gradients and returns (d_x, d_h_prev).
    pub fn backward_step(&mut self, cache: &GruStepCache, d_h: &Mat) -> (Mat, Mat) {
        let hs = self.hidden_size;
        let batch = d_h.rows();

        let mut d_z = Mat::zeros(batch, hs);
        let mut d_hc = Mat::zeros(batch, hs);
        let mut d_hprev = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                let dh = d_h.get(i, j);
                let z = cache.z.get(i, j);
                let hc = cache.hc.get(i, j);
                let hp = cache.h_prev.get(i, j);
                d_z.set(i, j, dh * (hc - hp));
                d_hc.set(i, j, dh * z);
                d_hprev.set(i, j, dh * (1.0 - z));
            }
        }

        // through tanh
        let mut d_hc_pre = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                let hc = cache.hc.get(i, j);
                d_hc_pre.set(i, j, d_hc.get(i, j) * (1.0 - hc * hc));
            }
        }
        // hc preact = x·Wh_x + rh·Uh  (Uh = h-block of wh)
        let uh = hblock(&self.wh, hs);
        let d_rh = d_hc_pre.matmul_nt(&uh);
        // gradients into r and h_prev from rh = r ⊙ h_prev
        let mut d_r = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                d_r.set(i, j, d_rh.get(i, j) * cache.h_prev.get(i, j));
                let add = d_rh.get(i, j) * cache.r.get(i, j);
                d_hprev.set(i, j, d_hprev.get(i, j) + add);
            }
        }
        // through the gate sigmoids
        let mut d_z_pre = Mat::zeros(batch, hs);
        let mut d_r_pre = Mat::zeros(batch, hs);
        for i in 0..batch {
            for j in 0..hs {
                let z = cache.z.get(i, j);
                let r = cache.r.get(i, j);
                d_z_pre.set(i, j, d_z.get(i, j) * z * (1.0 - z));
                d_r_pre.set(i, j, d_r.get(i, j) * r * (1.0 - r));
            }
        }

        // assemble the stacked 3h gate-preact gradient for the x path
        let mut d_gates_x = Mat::zeros(batch, 3 * hs);
        for i in 0..batch {
            for j in 0..hs {
                d_gates_x.set(i, j, d_z_pre.get(i, j));
                d_gates_x.set(i, j + hs, d_r_pre.get(i, j));
                d_gates_x.set(i, j + 2 * hs, d_hc_pre.get(i, j));
            }
        }
        cache.x.t_matmul_acc(&d_gates_x, &mut self.gwx);
        let gb = d_gates_x.col_sums();
        crate::mat::axpy(&mut self.gb, 1.0, &gb);
        let d_x = d_gates_x.matmul_nt(&self.wx);

        // h path: z and r blocks take h_prev, the h block takes rh
        let mut d_gates_h = Mat::zeros(batch, 3 * hs);
        for i in 0..batch {
            for j in 0..hs {
                d_gates_h.set(i, j, d_z_pre.get(i, j));
                d_gates_h.set(i, j + hs, d_r_pre.get(i, j));
                d_gates_h.set(i, j + 2 * hs, d_hc_pre.get(i, j));
            }
        }
        // weight grads: first 2 blocks against h_prev, last against rh
        let mut d_zr = Mat::zeros(batch, 2 * hs);
        for i in 0..batch {
            for j in 0..2 * hs {
                d_zr.set(i, j, d_gates_h.get(i, j));
            }
        }
        // accumulate into the zr columns of gwh
        {
            let mut gw_zr = Mat::zeros(self.hidden_size, 2 * hs);
            cache.h_prev.t_matmul_acc(&d_zr, &mut gw_zr);
            for i in 0..self.hidden_size {
                for j in 0..2 * hs {
                    let cur = self.gwh.get(i, j);
                    self.gwh.set(i, j, cur + gw_zr.get(i, j));
                }
            }
        }
        {
            let mut gw_h = Mat::zeros(self.hidden_size, hs);
            cache.rh.t_matmul_acc(&d_hc_pre, &mut gw_h);
            for i in 0..self.hidden_size {
                for j in 0..hs {
                    let cur = self.gwh.get(i, j + 2 * hs);
                    self.gwh.set(i, j + 2 * hs, cur + gw_h.get(i, j));
                }
            }
        }
        // input gradients through the hidden weights
        let zr_w = zrblock(&self.wh, hs);
        let d_hprev_zr = d_zr.matmul_nt(&zr_w);
        for i in 0..batch {
            for j in 0..hs {
                let cur = d_hprev.get(i, j);
                d_hprev.set(i, j, cur + d_hprev_zr.get(i, j));
            }
        }
        (d_x, d_hprev)
    }

    pub fn visit(&mut self, prefix: &str, v: &mut ParamVisitor) {
        let (r, c) = (self.wx.rows(), self.wx.cols());
        v.tensor(&format!("{prefix}.wx"), &[r, c], self.wx.data_mut(), self.gwx.data_mut());
        let (r, c) = (self.wh.rows(), self.wh.cols());
        v.tensor(&format!("{prefix}.wh"), &[r, c], self.wh.data_mut(), self.gwh.data_mut());
        let n = self.b.len();
        v.tensor(&format!("{prefix}.b"), &[n], &mut self.b, &mut self.gb);
    }
}

/// h-block (last third of the stacked gate columns).
fn hblock(w: &Mat, hs: usize) -> Mat {
    let mut out = Mat::zeros(w.rows(), hs);
    for i in 0..w.rows() {
        for j in 0..hs {
            out.set(i, j, w.get(i, j + 2 * hs));
        }
    }
    out
}

/// z+r blocks (first two thirds).
fn zrblock(w: &Mat, hs: usize) -> Mat {
    let mut out = Mat::zeros(w.rows(), 2 * hs);
    for i in 0..w.rows() {
        for j in 0..2 * hs {
            out.set(i, j, w.get(i, j));
        }
    }
    out
}

impl Parameterized for GruCell {
    fn for_each_param(&mut self, visitor: &mut ParamVisitor) {
        self.visit("gru", visitor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_init_halves_hidden_state() {
        let cell = GruCell::zeros(4, 6);
        let x = Mat::from_vec(2, 4, vec![1.0, -2.0, 0.5, 3.0, 0.1, 0.2, 0.3, 0.4]);
        let mut h = Mat::from_vec(2, 6, (0..12).map(|i| i as f64 * 0.25).collect());
        for step in 1..=4 {
            let (h_next, _) = cell.step(&x, &h);
            for i in 0..2 {
                for j in 0..6 {
                    let expect = (i * 6 + j) as f64 * 0.25 * 0.5f64.powi(step);
                    assert!((h_next.get(i, j) - expect).abs() < 1e-12);
                }
            }
            h = h_next;
        }
    }

    #[test]
    fn hidden_state_is_bounded_over_long_rollout() {
        let cell = GruCell::new(3, 8, 99);
        let mut h = cell.initial_state(1);
        let x = Mat::from_vec(1, 3, vec![0.9, -0.7, 0.4]);
        for _ in 0..10_000 {
            let (next, _) = cell.step(&x, &h);
            h = next;
        }
        // tanh candidate bounds the reachable set
        for &v in h.data() {
            assert!(v.abs() <= 1.0 + 1e-9);
            assert!(v.is_finite());
        }
    }
}
