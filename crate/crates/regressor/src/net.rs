//! The GRU regressor and its trajectory loss.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nn_core::{l1_sign, Dense, GruCell, GruStepCache, Mat, ParamStore, ParamVisitor, Parameterized};

use crate::{RegressorError, RegressorResult};

#[derive(Debug, Clone)]
pub struct RegressorConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            input_dim: 52,
            hidden: 256,
            layers: 2,
            latent_dim: 25,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressorNet {
    pub cfg: RegressorConfig,
    cells: Vec<GruCell>,
    head: Dense,
}

/// Per-step caches for one rollout window (outer index: step).
pub struct RolloutCache {
    pub outputs: Vec<Mat>,
    step_caches: Vec<Vec<GruStepCache>>,
    heads_input: Vec<Mat>,
}

impl RegressorNet {
    pub fn new(cfg: RegressorConfig) -> Self {
        let mut cells = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let input = if l == 0 { cfg.input_dim } else { cfg.hidden };
            cells.push(GruCell::new(input, cfg.hidden, cfg.seed ^ (l as u64) << 8));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4ead);
        Self {
            head: Dense::new(cfg.hidden, cfg.latent_dim, &mut rng),
            cells,
            cfg,
        }
    }

    pub fn initial_state(&self, batch: usize) -> Vec<Mat> {
        self.cells.iter().map(|c| c.initial_state(batch)).collect()
    }

    /// Stateful rollout over a window of inputs (each `Mat` is batch x 52).
    /// Returns per-step latent predictions and the cache for BPTT.
    pub fn rollout(&self, inputs: &[Mat], state: &mut Vec<Mat>) -> RolloutCache {
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut step_caches = Vec::with_capacity(inputs.len());
        let mut heads_input = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut layer_in = x.clone();
            let mut caches = Vec::with_capacity(self.cells.len());
            for (li, cell) in self.cells.iter().enumerate() {
                let (h, cache) = cell.step(&layer_in, &state[li]);
                caches.push(cache);
                state[li] = h.clone();
                layer_in = h;
            }
            heads_input.push(layer_in.clone());
            outputs.push(self.head.forward(&layer_in));
            step_caches.push(caches);
        }
        RolloutCache {
            outputs,
            step_caches,
            heads_input,
        }
    }

    /// Stateless convenience rollout for inference.
    pub fn predict_sequence(&self, inputs: &[Mat]) -> Vec<Mat> {
        let batch = inputs.first().map_or(0, |m| m.rows());
        let mut state = self.initial_state(batch);
        self.rollout(inputs, &mut state).outputs
    }

    /// Backpropagation through the window. `d_outputs` aligns with the
    /// cache's steps; gradients accumulate into the net. The incoming
    /// hidden-state gradient at the window boundary is zero (truncated
    /// BPTT).
    pub fn backward_window(&mut self, cache: &RolloutCache, d_outputs: &[Mat]) {
        let batch = cache.outputs[0].rows();
        let mut d_state: Vec<Mat> = (0..self.cells.len())
            .map(|_| Mat::zeros(batch, self.cfg.hidden))
            .collect();
        for t in (0..cache.outputs.len()).rev() {
            let mut d_h_top = self.head.backward(&cache.heads_input[t], &d_outputs[t]);
            d_h_top.add_assign(&d_state[self.cells.len() - 1]);
            // walk layers downward
            let mut d_layer_out = d_h_top;
            for li in (0..self.cells.len()).rev() {
                let (d_x, d_h_prev) =
                    self.cells[li].backward_step(&cache.step_caches[t][li], &d_layer_out);
                d_state[li] = d_h_prev;
                if li > 0 {
                    d_layer_out = d_x;
                    d_layer_out.add_assign(&d_state[li - 1]);
                    // the lower layer's output feeds this layer's input;
                    // its own recurrent gradient joins on the next step
                    d_state[li - 1] = Mat::zeros(batch, self.cfg.hidden);
                }
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, extra_meta: &[(&str, String)]) -> RegressorResult<()> {
        let mut clone = self.clone();
        let mut store = ParamStore::from_net(&mut clone);
        store.meta.insert("kind".into(), "regressor".into());
        store.meta.insert("input_dim".into(), self.cfg.input_dim.to_string());
        store.meta.insert("hidden".into(), self.cfg.hidden.to_string());
        store.meta.insert("layers".into(), self.cfg.layers.to_string());
        store.meta.insert("latent_dim".into(), self.cfg.latent_dim.to_string());
        store.meta.insert("seed".into(), self.cfg.seed.to_string());
        for (k, v) in extra_meta {
            store.meta.insert((*k).into(), v.clone());
        }
        store.save(path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> RegressorResult<(RegressorNet, ParamStore)> {
        let store = ParamStore::load(path)?;
        let get = |k: &str| store.meta.get(k).and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
        let cfg = RegressorConfig {
            input_dim: get("input_dim"),
            hidden: get("hidden"),
            layers: get("layers"),
            latent_dim: get("latent_dim"),
            seed: store.meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0),
        };
        let mut net = RegressorNet::new(cfg);
        store.load_into(&mut net)?;
        Ok((net, store))
    }
}

impl Parameterized for RegressorNet {
    fn for_each_param(&mut self, v: &mut ParamVisitor) {
        for (li, cell) in self.cells.iter_mut().enumerate() {
            cell.visit(&format!("gru{li}"), v);
        }
        self.head.visit("head", v);
    }
}

/// Trajectory loss: L1 over latent positions plus their finite-difference
/// velocities and accelerations. Returns the loss and per-step cotangents.
pub fn regressor_loss(
    pred: &[Mat],
    target: &[Mat],
    rho_vel: f64,
    rho_acc: f64,
    dt: f64,
) -> RegressorResult<(f64, Vec<Mat>)> {
    if pred.len() != target.len() {
        return Err(RegressorError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if pred.len() < 3 {
        return Err(RegressorError::SequenceTooShort { got: pred.len() });
    }
    let steps = pred.len();
    let (rows, cols) = (pred[0].rows(), pred[0].cols());
    let norm = 1.0 / rows as f64;
    let mut loss = 0.0;
    let mut grads: Vec<Mat> = (0..steps).map(|_| Mat::zeros(rows, cols)).collect();

    // positions
    for t in 0..steps {
        for i in 0..rows {
            for j in 0..cols {
                let diff = pred[t].get(i, j) - target[t].get(i, j);
                loss += diff.abs() * norm;
                let cur = grads[t].get(i, j);
                grads[t].set(i, j, cur + l1_sign(diff) * norm);
            }
        }
    }
    // velocities
    let inv_dt = 1.0 / dt;
    for t in 1..steps {
        for i in 0..rows {
            for j in 0..cols {
                let dp = (pred[t].get(i, j) - pred[t - 1].get(i, j)) * inv_dt;
                let dtg = (target[t].get(i, j) - target[t - 1].get(i, j)) * inv_dt;
                let diff = dp - dtg;
                loss += rho_vel * diff.abs() * norm;
                let g = rho_vel * l1_sign(diff) * norm * inv_dt;
                let cur = grads[t].get(i, j);
                grads[t].set(i, j, cur + g);
                let cur = grads[t - 1].get(i, j);
                grads[t - 1].set(i, j, cur - g);
            }
        }
    }
    // accelerations
    let inv_dt2 = inv_dt * inv_dt;
    for t in 2..steps {
        for i in 0..rows {
            for j in 0..cols {
                let ap = (pred[t].get(i, j) - 2.0 * pred[t - 1].get(i, j)
                    + pred[t - 2].get(i, j))
                    * inv_dt2;
                let at = (target[t].get(i, j) - 2.0 * target[t - 1].get(i, j)
                    + target[t - 2].get(i, j))
                    * inv_dt2;
                let diff = ap - at;
                loss += rho_acc * diff.abs() * norm;
                let g = rho_acc * l1_sign(diff) * norm * inv_dt2;
                let cur = grads[t].get(i, j);
                grads[t].set(i, j, cur + g);
                let cur = grads[t - 1].get(i, j);
                grads[t - 1].set(i, j, cur - 2.0 * g);
                let cur = grads[t - 2].get(i, j);
                grads[t - 2].set(i, j, cur + g);
            }
        }
    }
    Ok((loss, grads))
}
