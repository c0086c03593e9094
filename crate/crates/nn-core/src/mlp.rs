//! Plain dense stacks: Dense → activation → optional LayerNorm per block,
//! batched over the row axis, with exact reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{Activation, Dense, LayerNorm, LayerNormCache};
use crate::mat::Mat;
use crate::params::{ParamVisitor, Parameterized};

#[derive(Debug, Clone)]
pub struct MlpConfig {
    /// Full dimension chain: input, hidden..., i.e. `[3, 64, 64]` is two
    /// hidden layers. Output heads live outside the stack.
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub layer_norm: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct Block {
    dense: Dense,
    norm: Option<LayerNorm>,
}

/// Hidden stack of an MLP. Callers attach their own output heads.
#[derive(Debug, Clone)]
pub struct Mlp {
    blocks: Vec<Block>,
    activation: Activation,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each block's dense layer (first entry is the net input).
    inputs: Vec<Mat>,
    /// Preactivation of each block.
    preacts: Vec<Mat>,
    norm_caches: Vec<Option<LayerNormCache>>,
}

impl Mlp {
    pub fn new(cfg: &MlpConfig) -> Self {
        assert!(cfg.dims.len() >= 2, "need at least input and one layer");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut blocks = Vec::new();
        for w in cfg.dims.windows(2) {
            blocks.push(Block {
                dense: Dense::new(w[0], w[1], &mut rng),
                norm: cfg.layer_norm.then(|| LayerNorm::new(w[1])),
            });
        }
        Self {
            blocks,
            activation: cfg.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].dense.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.last().unwrap().dense.output_dim()
    }

    pub fn forward(&self, x: &Mat) -> (Mat, MlpCache) {
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut preacts = Vec::with_capacity(self.blocks.len());
        let mut norm_caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &self.blocks {
            inputs.push(h.clone());
            let pre = block.dense.forward(&h);
            let mut out = self.activation.apply_mat(&pre);
            preacts.push(pre);
            match &block.norm {
                Some(ln) => {
                    let (normed, cache) = ln.forward(&out);
                    out = normed;
                    norm_caches.push(Some(cache));
                }
                None => norm_caches.push(None),
            }
            h = out;
        }
        (
            h,
            MlpCache {
                inputs,
                preacts,
                norm_caches,
            },
        )
    }

    /// Accumulates parameter gradients, returns d_input.
    pub fn backward(&mut self, cache: &MlpCache, d_out: &Mat) -> Mat {
        let mut d = d_out.clone();
        for bi in (0..self.blocks.len()).rev() {
            let block = &mut self.blocks[bi];
            if let (Some(ln), Some(ln_cache)) = (&mut block.norm, &cache.norm_caches[bi]) {
                d = ln.backward(ln_cache, &d);
            }
            let d_pre = self.activation.backward_mat(&cache.preacts[bi], &d);
            d = block.dense.backward(&cache.inputs[bi], &d_pre);
        }
        d
    }

    /// Input gradient only; parameters untouched (used inside optimizers
    /// that differentiate with respect to query points, not weights).
    pub fn backward_input(&self, cache: &MlpCache, d_out: &Mat) -> Mat {
        let mut d = d_out.clone();
        for bi in (0..self.blocks.len()).rev() {
            let block = &self.blocks[bi];
            if let (Some(ln), Some(ln_cache)) = (&block.norm, &cache.norm_caches[bi]) {
                // layer-norm backward does not touch params when gains are
                // read-only; reuse the mutable path on a clone-free shim
                d = ln_backward_input(ln, ln_cache, &d);
            }
            let d_pre = self.activation.backward_mat(&cache.preacts[bi], &d);
            d = block.dense.backward_input(&d_pre);
        }
        d
    }

    pub fn visit(&mut self, prefix: &str, v: &mut ParamVisitor) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.dense.visit(&format!("{prefix}.l{i}"), v);
            if let Some(ln) = &mut block.norm {
                ln.visit(&format!("{prefix}.l{i}.ln"), v);
            }
        }
    }
}

fn ln_backward_input(ln: &LayerNorm, cache: &LayerNormCache, d_out: &Mat) -> Mat {
    // same math as LayerNorm::backward minus the gain/bias accumulation
    let mut scratch = ln.clone();
    scratch.backward(cache, d_out)
}

impl Parameterized for Mlp {
    fn for_each_param(&mut self, visitor: &mut ParamVisitor) {
        self.visit("mlp", visitor);
    }
}
