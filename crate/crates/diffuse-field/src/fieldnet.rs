//! Differentiable network form of the diffused fields: one trunk over 3D
//! points with three heads — skinning weights through a softmax (a
//! probability vector by construction), and linear shape/pose bases so the
//! β/θ linearity of the blendshapes is preserved exactly.

use std::path::Path;

use glam::DVec3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use body_model::SHAPE_DIM;
use nn_core::{
    softmax_backward, softmax_rows, zero_grads, Activation, Adam, AdamConfig, Dense, Mat, Mlp,
    MlpCache, MlpConfig, ParamStore, ParamVisitor, Parameterized,
};

use crate::closest::{ClosestPointIndex, SurfaceAttributes};
use crate::diffusion::{diffuse_attributes, DiffusionConfig};
use crate::shell::ShellSampler;
use crate::{FieldError, FieldResult};

/// Common interface of the oracle and network field forms.
pub trait DiffusedBody {
    fn joint_count(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn sample_point(&self, p: DVec3) -> SurfaceAttributes;

    fn sample_points(&self, ps: &[DVec3]) -> Vec<SurfaceAttributes> {
        ps.iter().map(|&p| self.sample_point(p)).collect()
    }
}

impl DiffusedBody for crate::diffusion::OracleField {
    fn joint_count(&self) -> usize {
        self.index.joint_count()
    }

    fn feature_dim(&self) -> usize {
        self.index.feature_dim()
    }

    fn sample_point(&self, p: DVec3) -> SurfaceAttributes {
        self.sample(p)
    }
}

#[derive(Debug, Clone)]
pub struct FieldNetConfig {
    pub hidden: Vec<usize>,
    pub joint_count: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// Input normalization (body bounding box); stored with the net.
    pub input_center: DVec3,
    pub input_scale: f64,
    /// Optional fixed geometric feature lift: exp(−d/λ) per influence
    /// bone at each decay scale, appended to the normalized point.
    /// Massively sharpens the skinning-weight head (the painted weights
    /// are functions of exactly these distances) while the query stays a
    /// smooth map of the point.
    pub bones: Vec<(DVec3, DVec3)>,
    pub bone_lambdas: Vec<f64>,
    /// Per-bone Gaussian falloff of the painting kernel; adds the feature
    /// exp(−(d/σ)²) per bone, the sharpest prior the weights head gets.
    pub bone_sigmas: Vec<f64>,
}

impl FieldNetConfig {
    pub fn for_body(
        body: &body_model::BodyModel,
        hidden: Vec<usize>,
        seed: u64,
    ) -> Self {
        let (lo, hi) = body.template.bounds();
        let center = (lo + hi) * 0.5;
        let scale = 2.0 / (hi - lo).length();
        Self {
            hidden,
            joint_count: body.joint_count(),
            feature_dim: body.pose_feature_dim(),
            seed,
            input_center: center,
            input_scale: scale,
            bones: body.influence_bones(),
            bone_lambdas: vec![0.05, 0.12],
            bone_sigmas: body.bone_sigmas.clone(),
        }
    }

    pub fn input_dim(&self) -> usize {
        let sigma_features = if self.bone_sigmas.is_empty() { 0 } else { self.bones.len() };
        3 + self.bones.len() * self.bone_lambdas.len() + sigma_features
    }
}

#[derive(Debug, Clone)]
pub struct FieldNet {
    pub cfg: FieldNetConfig,
    trunk: Mlp,
    weights_head: Dense,
    shape_head: Dense,
    pose_head: Dense,
}

/// Heads contracted against fixed (β, pose features): per-frame constants
/// that turn the per-point basis evaluation into two 3-wide projections.
#[derive(Debug, Clone)]
pub struct FoldedHeads {
    shape_w: Mat,
    shape_b: [f64; 3],
    pose_w: Mat,
    pose_b: [f64; 3],
}

/// Batched folded evaluation with everything the VJP needs.
pub struct FieldEval {
    /// Softmax weights, rows are points.
    pub weights: Mat,
    /// Diffused shape offset per point (meters).
    pub shape_offset: Mat,
    /// Diffused pose offset per point (meters).
    pub pose_offset: Mat,
    trunk_cache: MlpCache,
    input_cache: Vec<(f64, DVec3)>,
    points: usize,
}

impl FieldNet {
    pub fn new(cfg: FieldNetConfig) -> Self {
        let mut dims = vec![cfg.input_dim()];
        dims.extend_from_slice(&cfg.hidden);
        let trunk = Mlp::new(&MlpConfig {
            dims,
            activation: Activation::Softplus,
            layer_norm: false,
            seed: cfg.seed,
        });
        let h = *cfg.hidden.last().expect("at least one hidden layer");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xf1e1d);
        Self {
            weights_head: Dense::new(h, cfg.joint_count, &mut rng),
            shape_head: Dense::new(h, 3 * SHAPE_DIM, &mut rng),
            pose_head: Dense::new(h, 3 * cfg.feature_dim, &mut rng),
            trunk,
            cfg,
        }
    }

    /// Normalized point plus the bone-distance features, with the
    /// per-point direction cache the input VJP needs.
    fn build_inputs(&self, ps: &[DVec3]) -> (Mat, Vec<(f64, DVec3)>) {
        let nb = self.cfg.bones.len();
        let ns = self.cfg.bone_lambdas.len();
        let with_sigma = !self.cfg.bone_sigmas.is_empty();
        let mut x = Mat::zeros(ps.len(), self.cfg.input_dim());
        let mut cache = Vec::with_capacity(ps.len() * nb);
        for (i, p) in ps.iter().enumerate() {
            let q = (*p - self.cfg.input_center) * self.cfg.input_scale;
            let row = x.row_mut(i);
            row[0] = q.x;
            row[1] = q.y;
            row[2] = q.z;
            for (j, &(a, b)) in self.cfg.bones.iter().enumerate() {
                let (d, dir) = body_model::capsule_distance_with_gradient(*p, a, b, 0.0);
                let d = d.max(0.0);
                cache.push((d, dir));
                for (si, &lambda) in self.cfg.bone_lambdas.iter().enumerate() {
                    row[3 + si * nb + j] = (-d / lambda).exp();
                }
                if with_sigma {
                    let sig = self.cfg.bone_sigmas[j];
                    row[3 + ns * nb + j] = (-(d / sig) * (d / sig)).exp();
                }
            }
        }
        (x, cache)
    }

    /// Chains a cotangent on the lifted inputs back to the 3D points.
    fn inputs_vjp(&self, ps_len: usize, cache: &[(f64, DVec3)], dx: &Mat) -> Vec<DVec3> {
        let nb = self.cfg.bones.len();
        let ns = self.cfg.bone_lambdas.len();
        let with_sigma = !self.cfg.bone_sigmas.is_empty();
        (0..ps_len)
            .map(|i| {
                let row = dx.row(i);
                let mut g = DVec3::new(row[0], row[1], row[2]) * self.cfg.input_scale;
                for j in 0..nb {
                    let (d, dir) = cache[i * nb + j];
                    for (si, &lambda) in self.cfg.bone_lambdas.iter().enumerate() {
                        // d exp(−d/λ)/dp = −(f/λ)·∇d
                        let f = (-d / lambda).exp();
                        g += dir * (-f / lambda) * row[3 + si * nb + j];
                    }
                    if with_sigma {
                        let sig = self.cfg.bone_sigmas[j];
                        let f = (-(d / sig) * (d / sig)).exp();
                        // d exp(−(d/σ)²)/dp = −2d/σ²·f·∇d
                        g += dir * (-2.0 * d / (sig * sig) * f) * row[3 + ns * nb + j];
                    }
                }
                g
            })
            .collect()
    }

    /// Full basis evaluation (training and oracle-comparison path).
    /// Returns (weights N×K, shape N×30, pose N×3F).
    pub fn query_basis(&self, ps: &[DVec3]) -> (Mat, Mat, Mat) {
        let (x, _) = self.build_inputs(ps);
        let (h, _) = self.trunk.forward(&x);
        let weights = softmax_rows(&self.weights_head.forward(&h));
        let shape = self.shape_head.forward(&h);
        let pose = self.pose_head.forward(&h);
        (weights, shape, pose)
    }

    /// Contracts the basis heads against fixed shape/pose parameters.
    pub fn fold(&self, beta: &[f64; SHAPE_DIM], features: &[f64]) -> FoldedHeads {
        assert_eq!(features.len(), self.cfg.feature_dim);
        let h = self.shape_head.input_dim();
        let mut shape_w = Mat::zeros(h, 3);
        let mut shape_b = [0.0f64; 3];
        for c in 0..3 {
            for m in 0..SHAPE_DIM {
                let col = c * SHAPE_DIM + m;
                shape_b[c] += self.shape_head.b[col] * beta[m];
                for hi in 0..h {
                    let v = shape_w.get(hi, c) + self.shape_head.w.get(hi, col) * beta[m];
                    shape_w.set(hi, c, v);
                }
            }
        }
        let f = self.cfg.feature_dim;
        let mut pose_w = Mat::zeros(h, 3);
        let mut pose_b = [0.0f64; 3];
        for c in 0..3 {
            for (fi, &feat) in features.iter().enumerate() {
                if feat == 0.0 {
                    continue;
                }
                let col = c * f + fi;
                pose_b[c] += self.pose_head.b[col] * feat;
                for hi in 0..h {
                    let v = pose_w.get(hi, c) + self.pose_head.w.get(hi, col) * feat;
                    pose_w.set(hi, c, v);
                }
            }
        }
        FoldedHeads {
            shape_w,
            shape_b,
            pose_w,
            pose_b,
        }
    }

    /// Folded evaluation: weights, shape offset and pose offset per point.
    pub fn query_folded(&self, ps: &[DVec3], folded: &FoldedHeads) -> FieldEval {
        let (x, input_cache) = self.build_inputs(ps);
        let (h, trunk_cache) = self.trunk.forward(&x);
        let weights = softmax_rows(&self.weights_head.forward(&h));
        let mut shape_offset = h.matmul(&folded.shape_w);
        shape_offset.add_row_broadcast(&folded.shape_b);
        let mut pose_offset = h.matmul(&folded.pose_w);
        pose_offset.add_row_broadcast(&folded.pose_b);
        FieldEval {
            weights,
            shape_offset,
            pose_offset,
            trunk_cache,
            input_cache,
            points: ps.len(),
        }
    }

    /// Pulls cotangents on (weights, shape offset, pose offset) back to the
    /// query points. Parameters are left untouched.
    pub fn query_folded_vjp(
        &self,
        eval: &FieldEval,
        folded: &FoldedHeads,
        d_weights: &Mat,
        d_shape: &Mat,
        d_pose: &Mat,
    ) -> Vec<DVec3> {
        let d_logits = softmax_backward(&eval.weights, d_weights);
        // offset heads are plain linear maps of h
        let mut dh = d_logits.matmul_nt(&self.weights_head.w);
        dh.add_assign(&d_shape.matmul_nt(&folded.shape_w));
        dh.add_assign(&d_pose.matmul_nt(&folded.pose_w));
        let dx = self.trunk.backward_input(&eval.trunk_cache, &dh);
        self.inputs_vjp(eval.points, &eval.input_cache, &dx)
    }

    pub fn save(&self, path: impl AsRef<Path>, extra_meta: &[(&str, String)]) -> FieldResult<()> {
        let mut clone = self.clone();
        let mut store = ParamStore::from_net(&mut clone);
        store.meta.insert("kind".into(), "fieldnet".into());
        store.meta.insert("joint_count".into(), self.cfg.joint_count.to_string());
        store.meta.insert("feature_dim".into(), self.cfg.feature_dim.to_string());
        store.meta.insert(
            "hidden".into(),
            self.cfg
                .hidden
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        store.meta.insert("seed".into(), self.cfg.seed.to_string());
        store.meta.insert(
            "input_center".into(),
            format!(
                "{},{},{}",
                self.cfg.input_center.x, self.cfg.input_center.y, self.cfg.input_center.z
            ),
        );
        store.meta.insert("input_scale".into(), self.cfg.input_scale.to_string());
        store.meta.insert(
            "bone_lambdas".into(),
            self.cfg
                .bone_lambdas
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        let mut bone_data = Vec::with_capacity(self.cfg.bones.len() * 6);
        for &(a, b) in &self.cfg.bones {
            bone_data.extend_from_slice(&[a.x, a.y, a.z, b.x, b.y, b.z]);
        }
        store.entries.push(nn_core::ParamEntry {
            name: "bones".into(),
            shape: vec![self.cfg.bones.len(), 6],
            data: bone_data,
        });
        if !self.cfg.bone_sigmas.is_empty() {
            store.entries.push(nn_core::ParamEntry {
                name: "bone_sigmas".into(),
                shape: vec![self.cfg.bone_sigmas.len()],
                data: self.cfg.bone_sigmas.clone(),
            });
        }
        for (k, v) in extra_meta {
            store.meta.insert((*k).into(), v.clone());
        }
        store.save(path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> FieldResult<(FieldNet, ParamStore)> {
        let path = path.as_ref();
        let store = ParamStore::load(path)?;
        let get = |key: &str| -> FieldResult<&String> {
            store.meta.get(key).ok_or_else(|| FieldError::Corrupt {
                path: path.display().to_string(),
                msg: format!("missing meta {key}"),
            })
        };
        let hidden: Vec<usize> = get("hidden")?
            .split(',')
            .filter_map(|s| s.parse().ok())
            .collect();
        let center: Vec<f64> = get("input_center")?
            .split(',')
            .filter_map(|s| s.parse().ok())
            .collect();
        let bones: Vec<(DVec3, DVec3)> = store
            .entries
            .iter()
            .find(|e| e.name == "bones")
            .map(|e| {
                e.data
                    .chunks_exact(6)
                    .map(|c| (DVec3::new(c[0], c[1], c[2]), DVec3::new(c[3], c[4], c[5])))
                    .collect()
            })
            .unwrap_or_default();
        let cfg = FieldNetConfig {
            hidden,
            joint_count: get("joint_count")?.parse().unwrap_or(0),
            feature_dim: get("feature_dim")?.parse().unwrap_or(0),
            seed: get("seed")?.parse().unwrap_or(0),
            input_center: DVec3::new(center[0], center[1], center[2]),
            input_scale: get("input_scale")?.parse().unwrap_or(1.0),
            bones,
            bone_lambdas: store
                .meta
                .get("bone_lambdas")
                .map(|s| s.split(',').filter_map(|x| x.parse().ok()).collect())
                .unwrap_or_else(|| vec![0.1]),
            bone_sigmas: store
                .entries
                .iter()
                .find(|e| e.name == "bone_sigmas")
                .map(|e| e.data.clone())
                .unwrap_or_default(),
        };
        let mut net = FieldNet::new(cfg);
        store.load_into(&mut net)?;
        Ok((net, store))
    }
}

impl Parameterized for FieldNet {
    fn for_each_param(&mut self, v: &mut ParamVisitor) {
        self.trunk.visit("trunk", v);
        self.weights_head.visit("weights_head", v);
        self.shape_head.visit("shape_head", v);
        self.pose_head.visit("pose_head", v);
    }
}

impl DiffusedBody for FieldNet {
    fn joint_count(&self) -> usize {
        self.cfg.joint_count
    }

    fn feature_dim(&self) -> usize {
        self.cfg.feature_dim
    }

    fn sample_point(&self, p: DVec3) -> SurfaceAttributes {
        self.sample_points(&[p]).pop().unwrap()
    }

    fn sample_points(&self, ps: &[DVec3]) -> Vec<SurfaceAttributes> {
        let (weights, shape, pose) = self.query_basis(ps);
        let _ = self.cfg.feature_dim;
        (0..ps.len())
            .map(|i| {
                let mut shape_basis = vec![DVec3::ZERO; SHAPE_DIM];
                for m in 0..SHAPE_DIM {
                    shape_basis[m] = DVec3::new(
                        shape.get(i, m),
                        shape.get(i, SHAPE_DIM + m),
                        shape.get(i, 2 * SHAPE_DIM + m),
                    );
                }
                SurfaceAttributes {
                    weights: weights.row(i).to_vec(),
                    shape_basis,
                    pose_basis: pose.row(i).to_vec(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FieldTrainConfig {
    pub train_points: usize,
    pub train_mc_samples: usize,
    pub eval_points: usize,
    pub eval_mc_samples: usize,
    pub epochs: usize,
    pub batch: usize,
    /// Normal-offset band around the surface the shell sampler draws from.
    pub offset_lo: f64,
    pub offset_hi: f64,
    pub seed: u64,
}

impl Default for FieldTrainConfig {
    fn default() -> Self {
        Self {
            train_points: 26_000,
            train_mc_samples: 512,
            eval_points: 768,
            eval_mc_samples: 10_000,
            epochs: 340,
            batch: 256,
            offset_lo: -0.05,
            offset_hi: 0.18,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FieldTrainReport {
    pub held_out_weights_l1_mean: f64,
    pub held_out_weights_l1_max: f64,
    pub held_out_shape_mae: f64,
    pub held_out_pose_mae: f64,
    pub final_loss: f64,
    pub epochs: usize,
}

/// Targets in head layout: weights N×K, shape N×30 ([coord*10+m]),
/// pose N×3F ([coord*F+f]).
fn target_mats(attrs: &[SurfaceAttributes], k: usize, f: usize) -> (Mat, Mat, Mat) {
    let n = attrs.len();
    let mut tw = Mat::zeros(n, k);
    let mut ts = Mat::zeros(n, 3 * SHAPE_DIM);
    let mut tp = Mat::zeros(n, 3 * f);
    for (i, a) in attrs.iter().enumerate() {
        tw.row_mut(i).copy_from_slice(&a.weights);
        for m in 0..SHAPE_DIM {
            let v = a.shape_basis[m];
            ts.set(i, m, v.x);
            ts.set(i, SHAPE_DIM + m, v.y);
            ts.set(i, 2 * SHAPE_DIM + m, v.z);
        }
        tp.row_mut(i).copy_from_slice(&a.pose_basis);
    }
    (tw, ts, tp)
}

fn mean_std(m: &Mat) -> (f64, f64) {
    let n = m.data().len().max(1) as f64;
    let mean: f64 = m.data().iter().sum::<f64>() / n;
    let var = m.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(1e-9))
}

fn standardize(m: &mut Mat, mu: f64, sigma: f64) {
    m.data_mut().iter_mut().for_each(|v| *v = (*v - mu) / sigma);
}

/// Rescales a trained head so its output is σ·ŷ + μ in original units.
fn fold_affine(head: &mut Dense, mu: f64, sigma: f64) {
    head.w.data_mut().iter_mut().for_each(|v| *v *= sigma);
    head.b.iter_mut().for_each(|v| *v = *v * sigma + mu);
}

/// Fits the network form to Monte-Carlo diffusion targets on shell samples.
pub fn train_field_net(
    index: &ClosestPointIndex,
    diff_cfg: &DiffusionConfig,
    net_cfg: FieldNetConfig,
    train_cfg: &FieldTrainConfig,
) -> FieldResult<(FieldNet, FieldTrainReport)> {
    let sampler = ShellSampler::new(&index.model.template);
    let points = sampler.sample_shell(
        train_cfg.train_points,
        train_cfg.offset_lo,
        train_cfg.offset_hi,
        train_cfg.seed,
    );
    let mc = DiffusionConfig {
        samples: train_cfg.train_mc_samples,
        ..*diff_cfg
    };
    let targets: Vec<SurfaceAttributes> = points
        .par_iter()
        .map(|&p| diffuse_attributes(index, &mc, p))
        .collect();

    let k = index.joint_count();
    let f = index.feature_dim();
    let (tw, mut ts, mut tp) = target_mats(&targets, k, f);
    // the offset heads train on standardized targets; the scales are folded
    // back into the head parameters afterwards, so the net itself always
    // speaks meters
    let (mu_s, sigma_s) = mean_std(&ts);
    let (mu_p, sigma_p) = mean_std(&tp);
    standardize(&mut ts, mu_s, sigma_s);
    standardize(&mut tp, mu_p, sigma_p);

    let mut net = FieldNet::new(net_cfg);
    let total_steps = train_cfg.epochs * train_cfg.train_points.div_ceil(train_cfg.batch);
    let mut adam = Adam::new(AdamConfig {
        learning_rate: 1e-3,
        schedule: vec![
            (total_steps * 55 / 100, 3e-4),
            (total_steps * 80 / 100, 1e-4),
            (total_steps * 92 / 100, 3e-5),
        ],
        ..AdamConfig::default()
    });

    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed ^ 0x5eed);
    let mut final_loss = 0.0;
    for epoch in 0..train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(train_cfg.batch) {
            let ps: Vec<DVec3> = chunk.iter().map(|&i| points[i]).collect();
            let (x, _) = net.build_inputs(&ps);
            let (h, cache) = net.trunk.forward(&x);
            let logits = net.weights_head.forward(&h);
            let w = softmax_rows(&logits);
            let s = net.shape_head.forward(&h);
            let p = net.pose_head.forward(&h);

            let b = chunk.len() as f64;
            let mut loss = 0.0;
            // cross-entropy on the weights head: d_logits = (softmax − target)
            let mut d_logits = Mat::zeros(w.rows(), w.cols());
            let mut ds = Mat::zeros(s.rows(), s.cols());
            let mut dp = Mat::zeros(p.rows(), p.cols());
            for (bi, &i) in chunk.iter().enumerate() {
                for j in 0..k {
                    let t = tw.get(i, j);
                    if t > 0.0 {
                        loss -= t * w.get(bi, j).max(1e-300).ln() / b;
                    }
                    d_logits.set(bi, j, (w.get(bi, j) - t) / b);
                }
                // per-dimension means keep the wide offset heads from
                // drowning the weights-head cross entropy
                let ws = 2.0 / (3 * SHAPE_DIM) as f64;
                for j in 0..3 * SHAPE_DIM {
                    let diff = s.get(bi, j) - ts.get(i, j);
                    loss += ws * diff * diff / b;
                    ds.set(bi, j, 2.0 * ws * diff / b);
                }
                let wp = 2.0 / (3 * f) as f64;
                for j in 0..3 * f {
                    let diff = p.get(bi, j) - tp.get(i, j);
                    loss += wp * diff * diff / b;
                    dp.set(bi, j, 2.0 * wp * diff / b);
                }
            }
            if !loss.is_finite() {
                return Err(FieldError::Diverged {
                    step: adam.step_count(),
                    what: format!("field-net loss {loss} at epoch {epoch}"),
                });
            }
            epoch_loss += loss;
            batches += 1;

            zero_grads(&mut net);
            let mut dh = net.weights_head.backward(&h, &d_logits);
            dh.add_assign(&net.shape_head.backward(&h, &ds));
            dh.add_assign(&net.pose_head.backward(&h, &dp));
            net.trunk.backward(&cache, &dh);
            adam.step(&mut net);
        }
        final_loss = epoch_loss / batches.max(1) as f64;
    }
    // fold the target standardization into the linear heads: y = σ·ŷ + μ
    fold_affine(&mut net.shape_head, mu_s, sigma_s);
    fold_affine(&mut net.pose_head, mu_p, sigma_p);

    // held-out audit against the high-sample oracle
    let eval_points = sampler.sample_shell(
        train_cfg.eval_points,
        train_cfg.offset_lo.max(-0.02),
        0.15,
        train_cfg.seed ^ 0xe7a1,
    );
    let eval_mc = DiffusionConfig {
        samples: train_cfg.eval_mc_samples,
        ..*diff_cfg
    };
    let oracle: Vec<SurfaceAttributes> = eval_points
        .par_iter()
        .map(|&p| diffuse_attributes(index, &eval_mc, p))
        .collect();
    let (ow, os, op) = target_mats(&oracle, k, f);
    let (nw, ns, np) = net.query_basis(&eval_points);
    let mut l1_sum = 0.0;
    let mut l1_max: f64 = 0.0;
    for i in 0..eval_points.len() {
        let l1: f64 = (0..k).map(|j| (nw.get(i, j) - ow.get(i, j)).abs()).sum();
        l1_sum += l1;
        l1_max = l1_max.max(l1);
    }
    let shape_mae = mat_mae(&ns, &os);
    let pose_mae = mat_mae(&np, &op);
    let report = FieldTrainReport {
        held_out_weights_l1_mean: l1_sum / eval_points.len() as f64,
        held_out_weights_l1_max: l1_max,
        held_out_shape_mae: shape_mae,
        held_out_pose_mae: pose_mae,
        final_loss,
        epochs: train_cfg.epochs,
    };
    Ok((net, report))
}

fn mat_mae(a: &Mat, b: &Mat) -> f64 {
    let n = a.data().len().max(1) as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n
}
