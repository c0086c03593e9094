//! Signed distance field of the canonical body: a dense trilinear grid
//! (the oracle form) and a shallow network fit (the smooth differentiable
//! form used inside collision losses).

use std::path::Path;

use glam::DVec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mesh_core::{check_watertight, winding_number_tris, TriMesh, TriangleBvh};
use nn_core::{
    zero_grads, Activation, Adam, AdamConfig, Dense, Mat, Mlp, MlpCache, MlpConfig, ParamStore,
    ParamVisitor, Parameterized,
};

use crate::shell::ShellSampler;
use crate::{FieldError, FieldResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdfMode {
    Grid,
    Network,
}

#[derive(Debug, Clone, Copy)]
pub struct SdfQuery {
    pub value: f64,
    pub gradient: DVec3,
    /// Set when the query point fell outside the grid bounds and the result
    /// was extended by the distance to the box.
    pub clamped: bool,
}

/// Dense signed-distance grid. Positive outside, negative inside.
#[derive(Debug, Clone)]
pub struct SdfGrid {
    pub origin: DVec3,
    pub spacing: f64,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SdfGridHeader {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: f64,
}

/// Builds the grid: magnitude from closest-point distance, sign from the
/// generalized winding number in a band around the surface, flood-filled
/// outward per connected off-band component.
pub fn build_sdf_grid(body: &TriMesh, spacing: f64, margin: f64) -> FieldResult<SdfGrid> {
    check_watertight(body)?;
    let (lo, hi) = body.bounds();
    let origin = lo - DVec3::splat(margin);
    let extent = hi - lo + DVec3::splat(2.0 * margin);
    let dims = [
        (extent.x / spacing).ceil() as usize + 1,
        (extent.y / spacing).ceil() as usize + 1,
        (extent.z / spacing).ceil() as usize + 1,
    ];
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let bvh = TriangleBvh::build(body);
    let tris: Vec<[DVec3; 3]> = body
        .faces
        .iter()
        .map(|f| [body.vertices[f[0]], body.vertices[f[1]], body.vertices[f[2]]])
        .collect();

    let point_of = |i: usize| -> DVec3 {
        let x = i % nx;
        let y = (i / nx) % ny;
        let z = i / (nx * ny);
        origin + DVec3::new(x as f64, y as f64, z as f64) * spacing
    };

    let udist: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| bvh.closest_point(point_of(i)).distance)
        .collect();

    // winding-number sign inside the band; adjacent off-band cells cannot
    // straddle the surface because the band is wider than one cell
    let band = spacing * 1.8;
    let sign: Vec<i8> = (0..n)
        .into_par_iter()
        .map(|i| {
            if udist[i] <= band {
                if winding_number_tris(&tris, point_of(i)) > 0.5 {
                    -1
                } else {
                    1
                }
            } else {
                0
            }
        })
        .collect();
    let mut sign = sign;

    // flood the remaining components, one winding evaluation each
    let mut stack = Vec::new();
    for start in 0..n {
        if sign[start] != 0 {
            continue;
        }
        let s = if winding_number_tris(&tris, point_of(start)) > 0.5 {
            -1
        } else {
            1
        };
        stack.push(start);
        sign[start] = s;
        while let Some(i) = stack.pop() {
            let x = i % nx;
            let y = (i / nx) % ny;
            let z = i / (nx * ny);
            let mut visit = |j: usize| {
                if sign[j] == 0 && udist[j] > band {
                    sign[j] = s;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < nx {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - nx);
            }
            if y + 1 < ny {
                visit(i + nx);
            }
            if z > 0 {
                visit(i - nx * ny);
            }
            if z + 1 < nz {
                visit(i + nx * ny);
            }
        }
    }

    let values = (0..n).map(|i| sign[i] as f64 * udist[i]).collect();
    Ok(SdfGrid {
        origin,
        spacing,
        dims,
        values,
    })
}

impl SdfGrid {
    #[inline]
    fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[(z * self.dims[1] + y) * self.dims[0] + x]
    }

    pub fn max_corner(&self) -> DVec3 {
        self.origin
            + DVec3::new(
                (self.dims[0] - 1) as f64,
                (self.dims[1] - 1) as f64,
                (self.dims[2] - 1) as f64,
            ) * self.spacing
    }

    /// Trilinear value and gradient; queries outside the bounds clamp to
    /// the box and add the exterior distance (a lower bound on the true
    /// distance for points beyond the margin).
    pub fn query(&self, p: DVec3) -> SdfQuery {
        let hi = self.max_corner();
        let clamped_p = p.clamp(self.origin, hi);
        let outside = clamped_p - p;
        let local = (clamped_p - self.origin) / self.spacing;
        let cell = [
            (local.x.floor() as usize).min(self.dims[0] - 2),
            (local.y.floor() as usize).min(self.dims[1] - 2),
            (local.z.floor() as usize).min(self.dims[2] - 2),
        ];
        let f = DVec3::new(
            local.x - cell[0] as f64,
            local.y - cell[1] as f64,
            local.z - cell[2] as f64,
        );
        let (x, y, z) = (cell[0], cell[1], cell[2]);
        let c000 = self.at(x, y, z);
        let c100 = self.at(x + 1, y, z);
        let c010 = self.at(x, y + 1, z);
        let c110 = self.at(x + 1, y + 1, z);
        let c001 = self.at(x, y, z + 1);
        let c101 = self.at(x + 1, y, z + 1);
        let c011 = self.at(x, y + 1, z + 1);
        let c111 = self.at(x + 1, y + 1, z + 1);

        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(c000, c100, f.x);
        let c10 = lerp(c010, c110, f.x);
        let c01 = lerp(c001, c101, f.x);
        let c11 = lerp(c011, c111, f.x);
        let c0 = lerp(c00, c10, f.y);
        let c1 = lerp(c01, c11, f.y);
        let value = lerp(c0, c1, f.z);

        let dx = (lerp(
            lerp(c100 - c000, c110 - c010, f.y),
            lerp(c101 - c001, c111 - c011, f.y),
            f.z,
        )) / self.spacing;
        let dy = (lerp(
            lerp(c010 - c000, c110 - c100, f.x),
            lerp(c011 - c001, c111 - c101, f.x),
            f.z,
        )) / self.spacing;
        let dz = (lerp(
            lerp(c001 - c000, c101 - c100, f.x),
            lerp(c011 - c010, c111 - c110, f.x),
            f.y,
        )) / self.spacing;

        if outside.length_squared() > 0.0 {
            // beyond the box: extend by the exterior distance; the gradient
            // points away from the box
            let d = outside.length();
            SdfQuery {
                value: value + d,
                gradient: -outside / d,
                clamped: true,
            }
        } else {
            SdfQuery {
                value,
                gradient: DVec3::new(dx, dy, dz),
                clamped: false,
            }
        }
    }

    pub fn save(&self, json_path: impl AsRef<Path>) -> FieldResult<()> {
        let json_path = json_path.as_ref();
        let vol_path = json_path.with_extension("vol");
        let header = SdfGridHeader {
            dims: self.dims,
            origin: [self.origin.x, self.origin.y, self.origin.z],
            spacing: self.spacing,
        };
        std::fs::write(json_path, serde_json::to_string_pretty(&header)?).map_err(|source| {
            FieldError::Io {
                path: json_path.display().to_string(),
                source,
            }
        })?;
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&vol_path, bytes).map_err(|source| FieldError::Io {
            path: vol_path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn load(json_path: impl AsRef<Path>) -> FieldResult<SdfGrid> {
        let json_path = json_path.as_ref();
        let header: SdfGridHeader =
            serde_json::from_str(&std::fs::read_to_string(json_path).map_err(|source| {
                FieldError::Io {
                    path: json_path.display().to_string(),
                    source,
                }
            })?)?;
        let vol_path = json_path.with_extension("vol");
        let bytes = std::fs::read(&vol_path).map_err(|source| FieldError::Io {
            path: vol_path.display().to_string(),
            source,
        })?;
        let count = header.dims[0] * header.dims[1] * header.dims[2];
        if bytes.len() != count * 8 {
            return Err(FieldError::Corrupt {
                path: vol_path.display().to_string(),
                msg: format!("expected {} values, file holds {}", count, bytes.len() / 8),
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SdfGrid {
            origin: DVec3::from_array(header.origin),
            spacing: header.spacing,
            dims: header.dims,
            values,
        })
    }

    pub fn content_hash(&self) -> u64 {
        let mut h = nn_core::Fnv::new();
        for d in self.dims {
            h.update(&(d as u64).to_le_bytes());
        }
        for v in &self.values {
            h.update(&v.to_le_bytes());
        }
        h.finish()
    }
}

#[derive(Debug, Clone)]
pub struct SdfNetConfig {
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for SdfNetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128, 128],
            seed: 2,
        }
    }
}

/// Shallow fully-connected SDF with a smooth nonlinearity, so collision
/// losses get continuous spatial gradients. When an analytic capsule
/// prior is attached the network carries only the residual against it.
#[derive(Debug, Clone)]
pub struct SdfNet {
    trunk: Mlp,
    head: Dense,
    pub input_center: DVec3,
    pub input_scale: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub prior: Option<body_model::CapsuleField>,
}

pub struct SdfNetEval {
    pub values: Vec<f64>,
    trunk_cache: MlpCache,
    prior_grads: Option<Vec<DVec3>>,
}

impl SdfNet {
    pub fn new(cfg: &SdfNetConfig, grid: &SdfGrid) -> Self {
        let mut dims = vec![3];
        dims.extend_from_slice(&cfg.hidden);
        let trunk = Mlp::new(&MlpConfig {
            dims,
            activation: Activation::Softplus,
            layer_norm: false,
            seed: cfg.seed,
        });
        let h = *cfg.hidden.last().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5df);
        let center = (grid.origin + grid.max_corner()) * 0.5;
        let scale = 2.0 / (grid.max_corner() - grid.origin).length();
        Self {
            trunk,
            head: Dense::new(h, 1, &mut rng),
            input_center: center,
            input_scale: scale,
            hidden: cfg.hidden.clone(),
            seed: cfg.seed,
            prior: None,
        }
    }

    pub fn with_prior(mut self, prior: body_model::CapsuleField) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn prior_value(&self, p: DVec3) -> f64 {
        self.prior.as_ref().map_or(0.0, |f| f.eval(p))
    }

    fn normalize_inputs(&self, ps: &[DVec3]) -> Mat {
        let mut x = Mat::zeros(ps.len(), 3);
        for (i, p) in ps.iter().enumerate() {
            let q = (*p - self.input_center) * self.input_scale;
            let row = x.row_mut(i);
            row[0] = q.x;
            row[1] = q.y;
            row[2] = q.z;
        }
        x
    }

    pub fn forward_batch(&self, ps: &[DVec3]) -> SdfNetEval {
        let x = self.normalize_inputs(ps);
        let (h, trunk_cache) = self.trunk.forward(&x);
        let out = self.head.forward(&h);
        let mut values: Vec<f64> = (0..out.rows()).map(|i| out.get(i, 0)).collect();
        let prior_grads = self.prior.as_ref().map(|field| {
            let mut grads = Vec::with_capacity(ps.len());
            for (i, p) in ps.iter().enumerate() {
                let (v, g) = field.eval_with_gradient(*p);
                values[i] += v;
                grads.push(g);
            }
            grads
        });
        SdfNetEval {
            values,
            trunk_cache,
            prior_grads,
        }
    }

    /// Pulls per-point output cotangents back to the query points.
    pub fn vjp(&self, eval: &SdfNetEval, d_values: &[f64]) -> Vec<DVec3> {
        let d_out = Mat::from_vec(d_values.len(), 1, d_values.to_vec());
        let dh = self.head.backward_input(&d_out);
        let dx = self.trunk.backward_input(&eval.trunk_cache, &dh);
        (0..dx.rows())
            .map(|i| {
                let r = dx.row(i);
                let mut g = DVec3::new(r[0], r[1], r[2]) * self.input_scale;
                if let Some(pg) = &eval.prior_grads {
                    g += pg[i] * d_values[i];
                }
                g
            })
            .collect()
    }

    pub fn gradient_batch(&self, ps: &[DVec3]) -> Vec<DVec3> {
        let eval = self.forward_batch(ps);
        self.vjp(&eval, &vec![1.0; ps.len()])
    }
}

impl Parameterized for SdfNet {
    fn for_each_param(&mut self, v: &mut ParamVisitor) {
        self.trunk.visit("trunk", v);
        self.head.visit("head", v);
    }
}

#[derive(Debug, Clone)]
pub struct SdfTrainReport {
    pub held_out_max_err: f64,
    pub held_out_mean_err: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SdfFitConfig {
    pub samples: usize,
    pub epochs: usize,
    pub batch: usize,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for SdfFitConfig {
    fn default() -> Self {
        Self {
            samples: 50_000,
            epochs: 340,
            batch: 256,
            eval_samples: 4_000,
            seed: 3,
        }
    }
}

/// Fits the network to the grid oracle on shell samples around the body.
/// With a capsule prior the network carries the (much smaller) residual.
pub fn fit_sdf_net(
    grid: &SdfGrid,
    body: &TriMesh,
    net_cfg: &SdfNetConfig,
    fit: &SdfFitConfig,
) -> FieldResult<(SdfNet, SdfTrainReport)> {
    fit_sdf_net_with_prior(grid, body, net_cfg, fit, None)
}

pub fn fit_sdf_net_with_prior(
    grid: &SdfGrid,
    body: &TriMesh,
    net_cfg: &SdfNetConfig,
    fit: &SdfFitConfig,
    prior: Option<body_model::CapsuleField>,
) -> FieldResult<(SdfNet, SdfTrainReport)> {
    let sampler = ShellSampler::new(body);
    let mut rng = ChaCha8Rng::seed_from_u64(fit.seed);
    let lo = grid.origin;
    let hi = grid.max_corner();
    // the net is only ever queried in the garment-occupancy shell; fitting
    // deeper inside would spend capacity on the interior medial kinks
    let mut points = Vec::with_capacity(fit.samples);
    for _ in 0..fit.samples {
        points.push(sampler.shell_point(&mut rng, -0.03, 0.18).clamp(lo, hi));
    }
    let prior_at = |p: DVec3| prior.as_ref().map_or(0.0, |f| f.eval(p));
    let targets: Vec<f64> = points
        .iter()
        .map(|&p| grid.query(p).value - prior_at(p))
        .collect();
    let t_mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let t_std = (targets.iter().map(|t| (t - t_mean) * (t - t_mean)).sum::<f64>()
        / targets.len() as f64)
        .sqrt()
        .max(1e-9);
    let targets_std: Vec<f64> = targets.iter().map(|t| (t - t_mean) / t_std).collect();

    let mut net = SdfNet::new(net_cfg, grid);
    if let Some(prior) = prior {
        net = net.with_prior(prior);
    }
    let steps_per_epoch = fit.samples.div_ceil(fit.batch);
    let total = steps_per_epoch * fit.epochs;
    let mut adam = Adam::new(AdamConfig {
        learning_rate: 1e-3,
        schedule: vec![
            (total * 50 / 100, 3e-4),
            (total * 75 / 100, 1e-4),
            (total * 88 / 100, 3e-5),
            (total * 96 / 100, 1e-5),
        ],
        ..AdamConfig::default()
    });

    let mut order: Vec<usize> = (0..points.len()).collect();
    use rand::seq::SliceRandom;
    let mut final_loss = 0.0;
    for epoch in 0..fit.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(fit.batch) {
            let ps: Vec<DVec3> = chunk.iter().map(|&i| points[i]).collect();
            let x = net.normalize_inputs(&ps);
            let (h, cache) = net.trunk.forward(&x);
            let out = net.head.forward(&h);
            let b = chunk.len() as f64;
            let mut loss = 0.0;
            let mut d_out = Mat::zeros(out.rows(), 1);
            for (bi, &i) in chunk.iter().enumerate() {
                let diff = out.get(bi, 0) - targets_std[i];
                loss += diff * diff / b;
                d_out.set(bi, 0, 2.0 * diff / b);
            }
            if !loss.is_finite() {
                return Err(FieldError::Diverged {
                    step: adam.step_count(),
                    what: format!("sdf fit loss {loss} at epoch {epoch}"),
                });
            }
            epoch_loss += loss;
            batches += 1;
            zero_grads(&mut net);
            let dh = net.head.backward(&h, &d_out);
            net.trunk.backward(&cache, &dh);
            adam.step(&mut net);
        }
        final_loss = epoch_loss / batches.max(1) as f64;
    }
    // fold the target standardization into the head: y = σ·ŷ + μ
    net.head.w.data_mut().iter_mut().for_each(|v| *v *= t_std);
    net.head.b.iter_mut().for_each(|v| *v = *v * t_std + t_mean);

    // held-out audit strictly within the garment shell
    let eval_points: Vec<DVec3> = {
        let mut rng = ChaCha8Rng::seed_from_u64(fit.seed ^ 0xe7a1);
        (0..fit.eval_samples)
            .map(|_| sampler.shell_point(&mut rng, -0.02, 0.15).clamp(lo, hi))
            .collect()
    };
    let eval = net.forward_batch(&eval_points);
    let mut max_err: f64 = 0.0;
    let mut sum_err = 0.0;
    for (i, &p) in eval_points.iter().enumerate() {
        let err = (eval.values[i] - grid.query(p).value).abs();
        max_err = max_err.max(err);
        sum_err += err;
    }
    let report = SdfTrainReport {
        held_out_max_err: max_err,
        held_out_mean_err: sum_err / eval_points.len() as f64,
        final_loss,
    };
    Ok((net, report))
}

/// The full field: grid oracle plus optional network fit.
#[derive(Debug, Clone)]
pub struct SdfField {
    pub grid: SdfGrid,
    pub net: Option<SdfNet>,
}

impl SdfField {
    pub fn query(&self, p: DVec3, mode: SdfMode) -> SdfQuery {
        match mode {
            SdfMode::Grid => self.grid.query(p),
            SdfMode::Network => {
                let net = self.net.as_ref().expect("network form not fitted");
                let hi = self.grid.max_corner();
                let clamped_p = p.clamp(self.grid.origin, hi);
                let outside = p - clamped_p;
                if outside.length_squared() > 0.0 {
                    let d = outside.length();
                    let base = net.forward_batch(&[clamped_p]).values[0];
                    SdfQuery {
                        value: base + d,
                        gradient: outside / d,
                        clamped: true,
                    }
                } else {
                    let eval = net.forward_batch(&[p]);
                    let grad = net.vjp(&eval, &[1.0]);
                    SdfQuery {
                        value: eval.values[0],
                        gradient: grad[0],
                        clamped: false,
                    }
                }
            }
        }
    }

    pub fn save_net(&self, path: impl AsRef<Path>, extra_meta: &[(&str, String)]) -> FieldResult<()> {
        let net = self.net.as_ref().expect("no network to save");
        let mut clone = net.clone();
        let mut store = ParamStore::from_net(&mut clone);
        if let Some(prior) = &net.prior {
            let mut data = Vec::with_capacity(prior.capsules.len() * 7);
            for &(a, b, r) in &prior.capsules {
                data.extend_from_slice(&[a.x, a.y, a.z, b.x, b.y, b.z, r]);
            }
            store.entries.push(nn_core::ParamEntry {
                name: "prior.capsules".into(),
                shape: vec![prior.capsules.len(), 7],
                data,
            });
            store.meta.insert("prior_blend".into(), prior.blend.to_string());
        }
        store.meta.insert("kind".into(), "sdfnet".into());
        store.meta.insert(
            "hidden".into(),
            net.hidden.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        );
        store.meta.insert("seed".into(), net.seed.to_string());
        store.meta.insert(
            "input_center".into(),
            format!("{},{},{}", net.input_center.x, net.input_center.y, net.input_center.z),
        );
        store.meta.insert("input_scale".into(), net.input_scale.to_string());
        for (k, v) in extra_meta {
            store.meta.insert((*k).into(), v.clone());
        }
        store.save(path)?;
        Ok(())
    }

    pub fn load_net(grid: SdfGrid, path: impl AsRef<Path>) -> FieldResult<(SdfField, ParamStore)> {
        let path = path.as_ref();
        let store = ParamStore::load(path)?;
        let hidden: Vec<usize> = store
            .meta
            .get("hidden")
            .map(|s| s.split(',').filter_map(|x| x.parse().ok()).collect())
            .unwrap_or_default();
        let seed: u64 = store.meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
        let mut net = SdfNet::new(&SdfNetConfig { hidden, seed }, &grid);
        if let Some(c) = store.meta.get("input_center") {
            let v: Vec<f64> = c.split(',').filter_map(|x| x.parse().ok()).collect();
            net.input_center = DVec3::new(v[0], v[1], v[2]);
        }
        if let Some(s) = store.meta.get("input_scale").and_then(|s| s.parse().ok()) {
            net.input_scale = s;
        }
        if let Some(entry) = store.entries.iter().find(|e| e.name == "prior.capsules") {
            let blend = store
                .meta
                .get("prior_blend")
                .and_then(|s| s.parse().ok())
                .unwrap_or(0.035);
            let capsules = entry
                .data
                .chunks_exact(7)
                .map(|c| {
                    (
                        DVec3::new(c[0], c[1], c[2]),
                        DVec3::new(c[3], c[4], c[5]),
                        c[6],
                    )
                })
                .collect();
            net.prior = Some(body_model::CapsuleField { capsules, blend });
        }
        store.load_into(&mut net)?;
        Ok((
            SdfField {
                grid,
                net: Some(net),
            },
            store,
        ))
    }
}
