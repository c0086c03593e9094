//! The composite VAE loss and its exact gradients. The collision terms see
//! only the constant canonical-body SDF: no body parameters appear in any
//! signature here.

use glam::DVec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use diffuse_field::SdfNet;
use mesh_core::{laplacian, laplacian_transpose, RestGeometry};
use nn_core::{l1_sign, Mat};

use crate::vae::GarmentVae;
use crate::VaeResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossPhase {
    /// Reconstruction + weak KL only.
    WarmUp,
    /// All four terms.
    Full,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub rec: f64,
    pub laplacian: f64,
    pub kl: f64,
    pub collision_recon: f64,
    pub collision_sampled: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct LossParams {
    pub lambda_laplacian: f64,
    pub lambda_collision: f64,
    pub kl_weight: f64,
    pub clearance: f64,
    pub random_batch: usize,
    pub phase: LossPhase,
    /// First collision term of the loss (reconstructions of data).
    pub supervised_collision: bool,
    /// Second, self-supervised term (decoded prior samples).
    pub self_supervised_collision: bool,
    /// Ramp multiplier in [0, 1] applied to the collision terms while they
    /// are being introduced.
    pub collision_ramp: f64,
}

/// Computes the loss over one batch and accumulates parameter gradients
/// (callers zero them first). Deterministic given `step_seed`.
pub fn vae_loss(
    vae: &mut GarmentVae,
    batch: &[Vec<DVec3>],
    sdf_net: &SdfNet,
    rest: &RestGeometry,
    params: &LossParams,
    step_seed: u64,
) -> VaeResult<LossBreakdown> {
    let b = batch.len();
    assert!(b > 0);
    let n = vae.vertex_count;
    let scale = vae.norm_scale;
    let latent = vae.latent_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
    let normal = StandardNormal;

    let rows = vae.normalize(batch)?;
    let enc = vae.encode(&rows);

    // reparameterize with per-call noise
    let mut eps = Mat::zeros(b, latent);
    eps.data_mut().iter_mut().for_each(|v| *v = normal.sample(&mut rng));
    let mut z = Mat::zeros(b, latent);
    for i in 0..b {
        for j in 0..latent {
            let sigma = (0.5 * enc.logvar.get(i, j)).exp();
            z.set(i, j, enc.mean.get(i, j) + sigma * eps.get(i, j));
        }
    }
    let (out, dec_cache) = vae.decode_normalized(&z);

    let inv_b = 1.0 / b as f64;
    let mut breakdown = LossBreakdown::default();
    let mut d_out = Mat::zeros(b, 3 * n);

    // reconstruction: L1 in meters, summed per sample, averaged over batch
    for i in 0..b {
        let orow = out.row(i);
        let trow = rows.row(i);
        let d = d_out.row_mut(i);
        for j in 0..3 * n {
            let diff = orow[j] - trow[j];
            breakdown.rec += scale * diff.abs() * inv_b;
            d[j] += scale * l1_sign(diff) * inv_b;
        }
    }

    let full = params.phase == LossPhase::Full;

    // mesh-Laplacian term, also L1 in meters
    if full && params.lambda_laplacian > 0.0 {
        for i in 0..b {
            let target_vecs = row_to_vecs(rows.row(i));
            let out_vecs = row_to_vecs(out.row(i));
            let lap_t = laplacian(rest, &target_vecs)?;
            let lap_o = laplacian(rest, &out_vecs)?;
            let mut cot = vec![DVec3::ZERO; n];
            for vi in 0..n {
                let diff = lap_o[vi] - lap_t[vi];
                breakdown.laplacian += scale
                    * (diff.x.abs() + diff.y.abs() + diff.z.abs())
                    * params.lambda_laplacian
                    * inv_b;
                cot[vi] = DVec3::new(l1_sign(diff.x), l1_sign(diff.y), l1_sign(diff.z))
                    * (scale * params.lambda_laplacian * inv_b);
            }
            let back = laplacian_transpose(rest, &cot)?;
            let d = d_out.row_mut(i);
            for vi in 0..n {
                d[3 * vi] += back[vi].x;
                d[3 * vi + 1] += back[vi].y;
                d[3 * vi + 2] += back[vi].z;
            }
        }
    }

    // collision on reconstruction: hinge against the canonical SDF
    let col_weight = params.lambda_collision * params.collision_ramp;
    if full && params.supervised_collision && col_weight > 0.0 {
        let mut points = Vec::with_capacity(b * n);
        for i in 0..b {
            points.extend(vae.denormalize_row(out.row(i)));
        }
        let eval = sdf_net.forward_batch(&points);
        let mut d_sdf = vec![0.0; points.len()];
        for (pi, &s) in eval.values.iter().enumerate() {
            let h = params.clearance - s;
            if h > 0.0 {
                breakdown.collision_recon += h * col_weight * inv_b;
                d_sdf[pi] = -col_weight * inv_b;
            }
        }
        let d_points = sdf_net.vjp(&eval, &d_sdf);
        for i in 0..b {
            let d = d_out.row_mut(i);
            for vi in 0..n {
                let g = d_points[i * n + vi] * scale;
                d[3 * vi] += g.x;
                d[3 * vi + 1] += g.y;
                d[3 * vi + 2] += g.z;
            }
        }
    }

    // KL toward the standard normal
    if params.kl_weight > 0.0 {
        for i in 0..b {
            for j in 0..latent {
                let mu = enc.mean.get(i, j);
                let lv = enc.logvar.get(i, j);
                breakdown.kl += 0.5 * (mu * mu + lv.exp() - 1.0 - lv) * params.kl_weight * inv_b;
            }
        }
    }

    // backward through the decoder and the reparameterization
    let d_z = vae.backward_decoder(&dec_cache, &z, &d_out);
    let mut d_mean = d_z.clone();
    let mut d_logvar = Mat::zeros(b, latent);
    for i in 0..b {
        for j in 0..latent {
            let sigma = (0.5 * enc.logvar.get(i, j)).exp();
            d_logvar.set(i, j, d_z.get(i, j) * eps.get(i, j) * 0.5 * sigma);
        }
    }
    if params.kl_weight > 0.0 {
        for i in 0..b {
            for j in 0..latent {
                let mu = enc.mean.get(i, j);
                let lv = enc.logvar.get(i, j);
                let cur_m = d_mean.get(i, j);
                d_mean.set(i, j, cur_m + params.kl_weight * inv_b * mu);
                let cur_l = d_logvar.get(i, j);
                d_logvar.set(i, j, cur_l + params.kl_weight * inv_b * 0.5 * (lv.exp() - 1.0));
            }
        }
    }
    vae.backward_encoder(&enc, &d_mean, &d_logvar);

    // self-supervised branch: fresh prior samples through the decoder only
    if full && params.self_supervised_collision && col_weight > 0.0 && params.random_batch > 0 {
        let br = params.random_batch;
        let mut z_rand = Mat::zeros(br, latent);
        z_rand.data_mut().iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        let (rand_out, rand_cache) = vae.decode_normalized(&z_rand);
        let inv_br = 1.0 / br as f64;
        let mut points = Vec::with_capacity(br * n);
        for i in 0..br {
            points.extend(vae.denormalize_row(rand_out.row(i)));
        }
        let eval = sdf_net.forward_batch(&points);
        let mut d_sdf = vec![0.0; points.len()];
        for (pi, &s) in eval.values.iter().enumerate() {
            let h = params.clearance - s;
            if h > 0.0 {
                breakdown.collision_sampled += h * col_weight * inv_br;
                d_sdf[pi] = -col_weight * inv_br;
            }
        }
        let d_points = sdf_net.vjp(&eval, &d_sdf);
        let mut d_rand = Mat::zeros(br, 3 * n);
        for i in 0..br {
            let d = d_rand.row_mut(i);
            for vi in 0..n {
                let g = d_points[i * n + vi] * scale;
                d[3 * vi] += g.x;
                d[3 * vi + 1] += g.y;
                d[3 * vi + 2] += g.z;
            }
        }
        vae.backward_decoder(&rand_cache, &z_rand, &d_rand);
    }

    breakdown.total = breakdown.rec
        + breakdown.laplacian
        + breakdown.kl
        + breakdown.collision_recon
        + breakdown.collision_sampled;
    Ok(breakdown)
}

fn row_to_vecs(row: &[f64]) -> Vec<DVec3> {
    row.chunks_exact(3)
        .map(|c| DVec3::new(c[0], c[1], c[2]))
        .collect()
}
