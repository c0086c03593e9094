//! Encoder/decoder pair over flattened canonical garments. Inputs are
//! template offsets scaled by the template bounding-box diagonal, so the
//! rest state sits at the origin of the data distribution.

use glam::DVec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nn_core::{Activation, Dense, Mat, Mlp, MlpCache, MlpConfig, ParamStore, ParamVisitor, Parameterized};

use crate::{VaeError, VaeResult};

#[derive(Debug, Clone)]
pub struct VaeConfig {
    pub latent_dim: usize,
    /// Hidden width of the four dense layers (matches the full-scale
    /// architecture at 2000; desk-scale default 256).
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 25,
            width: 256,
            depth: 4,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GarmentVae {
    pub cfg: VaeConfig,
    pub vertex_count: usize,
    /// Canonical rest positions the inputs are centered on.
    pub template: Vec<DVec3>,
    /// Bounding-box diagonal of the template; the offset scale.
    pub norm_scale: f64,
    enc_trunk: Mlp,
    enc_mean: Dense,
    enc_logvar: Dense,
    dec_trunk: Mlp,
    dec_out: Dense,
}

pub struct EncodeCache {
    pub mean: Mat,
    pub logvar: Mat,
    trunk: MlpCache,
    trunk_h: Mat,
}

pub struct DecodeCache {
    trunk: MlpCache,
    trunk_h: Mat,
}

impl GarmentVae {
    pub fn new(template: &[DVec3], cfg: VaeConfig) -> Self {
        let n = template.len();
        let mut lo = DVec3::splat(f64::INFINITY);
        let mut hi = DVec3::splat(f64::NEG_INFINITY);
        for v in template {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let norm_scale = (hi - lo).length().max(1e-9);
        let mut enc_dims = vec![3 * n];
        let mut dec_dims = vec![cfg.latent_dim];
        for _ in 0..cfg.depth {
            enc_dims.push(cfg.width);
            dec_dims.push(cfg.width);
        }
        let enc_trunk = Mlp::new(&MlpConfig {
            dims: enc_dims,
            activation: Activation::Relu,
            layer_norm: true,
            seed: cfg.seed,
        });
        let dec_trunk = Mlp::new(&MlpConfig {
            dims: dec_dims,
            activation: Activation::Relu,
            layer_norm: true,
            seed: cfg.seed ^ 0xdec0de,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4ead5);
        let enc_mean = Dense::new(cfg.width, cfg.latent_dim, &mut rng);
        let enc_logvar = {
            let mut d = Dense::new(cfg.width, cfg.latent_dim, &mut rng);
            // start near a unit posterior but well below it, so early
            // sampling noise does not drown the reconstruction signal
            d.b.iter_mut().for_each(|b| *b = -4.0);
            d
        };
        let dec_out = Dense::new(cfg.width, 3 * n, &mut rng);
        Self {
            cfg,
            vertex_count: n,
            template: template.to_vec(),
            norm_scale,
            enc_trunk,
            enc_mean,
            enc_logvar,
            dec_trunk,
            dec_out,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.cfg.latent_dim
    }

    /// Flattens canonical garments into normalized offset rows.
    pub fn normalize(&self, frames: &[Vec<DVec3>]) -> VaeResult<Mat> {
        let n = self.vertex_count;
        let mut m = Mat::zeros(frames.len(), 3 * n);
        for (fi, frame) in frames.iter().enumerate() {
            if frame.len() != n {
                return Err(VaeError::VertexCountMismatch {
                    expected: n,
                    got: frame.len(),
                });
            }
            let row = m.row_mut(fi);
            for (vi, v) in frame.iter().enumerate() {
                let o = (*v - self.template[vi]) / self.norm_scale;
                row[3 * vi] = o.x;
                row[3 * vi + 1] = o.y;
                row[3 * vi + 2] = o.z;
            }
        }
        Ok(m)
    }

    pub fn denormalize_row(&self, row: &[f64]) -> Vec<DVec3> {
        (0..self.vertex_count)
            .map(|vi| {
                self.template[vi]
                    + DVec3::new(row[3 * vi], row[3 * vi + 1], row[3 * vi + 2]) * self.norm_scale
            })
            .collect()
    }

    /// Posterior parameters for a batch of normalized rows.
    pub fn encode(&self, normalized: &Mat) -> EncodeCache {
        let (h, trunk) = self.enc_trunk.forward(normalized);
        EncodeCache {
            mean: self.enc_mean.forward(&h),
            logvar: self.enc_logvar.forward(&h),
            trunk,
            trunk_h: h,
        }
    }

    /// Decoder in normalized offset space.
    pub fn decode_normalized(&self, latents: &Mat) -> (Mat, DecodeCache) {
        let (h, trunk) = self.dec_trunk.forward(latents);
        let out = self.dec_out.forward(&h);
        (out, DecodeCache { trunk, trunk_h: h })
    }

    /// Decoder straight to canonical-space garments (meters).
    pub fn decode(&self, latents: &Mat) -> Vec<Vec<DVec3>> {
        let (out, _) = self.decode_normalized(latents);
        (0..out.rows()).map(|i| self.denormalize_row(out.row(i))).collect()
    }

    /// Posterior mean encoding of canonical frames, the deterministic
    /// target representation used by the regressor.
    pub fn encode_means(&self, frames: &[Vec<DVec3>]) -> VaeResult<Mat> {
        let normalized = self.normalize(frames)?;
        Ok(self.encode(&normalized).mean)
    }

    pub(crate) fn backward_decoder(
        &mut self,
        cache: &DecodeCache,
        latents: &Mat,
        d_out: &Mat,
    ) -> Mat {
        let _ = latents;
        let dh = self.dec_out.backward(&cache.trunk_h, d_out);
        self.dec_trunk.backward(&cache.trunk, &dh)
    }

    pub(crate) fn backward_encoder(
        &mut self,
        cache: &EncodeCache,
        d_mean: &Mat,
        d_logvar: &Mat,
    ) -> Mat {
        let mut dh = self.enc_mean.backward(&cache.trunk_h, d_mean);
        dh.add_assign(&self.enc_logvar.backward(&cache.trunk_h, d_logvar));
        self.enc_trunk.backward(&cache.trunk, &dh)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>, extra_meta: &[(&str, String)]) -> VaeResult<()> {
        let mut clone = self.clone();
        let mut store = ParamStore::from_net(&mut clone);
        store.meta.insert("kind".into(), "garment_vae".into());
        store.meta.insert("latent_dim".into(), self.cfg.latent_dim.to_string());
        store.meta.insert("width".into(), self.cfg.width.to_string());
        store.meta.insert("depth".into(), self.cfg.depth.to_string());
        store.meta.insert("seed".into(), self.cfg.seed.to_string());
        store.meta.insert("vertex_count".into(), self.vertex_count.to_string());
        store.meta.insert("norm_scale".into(), self.norm_scale.to_string());
        let template: Vec<String> = self
            .template
            .iter()
            .flat_map(|v| [v.x.to_string(), v.y.to_string(), v.z.to_string()])
            .collect();
        store.meta.insert("template".into(), template.join(" "));
        for (k, v) in extra_meta {
            store.meta.insert((*k).into(), v.clone());
        }
        store.save(path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> VaeResult<(GarmentVae, ParamStore)> {
        let store = ParamStore::load(path)?;
        let get_usize = |k: &str| store.meta.get(k).and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
        let cfg = VaeConfig {
            latent_dim: get_usize("latent_dim"),
            width: get_usize("width"),
            depth: get_usize("depth"),
            seed: store.meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0),
        };
        let coords: Vec<f64> = store
            .meta
            .get("template")
            .map(|s| s.split(' ').filter_map(|x| x.parse().ok()).collect())
            .unwrap_or_default();
        let template: Vec<DVec3> = coords
            .chunks_exact(3)
            .map(|c| DVec3::new(c[0], c[1], c[2]))
            .collect();
        let mut vae = GarmentVae::new(&template, cfg);
        if let Some(s) = store.meta.get("norm_scale").and_then(|s| s.parse().ok()) {
            vae.norm_scale = s;
        }
        store.load_into(&mut vae)?;
        Ok((vae, store))
    }
}

impl Parameterized for GarmentVae {
    fn for_each_param(&mut self, v: &mut ParamVisitor) {
        self.enc_trunk.visit("enc", v);
        self.enc_mean.visit("enc_mean", v);
        self.enc_logvar.visit("enc_logvar", v);
        self.dec_trunk.visit("dec", v);
        self.dec_out.visit("dec_out", v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_template(n: usize) -> Vec<DVec3> {
        (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                DVec3::new(0.3 * a.cos(), 1.0 + 0.001 * i as f64, 0.3 * a.sin())
            })
            .collect()
    }

    #[test]
    fn decode_is_deterministic_and_sized() {
        let template = toy_template(40);
        let vae = GarmentVae::new(
            &template,
            VaeConfig {
                width: 32,
                depth: 2,
                latent_dim: 25,
                seed: 1,
            },
        );
        assert_eq!(vae.latent_dim(), 25);
        let z = Mat::from_vec(2, 25, (0..50).map(|i| (i as f64 * 0.1).sin()).collect());
        let a = vae.decode(&z);
        let b = vae.decode(&z);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].len(), 40);
    }

    #[test]
    fn encode_outputs_latent_dim() {
        let template = toy_template(30);
        let vae = GarmentVae::new(
            &template,
            VaeConfig {
                width: 24,
                depth: 2,
                latent_dim: 25,
                seed: 2,
            },
        );
        let frames = vec![template.clone(), template.clone()];
        let means = vae.encode_means(&frames).unwrap();
        assert_eq!(means.rows(), 2);
        assert_eq!(means.cols(), 25);
    }

    #[test]
    fn normalize_round_trip() {
        let template = toy_template(25);
        let vae = GarmentVae::new(&template, VaeConfig { width: 16, depth: 1, latent_dim: 4, seed: 3 });
        let mut frame = template.clone();
        for (i, v) in frame.iter_mut().enumerate() {
            *v += DVec3::new(0.01 * (i as f64).sin(), -0.004, 0.002 * i as f64);
        }
        let normalized = vae.normalize(&[frame.clone()]).unwrap();
        let back = vae.denormalize_row(normalized.row(0));
        for (a, b) in back.iter().zip(&frame) {
            assert!((*a - *b).length() < 1e-12);
        }
    }

    #[test]
    fn vertex_count_mismatch_rejected() {
        let template = toy_template(25);
        let vae = GarmentVae::new(&template, VaeConfig { width: 16, depth: 1, latent_dim: 4, seed: 3 });
        let bad = vec![vec![DVec3::ZERO; 10]];
        assert!(matches!(
            vae.normalize(&bad),
            Err(VaeError::VertexCountMismatch { .. })
        ));
    }
}
