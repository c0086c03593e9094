//! Monte-Carlo diffusion of surface attributes: the exact (oracle) form of
//! the diffused fields. Each query averages closest-point attributes over
//! Gaussian samples around the query point, with the sampling scale tied to
//! the distance from the surface.

use glam::DVec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::closest::{ClosestPointIndex, SurfaceAttributes};

#[derive(Debug, Clone)]
pub struct DiffusionConfig {
    /// Gaussian sample count per query.
    pub samples: usize,
    /// Floor on the sampling scale σ(p) = max(d(p), sigma_min); keeps the
    /// average smooth on the surface itself where d → 0.
    pub sigma_min: f64,
    pub seed: u64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            samples: 32,
            sigma_min: 0.01,
            seed: 0,
        }
    }
}

/// Deterministic per-query stream: independent of evaluation order.
fn query_rng(seed: u64, p: DVec3) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for v in [p.x, p.y, p.z] {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// The diffusion average: weights come back renormalized to sum exactly 1.
pub fn diffuse_attributes(
    index: &ClosestPointIndex,
    cfg: &DiffusionConfig,
    p: DVec3,
) -> SurfaceAttributes {
    assert!(cfg.samples >= 1);
    assert!(cfg.sigma_min > 0.0);
    let d = index.closest(p).distance;
    let sigma = d.max(cfg.sigma_min);
    let mut rng = query_rng(cfg.seed, p);
    let normal = StandardNormal;
    let mut acc = SurfaceAttributes::zeros(index.joint_count(), index.feature_dim());
    let inv = 1.0 / cfg.samples as f64;
    for _ in 0..cfg.samples {
        let off = DVec3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ) * sigma;
        let (attrs, _) = index.surface_attributes(p + off);
        acc.scale_accumulate(&attrs, inv);
    }
    acc.normalize_weights();
    acc
}

/// The oracle form of the diffused body: exact Monte-Carlo evaluation.
#[derive(Clone)]
pub struct OracleField {
    pub index: ClosestPointIndex,
    pub cfg: DiffusionConfig,
}

impl OracleField {
    pub fn new(index: ClosestPointIndex, cfg: DiffusionConfig) -> Self {
        Self { index, cfg }
    }

    pub fn sample(&self, p: DVec3) -> SurfaceAttributes {
        diffuse_attributes(&self.index, &self.cfg, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use body_model::{build_default_body, BodyBuildConfig};
    use std::sync::Arc;

    fn index() -> ClosestPointIndex {
        let model = build_default_body(&BodyBuildConfig::default()).unwrap();
        ClosestPointIndex::new(Arc::new(model))
    }

    #[test]
    fn degenerate_sigma_recovers_surface_attributes() {
        let idx = index();
        let p = idx.model.template.vertices[37];
        let cfg = DiffusionConfig {
            samples: 16,
            sigma_min: 1e-9,
            seed: 1,
        };
        let diffused = diffuse_attributes(&idx, &cfg, p);
        let (surface, d) = idx.surface_attributes(p);
        assert!(d < 1e-9);
        for (a, b) in diffused.weights.iter().zip(&surface.weights) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in diffused.shape_basis.iter().zip(&surface.shape_basis) {
            assert!((*a - *b).length() < 1e-6);
        }
    }

    #[test]
    fn weights_partition_of_unity_and_deterministic() {
        let idx = index();
        let cfg = DiffusionConfig::default();
        for i in 0..20 {
            let p = DVec3::new(
                (i as f64 * 0.07).sin() * 0.4,
                0.3 + (i as f64) * 0.06,
                (i as f64 * 0.11).cos() * 0.2,
            );
            let a = diffuse_attributes(&idx, &cfg, p);
            let sum: f64 = a.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(a.weights.iter().all(|&w| w >= 0.0));
            let b = diffuse_attributes(&idx, &cfg, p);
            assert_eq!(a.weights, b.weights);
        }
    }

    #[test]
    fn midpoint_between_thighs_blends_both_legs() {
        let idx = index();
        // between the thighs at mid-thigh height
        let p = DVec3::new(0.0, 0.7, 0.0);
        let cfg = DiffusionConfig {
            samples: 4096,
            sigma_min: 0.01,
            seed: 5,
        };
        let a = diffuse_attributes(&idx, &cfg, p);
        // l_thigh = joint 10, r_thigh = 13 in the default skeleton
        let l = a.weights[10] + a.weights[11];
        let r = a.weights[13] + a.weights[14];
        assert!(l > 0.1, "left leg weight {l}");
        assert!(r > 0.1, "right leg weight {r}");
        // high-sample oracle agrees within the Monte-Carlo tolerance
        let oracle_cfg = DiffusionConfig {
            samples: 10_000,
            sigma_min: 0.01,
            seed: 17,
        };
        let oracle = diffuse_attributes(&idx, &oracle_cfg, p);
        for (x, y) in a.weights.iter().zip(&oracle.weights) {
            assert!((x - y).abs() <= 0.02, "component drift {x} vs {y}");
        }
    }
}
