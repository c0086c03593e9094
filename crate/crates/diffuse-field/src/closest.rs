//! Closest-point queries against the canonical body with barycentric
//! interpolation of its surface attributes.

use std::sync::Arc;

use glam::DVec3;

use body_model::{BodyModel, SHAPE_DIM};
use mesh_core::{ClosestHit, TriangleBvh};

/// Surface attributes interpolated at one point: the full linear bases, so
/// a single evaluation serves every (β, θ).
#[derive(Debug, Clone)]
pub struct SurfaceAttributes {
    /// Skinning weights, dense over all K joints, nonnegative, sum 1.
    pub weights: Vec<f64>,
    /// Shape-offset basis: offset = Σ_m shape_basis[m]·β_m.
    pub shape_basis: Vec<DVec3>,
    /// Pose-offset basis, flat [coord][feature]; offset_c = Σ_f basis·feat_f.
    pub pose_basis: Vec<f64>,
}

impl SurfaceAttributes {
    pub fn zeros(k: usize, feature_dim: usize) -> Self {
        Self {
            weights: vec![0.0; k],
            shape_basis: vec![DVec3::ZERO; SHAPE_DIM],
            pose_basis: vec![0.0; 3 * feature_dim],
        }
    }

    pub fn scale_accumulate(&mut self, other: &SurfaceAttributes, s: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += s * b;
        }
        for (a, b) in self.shape_basis.iter_mut().zip(&other.shape_basis) {
            *a += *b * s;
        }
        for (a, b) in self.pose_basis.iter_mut().zip(&other.pose_basis) {
            *a += s * b;
        }
    }

    /// Renormalizes weights to sum exactly one.
    pub fn normalize_weights(&mut self) {
        let sum: f64 = self.weights.iter().sum();
        if sum > 0.0 {
            for w in self.weights.iter_mut() {
                *w /= sum;
            }
        }
    }

    pub fn shape_offset(&self, beta: &[f64; SHAPE_DIM]) -> DVec3 {
        let mut o = DVec3::ZERO;
        for m in 0..SHAPE_DIM {
            o += self.shape_basis[m] * beta[m];
        }
        o
    }

    pub fn pose_offset(&self, features: &[f64]) -> DVec3 {
        let f = features.len();
        debug_assert_eq!(self.pose_basis.len(), 3 * f);
        let mut o = [0.0f64; 3];
        for c in 0..3 {
            let row = &self.pose_basis[c * f..(c + 1) * f];
            let mut acc = 0.0;
            for (b, feat) in row.iter().zip(features) {
                acc += b * feat;
            }
            o[c] = acc;
        }
        DVec3::from_array(o)
    }
}

/// BVH over the canonical body plus access to its per-vertex attributes.
#[derive(Clone)]
pub struct ClosestPointIndex {
    pub model: Arc<BodyModel>,
    bvh: TriangleBvh,
}

impl ClosestPointIndex {
    pub fn new(model: Arc<BodyModel>) -> Self {
        let bvh = TriangleBvh::build(&model.template);
        Self { model, bvh }
    }

    pub fn joint_count(&self) -> usize {
        self.model.joint_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.model.pose_feature_dim()
    }

    /// Closest surface point with its barycentric attribute handle.
    pub fn closest(&self, p: DVec3) -> ClosestHit {
        self.bvh.closest_point(p)
    }

    /// Attributes interpolated barycentrically at a closest-point hit.
    pub fn attributes_at(&self, hit: &ClosestHit) -> SurfaceAttributes {
        let face = self.model.template.faces[hit.face];
        let k = self.joint_count();
        let f = self.feature_dim();
        let mut out = SurfaceAttributes::zeros(k, f);
        for (corner, &vi) in face.iter().enumerate() {
            let b = hit.bary[corner];
            if b == 0.0 {
                continue;
            }
            for &(ji, w) in &self.model.weights[vi] {
                out.weights[ji] += b * w;
            }
            for m in 0..SHAPE_DIM {
                out.shape_basis[m] += self.model.shape_basis[vi][m] * b;
            }
            let base = vi * 3 * f;
            for i in 0..3 * f {
                out.pose_basis[i] += b * self.model.pose_basis[base + i];
            }
        }
        out
    }

    pub fn surface_attributes(&self, p: DVec3) -> (SurfaceAttributes, f64) {
        let hit = self.closest(p);
        (self.attributes_at(&hit), hit.distance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use body_model::{build_default_body, BodyBuildConfig};

    fn index() -> ClosestPointIndex {
        let model = build_default_body(&BodyBuildConfig::default()).unwrap();
        ClosestPointIndex::new(Arc::new(model))
    }

    #[test]
    fn body_vertex_returns_own_attributes() {
        let idx = index();
        for vi in (0..idx.model.vertex_count()).step_by(211) {
            let p = idx.model.template.vertices[vi];
            let hit = idx.closest(p);
            assert!(hit.distance < 1e-9);
            let attrs = idx.attributes_at(&hit);
            // interpolated weights at the vertex equal the painted weights
            let mut expect = vec![0.0; idx.joint_count()];
            for &(ji, w) in &idx.model.weights[vi] {
                expect[ji] = w;
            }
            for (a, e) in attrs.weights.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-9, "vertex {vi}");
            }
        }
    }

    #[test]
    fn closest_matches_brute_force() {
        let idx = index();
        let mesh = &idx.model.template;
        for i in 0..60 {
            let p = DVec3::new(
                ((i * 131 % 200) as f64 / 100.0 - 1.0) * 0.8,
                ((i * 197 % 200) as f64 / 100.0) * 1.8,
                ((i * 241 % 200) as f64 / 100.0 - 1.0) * 0.4,
            );
            let hit = idx.closest(p);
            let mut best = f64::INFINITY;
            for f in &mesh.faces {
                let (q, _) = mesh_core::closest_point_on_triangle(
                    p,
                    mesh.vertices[f[0]],
                    mesh.vertices[f[1]],
                    mesh.vertices[f[2]],
                );
                best = best.min((q - p).length());
            }
            assert!((hit.distance - best).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_offset_from_face_returns_that_face() {
        let idx = index();
        let mesh = &idx.model.template;
        // pick a face on the head (locally convex)
        let head = DVec3::new(0.0, 1.58, 0.0);
        let mut best_face = 0;
        let mut best_d = f64::INFINITY;
        for (fi, f) in mesh.faces.iter().enumerate() {
            let c = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
            if (c - head).length() < best_d && c.y > 1.6 {
                best_d = (c - head).length();
                best_face = fi;
            }
        }
        let f = mesh.faces[best_face];
        let centroid = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
        let n = mesh.face_normal(best_face);
        let p = centroid + n * 0.05;
        let hit = idx.closest(p);
        assert!((hit.distance - 0.05).abs() < 1e-6, "d = {}", hit.distance);
        assert!((hit.point - centroid).length() < 1e-6);
    }
}
