//! Posing canonical garments: T_G adds the diffused blendshape offsets at
//! the deformed positions, then linear blend skinning with diffused weights
//! (also at the deformed positions) and the global rigid transform.
//!
//! Two paths share the math: a generic one over any `DiffusedBody` form
//! (oracle or network), and a differentiable op over the network form with
//! an exact vector-Jacobian product for optimizers.

use glam::DVec3;

use body_model::{pose_features, BodyModel, GlobalTransform, JointTransforms, SHAPE_DIM};
use diffuse_field::{DiffusedBody, FieldEval, FieldNet, FoldedHeads};
use nn_core::Mat;

/// Everything that is fixed per frame: forward kinematics, the global
/// transform, pose features, and the folded field heads.
#[derive(Debug, Clone)]
pub struct PoseContext {
    pub beta: [f64; SHAPE_DIM],
    pub features: Vec<f64>,
    pub transforms: JointTransforms,
    pub global: GlobalTransform,
}

impl PoseContext {
    pub fn new(
        body: &BodyModel,
        beta: &[f64; SHAPE_DIM],
        theta: &[DVec3],
        global: &GlobalTransform,
    ) -> Self {
        Self {
            beta: *beta,
            features: pose_features(theta),
            transforms: body.pose_transforms(beta, theta),
            global: *global,
        }
    }
}

/// T_G(X, β, θ): canonical positions plus diffused shape/pose offsets
/// evaluated at those positions. Works with either field form.
pub fn corrected_template(
    field: &dyn DiffusedBody,
    x: &[DVec3],
    beta: &[f64; SHAPE_DIM],
    features: &[f64],
) -> Vec<DVec3> {
    field
        .sample_points(x)
        .into_iter()
        .zip(x)
        .map(|(attrs, xi)| *xi + attrs.shape_offset(beta) + attrs.pose_offset(features))
        .collect()
}

/// M_G(X, β, θ): full posing through any field form. Not differentiable;
/// use [`PosedOp`] inside optimizers.
pub fn pose_garment(
    field: &dyn DiffusedBody,
    ctx: &PoseContext,
    x: &[DVec3],
) -> Vec<DVec3> {
    let attrs = field.sample_points(x);
    x.iter()
        .zip(&attrs)
        .map(|(xi, a)| {
            let corrected = *xi + a.shape_offset(&ctx.beta) + a.pose_offset(&ctx.features);
            let mut blended = DVec3::ZERO;
            for (j, &w) in a.weights.iter().enumerate() {
                if w != 0.0 {
                    blended += ctx.transforms.apply(j, corrected) * w;
                }
            }
            ctx.global.apply(blended)
        })
        .collect()
}

/// Differentiable posing through the network field form.
pub struct PosedOp<'a> {
    pub net: &'a FieldNet,
    pub ctx: &'a PoseContext,
    folded: FoldedHeads,
}

pub struct PosedEval {
    /// T_G(X): corrected canonical positions (meters).
    pub corrected: Vec<DVec3>,
    /// M_G(X): posed world positions (meters).
    pub posed: Vec<DVec3>,
    field: FieldEval,
}

impl<'a> PosedOp<'a> {
    pub fn new(net: &'a FieldNet, ctx: &'a PoseContext) -> Self {
        let folded = net.fold(&ctx.beta, &ctx.features);
        Self { net, ctx, folded }
    }

    pub fn forward(&self, x: &[DVec3]) -> PosedEval {
        let field = self.net.query_folded(x, &self.folded);
        let k = self.net.joint_count();
        let mut corrected = Vec::with_capacity(x.len());
        let mut posed = Vec::with_capacity(x.len());
        for (i, xi) in x.iter().enumerate() {
            let s = field.shape_offset.row(i);
            let p = field.pose_offset.row(i);
            let t = *xi + DVec3::new(s[0], s[1], s[2]) + DVec3::new(p[0], p[1], p[2]);
            corrected.push(t);
            let mut blended = DVec3::ZERO;
            for j in 0..k {
                let w = field.weights.get(i, j);
                if w != 0.0 {
                    blended += self.ctx.transforms.apply(j, t) * w;
                }
            }
            posed.push(self.ctx.global.apply(blended));
        }
        PosedEval {
            corrected,
            posed,
            field,
        }
    }

    /// Pulls cotangents on the posed output and (optionally) the corrected
    /// template back to the canonical positions.
    pub fn vjp(
        &self,
        x: &[DVec3],
        eval: &PosedEval,
        d_posed: &[DVec3],
        d_corrected: Option<&[DVec3]>,
    ) -> Vec<DVec3> {
        let n = x.len();
        let k = self.net.joint_count();
        let g_rot_t = self.ctx.global.rot.transpose();

        let mut d_t = vec![DVec3::ZERO; n];
        let mut d_weights = Mat::zeros(n, k);
        for i in 0..n {
            // through the global transform
            let d_b = g_rot_t * d_posed[i];
            // blended linear part: d_T += (Σ_k w_k R_k)ᵀ d_b
            let mut lin_t_db = DVec3::ZERO;
            let t = eval.corrected[i];
            for j in 0..k {
                let w = eval.field.weights.get(i, j);
                if w != 0.0 {
                    lin_t_db += self.ctx.transforms.rot[j].transpose() * d_b * w;
                }
                // d_w_j = d_b · (A_j t)
                let a_t = self.ctx.transforms.apply(j, t);
                d_weights.set(i, j, d_b.dot(a_t));
            }
            d_t[i] = lin_t_db;
            if let Some(dc) = d_corrected {
                d_t[i] += dc[i];
            }
        }

        // offset heads both receive the corrected-template cotangent
        let mut d_shape = Mat::zeros(n, 3);
        let mut d_pose = Mat::zeros(n, 3);
        for i in 0..n {
            let r = d_shape.row_mut(i);
            r[0] = d_t[i].x;
            r[1] = d_t[i].y;
            r[2] = d_t[i].z;
        }
        for i in 0..n {
            let r = d_pose.row_mut(i);
            r[0] = d_t[i].x;
            r[1] = d_t[i].y;
            r[2] = d_t[i].z;
        }
        let d_x_field =
            self.net
                .query_folded_vjp(&eval.field, &self.folded, &d_weights, &d_shape, &d_pose);

        (0..n).map(|i| d_t[i] + d_x_field[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use body_model::{build_default_body, BodyBuildConfig, BodyParams};
    use diffuse_field::{ClosestPointIndex, DiffusionConfig, FieldNetConfig, OracleField};
    use std::sync::Arc;

    fn setup() -> (Arc<BodyModel>, FieldNet, OracleField) {
        let model = Arc::new(build_default_body(&BodyBuildConfig::default()).unwrap());
        let net = FieldNet::new(FieldNetConfig::for_body(&model, vec![24, 24], 3));
        let index = ClosestPointIndex::new(model.clone());
        let oracle = OracleField::new(
            index,
            DiffusionConfig {
                samples: 64,
                ..DiffusionConfig::default()
            },
        );
        (model, net, oracle)
    }

    fn ring(n: usize, radius: f64, y: f64) -> Vec<DVec3> {
        (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                DVec3::new(radius * a.cos(), y, radius * a.sin())
            })
            .collect()
    }

    #[test]
    fn rest_pose_identity_both_forms() {
        let (model, net, oracle) = setup();
        let rest = BodyParams::rest(model.joint_count());
        let ctx = PoseContext::new(&model, &rest.beta, &rest.theta, &GlobalTransform::identity());
        let x = ring(24, 0.3, 1.0);

        // corrected template is exactly X when β = 0 and θ = rest
        let corr_net = corrected_template(&net, &x, &rest.beta, &ctx.features);
        let corr_oracle = corrected_template(&oracle, &x, &rest.beta, &ctx.features);
        for i in 0..x.len() {
            assert!((corr_net[i] - x[i]).length() < 1e-12);
            assert!((corr_oracle[i] - x[i]).length() < 1e-12);
        }

        // full posing is the identity at rest
        let posed = pose_garment(&net, &ctx, &x);
        for i in 0..x.len() {
            assert!((posed[i] - x[i]).length() < 1e-12);
        }
        let op = PosedOp::new(&net, &ctx);
        let eval = op.forward(&x);
        for i in 0..x.len() {
            assert!((eval.posed[i] - x[i]).length() < 1e-12);
        }
    }

    #[test]
    fn rigid_equivariance() {
        let (model, net, _) = setup();
        let mut theta = vec![DVec3::ZERO; model.joint_count()];
        theta[10] = DVec3::new(0.4, 0.0, 0.2);
        let beta = [0.0; SHAPE_DIM];
        let x = ring(16, 0.28, 0.9);

        let g0 = GlobalTransform::from_euler(DVec3::new(0.1, 0.3, -0.2), DVec3::new(0.5, 0.0, 1.0));
        let extra = glam::DMat3::from_euler(glam::EulerRot::XYZ, -0.6, 0.8, 0.25);
        let g1 = GlobalTransform {
            rot: extra * g0.rot,
            trans: extra * g0.trans,
        };
        let ctx0 = PoseContext::new(&model, &beta, &theta, &g0);
        let ctx1 = PoseContext::new(&model, &beta, &theta, &g1);
        let a = pose_garment(&net, &ctx0, &x);
        let b = pose_garment(&net, &ctx1, &x);
        for i in 0..x.len() {
            assert!(((extra * a[i]) - b[i]).length() < 1e-12);
        }
    }

    #[test]
    fn elbow_bend_matches_oracle_weight_lbs() {
        let (model, _, oracle) = setup();
        let mut theta = vec![DVec3::ZERO; model.joint_count()];
        theta[5] = DVec3::new(0.0, 0.0, 0.8); // l_elbow
        let beta = [0.0; SHAPE_DIM];
        let global = GlobalTransform::identity();
        let ctx = PoseContext::new(&model, &beta, &theta, &global);
        // sleeve-like patch around the left forearm
        let x: Vec<DVec3> = (0..30)
            .map(|i| {
                let t = i as f64 / 29.0;
                let a = std::f64::consts::TAU * (i % 10) as f64 / 10.0;
                let center = DVec3::new(0.40, 1.23, 0.0).lerp(DVec3::new(0.60, 1.05, 0.0), t);
                center + DVec3::new(0.0, 0.07 * a.cos(), 0.07 * a.sin())
            })
            .collect();
        let posed = pose_garment(&oracle, &ctx, &x);
        // brute-force LBS with the same oracle attributes, scalar math
        for (i, xi) in x.iter().enumerate() {
            let attrs = oracle.sample(*xi);
            let t = *xi + attrs.shape_offset(&beta) + attrs.pose_offset(&ctx.features);
            let mut expect = DVec3::ZERO;
            for (j, &w) in attrs.weights.iter().enumerate() {
                let rotated = ctx.transforms.rot[j] * t + ctx.transforms.trans[j];
                expect += rotated * w;
            }
            assert!(
                (posed[i] - expect).length() < 1e-6,
                "vertex {i}: {:?} vs {:?}",
                posed[i],
                expect
            );
        }
    }

    #[test]
    fn continuity_under_small_perturbations() {
        let (model, net, _) = setup();
        let mut theta = vec![DVec3::ZERO; model.joint_count()];
        theta[1] = DVec3::new(0.2, 0.1, 0.0);
        theta[10] = DVec3::new(0.5, 0.0, -0.1);
        let mut beta = [0.0; SHAPE_DIM];
        beta[0] = 1.0;
        let ctx = PoseContext::new(
            &model,
            &beta,
            &theta,
            &GlobalTransform::from_euler(DVec3::new(0.0, 0.4, 0.0), DVec3::new(0.0, 0.0, 0.5)),
        );
        let op = PosedOp::new(&net, &ctx);
        let x = ring(20, 0.3, 0.95);
        let base = op.forward(&x);
        for (pi, delta) in [
            (3usize, DVec3::new(1e-3, 0.0, 0.0)),
            (7, DVec3::new(0.0, -1e-3, 0.0)),
            (12, DVec3::new(0.0, 0.0, 1e-3)),
        ] {
            let mut moved = x.clone();
            moved[pi] += delta;
            let out = op.forward(&moved);
            let dm = (out.posed[pi] - base.posed[pi]).length();
            assert!(dm <= 10.0 * delta.length(), "|ΔM| = {dm}");
            // other vertices untouched (per-vertex locality)
            for i in 0..x.len() {
                if i != pi {
                    assert!((out.posed[i] - base.posed[i]).length() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let (model, net, _) = setup();
        let mut theta = vec![DVec3::ZERO; model.joint_count()];
        theta[5] = DVec3::new(0.1, -0.3, 0.6);
        theta[2] = DVec3::new(0.0, 0.2, 0.1);
        let mut beta = [0.0; SHAPE_DIM];
        beta[1] = 0.8;
        beta[4] = -1.1;
        let ctx = PoseContext::new(
            &model,
            &beta,
            &theta,
            &GlobalTransform::from_euler(DVec3::new(0.2, -0.1, 0.5), DVec3::new(0.1, 0.2, -0.4)),
        );
        let op = PosedOp::new(&net, &ctx);
        let x = ring(12, 0.25, 1.1);

        // scalar probe: fixed random projection of posed + corrected outputs
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let proj_posed: Vec<DVec3> = (0..x.len())
            .map(|_| DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let proj_corr: Vec<DVec3> = (0..x.len())
            .map(|_| DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();

        let f = |pts: &[f64]| -> f64 {
            let xs: Vec<DVec3> = pts
                .chunks_exact(3)
                .map(|c| DVec3::new(c[0], c[1], c[2]))
                .collect();
            let eval = op.forward(&xs);
            eval.posed
                .iter()
                .zip(&proj_posed)
                .map(|(a, b)| a.dot(*b))
                .sum::<f64>()
                + eval
                    .corrected
                    .iter()
                    .zip(&proj_corr)
                    .map(|(a, b)| a.dot(*b))
                    .sum::<f64>()
        };

        let eval = op.forward(&x);
        let d_x = op.vjp(&x, &eval, &proj_posed, Some(&proj_corr));
        let flat: Vec<f64> = x.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let grad: Vec<f64> = d_x.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let report = nn_core::gradcheck::audit_input(f, &flat, &grad, 120, 1e-6, 29);
        assert!(
            report.max_rel_err <= 1e-3,
            "max rel err {} worst {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn shared_fields_pose_multiple_garment_topologies() {
        let (model, net, _) = setup();
        let mut theta = vec![DVec3::ZERO; model.joint_count()];
        theta[10] = DVec3::new(0.3, 0.0, 0.0);
        let beta = [0.0; SHAPE_DIM];
        let ctx = PoseContext::new(&model, &beta, &theta, &GlobalTransform::identity());
        // skirt-like ring and a bib-like sheet share the same trained fields
        let skirt = ring(40, 0.3, 0.95);
        let sheet: Vec<DVec3> = (0..25)
            .map(|i| {
                DVec3::new(
                    -0.12 + 0.06 * (i % 5) as f64,
                    1.15 + 0.05 * (i / 5) as f64,
                    0.16,
                )
            })
            .collect();
        let a = pose_garment(&net, &ctx, &skirt);
        let b = pose_garment(&net, &ctx, &sheet);
        assert_eq!(a.len(), 40);
        assert_eq!(b.len(), 25);
        assert!(a.iter().chain(&b).all(|v| v.is_finite()));
    }
}
