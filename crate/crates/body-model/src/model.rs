//! The parametric body: template + blendshapes + skeleton + skinning.

use glam::{DMat3, DQuat, DVec3, EulerRot};

use mesh_core::TriMesh;

use crate::{BodyError, BodyResult};

pub const SHAPE_DIM: usize = 10;

/// Rigid world transform applied after skinning (the root carries it).
#[derive(Debug, Clone, Copy)]
pub struct GlobalTransform {
    pub rot: DMat3,
    pub trans: DVec3,
}

impl GlobalTransform {
    pub fn identity() -> Self {
        Self {
            rot: DMat3::IDENTITY,
            trans: DVec3::ZERO,
        }
    }

    /// Euler angles in XYZ order (radians) plus translation in meters.
    pub fn from_euler(angles: DVec3, trans: DVec3) -> Self {
        Self {
            rot: DMat3::from_euler(EulerRot::XYZ, angles.x, angles.y, angles.z),
            trans,
        }
    }

    pub fn apply(&self, p: DVec3) -> DVec3 {
        self.rot * p + self.trans
    }
}

/// Shape, pose, and global-motion parameters for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    /// Shape coefficients, dimensionless.
    pub beta: [f64; SHAPE_DIM],
    /// Per-joint axis-angle rotations (radians).
    pub theta: Vec<DVec3>,
    /// Global rotation as XYZ Euler angles (radians).
    pub global_rot: DVec3,
    /// Global translation (meters).
    pub global_trans: DVec3,
}

impl BodyParams {
    pub fn rest(joint_count: usize) -> Self {
        Self {
            beta: [0.0; SHAPE_DIM],
            theta: vec![DVec3::ZERO; joint_count],
            global_rot: DVec3::ZERO,
            global_trans: DVec3::ZERO,
        }
    }

    /// Soft range guards; training stays within |β| ≤ 5 and |θ_j| ≤ π.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        for (i, b) in self.beta.iter().enumerate() {
            if b.abs() > 5.0 {
                warnings.push(format!("beta[{i}] = {b:.3} outside training range |β| ≤ 5"));
            }
        }
        for (j, t) in self.theta.iter().enumerate() {
            if t.length() > std::f64::consts::PI {
                warnings.push(format!(
                    "theta[{j}] magnitude {:.3} exceeds π",
                    t.length()
                ));
            }
        }
        warnings
    }

    pub fn global(&self) -> GlobalTransform {
        GlobalTransform::from_euler(self.global_rot, self.global_trans)
    }
}

/// Procedural parametric body. Immutable after construction.
#[derive(Debug, Clone)]
pub struct BodyModel {
    pub template: TriMesh,
    pub joint_names: Vec<String>,
    /// Parent index per joint; root is None.
    pub parents: Vec<Option<usize>>,
    pub rest_joints: Vec<DVec3>,
    /// Row-stochastic sparse skinning weights, at most 4 entries per vertex.
    pub weights: Vec<Vec<(usize, f64)>>,
    /// Shape blendshape basis, per vertex per mode.
    pub shape_basis: Vec<[DVec3; SHAPE_DIM]>,
    /// Normalization constant of each shape mode before unit scaling; lets
    /// callers build exact geometric modes (e.g. +10% size = β₀·scale).
    pub shape_mode_scale: [f64; SHAPE_DIM],
    /// Pose-corrective basis, flat layout [vertex][coord][feature] with
    /// feature dim 9·K (per-joint rotation minus identity, flattened).
    pub pose_basis: Vec<f64>,
    /// Sparse linear joint regressor over template vertices.
    pub joint_regressor: Vec<Vec<(usize, f64)>>,
    /// Painting falloff per joint's influence bone (meters).
    pub bone_sigmas: Vec<f64>,
    /// Identifies the generating recipe (seed, resolution); part of the hash.
    pub build_tag: String,
}

pub fn pose_feature_dim(joint_count: usize) -> usize {
    9 * joint_count
}

/// Flattened (R(θ_j) − I) per joint; exactly zero at rest.
pub fn pose_features(theta: &[DVec3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(9 * theta.len());
    for t in theta {
        let r = rotation_of(*t);
        for row in 0..3 {
            for col in 0..3 {
                let id = if row == col { 1.0 } else { 0.0 };
                out.push(r.col(col)[row] - id);
            }
        }
    }
    out
}

fn rotation_of(axis_angle: DVec3) -> DMat3 {
    let angle = axis_angle.length();
    if angle < 1e-12 {
        DMat3::IDENTITY
    } else {
        DMat3::from_quat(DQuat::from_axis_angle(axis_angle / angle, angle))
    }
}

/// World transform per joint: rotation part and translation part of the
/// skinning matrix A_j = W_j · T(−J_j(β)).
#[derive(Debug, Clone)]
pub struct JointTransforms {
    pub rot: Vec<DMat3>,
    pub trans: Vec<DVec3>,
}

impl JointTransforms {
    pub fn identity(k: usize) -> Self {
        Self {
            rot: vec![DMat3::IDENTITY; k],
            trans: vec![DVec3::ZERO; k],
        }
    }

    #[inline]
    pub fn apply(&self, j: usize, p: DVec3) -> DVec3 {
        self.rot[j] * p + self.trans[j]
    }
}

impl BodyModel {
    pub fn joint_count(&self) -> usize {
        self.rest_joints.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.template.vertex_count()
    }

    pub fn pose_feature_dim(&self) -> usize {
        pose_feature_dim(self.joint_count())
    }

    /// Construction-time invariants; called by the builder and after load.
    pub fn validate(&self) -> BodyResult<()> {
        let k = self.joint_count();
        if self.parents.len() != k || self.joint_names.len() != k {
            return Err(BodyError::Invariant("skeleton arrays disagree on K".into()));
        }
        if self.weights.len() != self.vertex_count() {
            return Err(BodyError::Invariant("weights rows != vertex count".into()));
        }
        for (vi, row) in self.weights.iter().enumerate() {
            if row.is_empty() || row.len() > 4 {
                return Err(BodyError::Invariant(format!(
                    "vertex {vi} has {} weights (expected 1..=4)",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(BodyError::Invariant(format!(
                    "vertex {vi} weight sum {sum} not 1"
                )));
            }
            if row.iter().any(|&(j, w)| j >= k || w < 0.0) {
                return Err(BodyError::Invariant(format!("vertex {vi} bad weight entry")));
            }
        }
        if self.shape_basis.len() != self.vertex_count() {
            return Err(BodyError::Invariant("shape basis rows != vertex count".into()));
        }
        let f = self.pose_feature_dim();
        if self.pose_basis.len() != self.vertex_count() * 3 * f {
            return Err(BodyError::Invariant("pose basis size mismatch".into()));
        }
        if self.joint_regressor.len() != k {
            return Err(BodyError::Invariant("joint regressor rows != K".into()));
        }
        if self.bone_sigmas.len() != k {
            return Err(BodyError::Invariant("bone sigmas != K".into()));
        }
        Ok(())
    }

    /// J(β): joint rest positions regressed linearly from the shaped
    /// template.
    pub fn joints_from_shape(&self, beta: &[f64; SHAPE_DIM]) -> Vec<DVec3> {
        self.joint_regressor
            .iter()
            .map(|row| {
                let mut p = DVec3::ZERO;
                for &(vi, w) in row {
                    p += (self.template.vertices[vi] + self.shape_offset(vi, beta)) * w;
                }
                p
            })
            .collect()
    }

    #[inline]
    pub fn shape_offset(&self, vi: usize, beta: &[f64; SHAPE_DIM]) -> DVec3 {
        let basis = &self.shape_basis[vi];
        let mut o = DVec3::ZERO;
        for m in 0..SHAPE_DIM {
            o += basis[m] * beta[m];
        }
        o
    }

    #[inline]
    pub fn pose_offset(&self, vi: usize, features: &[f64]) -> DVec3 {
        let f = self.pose_feature_dim();
        debug_assert_eq!(features.len(), f);
        let base = vi * 3 * f;
        let mut o = [0.0f64; 3];
        for c in 0..3 {
            let row = &self.pose_basis[base + c * f..base + (c + 1) * f];
            let mut acc = 0.0;
            for (b, feat) in row.iter().zip(features) {
                acc += b * feat;
            }
            o[c] = acc;
        }
        DVec3::from_array(o)
    }

    /// T_B(β, θ): template plus shape and pose blendshape offsets.
    pub fn unposed_body(&self, beta: &[f64; SHAPE_DIM], theta: &[DVec3]) -> Vec<DVec3> {
        let features = pose_features(theta);
        (0..self.vertex_count())
            .map(|vi| {
                self.template.vertices[vi]
                    + self.shape_offset(vi, beta)
                    + self.pose_offset(vi, &features)
            })
            .collect()
    }

    /// Forward kinematics: per-joint skinning transforms A_j(β, θ).
    pub fn pose_transforms(&self, beta: &[f64; SHAPE_DIM], theta: &[DVec3]) -> JointTransforms {
        let joints = self.joints_from_shape(beta);
        let k = self.joint_count();
        assert_eq!(theta.len(), k, "theta joint count");
        let mut world_rot = vec![DMat3::IDENTITY; k];
        let mut world_pos = vec![DVec3::ZERO; k];
        for j in 0..k {
            let local = rotation_of(theta[j]);
            match self.parents[j] {
                None => {
                    world_rot[j] = local;
                    world_pos[j] = joints[j];
                }
                Some(p) => {
                    debug_assert!(p < j, "parents must precede children");
                    let offset = joints[j] - joints[p];
                    world_rot[j] = world_rot[p] * local;
                    world_pos[j] = world_pos[p] + world_rot[p] * offset;
                }
            }
        }
        // A_j = T(world_pos) R(world_rot) T(−J_j)
        let trans = (0..k)
            .map(|j| world_pos[j] - world_rot[j] * joints[j])
            .collect();
        JointTransforms {
            rot: world_rot,
            trans,
        }
    }

    /// One influence segment per joint: joint to the mean of its
    /// children, extended past the rest offset for leaf joints.
    pub fn influence_bones(&self) -> Vec<(DVec3, DVec3)> {
        let k = self.joint_count();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (j, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(j);
            }
        }
        (0..k)
            .map(|j| {
                let a = self.rest_joints[j];
                let b = if children[j].is_empty() {
                    let dir = match self.parents[j] {
                        Some(p) => a - self.rest_joints[p],
                        None => DVec3::Y * 0.1,
                    };
                    a + dir * 0.4
                } else {
                    let mut m = DVec3::ZERO;
                    for &c in &children[j] {
                        m += self.rest_joints[c];
                    }
                    m / children[j].len() as f64
                };
                (a, b)
            })
            .collect()
    }

    /// M_B(β, θ) with global motion: full linear blend skinning.
    pub fn skin_body(&self, params: &BodyParams) -> TriMesh {
        self.skin_body_with_global(&params.beta, &params.theta, &params.global())
    }

    pub fn skin_body_with_global(
        &self,
        beta: &[f64; SHAPE_DIM],
        theta: &[DVec3],
        global: &GlobalTransform,
    ) -> TriMesh {
        let unposed = self.unposed_body(beta, theta);
        let transforms = self.pose_transforms(beta, theta);
        let posed = skin_points(&unposed, &self.weights, &transforms, global);
        TriMesh {
            vertices: posed,
            faces: self.template.faces.clone(),
            attributes: Default::default(),
        }
    }
}

/// Weight-blended application of joint transforms followed by the global
/// rigid transform. Shared by the body and the garment skinning paths.
pub fn skin_points(
    points: &[DVec3],
    weights: &[Vec<(usize, f64)>],
    transforms: &JointTransforms,
    global: &GlobalTransform,
) -> Vec<DVec3> {
    assert_eq!(points.len(), weights.len());
    points
        .iter()
        .zip(weights)
        .map(|(p, row)| {
            let mut blended = DVec3::ZERO;
            for &(j, w) in row {
                blended += transforms.apply(j, *p) * w;
            }
            global.apply(blended)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-joint toy model for transform-level checks.
    fn toy_model() -> BodyModel {
        let verts = vec![
            DVec3::new(0.0, 0.0, 0.0),
            DVec3::new(0.0, 1.0, 0.0),
            DVec3::new(0.1, 2.0, 0.0),
            DVec3::new(-0.1, 2.0, 0.1),
        ];
        let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]];
        let template = TriMesh::new(verts, faces).unwrap();
        let f = pose_feature_dim(2);
        BodyModel {
            template,
            joint_names: vec!["root".into(), "tip".into()],
            parents: vec![None, Some(0)],
            rest_joints: vec![DVec3::ZERO, DVec3::new(0.0, 1.0, 0.0)],
            weights: vec![
                vec![(0, 1.0)],
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
            ],
            shape_basis: vec![[DVec3::ZERO; SHAPE_DIM]; 4],
            shape_mode_scale: [1.0; SHAPE_DIM],
            pose_basis: vec![0.0; 4 * 3 * f],
            joint_regressor: vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            bone_sigmas: vec![0.1, 0.1],
            build_tag: "toy".into(),
        }
    }

    #[test]
    fn rest_pose_is_identity() {
        let m = toy_model();
        let rest = BodyParams::rest(2);
        let posed = m.skin_body(&rest);
        for (a, b) in posed.vertices.iter().zip(&m.template.vertices) {
            assert!((*a - *b).length() < 1e-12);
        }
    }

    #[test]
    fn one_hot_weights_follow_joint_transform() {
        let m = toy_model();
        let mut theta = vec![DVec3::ZERO; 2];
        theta[1] = DVec3::new(0.0, 0.0, 0.9); // bend at the tip joint
        let transforms = m.pose_transforms(&[0.0; SHAPE_DIM], &theta);
        let posed = m.skin_body_with_global(&[0.0; SHAPE_DIM], &theta, &GlobalTransform::identity());
        // vertices 2 and 3 carry one-hot weight on joint 1: they must equal
        // the joint transform applied directly (independent oracle)
        for vi in [2usize, 3] {
            let expect = transforms.apply(1, m.template.vertices[vi]);
            assert!((posed.vertices[vi] - expect).length() < 1e-12);
        }
        // joint-1 pivot stays fixed
        let pivot = transforms.apply(1, DVec3::new(0.0, 1.0, 0.0));
        assert!((pivot - DVec3::new(0.0, 1.0, 0.0)).length() < 1e-12);
    }

    #[test]
    fn rigid_equivariance_of_global() {
        let m = toy_model();
        let mut theta = vec![DVec3::ZERO; 2];
        theta[0] = DVec3::new(0.3, 0.1, -0.2);
        theta[1] = DVec3::new(0.0, 0.5, 0.4);
        let beta = [0.0; SHAPE_DIM];

        let g0 = GlobalTransform::from_euler(DVec3::new(0.2, -0.7, 0.5), DVec3::new(1.0, 2.0, 3.0));
        let extra = DMat3::from_euler(EulerRot::XYZ, 0.9, 0.4, -1.2);
        let composed = GlobalTransform {
            rot: extra * g0.rot,
            trans: extra * g0.trans,
        };

        let base = m.skin_body_with_global(&beta, &theta, &g0);
        let rotated = m.skin_body_with_global(&beta, &theta, &composed);
        for (a, b) in base.vertices.iter().zip(&rotated.vertices) {
            assert!(((extra * *a) - *b).length() < 1e-12);
        }
    }

    #[test]
    fn pose_features_zero_at_rest() {
        let f = pose_features(&vec![DVec3::ZERO; 5]);
        assert_eq!(f.len(), 45);
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn translation_invariance_from_row_stochastic_weights() {
        let m = toy_model();
        let theta = vec![DVec3::new(0.1, 0.2, 0.3), DVec3::new(-0.2, 0.4, 0.0)];
        let beta = [0.0; SHAPE_DIM];
        let t = m.pose_transforms(&beta, &theta);
        let shift = DVec3::new(0.5, -1.0, 0.25);
        // pure translation of the input points translates each blended
        // output by the weight-blended rotations applied to the shift
        let pts = vec![DVec3::new(0.0, 0.5, 0.0)];
        let w = vec![vec![(0, 0.5), (1, 0.5)]];
        let g = GlobalTransform::identity();
        let a = skin_points(&pts, &w, &t, &g)[0];
        let b = skin_points(&[pts[0] + shift], &w, &t, &g)[0];
        let blended_rot_shift = t.rot[0] * shift * 0.5 + t.rot[1] * shift * 0.5;
        assert!((b - a - blended_rot_shift).length() < 1e-12);
    }
}
