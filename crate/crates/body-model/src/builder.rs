//! Generates the default humanoid: capsule-sketched limbs merged into a
//! watertight template, bone-distance skinning weights, ten hand-designed
//! shape modes, and smoothed random pose correctives.

use glam::DVec3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mesh_core::{check_watertight, TriMesh};

use crate::implicit::{capsule_distance, CapsuleField};
use crate::model::{pose_feature_dim, BodyModel, SHAPE_DIM};
use crate::tetra::marching_tetrahedra;
use crate::BodyResult;

#[derive(Debug, Clone)]
pub struct BodyBuildConfig {
    pub cell_size: f64,
    pub blend: f64,
    pub seed: u64,
    /// Amplitude of the pose-corrective coefficients (meters per unit
    /// rotation feature).
    pub pose_basis_scale: f64,
}

impl Default for BodyBuildConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.042,
            blend: 0.035,
            seed: 0x0b0d1,
            pose_basis_scale: 0.004,
        }
    }
}

struct Joint {
    name: &'static str,
    parent: Option<usize>,
    pos: DVec3,
    /// Influence-bone endpoint for weight painting (usually the child).
    bone_end: DVec3,
    sigma: f64,
}

fn designed_skeleton() -> Vec<Joint> {
    let j = |name, parent, pos: (f64, f64, f64), bone_end: (f64, f64, f64), sigma| Joint {
        name,
        parent,
        pos: DVec3::new(pos.0, pos.1, pos.2),
        bone_end: DVec3::new(bone_end.0, bone_end.1, bone_end.2),
        sigma,
    };
    vec![
        j("pelvis", None, (0.0, 0.98, 0.0), (0.0, 1.14, 0.0), 0.15),
        j("spine", Some(0), (0.0, 1.14, 0.0), (0.0, 1.30, 0.0), 0.14),
        j("chest", Some(1), (0.0, 1.30, 0.0), (0.0, 1.44, 0.0), 0.14),
        j("head", Some(2), (0.0, 1.56, 0.0), (0.0, 1.66, 0.0), 0.10),
        j("l_shoulder", Some(2), (0.17, 1.44, 0.0), (0.40, 1.23, 0.0), 0.072),
        j("l_elbow", Some(4), (0.40, 1.23, 0.0), (0.60, 1.05, 0.0), 0.062),
        j("l_wrist", Some(5), (0.60, 1.05, 0.0), (0.67, 0.99, 0.0), 0.06),
        j("r_shoulder", Some(2), (-0.17, 1.44, 0.0), (-0.40, 1.23, 0.0), 0.072),
        j("r_elbow", Some(7), (-0.40, 1.23, 0.0), (-0.60, 1.05, 0.0), 0.062),
        j("r_wrist", Some(8), (-0.60, 1.05, 0.0), (-0.67, 0.99, 0.0), 0.06),
        j("l_hip", Some(0), (0.10, 0.93, 0.0), (0.11, 0.52, 0.0), 0.095),
        j("l_knee", Some(10), (0.11, 0.52, 0.0), (0.11, 0.08, 0.0), 0.078),
        j("l_ankle", Some(11), (0.11, 0.08, 0.0), (0.11, 0.045, 0.11), 0.065),
        j("r_hip", Some(0), (-0.10, 0.93, 0.0), (-0.11, 0.52, 0.0), 0.095),
        j("r_knee", Some(13), (-0.11, 0.52, 0.0), (-0.11, 0.08, 0.0), 0.078),
        j("r_ankle", Some(14), (-0.11, 0.08, 0.0), (-0.11, 0.045, 0.11), 0.065),
    ]
}

pub fn default_capsules() -> CapsuleField {
    let c = |a: (f64, f64, f64), b: (f64, f64, f64), r: f64| {
        (
            DVec3::new(a.0, a.1, a.2),
            DVec3::new(b.0, b.1, b.2),
            r,
        )
    };
    let mut capsules = vec![
        // torso and head
        c((0.0, 0.93, 0.0), (0.0, 1.03, 0.0), 0.115),
        c((0.0, 1.00, 0.0), (0.0, 1.17, 0.0), 0.115),
        c((0.0, 1.17, 0.0), (0.0, 1.34, 0.0), 0.12),
        c((0.0, 1.34, 0.0), (0.0, 1.50, 0.0), 0.056),
        c((0.0, 1.53, 0.0), (0.0, 1.62, 0.0), 0.086),
    ];
    // arms, hips, legs on both sides
    for s in [1.0f64, -1.0] {
        capsules.extend_from_slice(&[
            c((s * 0.05, 1.40, 0.0), (s * 0.17, 1.44, 0.0), 0.062),
            c((s * 0.17, 1.44, 0.0), (s * 0.40, 1.23, 0.0), 0.050),
            c((s * 0.40, 1.23, 0.0), (s * 0.60, 1.05, 0.0), 0.050),
            c((s * 0.60, 1.05, 0.0), (s * 0.67, 0.99, 0.0), 0.052),
            c((s * 0.04, 0.96, 0.0), (s * 0.10, 0.93, 0.0), 0.080),
            c((s * 0.10, 0.93, 0.0), (s * 0.11, 0.52, 0.0), 0.063),
            c((s * 0.11, 0.52, 0.0), (s * 0.11, 0.08, 0.0), 0.050),
            c((s * 0.11, 0.08, 0.0), (s * 0.11, 0.045, 0.11), 0.050),
        ]);
    }
    CapsuleField {
        capsules,
        blend: 0.035,
    }
}

pub fn build_default_body(cfg: &BodyBuildConfig) -> BodyResult<BodyModel> {
    let mut field = default_capsules();
    field.blend = cfg.blend;
    let (lo, hi) = field.bounds(2.0 * cfg.cell_size);
    let dims = [
        ((hi.x - lo.x) / cfg.cell_size).ceil() as usize + 1,
        ((hi.y - lo.y) / cfg.cell_size).ceil() as usize + 1,
        ((hi.z - lo.z) / cfg.cell_size).ceil() as usize + 1,
    ];
    let eval = |p: DVec3| field.eval(p);
    let mut template = marching_tetrahedra(&eval, lo, cfg.cell_size, dims);
    keep_largest_component(&mut template);
    check_watertight(&template)?;
    template.validate_connected()?;
    if template.signed_volume() < 0.0 {
        for f in template.faces.iter_mut() {
            f.swap(1, 2);
        }
    }

    let skeleton = designed_skeleton();
    let _k = skeleton.len();

    // sparse joint regressor over the template, from the designed skeleton
    let joint_regressor: Vec<Vec<(usize, f64)>> = skeleton
        .iter()
        .map(|j| regressor_row(&template, j.pos))
        .collect();
    // the model's rest skeleton is whatever the regressor reproduces at β=0,
    // so joints_from_shape(0) is exact by definition
    let rest_joints: Vec<DVec3> = joint_regressor
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(vi, w)| template.vertices[vi] * w)
                .sum::<DVec3>()
        })
        .collect();

    // influence bones follow the regressed joints (same offsets as designed)
    let bones: Vec<(DVec3, DVec3, f64)> = skeleton
        .iter()
        .enumerate()
        .map(|(ji, j)| {
            let shift = rest_joints[ji] - j.pos;
            (rest_joints[ji], j.bone_end + shift, j.sigma)
        })
        .collect();

    let neighbors = template.vertex_neighbors();
    let weights = paint_weights(&template, &bones, &neighbors);
    let (shape_basis, shape_mode_scale) = shape_modes(&template, &rest_joints, &bones);
    let pose_basis = pose_correctives(&template, &bones, &neighbors, cfg);

    let model = BodyModel {
        joint_names: skeleton.iter().map(|j| j.name.to_string()).collect(),
        parents: skeleton.iter().map(|j| j.parent).collect(),
        rest_joints,
        weights,
        shape_basis,
        shape_mode_scale,
        pose_basis,
        joint_regressor,
        bone_sigmas: skeleton.iter().map(|j| j.sigma).collect(),
        build_tag: format!(
            "capsule-body cell={} blend={} seed={}",
            cfg.cell_size, cfg.blend, cfg.seed
        ),
        template,
    };
    model.validate()?;
    Ok(model)
}

fn keep_largest_component(mesh: &mut TriMesh) {
    if mesh.connected_components() <= 1 {
        return;
    }
    // label vertices by union-find over faces
    let n = mesh.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for f in &mesh.faces {
        let a = find(&mut parent, f[0]);
        let b = find(&mut parent, f[1]);
        let c = find(&mut parent, f[2]);
        parent[b] = a;
        parent[c] = a;
    }
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for f in &mesh.faces {
        *counts.entry(find(&mut parent, f[0])).or_insert(0) += 1;
    }
    let (&keep_root, _) = counts.iter().max_by_key(|(_, &c)| c).unwrap();
    let faces: Vec<[usize; 3]> = mesh
        .faces
        .iter()
        .filter(|f| find(&mut parent, f[0]) == keep_root)
        .copied()
        .collect();
    // compact vertices
    let mut remap = vec![usize::MAX; n];
    let mut verts = Vec::new();
    let mut new_faces = Vec::with_capacity(faces.len());
    for f in &faces {
        let mut nf = [0usize; 3];
        for (k, &vi) in f.iter().enumerate() {
            if remap[vi] == usize::MAX {
                remap[vi] = verts.len();
                verts.push(mesh.vertices[vi]);
            }
            nf[k] = remap[vi];
        }
        new_faces.push(nf);
    }
    mesh.vertices = verts;
    mesh.faces = new_faces;
}

fn regressor_row(template: &TriMesh, joint: DVec3) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = template
        .vertices
        .iter()
        .enumerate()
        .map(|(vi, v)| (vi, (*v - joint).length()))
        .collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let take = 20.min(scored.len());
    let mut row: Vec<(usize, f64)> = scored[..take]
        .iter()
        .map(|&(vi, d)| (vi, (-d * d / (2.0 * 0.07f64.powi(2))).exp()))
        .collect();
    let sum: f64 = row.iter().map(|(_, w)| w).sum();
    for e in row.iter_mut() {
        e.1 /= sum;
    }
    row.sort_by_key(|e| e.0);
    row
}

fn paint_weights(
    template: &TriMesh,
    bones: &[(DVec3, DVec3, f64)],
    neighbors: &[Vec<usize>],
) -> Vec<Vec<(usize, f64)>> {
    let n = template.vertices.len();
    let k = bones.len();
    // dense scores, stabilized against underflow by the per-vertex minimum
    let mut dense = vec![0.0f64; n * k];
    for (vi, v) in template.vertices.iter().enumerate() {
        let scores: Vec<f64> = bones
            .iter()
            .map(|&(a, b, sigma)| {
                let d = capsule_distance(*v, a, b, 0.0).max(0.0);
                (d / sigma).powi(2)
            })
            .collect();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        for (ji, s) in scores.iter().enumerate() {
            dense[vi * k + ji] = (-(s - min)).exp();
        }
    }
    // graph smoothing keeps limb boundaries gradual
    for _ in 0..10 {
        let mut next = dense.clone();
        for vi in 0..n {
            let nb = &neighbors[vi];
            if nb.is_empty() {
                continue;
            }
            for ji in 0..k {
                let mut avg = 0.0;
                for &u in nb {
                    avg += dense[u * k + ji];
                }
                avg /= nb.len() as f64;
                next[vi * k + ji] = 0.55 * dense[vi * k + ji] + 0.45 * avg;
            }
        }
        dense = next;
    }
    // keep the 4 strongest influences, renormalize exactly
    (0..n)
        .map(|vi| {
            let mut entries: Vec<(usize, f64)> =
                (0..k).map(|ji| (ji, dense[vi * k + ji])).collect();
            entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            entries.truncate(4);
            entries.retain(|&(_, w)| w > 1e-12);
            let sum: f64 = entries.iter().map(|(_, w)| w).sum();
            let mut row: Vec<(usize, f64)> =
                entries.into_iter().map(|(ji, w)| (ji, w / sum)).collect();
            row.sort_by_key(|e| e.0);
            row
        })
        .collect()
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp()
}

fn nearest_bone_radial(v: DVec3, bones: &[(DVec3, DVec3, f64)], indices: &[usize]) -> (DVec3, f64) {
    let mut best = (DVec3::ZERO, f64::INFINITY);
    for &bi in indices {
        let (a, b, _) = bones[bi];
        let ab = b - a;
        let t = if ab.length_squared() > 0.0 {
            ((v - a).dot(ab) / ab.length_squared()).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let axis_point = a + ab * t;
        let d = (v - axis_point).length();
        if d < best.1 {
            best = (v - axis_point, d);
        }
    }
    best
}

/// Ten hand-designed deformation modes, normalized to 1 cm of maximum
/// vertex displacement per unit coefficient. Mode 0 is exact uniform scale
/// about the pelvis so geometric tests can construct closed-form
/// expectations.
fn shape_modes(
    template: &TriMesh,
    joints: &[DVec3],
    bones: &[(DVec3, DVec3, f64)],
) -> (Vec<[DVec3; SHAPE_DIM]>, [f64; SHAPE_DIM]) {
    let n = template.vertices.len();
    let pelvis = joints[0];
    let head_center = joints[3] + DVec3::new(0.0, 0.02, 0.0);
    let arm_bones = [4usize, 5, 6, 7, 8, 9];
    let leg_bones = [10usize, 11, 12, 13, 14, 15];

    let mut raw: Vec<[DVec3; SHAPE_DIM]> = vec![[DVec3::ZERO; SHAPE_DIM]; n];
    for (vi, v) in template.vertices.iter().enumerate() {
        let rho = (v.x * v.x + v.z * v.z).sqrt();
        let torso_mask = smoothstep(0.86, 0.98, v.y)
            * (1.0 - smoothstep(1.38, 1.50, v.y))
            * (1.0 - smoothstep(0.15, 0.22, rho));

        // 0: uniform scale about the pelvis (exact by construction)
        raw[vi][0] = *v - pelvis;
        // 1: height-only scale
        raw[vi][1] = DVec3::new(0.0, v.y - pelvis.y, 0.0);
        // 2: torso width
        raw[vi][2] = DVec3::new(v.x, 0.0, v.z * 0.4) * torso_mask;
        // 3: arm girth
        let (arm_rad, arm_d) = nearest_bone_radial(*v, bones, &arm_bones);
        raw[vi][3] = arm_rad.normalize_or_zero() * gauss(arm_d, 0.075);
        // 4: leg girth
        let (leg_rad, leg_d) = nearest_bone_radial(*v, bones, &leg_bones);
        raw[vi][4] = leg_rad.normalize_or_zero() * gauss(leg_d, 0.09);
        // 5: belly
        let belly = DVec3::new(0.0, 1.05, 0.02);
        let to_belly = *v - belly;
        raw[vi][5] = to_belly.normalize_or_zero() * gauss(to_belly.length(), 0.12);
        // 6: shoulder width
        raw[vi][6] = DVec3::new(v.x.signum(), 0.0, 0.0)
            * smoothstep(0.05, 0.14, v.x.abs())
            * gauss(v.y - 1.42, 0.08);
        // 7: hip width
        raw[vi][7] =
            DVec3::new(v.x.signum(), 0.0, 0.0) * smoothstep(0.02, 0.09, v.x.abs()) * gauss(v.y - 0.94, 0.07);
        // 8: chest depth (front-biased)
        raw[vi][8] = DVec3::new(0.0, 0.0, 1.0)
            * gauss(v.y - 1.26, 0.09)
            * smoothstep(-0.02, 0.08, v.z)
            * (1.0 - smoothstep(0.15, 0.22, rho.min(0.3)));
        // 9: head size
        let to_head = *v - head_center;
        raw[vi][9] = to_head * gauss(to_head.length(), 0.085);
    }

    // normalize every mode to a 1 cm maximum per-vertex displacement per
    // unit coefficient, so β in the [−2, 2] training range deforms surfaces
    // by at most ±2 cm per mode and bodies stay self-intersection free
    let mut scales = [1.0f64; SHAPE_DIM];
    for m in 0..SHAPE_DIM {
        let max_disp: f64 = raw
            .iter()
            .map(|modes| modes[m].length())
            .fold(0.0, f64::max)
            .max(1e-12);
        scales[m] = 0.01 / max_disp;
        for modes in raw.iter_mut() {
            modes[m] *= scales[m];
        }
    }
    (raw, scales)
}

/// Small random-then-smoothed coefficients localized around each joint's
/// bone; exactly zero at the rest pose because the features vanish there.
fn pose_correctives(
    template: &TriMesh,
    bones: &[(DVec3, DVec3, f64)],
    neighbors: &[Vec<usize>],
    cfg: &BodyBuildConfig,
) -> Vec<f64> {
    use rand::SeedableRng;
    let n = template.vertices.len();
    let k = bones.len();
    let f = pose_feature_dim(k);
    let mut basis = vec![0.0f64; n * 3 * f];

    // per-joint proximity masks
    let masks: Vec<Vec<f64>> = bones
        .iter()
        .map(|&(a, b, sigma)| {
            template
                .vertices
                .iter()
                .map(|v| {
                    let d = capsule_distance(*v, a, b, 0.0).max(0.0);
                    gauss(d, sigma * 1.3)
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e3779b97f4a7c15);
    let mut field = vec![0.0f64; n];
    for ji in 0..k {
        for entry in 0..9 {
            for coord in 0..3 {
                for x in field.iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
                for _ in 0..8 {
                    let mut next = field.clone();
                    for vi in 0..n {
                        let nb = &neighbors[vi];
                        if nb.is_empty() {
                            continue;
                        }
                        let avg: f64 = nb.iter().map(|&u| field[u]).sum::<f64>() / nb.len() as f64;
                        next[vi] = 0.5 * field[vi] + 0.5 * avg;
                    }
                    field = next;
                }
                let max_abs = field.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
                let feature = ji * 9 + entry;
                for vi in 0..n {
                    basis[vi * 3 * f + coord * f + feature] =
                        field[vi] / max_abs * masks[ji][vi] * cfg.pose_basis_scale;
                }
            }
        }
    }
    basis
}
