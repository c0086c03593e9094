//! XPBD-style cloth stepping: gravity prediction, distance (stretch) and
//! cross-edge (bend) constraint projection, then a closest-point pushout
//! against the posed body.

use glam::DVec3;

use mesh_core::{TriMesh, TriangleBvh};

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Frame timestep in seconds (1/30 by default), integrated in substeps.
    pub dt: f64,
    pub substeps: usize,
    pub iterations: usize,
    pub stretch_compliance: f64,
    pub bend_compliance: f64,
    /// Velocity damping per substep, in [0, 1).
    pub damping: f64,
    pub gravity: DVec3,
    /// Garments are kept at least this far outside the body.
    pub collision_offset: f64,
    /// Frames simulated at the first pose before recording begins.
    pub settle_frames: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            substeps: 8,
            iterations: 10,
            stretch_compliance: 1e-8,
            bend_compliance: 2e-4,
            damping: 0.07,
            gravity: DVec3::new(0.0, -9.81, 0.0),
            collision_offset: mesh_core::DEFAULT_CLEARANCE_M,
            settle_frames: 45,
            seed: 0,
        }
    }
}

/// Distance constraint between two particles.
#[derive(Debug, Clone, Copy)]
pub struct DistanceConstraint {
    pub a: usize,
    pub b: usize,
    pub rest: f64,
}

#[derive(Debug, Clone)]
pub struct ClothState {
    pub positions: Vec<DVec3>,
    pub velocities: Vec<DVec3>,
    /// Zero marks a pinned vertex.
    pub inv_mass: Vec<f64>,
    pub stretch: Vec<DistanceConstraint>,
    pub bend: Vec<DistanceConstraint>,
}

impl ClothState {
    /// Rest lengths come from the supplied mesh embedding; bend constraints
    /// connect the opposite vertices of each interior edge's triangle pair.
    pub fn from_mesh(mesh: &TriMesh, pinned: &[usize]) -> Self {
        let n = mesh.vertex_count();
        let mut inv_mass = vec![1.0; n];
        for &p in pinned {
            inv_mass[p] = 0.0;
        }
        let mut stretch = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for f in &mesh.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                if seen.insert(key) {
                    stretch.push(DistanceConstraint {
                        a: key.0,
                        b: key.1,
                        rest: (mesh.vertices[key.0] - mesh.vertices[key.1]).length(),
                    });
                }
            }
        }
        // interior edge -> opposite-vertex pair
        let mut edge_faces: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
            Default::default();
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let mut bend = Vec::new();
        for ((a, b), faces) in &edge_faces {
            if faces.len() != 2 {
                continue;
            }
            let opposite = |fi: usize| {
                mesh.faces[fi]
                    .iter()
                    .copied()
                    .find(|v| v != a && v != b)
                    .unwrap()
            };
            let (c, d) = (opposite(faces[0]), opposite(faces[1]));
            bend.push(DistanceConstraint {
                a: c.min(d),
                b: c.max(d),
                rest: (mesh.vertices[c] - mesh.vertices[d]).length(),
            });
        }
        Self {
            velocities: vec![DVec3::ZERO; n],
            positions: mesh.vertices.clone(),
            inv_mass,
            stretch,
            bend,
        }
    }

    pub fn max_stretch_ratio(&self) -> f64 {
        self.stretch
            .iter()
            .map(|c| {
                let len = (self.positions[c.a] - self.positions[c.b]).length();
                (len - c.rest).abs() / c.rest
            })
            .fold(0.0, f64::max)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.velocities
            .iter()
            .zip(&self.inv_mass)
            .filter(|(_, &im)| im > 0.0)
            .map(|(v, _)| 0.5 * v.length_squared())
            .sum()
    }
}

/// Posed body with everything collision pushout needs.
pub struct PosedCollider {
    pub mesh: TriMesh,
    pub bvh: TriangleBvh,
    pub face_normals: Vec<DVec3>,
}

impl PosedCollider {
    pub fn new(mesh: TriMesh) -> Self {
        let bvh = TriangleBvh::build(&mesh);
        let face_normals = (0..mesh.face_count()).map(|fi| mesh.face_normal(fi)).collect();
        Self {
            mesh,
            bvh,
            face_normals,
        }
    }

    /// Pushes `p` to at least `offset` outside the body if it is closer or
    /// inside; returns the corrected position.
    pub fn push_out(&self, p: DVec3, offset: f64) -> DVec3 {
        let hit = self.bvh.closest_point(p);
        let n = self.face_normals[hit.face];
        let side = (p - hit.point).dot(n);
        if side < offset {
            hit.point + n * offset
        } else {
            p
        }
    }

    pub fn signed_side(&self, p: DVec3) -> f64 {
        let hit = self.bvh.closest_point(p);
        (p - hit.point).dot(self.face_normals[hit.face])
    }
}

fn project_constraints(
    positions: &mut [DVec3],
    inv_mass: &[f64],
    constraints: &[DistanceConstraint],
    lambdas: &mut [f64],
    compliance: f64,
    h: f64,
) {
    let alpha = compliance / (h * h);
    for (ci, c) in constraints.iter().enumerate() {
        let wa = inv_mass[c.a];
        let wb = inv_mass[c.b];
        let wsum = wa + wb;
        if wsum == 0.0 {
            continue;
        }
        let delta = positions[c.a] - positions[c.b];
        let len = delta.length();
        if len < 1e-12 {
            continue;
        }
        let violation = len - c.rest;
        let d_lambda = (-violation - alpha * lambdas[ci]) / (wsum + alpha);
        lambdas[ci] += d_lambda;
        let correction = delta / len * d_lambda;
        positions[c.a] += correction * wa;
        positions[c.b] -= correction * wb;
    }
}

/// Advances one frame (all substeps). `pin_targets` gives the start and end
/// positions of each pinned vertex over the frame; pins interpolate across
/// substeps so fast body motion does not teleport the cloth.
pub fn step(
    state: &mut ClothState,
    collider: Option<&PosedCollider>,
    pin_targets: &[(usize, DVec3, DVec3)],
    cfg: &SimConfig,
) {
    let h = cfg.dt / cfg.substeps as f64;
    let mut stretch_lambda = vec![0.0; state.stretch.len()];
    let mut bend_lambda = vec![0.0; state.bend.len()];
    for sub in 0..cfg.substeps {
        let t = (sub + 1) as f64 / cfg.substeps as f64;
        let mut prev = state.positions.clone();
        for i in 0..state.positions.len() {
            if state.inv_mass[i] > 0.0 {
                state.velocities[i] += cfg.gravity * h;
                state.positions[i] += state.velocities[i] * h;
            }
        }
        for &(vi, from, to) in pin_targets {
            // pinned verts follow the body exactly; prev tracks them so the
            // velocity update sees their motion
            prev[vi] = from.lerp(to, (sub as f64) / cfg.substeps as f64);
            state.positions[vi] = from.lerp(to, t);
        }
        stretch_lambda.iter_mut().for_each(|l| *l = 0.0);
        bend_lambda.iter_mut().for_each(|l| *l = 0.0);
        for _ in 0..cfg.iterations {
            project_constraints(
                &mut state.positions,
                &state.inv_mass,
                &state.stretch,
                &mut stretch_lambda,
                cfg.stretch_compliance,
                h,
            );
            project_constraints(
                &mut state.positions,
                &state.inv_mass,
                &state.bend,
                &mut bend_lambda,
                cfg.bend_compliance,
                h,
            );
        }
        if let Some(collider) = collider {
            for i in 0..state.positions.len() {
                if state.inv_mass[i] > 0.0 {
                    state.positions[i] = collider.push_out(state.positions[i], cfg.collision_offset);
                }
            }
        }
        let damp = 1.0 - cfg.damping;
        for i in 0..state.positions.len() {
            state.velocities[i] = (state.positions[i] - prev[i]) / h * damp;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mesh_core::TriMesh;

    fn hanging_sheet(nx: usize, ny: usize, spacing: f64) -> (TriMesh, Vec<usize>) {
        let mut verts = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                verts.push(DVec3::new(
                    i as f64 * spacing,
                    1.0 - j as f64 * spacing,
                    0.0,
                ));
            }
        }
        let mut faces = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                faces.push([a, a + 1, a + nx + 1]);
                faces.push([a, a + nx + 1, a + nx]);
            }
        }
        let pinned: Vec<usize> = (0..nx).collect(); // top row
        (TriMesh::new(verts, faces).unwrap(), pinned)
    }

    #[test]
    fn pinned_cloth_without_gravity_stays_put() {
        let (mesh, pinned) = hanging_sheet(5, 5, 0.05);
        let all: Vec<usize> = (0..mesh.vertex_count()).collect();
        let mut state = ClothState::from_mesh(&mesh, &all);
        let _ = pinned;
        let cfg = SimConfig {
            gravity: DVec3::ZERO,
            ..SimConfig::default()
        };
        let before = state.positions.clone();
        for _ in 0..5 {
            step(&mut state, None, &[], &cfg);
        }
        for (a, b) in state.positions.iter().zip(&before) {
            assert!((*a - *b).length() < 1e-12);
        }
    }

    #[test]
    fn hanging_cloth_settles_with_low_stretch() {
        let (mesh, pinned) = hanging_sheet(8, 10, 0.04);
        let mut state = ClothState::from_mesh(&mesh, &pinned);
        let cfg = SimConfig::default();
        let pins: Vec<(usize, DVec3, DVec3)> = pinned
            .iter()
            .map(|&i| (i, mesh.vertices[i], mesh.vertices[i]))
            .collect();
        for _ in 0..120 {
            step(&mut state, None, &pins, &cfg);
        }
        let stretch = state.max_stretch_ratio();
        assert!(stretch <= 0.02, "max stretch {stretch}");
        // the sheet should hang (lowest row below its rest height)
        let lowest = state
            .positions
            .iter()
            .map(|p| p.y)
            .fold(f64::INFINITY, f64::min);
        assert!(lowest < 1.0 - 9.0 * 0.04 + 0.01);
    }

    #[test]
    fn kinetic_energy_decays_once_motion_stops() {
        let (mesh, pinned) = hanging_sheet(6, 8, 0.05);
        let mut state = ClothState::from_mesh(&mesh, &pinned);
        let cfg = SimConfig::default();
        let pins: Vec<(usize, DVec3, DVec3)> = pinned
            .iter()
            .map(|&i| (i, mesh.vertices[i], mesh.vertices[i]))
            .collect();
        let mut energies = Vec::new();
        for f in 0..140 {
            step(&mut state, None, &pins, &cfg);
            if f >= 60 {
                energies.push(state.kinetic_energy());
            }
        }
        for w in energies.windows(2) {
            assert!(
                w[1] <= w[0] * 1.05 + 1e-12,
                "kinetic energy rose: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}
