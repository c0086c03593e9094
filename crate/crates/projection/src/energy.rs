//! The three projection energies and their exact gradients with respect to
//! the canonical positions.

use glam::DVec3;

use diffuse_field::{SdfField, SdfMode, SdfNet};
use garment_model::{PosedEval, PosedOp};
use mesh_core::{deformation_gradient, green_lagrange_strain, RestGeometry};

use crate::{ProjectionError, ProjectionErrorResult};

#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyBreakdown {
    pub rec: f64,
    pub strain: f64,
    pub collision: f64,
}

impl EnergyBreakdown {
    pub fn total(&self, omega_strain: f64, omega_collision: f64) -> f64 {
        self.rec + omega_strain * self.strain + omega_collision * self.collision
    }
}

/// Squared L2 between the reposed reconstruction and the simulated target.
pub fn energy_rec(posed: &[DVec3], target: &[DVec3]) -> ProjectionErrorResult<f64> {
    if posed.len() != target.len() {
        return Err(ProjectionError::CorrespondenceMismatch {
            expected: posed.len(),
            got: target.len(),
        });
    }
    Ok(posed
        .iter()
        .zip(target)
        .map(|(a, b)| (*a - *b).length_squared())
        .sum())
}

/// Frobenius-squared Green-Lagrange strain of the corrected template
/// against the garment template rest state.
pub fn energy_strain(corrected: &[DVec3], rest: &RestGeometry) -> ProjectionErrorResult<f64> {
    let f = deformation_gradient(rest, corrected)?;
    Ok(green_lagrange_strain(&f)
        .iter()
        .map(|e| e.iter().flatten().map(|x| x * x).sum::<f64>())
        .sum())
}

/// Hinge clearance penalty against the canonical-body SDF.
pub fn energy_collision(x: &[DVec3], sdf: &SdfField, clearance: f64, mode: SdfMode) -> f64 {
    x.iter()
        .map(|&p| (clearance - sdf.query(p, mode).value).max(0.0))
        .sum()
}

/// Fused evaluation of the full projection objective with its gradient.
/// The collision term goes through the network SDF so its gradient is
/// smooth; the grid form is only used for reporting.
pub struct EnergyModel<'a> {
    pub op: &'a PosedOp<'a>,
    pub rest: &'a RestGeometry,
    pub sdf_net: &'a SdfNet,
    pub target: &'a [DVec3],
    pub omega_strain: f64,
    pub omega_collision: f64,
    pub clearance: f64,
}

impl<'a> EnergyModel<'a> {
    pub fn energy_only(&self, x: &[DVec3]) -> ProjectionErrorResult<(EnergyBreakdown, PosedEval)> {
        let eval = self.op.forward(x);
        let rec = energy_rec(&eval.posed, self.target)?;
        let strain = energy_strain(&eval.corrected, self.rest)?;
        let sdf_vals = self.sdf_net.forward_batch(x);
        let collision: f64 = sdf_vals
            .values
            .iter()
            .map(|&s| (self.clearance - s).max(0.0))
            .sum();
        Ok((
            EnergyBreakdown {
                rec,
                strain,
                collision,
            },
            eval,
        ))
    }

    /// Energy and gradient with respect to the canonical positions.
    pub fn energy_grad(
        &self,
        x: &[DVec3],
    ) -> ProjectionErrorResult<(EnergyBreakdown, Vec<DVec3>)> {
        let eval = self.op.forward(x);
        let rec = energy_rec(&eval.posed, self.target)?;
        let d_posed: Vec<DVec3> = eval
            .posed
            .iter()
            .zip(self.target)
            .map(|(a, b)| (*a - *b) * 2.0)
            .collect();

        // strain: dE/dP per triangle = 2 F E D⁻ᵀ scattered to the corners
        let f_grads = deformation_gradient(self.rest, &eval.corrected)?;
        let strains = green_lagrange_strain(&f_grads);
        let strain_energy: f64 = strains
            .iter()
            .map(|e| e.iter().flatten().map(|v| v * v).sum::<f64>())
            .sum();
        let mut d_corrected = vec![DVec3::ZERO; x.len()];
        for (ti, face) in self.rest.faces.iter().enumerate() {
            let f = &f_grads[ti];
            let e = &strains[ti];
            // FE (3x2)
            let fe0 = f[0] * e[0][0] + f[1] * e[1][0];
            let fe1 = f[0] * e[0][1] + f[1] * e[1][1];
            let dinv = self.rest.rest_inverse(ti);
            // dP = 2 FE D⁻ᵀ, columns correspond to p1−p0 and p2−p0
            let dp0 = (fe0 * dinv[0][0] + fe1 * dinv[0][1]) * 2.0 * self.omega_strain;
            let dp1 = (fe0 * dinv[1][0] + fe1 * dinv[1][1]) * 2.0 * self.omega_strain;
            d_corrected[face[1]] += dp0;
            d_corrected[face[2]] += dp1;
            d_corrected[face[0]] -= dp0 + dp1;
        }

        // collision through the network SDF, directly on the canonical x
        let sdf_eval = self.sdf_net.forward_batch(x);
        let mut collision = 0.0;
        let d_sdf: Vec<f64> = sdf_eval
            .values
            .iter()
            .map(|&s| {
                let h = self.clearance - s;
                if h > 0.0 {
                    collision += h;
                    -self.omega_collision
                } else {
                    0.0
                }
            })
            .collect();
        let d_x_collision = self.sdf_net.vjp(&sdf_eval, &d_sdf);

        let mut grad = self.op.vjp(x, &eval, &d_posed, Some(&d_corrected));
        for (g, dc) in grad.iter_mut().zip(&d_x_collision) {
            *g += *dc;
        }
        Ok((
            EnergyBreakdown {
                rec,
                strain: strain_energy,
                collision,
            },
            grad,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use glam::DVec3;
    use mesh_core::TriMesh;

    fn small_sheet() -> (TriMesh, RestGeometry) {
        let mut verts = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                verts.push(DVec3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
            }
        }
        let mut faces = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                let a = j * 4 + i;
                faces.push([a, a + 1, a + 5]);
                faces.push([a, a + 5, a + 4]);
            }
        }
        let mesh = TriMesh::new(verts, faces).unwrap();
        let rest = RestGeometry::new(&mesh).unwrap();
        (mesh, rest)
    }

    #[test]
    fn rec_energy_of_uniform_offset() {
        let n = 50;
        let a: Vec<DVec3> = (0..n).map(|i| DVec3::new(i as f64, 0.0, 0.0)).collect();
        let b: Vec<DVec3> = a.iter().map(|v| *v + DVec3::new(0.0, 0.01, 0.0)).collect();
        let e = energy_rec(&a, &b).unwrap();
        assert!((e - n as f64 * 1e-4).abs() < 1e-12);
        assert_eq!(energy_rec(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rec_energy_matches_direct_sum() {
        let a: Vec<DVec3> = (0..20)
            .map(|i| DVec3::new((i as f64).sin(), (i as f64).cos(), i as f64 * 0.1))
            .collect();
        let b: Vec<DVec3> = (0..20)
            .map(|i| DVec3::new((i as f64 * 1.3).cos(), i as f64 * 0.05, -(i as f64).sin()))
            .collect();
        let e = energy_rec(&a, &b).unwrap();
        let oracle: f64 = (0..20)
            .map(|i| {
                let d = a[i] - b[i];
                d.x * d.x + d.y * d.y + d.z * d.z
            })
            .sum();
        assert!((e - oracle).abs() < 1e-12);
    }

    #[test]
    fn rec_energy_correspondence_mismatch() {
        let a = vec![DVec3::ZERO; 5];
        let b = vec![DVec3::ZERO; 6];
        assert!(matches!(
            energy_rec(&a, &b),
            Err(ProjectionError::CorrespondenceMismatch { .. })
        ));
    }

    #[test]
    fn strain_energy_zero_at_rest_and_under_rotation() {
        let (mesh, rest) = small_sheet();
        assert!(energy_strain(&mesh.vertices, &rest).unwrap() < 1e-24);
        let q = glam::DQuat::from_axis_angle(DVec3::new(0.2, 1.0, 0.4).normalize(), 0.8);
        let r = glam::DMat3::from_quat(q);
        let rotated: Vec<DVec3> = mesh.vertices.iter().map(|v| r * *v + DVec3::ONE).collect();
        assert!(energy_strain(&rotated, &rest).unwrap() < 1e-22);
    }

    #[test]
    fn strain_energy_uniform_stretch_closed_form() {
        let (mesh, rest) = small_sheet();
        let s = 1.1;
        let stretched: Vec<DVec3> = mesh.vertices.iter().map(|v| *v * s).collect();
        let e = energy_strain(&stretched, &rest).unwrap();
        // per triangle: ‖½(s²−1)I‖² = 2·(½(s²−1))²
        let per_tri = 2.0 * (0.5 * (s * s - 1.0)).powi(2);
        let expect = mesh.face_count() as f64 * per_tri;
        assert!((e - expect).abs() < 1e-9, "e {e}, expect {expect}");
    }
}
