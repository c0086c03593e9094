//! Rest-state geometry of a template: per-triangle 2D rest frames for
//! deformation gradients, and the uniform graph Laplacian of the template
//! connectivity.

use glam::DVec3;

use crate::{MeshError, MeshResult, TriMesh};

/// Immutable rest-state operators derived from a template mesh.
#[derive(Debug, Clone)]
pub struct RestGeometry {
    /// Template face list (copied; the operators are tied to this connectivity).
    pub faces: Vec<[usize; 3]>,
    /// Inverse of the per-triangle 2x2 rest edge matrix.
    rest_inv: Vec<[[f64; 2]; 2]>,
    /// CSR neighbor lists for the uniform Laplacian.
    nbr_offsets: Vec<usize>,
    nbr_indices: Vec<usize>,
    nverts: usize,
}

impl RestGeometry {
    /// Builds rest frames from the template embedding. The per-triangle 2D
    /// frame is spanned by the first edge direction and its in-plane
    /// perpendicular (from the triangle normal).
    pub fn new(template: &TriMesh) -> MeshResult<Self> {
        let mut rest_inv = Vec::with_capacity(template.faces.len());
        for (ti, f) in template.faces.iter().enumerate() {
            let a = template.vertices[f[0]];
            let b = template.vertices[f[1]];
            let c = template.vertices[f[2]];
            let d = rest_edge_matrix(a, b, c);
            let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
            if det.abs() < 1e-14 {
                return Err(MeshError::DegenerateRestFrame { tri: ti, det });
            }
            let inv = [
                [d[1][1] / det, -d[0][1] / det],
                [-d[1][0] / det, d[0][0] / det],
            ];
            rest_inv.push(inv);
        }

        let neighbors = template.vertex_neighbors();
        let mut nbr_offsets = Vec::with_capacity(neighbors.len() + 1);
        let mut nbr_indices = Vec::new();
        nbr_offsets.push(0);
        for nb in &neighbors {
            nbr_indices.extend_from_slice(nb);
            nbr_offsets.push(nbr_indices.len());
        }

        Ok(Self {
            faces: template.faces.clone(),
            rest_inv,
            nbr_offsets,
            nbr_indices,
            nverts: template.vertices.len(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.nverts
    }

    pub fn triangle_count(&self) -> usize {
        self.faces.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.nbr_indices[self.nbr_offsets[v]..self.nbr_offsets[v + 1]]
    }

    pub fn rest_inverse(&self, tri: usize) -> &[[f64; 2]; 2] {
        &self.rest_inv[tri]
    }

    fn check_len(&self, positions: &[DVec3]) -> MeshResult<()> {
        if positions.len() != self.nverts {
            return Err(MeshError::SizeMismatch {
                what: "positions",
                expected: self.nverts,
                got: positions.len(),
            });
        }
        Ok(())
    }
}

/// 2x2 rest edge matrix of a triangle in its own orthonormal plane frame.
pub fn rest_edge_matrix(a: DVec3, b: DVec3, c: DVec3) -> [[f64; 2]; 2] {
    let e1 = b - a;
    let e2 = c - a;
    let t1 = e1.normalize_or_zero();
    let n = e1.cross(e2).normalize_or_zero();
    let t2 = n.cross(t1);
    [[e1.dot(t1), e2.dot(t1)], [0.0, e2.dot(t2)]]
}

/// Uniform graph Laplacian: (Δx)_i = x_i − mean of neighbor positions.
/// Rows sum to zero, so constants are annihilated exactly.
pub fn laplacian(rest: &RestGeometry, positions: &[DVec3]) -> MeshResult<Vec<DVec3>> {
    rest.check_len(positions)?;
    let mut out = Vec::with_capacity(positions.len());
    for i in 0..positions.len() {
        let nb = rest.neighbors(i);
        if nb.is_empty() {
            out.push(DVec3::ZERO);
            continue;
        }
        let mut avg = DVec3::ZERO;
        for &j in nb {
            avg += positions[j];
        }
        avg /= nb.len() as f64;
        out.push(positions[i] - avg);
    }
    Ok(out)
}

/// Transpose of the Laplacian applied to a cotangent field; used by losses
/// that differentiate through `laplacian`.
pub fn laplacian_transpose(rest: &RestGeometry, cotangent: &[DVec3]) -> MeshResult<Vec<DVec3>> {
    rest.check_len(cotangent)?;
    let mut out = vec![DVec3::ZERO; cotangent.len()];
    for i in 0..cotangent.len() {
        let nb = rest.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        out[i] += cotangent[i];
        let scale = 1.0 / nb.len() as f64;
        for &j in nb {
            out[j] -= cotangent[i] * scale;
        }
    }
    Ok(out)
}

/// Per-triangle deformation gradient F (3x2, stored as two 3D columns):
/// deformed edges = F * rest 2D edge matrix.
pub fn deformation_gradient(
    rest: &RestGeometry,
    positions: &[DVec3],
) -> MeshResult<Vec<[DVec3; 2]>> {
    rest.check_len(positions)?;
    let mut out = Vec::with_capacity(rest.faces.len());
    for (ti, f) in rest.faces.iter().enumerate() {
        let e1 = positions[f[1]] - positions[f[0]];
        let e2 = positions[f[2]] - positions[f[0]];
        let inv = &rest.rest_inv[ti];
        // F = [e1 e2] * D_inv
        let c0 = e1 * inv[0][0] + e2 * inv[1][0];
        let c1 = e1 * inv[0][1] + e2 * inv[1][1];
        out.push([c0, c1]);
    }
    Ok(out)
}

/// Green-Lagrange strain ½(FᵀF − I) per triangle; symmetric 2x2.
pub fn green_lagrange_strain(f_grads: &[[DVec3; 2]]) -> Vec<[[f64; 2]; 2]> {
    f_grads
        .iter()
        .map(|f| {
            let d00 = f[0].dot(f[0]);
            let d01 = f[0].dot(f[1]);
            let d11 = f[1].dot(f[1]);
            [
                [0.5 * (d00 - 1.0), 0.5 * d01],
                [0.5 * d01, 0.5 * (d11 - 1.0)],
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use glam::{DMat3, DQuat};

    fn grid_mesh(nx: usize, ny: usize, spacing: f64) -> TriMesh {
        let mut verts = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                verts.push(DVec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        let mut faces = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                let b = a + 1;
                let c = a + nx;
                let d = c + 1;
                // alternate the diagonal so interior stencils are symmetric
                if (i + j) % 2 == 0 {
                    faces.push([a, b, d]);
                    faces.push([a, d, c]);
                } else {
                    faces.push([a, b, c]);
                    faces.push([b, d, c]);
                }
            }
        }
        TriMesh::new(verts, faces).unwrap()
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let m = grid_mesh(5, 5, 0.1);
        let rest = RestGeometry::new(&m).unwrap();
        let constant = vec![DVec3::new(1.5, -2.0, 0.25); m.vertex_count()];
        let out = laplacian(&rest, &constant).unwrap();
        for v in out {
            assert!(v.length() < 1e-14);
        }
    }

    #[test]
    fn laplacian_matches_dense_assembly() {
        // independent oracle: assemble the dense Laplacian matrix and multiply
        let m = grid_mesh(4, 3, 0.2);
        let rest = RestGeometry::new(&m).unwrap();
        let n = m.vertex_count();
        let neighbors = m.vertex_neighbors();
        let mut dense = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            dense[i][i] = 1.0;
            for &j in &neighbors[i] {
                dense[i][j] -= 1.0 / neighbors[i].len() as f64;
            }
        }
        // deterministic pseudo-random positions
        let pos: Vec<DVec3> = (0..n)
            .map(|i| {
                let x = ((i * 2654435761) % 1000) as f64 / 1000.0;
                let y = ((i * 40503 + 7) % 1000) as f64 / 1000.0;
                let z = ((i * 9973 + 13) % 1000) as f64 / 1000.0;
                DVec3::new(x, y, z)
            })
            .collect();
        let fast = laplacian(&rest, &pos).unwrap();
        for i in 0..n {
            let mut expect = DVec3::ZERO;
            for j in 0..n {
                expect += pos[j] * dense[i][j];
            }
            assert!((fast[i] - expect).length() < 1e-12);
        }
    }

    #[test]
    fn laplacian_transpose_is_adjoint() {
        let m = grid_mesh(4, 4, 0.15);
        let rest = RestGeometry::new(&m).unwrap();
        let n = m.vertex_count();
        let x: Vec<DVec3> = (0..n).map(|i| DVec3::new(i as f64, (i * i) as f64 * 0.01, -(i as f64))).collect();
        let y: Vec<DVec3> = (0..n).map(|i| DVec3::new((i % 3) as f64, 1.0, (i % 5) as f64)).collect();
        let lx = laplacian(&rest, &x).unwrap();
        let lty = laplacian_transpose(&rest, &y).unwrap();
        let lhs: f64 = lx.iter().zip(&y).map(|(a, b)| a.dot(*b)).sum();
        let rhs: f64 = x.iter().zip(&lty).map(|(a, b)| a.dot(*b)).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn affine_field_zero_at_interior() {
        let m = grid_mesh(7, 7, 0.1);
        let rest = RestGeometry::new(&m).unwrap();
        // x = A*u + b over the grid plane
        let pos: Vec<DVec3> = m
            .vertices
            .iter()
            .map(|v| {
                DVec3::new(
                    1.3 * v.x - 0.4 * v.y + 0.7,
                    0.2 * v.x + 0.9 * v.y - 1.1,
                    0.5 * v.x + 0.5 * v.y,
                )
            })
            .collect();
        let out = laplacian(&rest, &pos).unwrap();
        for j in 1..6usize {
            for i in 1..6usize {
                let idx = j * 7 + i;
                assert!(
                    out[idx].length() < 1e-12,
                    "interior vertex {idx} -> {:?}",
                    out[idx]
                );
            }
        }
    }

    #[test]
    fn deformation_gradient_identity_at_rest() {
        let m = grid_mesh(4, 4, 0.1);
        let rest = RestGeometry::new(&m).unwrap();
        let f = deformation_gradient(&rest, &m.vertices).unwrap();
        for cols in &f {
            assert!((cols[0].dot(cols[0]) - 1.0).abs() < 1e-12);
            assert!((cols[1].dot(cols[1]) - 1.0).abs() < 1e-12);
            assert!(cols[0].dot(cols[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn deformation_gradient_uniform_scale() {
        let m = grid_mesh(4, 4, 0.1);
        let rest = RestGeometry::new(&m).unwrap();
        let s = 1.7;
        let pos: Vec<DVec3> = m.vertices.iter().map(|v| *v * s).collect();
        let f = deformation_gradient(&rest, &pos).unwrap();
        for cols in &f {
            assert!((cols[0].dot(cols[0]) - s * s).abs() < 1e-12);
            assert!((cols[1].dot(cols[1]) - s * s).abs() < 1e-12);
            assert!(cols[0].dot(cols[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn deformation_gradient_reconstructs_edges() {
        let m = grid_mesh(5, 4, 0.13);
        let rest = RestGeometry::new(&m).unwrap();
        // arbitrary smooth deformation
        let pos: Vec<DVec3> = m
            .vertices
            .iter()
            .map(|v| {
                DVec3::new(
                    v.x + 0.05 * (3.0 * v.y).sin(),
                    v.y + 0.04 * (2.0 * v.x).cos(),
                    0.06 * (v.x * 5.0 + v.y * 4.0).sin(),
                )
            })
            .collect();
        let f = deformation_gradient(&rest, &pos).unwrap();
        for (ti, face) in rest.faces.iter().enumerate() {
            let a = m.vertices[face[0]];
            let b = m.vertices[face[1]];
            let c = m.vertices[face[2]];
            let d = rest_edge_matrix(a, b, c);
            let e1 = pos[face[1]] - pos[face[0]];
            let e2 = pos[face[2]] - pos[face[0]];
            let r1 = f[ti][0] * d[0][0] + f[ti][1] * d[1][0];
            let r2 = f[ti][0] * d[0][1] + f[ti][1] * d[1][1];
            assert!((r1 - e1).length() < 1e-12);
            assert!((r2 - e2).length() < 1e-12);
        }
    }

    #[test]
    fn strain_zero_under_rigid_transform() {
        let m = grid_mesh(6, 5, 0.11);
        let rest = RestGeometry::new(&m).unwrap();
        let q = DQuat::from_axis_angle(DVec3::new(0.3, 0.8, -0.5).normalize(), 1.234);
        let r = DMat3::from_quat(q);
        let t = DVec3::new(-3.0, 0.5, 7.0);
        let pos: Vec<DVec3> = m.vertices.iter().map(|v| r * *v + t).collect();
        let f = deformation_gradient(&rest, &pos).unwrap();
        let strain = green_lagrange_strain(&f);
        for e in &strain {
            for row in e {
                for &x in row {
                    assert!(x.abs() <= 1e-12, "strain entry {x}");
                }
            }
        }
    }

    #[test]
    fn strain_uniform_scale_closed_form() {
        let m = grid_mesh(4, 4, 0.1);
        let rest = RestGeometry::new(&m).unwrap();
        let pos: Vec<DVec3> = m.vertices.iter().map(|v| *v * 2.0).collect();
        let f = deformation_gradient(&rest, &pos).unwrap();
        let strain = green_lagrange_strain(&f);
        for e in &strain {
            assert!((e[0][0] - 1.5).abs() < 1e-12);
            assert!((e[1][1] - 1.5).abs() < 1e-12);
            assert!(e[0][1].abs() < 1e-12);
        }
    }

    #[test]
    fn strain_energy_two_triangle_quad() {
        // unit quad, two triangles, deformed by x' = [[1.1, 0.1], [0, 0.95]] x.
        // For an affine map F is the same on both triangles:
        //   FtF = [[1.21, 0.11], [0.11, 0.9125]]
        //   E = ½(FtF − I) = [[0.105, 0.055], [0.055, -0.04375]]
        //   |E|_F² = 0.105² + 2·0.055² + 0.04375² = 0.0190878906...
        let verts = vec![DVec3::ZERO, DVec3::X, DVec3::new(1.0, 1.0, 0.0), DVec3::Y];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let rest = RestGeometry::new(&m).unwrap();
        let pos: Vec<DVec3> = m
            .vertices
            .iter()
            .map(|v| DVec3::new(1.1 * v.x + 0.1 * v.y, 0.95 * v.y, 0.0))
            .collect();
        let f = deformation_gradient(&rest, &pos).unwrap();
        let strain = green_lagrange_strain(&f);
        let energy: f64 = strain
            .iter()
            .map(|e| e.iter().flatten().map(|x| x * x).sum::<f64>())
            .sum();
        let per_tri = 0.105f64.powi(2) + 2.0 * 0.055f64.powi(2) + 0.04375f64.powi(2);
        assert!((energy - 2.0 * per_tri).abs() < 1e-9, "energy {energy}");
    }
}
