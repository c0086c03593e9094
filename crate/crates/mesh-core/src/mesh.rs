use std::collections::BTreeMap;

use glam::DVec3;

use crate::{MeshError, MeshResult};

/// Indexed triangle mesh in meters. Vertex and face order are meaningful
/// and preserved by all I/O paths.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<DVec3>,
    pub faces: Vec<[usize; 3]>,
    /// Optional named per-vertex attributes (flat, stride inferred by user).
    pub attributes: BTreeMap<String, Vec<f64>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<DVec3>, faces: Vec<[usize; 3]>) -> MeshResult<Self> {
        let mesh = Self {
            vertices,
            faces,
            attributes: BTreeMap::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks index bounds and face non-degeneracy.
    pub fn validate(&self) -> MeshResult<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: i,
                        nverts: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    a: f[0],
                    b: f[1],
                    c: f[2],
                });
            }
        }
        Ok(())
    }

    /// Template meshes (body, garment) must be a single connected component.
    pub fn validate_connected(&self) -> MeshResult<()> {
        let count = self.connected_components();
        if count != 1 {
            return Err(MeshError::Disconnected { count });
        }
        Ok(())
    }

    pub fn connected_components(&self) -> usize {
        let n = self.vertices.len();
        if n == 0 {
            return 0;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for f in &self.faces {
            let a = find(&mut parent, f[0]);
            let b = find(&mut parent, f[1]);
            let c = find(&mut parent, f[2]);
            parent[b] = a;
            parent[c] = a;
        }
        let mut roots = std::collections::BTreeSet::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            roots.insert(r);
        }
        roots.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_normal(&self, fi: usize) -> DVec3 {
        let [a, b, c] = self.faces[fi];
        let e1 = self.vertices[b] - self.vertices[a];
        let e2 = self.vertices[c] - self.vertices[a];
        e1.cross(e2).normalize_or_zero()
    }

    pub fn centroid(&self) -> DVec3 {
        let mut c = DVec3::ZERO;
        for v in &self.vertices {
            c += *v;
        }
        c / self.vertices.len().max(1) as f64
    }

    pub fn bounds(&self) -> (DVec3, DVec3) {
        let mut lo = DVec3::splat(f64::INFINITY);
        let mut hi = DVec3::splat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (lo, hi)
    }

    /// Vertex adjacency from face connectivity, neighbors sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<std::collections::BTreeSet<usize>> =
            vec![std::collections::BTreeSet::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                nb[a].insert(b);
                nb[b].insert(a);
            }
        }
        nb.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Signed volume via the divergence theorem; positive when faces are
    /// oriented outward on a closed mesh.
    pub fn signed_volume(&self) -> f64 {
        let mut vol = 0.0;
        for f in &self.faces {
            let a = self.vertices[f[0]];
            let b = self.vertices[f[1]];
            let c = self.vertices[f[2]];
            vol += a.dot(b.cross(c)) / 6.0;
        }
        vol
    }

    pub fn with_positions(&self, positions: Vec<DVec3>) -> MeshResult<TriMesh> {
        if positions.len() != self.vertices.len() {
            return Err(MeshError::SizeMismatch {
                what: "positions",
                expected: self.vertices.len(),
                got: positions.len(),
            });
        }
        Ok(TriMesh {
            vertices: positions,
            faces: self.faces.clone(),
            attributes: self.attributes.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> TriMesh {
        TriMesh::new(
            vec![DVec3::ZERO, DVec3::X, DVec3::Y],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle() {
        let m = tri();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = TriMesh::new(vec![DVec3::ZERO, DVec3::X], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 2, .. }));
    }

    #[test]
    fn degenerate_face_rejected() {
        let err = TriMesh::new(vec![DVec3::ZERO, DVec3::X, DVec3::Y], vec![[0, 1, 1]]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { .. }));
    }

    #[test]
    fn component_count() {
        let m = TriMesh::new(
            vec![
                DVec3::ZERO,
                DVec3::X,
                DVec3::Y,
                DVec3::new(5.0, 0.0, 0.0),
                DVec3::new(6.0, 0.0, 0.0),
                DVec3::new(5.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        assert_eq!(m.connected_components(), 2);
        assert!(m.validate_connected().is_err());
        assert!(tri().validate_connected().is_ok());
    }
}
