//! Generalized winding number (solid-angle sum) for inside/outside tests
//! against closed triangle meshes, plus the watertightness check that
//! guards it.

use glam::DVec3;

use crate::{MeshError, MeshResult, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindingClass {
    Inside,
    Outside,
}

/// Generalized winding number of `p` with respect to the mesh. For a
/// watertight, consistently oriented mesh this is ~1 inside and ~0 outside.
pub fn winding_number(mesh: &TriMesh, p: DVec3) -> f64 {
    let mut total = 0.0;
    for f in &mesh.faces {
        total += solid_angle(
            mesh.vertices[f[0]] - p,
            mesh.vertices[f[1]] - p,
            mesh.vertices[f[2]] - p,
        );
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Same as [`winding_number`] over a precollected triangle list.
pub fn winding_number_tris(tris: &[[DVec3; 3]], p: DVec3) -> f64 {
    let mut total = 0.0;
    for t in tris {
        total += solid_angle(t[0] - p, t[1] - p, t[2] - p);
    }
    total / (4.0 * std::f64::consts::PI)
}

pub fn classify(mesh: &TriMesh, p: DVec3) -> WindingClass {
    if winding_number(mesh, p) > 0.5 {
        WindingClass::Inside
    } else {
        WindingClass::Outside
    }
}

/// Signed solid angle of the triangle (a, b, c) seen from the origin
/// (Van Oosterom & Strackee).
#[inline]
fn solid_angle(a: DVec3, b: DVec3, c: DVec3) -> f64 {
    let la = a.length();
    let lb = b.length();
    let lc = c.length();
    let numerator = a.dot(b.cross(c));
    let denominator = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    2.0 * numerator.atan2(denominator)
}

/// Every edge must be shared by exactly two faces with opposite direction.
/// Returns the boundary/non-manifold edges on failure.
pub fn check_watertight(mesh: &TriMesh) -> MeshResult<()> {
    let mut counts: std::collections::BTreeMap<(usize, usize), i32> =
        std::collections::BTreeMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let a = f[k];
            let b = f[(k + 1) % 3];
            // directed edge a->b cancels b->a
            let key = if a < b { (a, b) } else { (b, a) };
            let sign = if a < b { 1 } else { -1 };
            *counts.entry(key).or_insert(0) += sign;
        }
    }
    let mut undirected: std::collections::BTreeMap<(usize, usize), usize> =
        std::collections::BTreeMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let a = f[k];
            let b = f[(k + 1) % 3];
            let key = if a < b { (a, b) } else { (b, a) };
            *undirected.entry(key).or_insert(0) += 1;
        }
    }
    let bad: Vec<(usize, usize)> = undirected
        .iter()
        .filter(|(key, &n)| n != 2 || counts.get(key).copied().unwrap_or(0) != 0)
        .map(|(key, _)| *key)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        let first: Vec<(usize, usize)> = bad.iter().take(8).copied().collect();
        Err(MeshError::NotWatertight {
            count: bad.len(),
            first,
        })
    }
}
