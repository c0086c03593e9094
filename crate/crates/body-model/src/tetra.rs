//! Isosurface extraction by marching tetrahedra over a regular grid.
//!
//! Each cell is split into the six Freudenthal tetrahedra around the global
//! (0,0,0)-(1,1,1) diagonal, which keeps faces consistent between adjacent
//! cells; crossing vertices are deduplicated per grid edge, so the output is
//! watertight whenever the field is nonzero at grid points.

use std::collections::BTreeMap;

use glam::DVec3;

use mesh_core::TriMesh;

/// Tetrahedra as index paths 0 -> 7 through cube corners (bit i = x,y,z).
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Extracts the zero level set of `field` (negative inside) sampled on a
/// regular grid with `dims` points per axis.
pub fn marching_tetrahedra(
    field: &dyn Fn(DVec3) -> f64,
    origin: DVec3,
    spacing: f64,
    dims: [usize; 3],
) -> TriMesh {
    let [nx, ny, nz] = dims;
    let grid_index = |x: usize, y: usize, z: usize| -> usize { (z * ny + y) * nx + x };
    // Grid values grazing zero would put crossings exactly on grid vertices,
    // which collapses triangles into slivers shared inconsistently between
    // tets. Snapping the samples slightly positive moves the surface by
    // less than snap (≪ spacing) and keeps every crossing interior.
    let snap = spacing * 2e-3;
    let mut values = vec![0.0f64; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = origin + DVec3::new(x as f64, y as f64, z as f64) * spacing;
                let mut v = field(p);
                if v.abs() < snap {
                    v = snap;
                }
                values[grid_index(x, y, z)] = v;
            }
        }
    }

    let mut state = ExtractState {
        edge_vertices: BTreeMap::new(),
        vertices: Vec::new(),
        faces: Vec::new(),
        origin,
        spacing,
        nx,
        ny,
    };

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let corner = |bit: usize| -> usize {
                    grid_index(
                        x + (bit & 1),
                        y + ((bit >> 1) & 1),
                        z + ((bit >> 2) & 1),
                    )
                };
                for tet in &TETS {
                    let gi = [corner(tet[0]), corner(tet[1]), corner(tet[2]), corner(tet[3])];
                    let inside: Vec<usize> = (0..4).filter(|&k| values[gi[k]] < 0.0).collect();
                    let outside: Vec<usize> = (0..4).filter(|&k| values[gi[k]] >= 0.0).collect();
                    match inside.len() {
                        0 | 4 => {}
                        1 => {
                            let i = gi[inside[0]];
                            let tri = [
                                state.crossing(i, gi[outside[0]], &values),
                                state.crossing(i, gi[outside[1]], &values),
                                state.crossing(i, gi[outside[2]], &values),
                            ];
                            let anchor = state.point_of(i);
                            state.push_oriented(tri, anchor, true);
                        }
                        3 => {
                            let o = gi[outside[0]];
                            let tri = [
                                state.crossing(gi[inside[0]], o, &values),
                                state.crossing(gi[inside[1]], o, &values),
                                state.crossing(gi[inside[2]], o, &values),
                            ];
                            let anchor = state.point_of(o);
                            state.push_oriented(tri, anchor, false);
                        }
                        2 => {
                            let i0 = gi[inside[0]];
                            let i1 = gi[inside[1]];
                            let o0 = gi[outside[0]];
                            let o1 = gi[outside[1]];
                            let q = [
                                state.crossing(i0, o0, &values),
                                state.crossing(i0, o1, &values),
                                state.crossing(i1, o1, &values),
                                state.crossing(i1, o0, &values),
                            ];
                            let inside_mid = (state.point_of(i0) + state.point_of(i1)) * 0.5;
                            state.push_oriented([q[0], q[1], q[2]], inside_mid, true);
                            state.push_oriented([q[0], q[2], q[3]], inside_mid, true);
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
    }
    let ExtractState { vertices, faces, .. } = state;

    TriMesh {
        vertices,
        faces,
        attributes: Default::default(),
    }
}

struct ExtractState {
    edge_vertices: BTreeMap<(usize, usize), usize>,
    vertices: Vec<DVec3>,
    faces: Vec<[usize; 3]>,
    origin: DVec3,
    spacing: f64,
    nx: usize,
    ny: usize,
}

impl ExtractState {
    fn point_of(&self, gi: usize) -> DVec3 {
        let x = gi % self.nx;
        let y = (gi / self.nx) % self.ny;
        let z = gi / (self.nx * self.ny);
        self.origin + DVec3::new(x as f64, y as f64, z as f64) * self.spacing
    }

    fn crossing(&mut self, a: usize, b: usize, values: &[f64]) -> usize {
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(&vi) = self.edge_vertices.get(&key) {
            return vi;
        }
        let va = values[key.0];
        let vb = values[key.1];
        let t = (va / (va - vb)).clamp(1e-3, 1.0 - 1e-3);
        let p = self.point_of(key.0).lerp(self.point_of(key.1), t);
        self.vertices.push(p);
        let vi = self.vertices.len() - 1;
        self.edge_vertices.insert(key, vi);
        vi
    }

    /// Orients the triangle so its normal points away from `anchor` when
    /// `anchor_inside`, toward it otherwise (anchors are strictly off-surface).
    fn push_oriented(&mut self, tri: [usize; 3], anchor: DVec3, anchor_inside: bool) {
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return;
        }
        let a = self.vertices[tri[0]];
        let b = self.vertices[tri[1]];
        let c = self.vertices[tri[2]];
        let n = (b - a).cross(c - a);
        let to_anchor = anchor - (a + b + c) / 3.0;
        let aligned = n.dot(to_anchor) > 0.0;
        // normal must point away from inside anchors (outward convention)
        if aligned == anchor_inside {
            self.faces.push([tri[0], tri[2], tri[1]]);
        } else {
            self.faces.push(tri);
        }
    }
}
