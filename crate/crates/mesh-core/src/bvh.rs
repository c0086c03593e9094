//! Bounding-volume hierarchy over mesh triangles for closest-point queries.

use glam::DVec3;

use crate::TriMesh;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: DVec3,
    hi: DVec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: DVec3::splat(f64::INFINITY),
            hi: DVec3::splat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: DVec3) {
        self.lo = self.lo.min(p);
        self.hi = self.hi.max(p);
    }

    fn merge(&mut self, other: &Aabb) {
        self.lo = self.lo.min(other.lo);
        self.hi = self.hi.max(other.hi);
    }

    fn dist_sq(&self, p: DVec3) -> f64 {
        let d = (self.lo - p).max(p - self.hi).max(DVec3::ZERO);
        d.length_squared()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        aabb: Aabb,
        start: usize,
        count: usize,
    },
    Inner {
        aabb: Aabb,
        left: usize,
        right: usize,
    },
}

/// Static BVH over a triangle soup. Median-split on centroid of the longest
/// axis, leaves hold up to 4 triangles.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    nodes: Vec<Node>,
    /// triangle order after build; maps leaf slots to original face indices
    tri_order: Vec<usize>,
    tris: Vec<[DVec3; 3]>,
    root: usize,
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy)]
pub struct ClosestHit {
    /// Original face index in the source mesh.
    pub face: usize,
    /// Closest point on that face.
    pub point: DVec3,
    /// Barycentric coordinates of `point` in the face.
    pub bary: [f64; 3],
    /// Euclidean distance from the query point.
    pub distance: f64,
}

impl TriangleBvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let tris: Vec<[DVec3; 3]> = mesh
            .faces
            .iter()
            .map(|f| [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]])
            .collect();
        Self::build_from_triangles(tris)
    }

    pub fn build_from_triangles(tris: Vec<[DVec3; 3]>) -> Self {
        assert!(!tris.is_empty(), "cannot build a BVH over zero triangles");
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let centroids: Vec<DVec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::new();
        let n = tris.len();
        let root = build_range(&mut nodes, &mut order, &centroids, &tris, 0, n);
        Self {
            nodes,
            tri_order: order,
            tris,
            root,
        }
    }

    /// Closest surface point to `p` over all triangles.
    pub fn closest_point(&self, p: DVec3) -> ClosestHit {
        let mut best = ClosestHit {
            face: usize::MAX,
            point: DVec3::ZERO,
            bary: [0.0; 3],
            distance: f64::INFINITY,
        };
        let mut best_sq = f64::INFINITY;
        // explicit stack; visit nearer child first
        let mut stack = Vec::with_capacity(64);
        stack.push(self.root);
        while let Some(ni) = stack.pop() {
            match &self.nodes[ni] {
                Node::Leaf { aabb, start, count } => {
                    if aabb.dist_sq(p) >= best_sq {
                        continue;
                    }
                    for slot in *start..*start + *count {
                        let face = self.tri_order[slot];
                        let t = &self.tris[face];
                        let (q, bary) = closest_point_on_triangle(p, t[0], t[1], t[2]);
                        let d_sq = (q - p).length_squared();
                        if d_sq < best_sq {
                            best_sq = d_sq;
                            best = ClosestHit {
                                face,
                                point: q,
                                bary,
                                distance: d_sq.sqrt(),
                            };
                        }
                    }
                }
                Node::Inner { aabb, left, right } => {
                    if aabb.dist_sq(p) >= best_sq {
                        continue;
                    }
                    let dl = node_aabb(&self.nodes[*left]).dist_sq(p);
                    let dr = node_aabb(&self.nodes[*right]).dist_sq(p);
                    // push farther first so the nearer child pops first
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }
}

fn node_aabb(n: &Node) -> &Aabb {
    match n {
        Node::Leaf { aabb, .. } => aabb,
        Node::Inner { aabb, .. } => aabb,
    }
}

fn build_range(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    centroids: &[DVec3],
    tris: &[[DVec3; 3]],
    start: usize,
    count: usize,
) -> usize {
    let mut aabb = Aabb::empty();
    for slot in start..start + count {
        for v in &tris[order[slot]] {
            aabb.grow(*v);
        }
    }
    if count <= 4 {
        nodes.push(Node::Leaf { aabb, start, count });
        return nodes.len() - 1;
    }
    // split on the longest centroid axis at the median
    let mut c_lo = DVec3::splat(f64::INFINITY);
    let mut c_hi = DVec3::splat(f64::NEG_INFINITY);
    for slot in start..start + count {
        let c = centroids[order[slot]];
        c_lo = c_lo.min(c);
        c_hi = c_hi.max(c);
    }
    let ext = c_hi - c_lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    order[start..start + count].select_nth_unstable_by(mid, |&a, &b| {
        let ca = centroids[a][axis];
        let cb = centroids[b][axis];
        ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let left = build_range(nodes, order, centroids, tris, start, mid);
    let right = build_range(nodes, order, centroids, tris, start + mid, count - mid);
    let mut merged = *node_aabb(&nodes[left]);
    merged.merge(node_aabb(&nodes[right]));
    nodes.push(Node::Inner {
        aabb: merged,
        left,
        right,
    });
    nodes.len() - 1
}

/// Closest point on triangle (a, b, c) to p, with barycentric coordinates.
/// Region-based case analysis (Ericson, Real-Time Collision Detection §5.1.5).
pub fn closest_point_on_triangle(p: DVec3, a: DVec3, b: DVec3, c: DVec3) -> (DVec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn icosahedron() -> TriMesh {
        let t = (1.0 + 5.0f64.sqrt()) / 2.0;
        let verts: Vec<DVec3> = vec![
            DVec3::new(-1.0, t, 0.0),
            DVec3::new(1.0, t, 0.0),
            DVec3::new(-1.0, -t, 0.0),
            DVec3::new(1.0, -t, 0.0),
            DVec3::new(0.0, -1.0, t),
            DVec3::new(0.0, 1.0, t),
            DVec3::new(0.0, -1.0, -t),
            DVec3::new(0.0, 1.0, -t),
            DVec3::new(t, 0.0, -1.0),
            DVec3::new(t, 0.0, 1.0),
            DVec3::new(-t, 0.0, -1.0),
            DVec3::new(-t, 0.0, 1.0),
        ]
        .into_iter()
        .map(|v| v.normalize())
        .collect();
        let faces = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        TriMesh::new(verts, faces).unwrap()
    }

    fn brute_force(mesh: &TriMesh, p: DVec3) -> (usize, DVec3, f64) {
        let mut best = (usize::MAX, DVec3::ZERO, f64::INFINITY);
        for (fi, f) in mesh.faces.iter().enumerate() {
            let (q, _) = closest_point_on_triangle(
                p,
                mesh.vertices[f[0]],
                mesh.vertices[f[1]],
                mesh.vertices[f[2]],
            );
            let d = (q - p).length();
            if d < best.2 {
                best = (fi, q, d);
            }
        }
        best
    }

    #[test]
    fn query_on_vertex_returns_zero_distance() {
        let m = icosahedron();
        let bvh = TriangleBvh::build(&m);
        for (vi, v) in m.vertices.iter().enumerate().step_by(3) {
            let hit = bvh.closest_point(*v);
            assert!(hit.distance < 1e-12, "vertex {vi} distance {}", hit.distance);
            assert!((hit.point - *v).length() < 1e-12);
        }
    }

    #[test]
    fn normal_offset_hits_source_face() {
        let m = icosahedron();
        let bvh = TriangleBvh::build(&m);
        let fi = 7;
        let f = m.faces[fi];
        let centroid = (m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) / 3.0;
        let n = m.face_normal(fi);
        let p = centroid + n * 0.05;
        let hit = bvh.closest_point(p);
        assert_eq!(hit.face, fi);
        assert!((hit.distance - 0.05).abs() < 1e-12);
        assert!((hit.point - centroid).length() < 1e-12);
    }

    #[test]
    fn matches_brute_force_scan() {
        let m = icosahedron();
        let bvh = TriangleBvh::build(&m);
        // deterministic scattered queries inside and outside
        for i in 0..300 {
            let x = ((i * 7919) % 2000) as f64 / 1000.0 - 1.0;
            let y = ((i * 104729 + 3) % 2000) as f64 / 1000.0 - 1.0;
            let z = ((i * 1299709 + 11) % 2000) as f64 / 1000.0 - 1.0;
            let p = DVec3::new(x * 2.0, y * 2.0, z * 2.0);
            let hit = bvh.closest_point(p);
            let (_, q, d) = brute_force(&m, p);
            assert!((hit.distance - d).abs() < 1e-12);
            assert!((hit.point - q).length() < 1e-9, "p {p:?}");
        }
    }

    #[test]
    fn barycentric_reconstructs_point() {
        let m = icosahedron();
        let bvh = TriangleBvh::build(&m);
        let p = DVec3::new(0.3, 1.4, -0.2);
        let hit = bvh.closest_point(p);
        let f = m.faces[hit.face];
        let rec = m.vertices[f[0]] * hit.bary[0]
            + m.vertices[f[1]] * hit.bary[1]
            + m.vertices[f[2]] * hit.bary[2];
        assert!((rec - hit.point).length() < 1e-12);
    }
}
