//! The evaluation collision metric: garment vertices strictly inside the
//! posed body, sign taken from the generalized winding number. The
//! clearance ε is deliberately NOT added here — this measures
//! interpenetration, not clearance violations.

use glam::DVec3;
use rayon::prelude::*;

use mesh_core::{check_watertight, winding_number_tris, TriMesh, TriangleBvh};

#[derive(Debug, Clone, Copy, Default)]
pub struct CollisionCount {
    pub count: usize,
    pub total: usize,
    /// Set when the posed body was not watertight and the closest-point
    /// normal-side fallback was used.
    pub fallback: bool,
}

impl CollisionCount {
    pub fn percentage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / self.total as f64
        }
    }
}

pub struct PosedBodyTester {
    tris: Vec<[DVec3; 3]>,
    fallback: Option<(TriangleBvh, Vec<DVec3>)>,
}

impl PosedBodyTester {
    pub fn new(posed_body: &TriMesh) -> Self {
        let tris: Vec<[DVec3; 3]> = posed_body
            .faces
            .iter()
            .map(|f| {
                [
                    posed_body.vertices[f[0]],
                    posed_body.vertices[f[1]],
                    posed_body.vertices[f[2]],
                ]
            })
            .collect();
        let fallback = if check_watertight(posed_body).is_err() {
            let bvh = TriangleBvh::build(posed_body);
            let normals = (0..posed_body.face_count())
                .map(|fi| posed_body.face_normal(fi))
                .collect();
            Some((bvh, normals))
        } else {
            None
        };
        Self { tris, fallback }
    }

    pub fn is_inside(&self, p: DVec3) -> bool {
        match &self.fallback {
            None => winding_number_tris(&self.tris, p) > 0.5,
            Some((bvh, normals)) => {
                let hit = bvh.closest_point(p);
                (p - hit.point).dot(normals[hit.face]) < 0.0
            }
        }
    }

    pub fn used_fallback(&self) -> bool {
        self.fallback.is_some()
    }
}

/// Strict interpenetration count of a posed garment against a posed body.
pub fn count_collisions(garment: &[DVec3], posed_body: &TriMesh) -> CollisionCount {
    let tester = PosedBodyTester::new(posed_body);
    let count = garment
        .par_iter()
        .filter(|&&p| tester.is_inside(p))
        .count();
    CollisionCount {
        count,
        total: garment.len(),
        fallback: tester.used_fallback(),
    }
}
