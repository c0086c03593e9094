//! Area-weighted sampling of the shell around a surface: random surface
//! points pushed along the normal. Training data for every field fit.

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mesh_core::TriMesh;

#[derive(Debug, Clone)]
pub struct ShellSampler {
    tris: Vec<[DVec3; 3]>,
    normals: Vec<DVec3>,
    cumulative_area: Vec<f64>,
    total_area: f64,
}

impl ShellSampler {
    pub fn new(mesh: &TriMesh) -> Self {
        let mut tris = Vec::with_capacity(mesh.faces.len());
        let mut normals = Vec::with_capacity(mesh.faces.len());
        let mut cumulative_area = Vec::with_capacity(mesh.faces.len());
        let mut acc = 0.0;
        for f in &mesh.faces {
            let t = [
                mesh.vertices[f[0]],
                mesh.vertices[f[1]],
                mesh.vertices[f[2]],
            ];
            let cross = (t[1] - t[0]).cross(t[2] - t[0]);
            acc += 0.5 * cross.length();
            tris.push(t);
            normals.push(cross.normalize_or_zero());
            cumulative_area.push(acc);
        }
        Self {
            tris,
            normals,
            cumulative_area,
            total_area: acc,
        }
    }

    pub fn surface_point(&self, rng: &mut ChaCha8Rng) -> (DVec3, DVec3) {
        let target = rng.random_range(0.0..self.total_area);
        let fi = match self
            .cumulative_area
            .binary_search_by(|a| a.partial_cmp(&target).unwrap())
        {
            Ok(i) | Err(i) => i.min(self.tris.len() - 1),
        };
        let t = &self.tris[fi];
        let mut u: f64 = rng.random_range(0.0..1.0);
        let mut v: f64 = rng.random_range(0.0..1.0);
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let p = t[0] + (t[1] - t[0]) * u + (t[2] - t[0]) * v;
        (p, self.normals[fi])
    }

    /// Surface point offset along the normal by a uniform draw from
    /// [off_lo, off_hi] (meters); negative offsets go inside.
    pub fn shell_point(&self, rng: &mut ChaCha8Rng, off_lo: f64, off_hi: f64) -> DVec3 {
        let (p, n) = self.surface_point(rng);
        p + n * rng.random_range(off_lo..off_hi)
    }

    pub fn sample_shell(&self, n: usize, off_lo: f64, off_hi: f64, seed: u64) -> Vec<DVec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.shell_point(&mut rng, off_lo, off_hi)).collect()
    }
}
