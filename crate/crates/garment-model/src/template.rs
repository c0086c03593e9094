//! Garment templates: canonical-space rest mesh plus its rest operators,
//! stored as an OBJ with a JSON sidecar pinning clearance and the body
//! model it was built against.

use std::path::Path;

use serde::{Deserialize, Serialize};

use diffuse_field::SdfGrid;
use mesh_core::{load_obj, save_obj, RestGeometry, TriMesh, DEFAULT_CLEARANCE_M};

use crate::{GarmentError, GarmentResult};

#[derive(Debug, Clone)]
pub struct GarmentTemplate {
    pub mesh: TriMesh,
    pub rest: RestGeometry,
    /// Garment-body clearance ε in meters.
    pub clearance: f64,
    /// Content hash of the body model this template was simulated on.
    pub body_hash: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    clearance: f64,
    body_hash: u64,
    vertex_count: usize,
    face_count: usize,
}

impl GarmentTemplate {
    pub fn new(mesh: TriMesh, clearance: f64, body_hash: u64) -> GarmentResult<Self> {
        mesh.validate()?;
        mesh.validate_connected()?;
        let rest = RestGeometry::new(&mesh)?;
        Ok(Self {
            mesh,
            rest,
            clearance,
            body_hash,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// Collision-free invariant against the canonical body: SDF ≥ ε at
    /// every template vertex.
    pub fn validate_against_sdf(&self, grid: &SdfGrid) -> GarmentResult<()> {
        let mut min_sdf = f64::INFINITY;
        let mut count = 0;
        for v in &self.mesh.vertices {
            let s = grid.query(*v).value;
            min_sdf = min_sdf.min(s);
            if s < self.clearance {
                count += 1;
            }
        }
        if count > 0 {
            return Err(GarmentError::ClearanceViolated {
                count,
                clearance: self.clearance,
                min_sdf,
            });
        }
        Ok(())
    }

    pub fn save(&self, obj_path: impl AsRef<Path>) -> GarmentResult<()> {
        let obj_path = obj_path.as_ref();
        save_obj(&self.mesh, obj_path)?;
        let sidecar = Sidecar {
            format_version: 1,
            clearance: self.clearance,
            body_hash: self.body_hash,
            vertex_count: self.mesh.vertex_count(),
            face_count: self.mesh.face_count(),
        };
        let sidecar_path = obj_path.with_extension("meta.json");
        std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?).map_err(
            |source| GarmentError::Io {
                path: sidecar_path.display().to_string(),
                source,
            },
        )?;
        Ok(())
    }

    /// Loads and checks the pairing against the supplied body hash.
    pub fn load(obj_path: impl AsRef<Path>, expected_body_hash: u64) -> GarmentResult<Self> {
        let obj_path = obj_path.as_ref();
        let mesh = load_obj(obj_path)?;
        let sidecar_path = obj_path.with_extension("meta.json");
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar_path)
            .map_err(|source| GarmentError::Io {
                path: sidecar_path.display().to_string(),
                source,
            })?)?;
        if sidecar.body_hash != expected_body_hash {
            return Err(GarmentError::BodyHashMismatch {
                expected: sidecar.body_hash,
                got: expected_body_hash,
            });
        }
        Self::new(mesh, sidecar.clearance, sidecar.body_hash)
    }

    pub fn default_clearance() -> f64 {
        DEFAULT_CLEARANCE_M
    }
}
