//! Triangle-mesh representation, OBJ I/O, and the differential-geometry
//! primitives (uniform Laplacian, deformation gradient, Green-Lagrange
//! strain) shared by the rest of the workspace.

mod bvh;
mod error;
mod mesh;
mod obj;
mod rest;
mod winding;

pub use bvh::{closest_point_on_triangle, ClosestHit, TriangleBvh};
pub use error::{MeshError, MeshResult};
pub use mesh::TriMesh;
pub use obj::{load_obj, save_obj};
pub use rest::{
    deformation_gradient, green_lagrange_strain, laplacian, laplacian_transpose,
    rest_edge_matrix, RestGeometry,
};
pub use winding::{check_watertight, classify, winding_number, winding_number_tris, WindingClass};

/// Garment-body clearance gap in meters, shared by projection, the
/// generative losses, and the simulator's collision offset.
pub const DEFAULT_CLEARANCE_M: f64 = 0.004;
