//! Procedural garment sheet (a skirt-like tube) and its body attachments.

use glam::DVec3;

use body_model::{BodyModel, GlobalTransform};
use mesh_core::{TriMesh, TriangleBvh};

/// Barycentric attachment of a pinned garment vertex to the body surface.
#[derive(Debug, Clone, Copy)]
pub struct PinAttachment {
    pub vertex: usize,
    pub face: usize,
    pub bary: [f64; 3],
    pub normal_offset: f64,
}

#[derive(Debug, Clone)]
pub struct GarmentSheet {
    pub mesh: TriMesh,
    pub pins: Vec<PinAttachment>,
}

/// Tapered tube around the lower body, pinned at the waist ring. `cols`
/// vertices around, `rows` down the axis; faces close the loop in angle.
pub fn skirt_sheet(
    body: &BodyModel,
    cols: usize,
    rows: usize,
    radius_top: f64,
    radius_bottom: f64,
    y_top: f64,
    y_bottom: f64,
) -> GarmentSheet {
    let mut verts = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        let t = r as f64 / (rows - 1) as f64;
        let y = y_top + (y_bottom - y_top) * t;
        let radius = radius_top + (radius_bottom - radius_top) * t;
        for c in 0..cols {
            let a = std::f64::consts::TAU * c as f64 / cols as f64;
            verts.push(DVec3::new(radius * a.cos(), y, radius * a.sin()));
        }
    }
    let mut faces = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols {
            let a = r * cols + c;
            let b = r * cols + (c + 1) % cols;
            let d = a + cols;
            let e = b + cols;
            faces.push([a, b, e]);
            faces.push([a, e, d]);
        }
    }
    let mesh = TriMesh::new(verts, faces).expect("skirt sheet is well-formed");

    // pin the top ring to its closest body surface points, preserving the
    // initial normal offset so the ring follows the waist for any shape
    let bvh = TriangleBvh::build(&body.template);
    let pins = (0..cols)
        .map(|vi| {
            let p = mesh.vertices[vi];
            let hit = bvh.closest_point(p);
            let n = body.template.face_normal(hit.face);
            let offset = (p - hit.point).dot(n);
            PinAttachment {
                vertex: vi,
                face: hit.face,
                bary: hit.bary,
                normal_offset: offset.max(0.002),
            }
        })
        .collect();
    GarmentSheet { mesh, pins }
}

/// World position of one pin given the posed body.
pub fn pin_position(pin: &PinAttachment, posed_body: &TriMesh) -> DVec3 {
    let f = posed_body.faces[pin.face];
    let p = posed_body.vertices[f[0]] * pin.bary[0]
        + posed_body.vertices[f[1]] * pin.bary[1]
        + posed_body.vertices[f[2]] * pin.bary[2];
    p + posed_body.face_normal(pin.face) * pin.normal_offset
}

/// Skins the body once and evaluates every pin target.
pub fn pin_targets(
    pins: &[PinAttachment],
    body: &BodyModel,
    beta: &[f64; body_model::SHAPE_DIM],
    theta: &[DVec3],
    global: &GlobalTransform,
) -> (TriMesh, Vec<(usize, DVec3)>) {
    let posed = body.skin_body_with_global(beta, theta, global);
    let targets = pins
        .iter()
        .map(|pin| (pin.vertex, pin_position(pin, &posed)))
        .collect();
    (posed, targets)
}
