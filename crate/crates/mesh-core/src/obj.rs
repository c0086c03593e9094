//! Wavefront OBJ loading and saving. Only `v` and `f` records are honored;
//! normals and texture coordinates are ignored on load. Face indices are
//! 1-based triples.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use glam::DVec3;

use crate::{MeshError, MeshResult, TriMesh};

pub fn load_obj(path: impl AsRef<Path>) -> MeshResult<TriMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut vertices: Vec<DVec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|source| MeshError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    let tok = parts.next().ok_or_else(|| parse_err(path, lineno, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(path, lineno, &format!("bad float `{tok}`")))?;
                }
                vertices.push(DVec3::from_array(coords));
            }
            Some("f") => {
                let idx: Vec<&str> = parts.collect();
                if idx.len() != 3 {
                    return Err(parse_err(
                        path,
                        lineno,
                        &format!("face has {} vertices, only triangles are supported", idx.len()),
                    ));
                }
                let mut f = [0usize; 3];
                for (k, tok) in idx.iter().enumerate() {
                    // `i`, `i/t`, `i//n`, `i/t/n` forms; only the vertex index is used.
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| parse_err(path, lineno, &format!("bad face index `{tok}`")))?;
                    if i < 1 {
                        return Err(parse_err(path, lineno, &format!("face index {i} must be >= 1")));
                    }
                    f[k] = (i - 1) as usize;
                }
                faces.push(f);
            }
            _ => {} // vn, vt, o, g, s, usemtl, mtllib: ignored
        }
    }

    TriMesh::new(vertices, faces)
}

/// Positions are written with `Display`, which emits the shortest string
/// that parses back to the identical f64, so a save/load round trip is
/// bit-exact.
pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> MeshResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| MeshError::Io {
        path: path.display().to_string(),
        source,
    };
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z).map_err(io_err)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: &str) -> MeshError {
    MeshError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tri.obj");
        std::fs::write(&p, "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let m = load_obj(&p).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
        assert_eq!(m.faces[0], [0, 1, 2]);
    }

    #[test]
    fn round_trip_bit_exact() {
        let verts = vec![
            DVec3::new(0.123456789012345, -7.5e-11, 3.0),
            DVec3::new(1.0 / 3.0, 2.0f64.sqrt(), -0.25),
            DVec3::new(f64::MIN_POSITIVE, 1e20, 0.1 + 0.2),
        ];
        let m = TriMesh::new(verts, vec![[0, 1, 2]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.obj");
        save_obj(&m, &p).unwrap();
        let back = load_obj(&p).unwrap();
        assert_eq!(m.vertices, back.vertices);
        assert_eq!(m.faces, back.faces);
    }

    #[test]
    fn malformed_face_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n").unwrap();
        match load_obj(&p) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_face_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("oor.obj");
        std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap();
        assert!(matches!(load_obj(&p), Err(MeshError::IndexOutOfRange { .. })));
    }

    #[test]
    fn face_with_slashes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sl.obj");
        std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2//3 3/2/1\n").unwrap();
        let m = load_obj(&p).unwrap();
        assert_eq!(m.faces[0], [0, 1, 2]);
    }
}
