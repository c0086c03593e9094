//! Body model persistence: a JSON manifest next to one binary blob, with a
//! format version and a content hash other artifacts pin themselves to.

use std::io::Read;
use std::path::Path;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use mesh_core::TriMesh;

use crate::model::{BodyModel, SHAPE_DIM};
use crate::{BodyError, BodyResult};

const BLOB_MAGIC: &[u8; 4] = b"BODY";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct BodyManifest {
    pub format_version: u32,
    pub vertex_count: usize,
    pub face_count: usize,
    pub joint_count: usize,
    pub joint_names: Vec<String>,
    /// Parent per joint; root encoded as its own index.
    pub parents: Vec<usize>,
    pub build_tag: String,
    pub blob_file: String,
    pub blob_hash: u64,
}

impl BodyModel {
    /// FNV hash of the serialized blob; downstream artifacts (garment
    /// sidecars, checkpoints) store this to detect mismatched pairings.
    pub fn content_hash(&self) -> u64 {
        mesh_core_hash(&blob_bytes(self))
    }

    pub fn save(&self, json_path: impl AsRef<Path>) -> BodyResult<()> {
        let json_path = json_path.as_ref();
        let blob_path = json_path.with_extension("blob");
        let blob = blob_bytes(self);
        let manifest = BodyManifest {
            format_version: FORMAT_VERSION,
            vertex_count: self.vertex_count(),
            face_count: self.template.face_count(),
            joint_count: self.joint_count(),
            joint_names: self.joint_names.clone(),
            parents: self
                .parents
                .iter()
                .enumerate()
                .map(|(i, p)| p.unwrap_or(i))
                .collect(),
            build_tag: self.build_tag.clone(),
            blob_file: blob_path
                .file_name()
                .unwrap()
                .to_string_lossy()
                .into_owned(),
            blob_hash: mesh_core_hash(&blob),
        };
        std::fs::write(&blob_path, &blob).map_err(|source| BodyError::Io {
            path: blob_path.display().to_string(),
            source,
        })?;
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(json_path, json).map_err(|source| BodyError::Io {
            path: json_path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn load(json_path: impl AsRef<Path>) -> BodyResult<BodyModel> {
        let json_path = json_path.as_ref();
        let manifest: BodyManifest = serde_json::from_str(&std::fs::read_to_string(json_path)
            .map_err(|source| BodyError::Io {
                path: json_path.display().to_string(),
                source,
            })?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(BodyError::Corrupt {
                path: json_path.display().to_string(),
                msg: format!("unsupported format version {}", manifest.format_version),
            });
        }
        let blob_path = json_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.blob_file);
        let mut blob = Vec::new();
        std::fs::File::open(&blob_path)
            .and_then(|mut f| f.read_to_end(&mut blob))
            .map_err(|source| BodyError::Io {
                path: blob_path.display().to_string(),
                source,
            })?;
        if mesh_core_hash(&blob) != manifest.blob_hash {
            return Err(BodyError::Corrupt {
                path: blob_path.display().to_string(),
                msg: "blob hash mismatch".into(),
            });
        }
        let model = parse_blob(&blob, &manifest, &blob_path)?;
        model.validate()?;
        model.template.validate_connected()?;
        Ok(model)
    }
}

fn mesh_core_hash(bytes: &[u8]) -> u64 {
    // FNV-1a, inlined to keep this crate independent of nn-core
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct BlobWriter {
    buf: Vec<u8>,
}

impl BlobWriter {
    fn new() -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(BLOB_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { buf }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn vec3s(&mut self, vs: &[DVec3]) {
        for v in vs {
            self.f64s([v.x, v.y, v.z]);
        }
    }

    fn sparse_rows(&mut self, rows: &[Vec<(usize, f64)>]) {
        self.u32(rows.len() as u32);
        for row in rows {
            self.u32(row.len() as u32);
            for &(i, w) in row {
                self.u32(i as u32);
                self.f64s([w]);
            }
        }
    }
}

fn blob_bytes(model: &BodyModel) -> Vec<u8> {
    let mut w = BlobWriter::new();
    w.u32(model.vertex_count() as u32);
    w.u32(model.template.face_count() as u32);
    w.u32(model.joint_count() as u32);
    w.vec3s(&model.template.vertices);
    for f in &model.template.faces {
        w.u32(f[0] as u32);
        w.u32(f[1] as u32);
        w.u32(f[2] as u32);
    }
    w.vec3s(&model.rest_joints);
    w.sparse_rows(&model.weights);
    for row in &model.shape_basis {
        for m in row {
            w.f64s([m.x, m.y, m.z]);
        }
    }
    w.f64s(model.shape_mode_scale);
    w.f64s(model.pose_basis.iter().copied());
    w.sparse_rows(&model.joint_regressor);
    w.f64s(model.bone_sigmas.iter().copied());
    w.buf
}

struct BlobReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> BlobReader<'a> {
    fn take(&mut self, n: usize) -> BodyResult<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(BodyError::Corrupt {
                path: self.path.clone(),
                msg: "unexpected end of blob".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> BodyResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> BodyResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec3(&mut self) -> BodyResult<DVec3> {
        Ok(DVec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn sparse_rows(&mut self) -> BodyResult<Vec<Vec<(usize, f64)>>> {
        let n = self.u32()? as usize;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let count = self.u32()? as usize;
            let mut row = Vec::with_capacity(count);
            for _ in 0..count {
                let i = self.u32()? as usize;
                let w = self.f64()?;
                row.push((i, w));
            }
            rows.push(row);
        }
        Ok(rows)
    }
}

fn parse_blob(blob: &[u8], manifest: &BodyManifest, path: &Path) -> BodyResult<BodyModel> {
    let mut r = BlobReader {
        buf: blob,
        pos: 0,
        path: path.display().to_string(),
    };
    if r.take(4)? != BLOB_MAGIC {
        return Err(BodyError::Corrupt {
            path: r.path.clone(),
            msg: "bad magic".into(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(BodyError::Corrupt {
            path: r.path.clone(),
            msg: format!("unsupported blob version {version}"),
        });
    }
    let nverts = r.u32()? as usize;
    let nfaces = r.u32()? as usize;
    let k = r.u32()? as usize;
    let mut vertices = Vec::with_capacity(nverts);
    for _ in 0..nverts {
        vertices.push(r.vec3()?);
    }
    let mut faces = Vec::with_capacity(nfaces);
    for _ in 0..nfaces {
        faces.push([r.u32()? as usize, r.u32()? as usize, r.u32()? as usize]);
    }
    let mut rest_joints = Vec::with_capacity(k);
    for _ in 0..k {
        rest_joints.push(r.vec3()?);
    }
    let weights = r.sparse_rows()?;
    let mut shape_basis = Vec::with_capacity(nverts);
    for _ in 0..nverts {
        let mut row = [DVec3::ZERO; SHAPE_DIM];
        for m in row.iter_mut() {
            *m = r.vec3()?;
        }
        shape_basis.push(row);
    }
    let mut shape_mode_scale = [0.0; SHAPE_DIM];
    for s in shape_mode_scale.iter_mut() {
        *s = r.f64()?;
    }
    let fdim = 9 * k;
    let mut pose_basis = Vec::with_capacity(nverts * 3 * fdim);
    for _ in 0..nverts * 3 * fdim {
        pose_basis.push(r.f64()?);
    }
    let joint_regressor = r.sparse_rows()?;
    let mut bone_sigmas = Vec::with_capacity(k);
    for _ in 0..k {
        bone_sigmas.push(r.f64()?);
    }

    let template = TriMesh::new(vertices, faces)?;
    Ok(BodyModel {
        template,
        joint_names: manifest.joint_names.clone(),
        parents: manifest
            .parents
            .iter()
            .enumerate()
            .map(|(i, &p)| if p == i { None } else { Some(p) })
            .collect(),
        rest_joints,
        weights,
        shape_basis,
        shape_mode_scale,
        pose_basis,
        joint_regressor,
        bone_sigmas,
        build_tag: manifest.build_tag.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_default_body, BodyBuildConfig};

    #[test]
    fn save_load_round_trip_preserves_hash() {
        let model = build_default_body(&BodyBuildConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("body.json");
        model.save(&p).unwrap();
        let loaded = BodyModel::load(&p).unwrap();
        assert_eq!(loaded.content_hash(), model.content_hash());
        assert_eq!(loaded.vertex_count(), model.vertex_count());
        assert_eq!(loaded.joint_names, model.joint_names);
        assert_eq!(loaded.rest_joints, model.rest_joints);
        // behavior identical on a posed sample
        let mut theta = vec![DVec3::ZERO; model.joint_count()];
        theta[5] = DVec3::new(0.2, 0.7, -0.1);
        let beta = {
            let mut b = [0.0; SHAPE_DIM];
            b[3] = 1.5;
            b
        };
        let a = model.skin_body_with_global(&beta, &theta, &crate::GlobalTransform::identity());
        let b = loaded.skin_body_with_global(&beta, &theta, &crate::GlobalTransform::identity());
        assert_eq!(a.vertices, b.vertices);
    }
}
