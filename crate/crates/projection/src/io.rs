//! Packed canonical-frame archives: one binary array of per-frame X plus a
//! JSON manifest with the energy bookkeeping.

use std::path::Path;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::solve::ProjectionResult;
use crate::{ProjectionError, ProjectionErrorResult};

const MAGIC: &[u8; 4] = b"GXPK";

#[derive(Debug, Serialize, Deserialize)]
pub struct CanonicalManifest {
    pub format_version: u32,
    pub frame_count: usize,
    pub vertex_count: usize,
    pub energies: Vec<FrameEnergies>,
    pub data_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameEnergies {
    pub rec: f64,
    pub strain: f64,
    pub collision: f64,
    pub iterations: usize,
    pub residual_collisions: usize,
    pub reposed_rmse: f64,
}

pub fn save_canonical_frames(
    results: &[ProjectionResult],
    json_path: impl AsRef<Path>,
) -> ProjectionErrorResult<()> {
    let json_path = json_path.as_ref();
    let data_path = json_path.with_extension("bin");
    let vertex_count = results.first().map_or(0, |r| r.x.len());
    let manifest = CanonicalManifest {
        format_version: 1,
        frame_count: results.len(),
        vertex_count,
        energies: results
            .iter()
            .map(|r| FrameEnergies {
                rec: r.energies.rec,
                strain: r.energies.strain,
                collision: r.energies.collision,
                iterations: r.iterations,
                residual_collisions: r.residual_collisions,
                reposed_rmse: r.reposed_rmse,
            })
            .collect(),
        data_file: data_path.file_name().unwrap().to_string_lossy().into_owned(),
    };
    let mut bytes = Vec::with_capacity(8 + results.len() * vertex_count * 24);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&1u32.to_le_bytes());
    for r in results {
        assert_eq!(r.x.len(), vertex_count, "ragged frame");
        for v in &r.x {
            bytes.extend_from_slice(&v.x.to_le_bytes());
            bytes.extend_from_slice(&v.y.to_le_bytes());
            bytes.extend_from_slice(&v.z.to_le_bytes());
        }
    }
    std::fs::write(&data_path, bytes).map_err(|source| ProjectionError::Io {
        path: data_path.display().to_string(),
        source,
    })?;
    std::fs::write(json_path, serde_json::to_string_pretty(&manifest)?).map_err(|source| {
        ProjectionError::Io {
            path: json_path.display().to_string(),
            source,
        }
    })?;
    Ok(())
}

pub fn load_canonical_frames(
    json_path: impl AsRef<Path>,
) -> ProjectionErrorResult<(CanonicalManifest, Vec<Vec<DVec3>>)> {
    let json_path = json_path.as_ref();
    let manifest: CanonicalManifest =
        serde_json::from_str(&std::fs::read_to_string(json_path).map_err(|source| {
            ProjectionError::Io {
                path: json_path.display().to_string(),
                source,
            }
        })?)?;
    let data_path = json_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_file);
    let bytes = std::fs::read(&data_path).map_err(|source| ProjectionError::Io {
        path: data_path.display().to_string(),
        source,
    })?;
    let expect = 8 + manifest.frame_count * manifest.vertex_count * 24;
    if bytes.len() != expect || &bytes[0..4] != MAGIC {
        return Err(ProjectionError::Corrupt {
            path: data_path.display().to_string(),
            msg: format!("expected {expect} bytes with GXPK magic, got {}", bytes.len()),
        });
    }
    let mut frames = Vec::with_capacity(manifest.frame_count);
    let mut offset = 8;
    for _ in 0..manifest.frame_count {
        let mut frame = Vec::with_capacity(manifest.vertex_count);
        for _ in 0..manifest.vertex_count {
            let x = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
            let y = f64::from_le_bytes(bytes[offset + 8..offset + 16].try_into().unwrap());
            let z = f64::from_le_bytes(bytes[offset + 16..offset + 24].try_into().unwrap());
            frame.push(DVec3::new(x, y, z));
            offset += 24;
        }
        frames.push(frame);
    }
    Ok((manifest, frames))
}
