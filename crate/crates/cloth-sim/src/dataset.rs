//! Sequence simulation and the dataset writer. Every stored frame passes a
//! winding-number penetration audit before it enters the dataset.

use std::path::{Path, PathBuf};

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use body_model::{BodyModel, BodyParams, SHAPE_DIM};
use mesh_core::{winding_number, TriMesh};

use crate::garment::{pin_targets, GarmentSheet};
use crate::motion::{clip_by_name, make_sequence};
use crate::solver::{step, ClothState, PosedCollider, SimConfig};
use crate::{SimError, SimResult};

/// Simulates one sequence; returns per-frame garment positions (recording
/// starts after the settle phase).
pub fn simulate_sequence(
    sheet: &GarmentSheet,
    body: &BodyModel,
    frames: &[BodyParams],
    cfg: &SimConfig,
) -> SimResult<Vec<Vec<DVec3>>> {
    assert!(!frames.is_empty());
    let pinned: Vec<usize> = sheet.pins.iter().map(|p| p.vertex).collect();
    let mut state = ClothState::from_mesh(&sheet.mesh, &pinned);

    let (mut posed, mut targets) =
        pin_targets(&sheet.pins, body, &frames[0].beta, &frames[0].theta, &frames[0].global());
    // place the pinned ring at its targets immediately
    for &(vi, p) in &targets {
        state.positions[vi] = p;
    }
    let mut collider = PosedCollider::new(posed.clone());
    for _ in 0..cfg.settle_frames {
        let pins: Vec<(usize, DVec3, DVec3)> =
            targets.iter().map(|&(vi, p)| (vi, p, p)).collect();
        step(&mut state, Some(&collider), &pins, cfg);
    }

    let mut out = Vec::with_capacity(frames.len());
    for (fi, params) in frames.iter().enumerate() {
        let (next_posed, next_targets) =
            pin_targets(&sheet.pins, body, &params.beta, &params.theta, &params.global());
        let pins: Vec<(usize, DVec3, DVec3)> = targets
            .iter()
            .zip(&next_targets)
            .map(|(&(vi, from), &(_, to))| (vi, from, to))
            .collect();
        collider = PosedCollider::new(next_posed.clone());
        step(&mut state, Some(&collider), &pins, cfg);
        posed = next_posed;
        targets = next_targets;

        for (vi, p) in state.positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(SimError::NonFinite { frame: fi, vertex: vi });
            }
        }
        // audit gate: no recorded vertex may sit inside the posed body;
        // pushout can bounce between limbs, so iterate before giving up
        let mut positions = state.positions.clone();
        let mut inside: Vec<usize> = audit_penetrations(&positions, &posed);
        let mut passes = 0;
        while !inside.is_empty() && passes < 5 {
            for &vi in &inside {
                positions[vi] = collider.push_out(positions[vi], cfg.collision_offset);
            }
            inside = audit_penetrations(&positions, &posed);
            passes += 1;
        }
        if !inside.is_empty() {
            return Err(SimError::AuditFailed {
                frame: fi,
                count: inside.len(),
            });
        }
        if passes > 0 {
            state.positions = positions.clone();
        }
        out.push(positions);
    }
    Ok(out)
}

/// Indices of garment vertices strictly inside the posed body.
pub fn audit_penetrations(positions: &[DVec3], posed_body: &TriMesh) -> Vec<usize> {
    positions
        .par_iter()
        .enumerate()
        .filter_map(|(vi, &p)| {
            if winding_number(posed_body, p) > 0.5 {
                Some(vi)
            } else {
                None
            }
        })
        .collect()
}

/// The canonical template: the sheet settled on the mean body at rest.
pub fn settle_template(
    sheet: &GarmentSheet,
    body: &BodyModel,
    cfg: &SimConfig,
    extra_clearance: f64,
) -> SimResult<TriMesh> {
    let rest = BodyParams::rest(body.joint_count());
    let settle_cfg = SimConfig {
        collision_offset: cfg.collision_offset + extra_clearance,
        settle_frames: cfg.settle_frames.max(60),
        ..cfg.clone()
    };
    let frames = vec![rest.clone(); 30];
    let mut result = simulate_sequence(sheet, body, &frames, &settle_cfg)?;
    let last = result.pop().expect("settle produced frames");
    sheet.mesh.with_positions(last).map_err(Into::into)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub body_hash: u64,
    pub garment_vertices: usize,
    pub dt: f64,
    pub total_frames: usize,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    pub clip: String,
    pub beta: Vec<f64>,
    pub frames: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SequenceParams {
    pub beta: Vec<f64>,
    pub dt: f64,
    pub frames: Vec<FrameParams>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameParams {
    pub theta: Vec<[f64; 3]>,
    pub global_rot: [f64; 3],
    pub global_trans: [f64; 3],
}

/// Generates `n_shapes × clips` sequences and writes the dataset layout:
/// `<root>/manifest.json`, `<root>/seq_<id>/params.json`,
/// `<root>/seq_<id>/frame_<n>.bin`.
pub fn generate_dataset(
    root: impl AsRef<Path>,
    body: &BodyModel,
    sheet: &GarmentSheet,
    n_shapes: usize,
    clips: &[String],
    frames_per_clip: usize,
    cfg: &SimConfig,
    seed: u64,
) -> SimResult<DatasetManifest> {
    let root = root.as_ref();
    std::fs::create_dir_all(root).map_err(|source| SimError::Io {
        path: root.display().to_string(),
        source,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for shape_i in 0..n_shapes {
        // β drawn uniformly in [−2, 2]^10, recorded in the manifest
        let mut beta = [0.0; SHAPE_DIM];
        for b in beta.iter_mut() {
            *b = rng.random_range(-2.0..2.0);
        }
        for clip_name in clips {
            jobs.push((shape_i, clip_name.clone(), beta));
        }
    }

    let results: Vec<SimResult<(SequenceEntry, PathBuf)>> = jobs
        .par_iter()
        .map(|(shape_i, clip_name, beta)| {
            let clip = clip_by_name(clip_name)?;
            let params = make_sequence(&clip, *beta, body.joint_count(), frames_per_clip, cfg.dt);
            let frames = simulate_sequence(sheet, body, &params, cfg)?;
            let id = format!("{:03}_{}", shape_i, clip_name);
            let dir = root.join(format!("seq_{id}"));
            std::fs::create_dir_all(&dir).map_err(|source| SimError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let seq_params = SequenceParams {
                beta: beta.to_vec(),
                dt: cfg.dt,
                frames: params
                    .iter()
                    .map(|p| FrameParams {
                        theta: p.theta.iter().map(|t| [t.x, t.y, t.z]).collect(),
                        global_rot: [p.global_rot.x, p.global_rot.y, p.global_rot.z],
                        global_trans: [p.global_trans.x, p.global_trans.y, p.global_trans.z],
                    })
                    .collect(),
            };
            let params_path = dir.join("params.json");
            std::fs::write(&params_path, serde_json::to_string(&seq_params)?).map_err(
                |source| SimError::Io {
                    path: params_path.display().to_string(),
                    source,
                },
            )?;
            for (fi, positions) in frames.iter().enumerate() {
                save_frame(&dir.join(format!("frame_{fi:04}.bin")), positions)?;
            }
            Ok((
                SequenceEntry {
                    id,
                    clip: clip_name.clone(),
                    beta: beta.to_vec(),
                    frames: frames.len(),
                },
                dir,
            ))
        })
        .collect();

    let mut sequences = Vec::new();
    for r in results {
        let (entry, _) = r?;
        sequences.push(entry);
    }
    sequences.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = DatasetManifest {
        format_version: 1,
        seed,
        body_hash: body.content_hash(),
        garment_vertices: sheet.mesh.vertex_count(),
        dt: cfg.dt,
        total_frames: sequences.iter().map(|s| s.frames).sum(),
        sequences,
    };
    let manifest_path = root.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?).map_err(
        |source| SimError::Io {
            path: manifest_path.display().to_string(),
            source,
        },
    )?;
    Ok(manifest)
}

const FRAME_MAGIC: &[u8; 4] = b"GFRM";

pub fn save_frame(path: impl AsRef<Path>, positions: &[DVec3]) -> SimResult<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(12 + positions.len() * 24);
    bytes.extend_from_slice(FRAME_MAGIC);
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&(positions.len() as u32).to_le_bytes());
    for p in positions {
        bytes.extend_from_slice(&p.x.to_le_bytes());
        bytes.extend_from_slice(&p.y.to_le_bytes());
        bytes.extend_from_slice(&p.z.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_frame(path: impl AsRef<Path>) -> SimResult<Vec<DVec3>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 12 || &bytes[0..4] != FRAME_MAGIC {
        return Err(SimError::Corrupt {
            path: path.display().to_string(),
            msg: "bad magic".into(),
        });
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + n * 24 {
        return Err(SimError::Corrupt {
            path: path.display().to_string(),
            msg: format!("expected {n} vertices"),
        });
    }
    let mut out = Vec::with_capacity(n);
    let mut off = 12;
    for _ in 0..n {
        let x = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let y = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
        let z = f64::from_le_bytes(bytes[off + 16..off + 24].try_into().unwrap());
        out.push(DVec3::new(x, y, z));
        off += 24;
    }
    Ok(out)
}

pub fn load_sequence_params(dir: impl AsRef<Path>) -> SimResult<(Vec<BodyParams>, f64)> {
    let path = dir.as_ref().join("params.json");
    let params: SequenceParams =
        serde_json::from_str(&std::fs::read_to_string(&path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?)?;
    let mut beta = [0.0; SHAPE_DIM];
    for (i, b) in params.beta.iter().take(SHAPE_DIM).enumerate() {
        beta[i] = *b;
    }
    let frames = params
        .frames
        .iter()
        .map(|f| BodyParams {
            beta,
            theta: f.theta.iter().map(|t| DVec3::from_array(*t)).collect(),
            global_rot: DVec3::from_array(f.global_rot),
            global_trans: DVec3::from_array(f.global_trans),
        })
        .collect();
    Ok((frames, params.dt))
}
