//! The 42-D motion descriptor: pose descriptor plus finite-difference
//! velocities and accelerations of pose, global translation, and global
//! rotation.

use glam::DVec3;

use body_model::BodyParams;

use crate::pca::{PoseDescriptorModel, POSE_DESCRIPTOR_DIM};

pub const MOTION_DESCRIPTOR_DIM: usize = 42;

#[derive(Debug, Clone)]
pub struct MotionDescriptor(pub Vec<f64>);

/// One frame's descriptor from the (θ̄, H, K) track. Boundary frames repeat
/// the first sample (backward differences need two history entries).
pub fn build_motion_descriptor(
    pose_track: &[Vec<f64>],
    trans_track: &[DVec3],
    rot_track: &[DVec3],
    frame: usize,
    dt: f64,
) -> MotionDescriptor {
    assert_eq!(pose_track.len(), trans_track.len());
    assert_eq!(pose_track.len(), rot_track.len());
    assert!(frame < pose_track.len());
    let at = |idx: isize| -> usize { idx.max(0) as usize };
    let t0 = frame as isize;
    let (cur, prev, prev2) = (at(t0), at(t0 - 1), at(t0 - 2));

    let mut out = Vec::with_capacity(MOTION_DESCRIPTOR_DIM);
    let pose = &pose_track[cur];
    assert_eq!(pose.len(), POSE_DESCRIPTOR_DIM);
    out.extend_from_slice(pose);
    for j in 0..POSE_DESCRIPTOR_DIM {
        out.push((pose_track[cur][j] - pose_track[prev][j]) / dt);
    }
    for j in 0..POSE_DESCRIPTOR_DIM {
        out.push(
            (pose_track[cur][j] - 2.0 * pose_track[prev][j] + pose_track[prev2][j]) / (dt * dt),
        );
    }
    let d1 = (trans_track[cur] - trans_track[prev]) / dt;
    let d2 = (trans_track[cur] - trans_track[prev] * 2.0 + trans_track[prev2]) / (dt * dt);
    out.extend_from_slice(&[d1.x, d1.y, d1.z, d2.x, d2.y, d2.z]);
    let r1 = (rot_track[cur] - rot_track[prev]) / dt;
    let r2 = (rot_track[cur] - rot_track[prev] * 2.0 + rot_track[prev2]) / (dt * dt);
    out.extend_from_slice(&[r1.x, r1.y, r1.z, r2.x, r2.y, r2.z]);
    debug_assert_eq!(out.len(), MOTION_DESCRIPTOR_DIM);
    MotionDescriptor(out)
}

/// Full descriptor track for a body-parameter sequence.
pub fn descriptor_sequence(
    pca: &PoseDescriptorModel,
    frames: &[BodyParams],
    dt: f64,
) -> Vec<MotionDescriptor> {
    let pose_track: Vec<Vec<f64>> = frames.iter().map(|p| pca.apply(&p.theta)).collect();
    let trans_track: Vec<DVec3> = frames.iter().map(|p| p.global_trans).collect();
    let rot_track: Vec<DVec3> = frames.iter().map(|p| p.global_rot).collect();
    (0..frames.len())
        .map(|f| build_motion_descriptor(&pose_track, &trans_track, &rot_track, f, dt))
        .collect()
}
