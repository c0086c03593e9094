//! Procedural motion clips: sinusoidal joint trajectories plus global root
//! motion. Clip recipes are named and versioned by their parameters so a
//! dataset manifest pins exactly what generated it.
//!
//! Joint indices follow the default skeleton: 0 pelvis, 1 spine, 2 chest,
//! 3 head, 4-6 left arm, 7-9 right arm, 10-12 left leg, 13-15 right leg.

use glam::DVec3;

use body_model::{BodyParams, SHAPE_DIM};

use crate::{SimError, SimResult};

#[derive(Debug, Clone)]
pub struct JointTrack {
    pub joint: usize,
    /// Axis-angle direction; the rotation is axis * amplitude * sin(...).
    pub axis: DVec3,
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RootMotion {
    /// Forward speed along +z (m/s).
    pub forward_speed: f64,
    /// Vertical bob amplitude (m) at twice the stride frequency.
    pub bob_amplitude: f64,
    pub bob_frequency_hz: f64,
    /// Yaw sway amplitude (radians).
    pub yaw_amplitude: f64,
    pub yaw_frequency_hz: f64,
}

#[derive(Debug, Clone)]
pub struct ClipSpec {
    pub name: String,
    pub tracks: Vec<JointTrack>,
    pub root: RootMotion,
}

fn track(joint: usize, axis: DVec3, amplitude: f64, frequency_hz: f64, phase: f64) -> JointTrack {
    JointTrack {
        joint,
        axis: axis.normalize(),
        amplitude,
        frequency_hz,
        phase,
    }
}

/// The built-in clip library.
pub fn standard_clips() -> Vec<ClipSpec> {
    use std::f64::consts::PI;
    let x = DVec3::X;
    let y = DVec3::Y;
    let z = DVec3::Z;
    vec![
        ClipSpec {
            name: "walk".into(),
            tracks: vec![
                track(10, x, 0.45, 0.9, 0.0),
                track(13, x, 0.45, 0.9, PI),
                track(11, x, 0.35, 0.9, 0.6),
                track(14, x, 0.35, 0.9, PI + 0.6),
                track(4, z, 0.18, 0.9, PI),
                track(7, z, 0.18, 0.9, 0.0),
                track(5, z, 0.15, 0.9, PI + 0.4),
                track(8, z, 0.15, 0.9, 0.4),
                track(1, y, 0.08, 0.9, 0.3),
            ],
            root: RootMotion {
                forward_speed: 0.75,
                bob_amplitude: 0.018,
                bob_frequency_hz: 1.8,
                ..RootMotion::default()
            },
        },
        ClipSpec {
            name: "sway".into(),
            tracks: vec![
                track(1, y, 0.30, 0.5, 0.0),
                track(2, y, 0.18, 0.5, 0.4),
                track(0, z, 0.10, 0.5, PI / 2.0),
                track(4, x, 0.25, 0.5, 0.0),
                track(7, x, 0.25, 0.5, PI),
            ],
            root: RootMotion {
                yaw_amplitude: 0.15,
                yaw_frequency_hz: 0.5,
                ..RootMotion::default()
            },
        },
        ClipSpec {
            name: "arm_raise".into(),
            tracks: vec![
                track(4, z, 0.55, 0.45, 0.0),
                track(7, z, 0.55, 0.45, PI),
                track(5, z, 0.25, 0.45, 0.5),
                track(8, z, 0.25, 0.45, PI + 0.5),
                track(2, x, 0.07, 0.45, 0.0),
            ],
            root: RootMotion::default(),
        },
        ClipSpec {
            name: "twist_step".into(),
            tracks: vec![
                track(10, x, 0.3, 0.7, 0.0),
                track(13, x, 0.3, 0.7, PI),
                track(1, y, 0.35, 0.7, PI / 3.0),
                track(2, y, 0.2, 0.7, PI / 2.0),
                track(4, x, 0.2, 0.7, PI),
                track(7, x, 0.2, 0.7, 0.0),
            ],
            root: RootMotion {
                forward_speed: 0.35,
                bob_amplitude: 0.012,
                bob_frequency_hz: 1.4,
                yaw_amplitude: 0.2,
                yaw_frequency_hz: 0.35,
                ..RootMotion::default()
            },
        },
    ]
}

pub fn clip_by_name(name: &str) -> SimResult<ClipSpec> {
    standard_clips()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| SimError::UnknownClip(name.to_string()))
}

/// Samples a clip into per-frame body parameters.
pub fn make_sequence(
    clip: &ClipSpec,
    beta: [f64; SHAPE_DIM],
    joint_count: usize,
    frames: usize,
    dt: f64,
) -> Vec<BodyParams> {
    (0..frames)
        .map(|fi| {
            let t = fi as f64 * dt;
            let mut theta = vec![DVec3::ZERO; joint_count];
            for tr in &clip.tracks {
                let angle =
                    tr.amplitude * (std::f64::consts::TAU * tr.frequency_hz * t + tr.phase).sin();
                theta[tr.joint] += tr.axis * angle;
            }
            let bob = clip.root.bob_amplitude
                * (std::f64::consts::TAU * clip.root.bob_frequency_hz * t).sin();
            let yaw = clip.root.yaw_amplitude
                * (std::f64::consts::TAU * clip.root.yaw_frequency_hz * t).sin();
            BodyParams {
                beta,
                theta,
                global_rot: DVec3::new(0.0, yaw, 0.0),
                global_trans: DVec3::new(0.0, bob, clip.root.forward_speed * t),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clips_resolve_by_name() {
        for c in standard_clips() {
            let again = clip_by_name(&c.name).unwrap();
            assert_eq!(again.tracks.len(), c.tracks.len());
        }
        assert!(matches!(clip_by_name("nope"), Err(SimError::UnknownClip(_))));
    }

    #[test]
    fn sequences_start_near_rest_and_stay_bounded() {
        let clip = clip_by_name("walk").unwrap();
        let frames = make_sequence(&clip, [0.0; SHAPE_DIM], 16, 90, 1.0 / 30.0);
        assert_eq!(frames.len(), 90);
        for f in &frames {
            for t in &f.theta {
                assert!(t.length() <= std::f64::consts::PI);
            }
            assert!(f.range_warnings().is_empty());
        }
    }
}
