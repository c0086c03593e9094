//! Per-frame projection solve and warm-started sequence driver.

use glam::DVec3;

use body_model::{BodyModel, GlobalTransform, SHAPE_DIM};
use diffuse_field::{FieldNet, SdfField, SdfMode};
use garment_model::{GarmentTemplate, PoseContext, PosedOp};

use crate::energy::{EnergyBreakdown, EnergyModel};
use crate::{ProjectionError, ProjectionErrorResult};

#[derive(Debug, Clone)]
pub struct ProjectionConfig {
    pub omega_strain: f64,
    pub omega_collision: f64,
    pub clearance: f64,
    pub step: f64,
    pub max_iterations: usize,
    /// Converged when the accepted energy decrease over this many
    /// iterations falls below `convergence_eps`.
    pub convergence_window: usize,
    pub convergence_eps: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            omega_strain: 1e-2,
            omega_collision: 1.0,
            clearance: mesh_core::DEFAULT_CLEARANCE_M,
            step: 1e-3,
            max_iterations: 500,
            convergence_window: 10,
            convergence_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// Canonical garment positions.
    pub x: Vec<DVec3>,
    pub energies: EnergyBreakdown,
    pub iterations: usize,
    /// Vertices with grid SDF below the clearance, counted honestly against
    /// the oracle form.
    pub residual_collisions: usize,
    /// RMSE of the reposed reconstruction against the target (meters).
    pub reposed_rmse: f64,
    /// Set when the solve hit a non-finite energy and returned the last
    /// valid iterate.
    pub aborted_non_finite: bool,
}

/// One posed garment frame to project.
#[derive(Debug, Clone)]
pub struct FrameTarget {
    pub positions: Vec<DVec3>,
    pub beta: [f64; SHAPE_DIM],
    pub theta: Vec<DVec3>,
    pub global: GlobalTransform,
}

pub fn count_clearance_violations(x: &[DVec3], sdf: &SdfField, clearance: f64) -> usize {
    x.iter()
        .filter(|&&p| sdf.query(p, SdfMode::Grid).value < clearance)
        .count()
}

/// Adam-style iterations with a step-halving acceptance guard: the
/// objective never increases across accepted steps.
pub fn project_frame(
    body: &BodyModel,
    net: &FieldNet,
    sdf: &SdfField,
    template: &GarmentTemplate,
    frame: &FrameTarget,
    init: &[DVec3],
    cfg: &ProjectionConfig,
) -> ProjectionErrorResult<ProjectionResult> {
    if frame.positions.len() != template.vertex_count() {
        return Err(ProjectionError::CorrespondenceMismatch {
            expected: template.vertex_count(),
            got: frame.positions.len(),
        });
    }
    let ctx = PoseContext::new(body, &frame.beta, &frame.theta, &frame.global);
    let op = PosedOp::new(net, &ctx);
    let sdf_net = sdf.net.as_ref().expect("projection needs the network SDF");
    let model = EnergyModel {
        op: &op,
        rest: &template.rest,
        sdf_net,
        target: &frame.positions,
        omega_strain: cfg.omega_strain,
        omega_collision: cfg.omega_collision,
        clearance: cfg.clearance,
    };

    let n = init.len();
    let mut x = init.to_vec();
    let mut m = vec![DVec3::ZERO; n];
    let mut v = vec![DVec3::ZERO; n];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut trust = 1.0f64;
    let mut aborted = false;

    let (first_breakdown, grad) = model.energy_grad(&x)?;
    let mut energy = first_breakdown.total(cfg.omega_strain, cfg.omega_collision);
    let mut grad = grad;
    let mut window: Vec<f64> = vec![energy];
    let mut iterations = 0;
    // once the main loop converges, a short polish pass at a tenth of the
    // step squeezes out the adaptive-step equilibrium wobble
    let mut polishing = false;
    let mut step_scale = 1.0;

    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let t = (it + 1) as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..n {
            m[i] = m[i] * beta1 + grad[i] * (1.0 - beta1);
            v[i] = v[i] * beta2 + grad[i] * grad[i] * (1.0 - beta2);
        }
        // acceptance loop: halve the trust scale until energy decreases
        let mut accepted = false;
        for _ in 0..10 {
            let scale = cfg.step * step_scale * trust;
            let trial: Vec<DVec3> = (0..n)
                .map(|i| {
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    let denom = DVec3::new(
                        vhat.x.sqrt() + eps,
                        vhat.y.sqrt() + eps,
                        vhat.z.sqrt() + eps,
                    );
                    x[i] - mhat / denom * scale
                })
                .collect();
            let (trial_breakdown, trial_grad) = model.energy_grad(&trial)?;
            let trial_energy = trial_breakdown.total(cfg.omega_strain, cfg.omega_collision);
            if !trial_energy.is_finite() {
                aborted = true;
                break;
            }
            if trial_energy <= energy {
                let _ = trial_breakdown;
                x = trial;
                energy = trial_energy;
                grad = trial_grad;
                trust = (trust * 1.15).min(1.0);
                accepted = true;
                break;
            }
            trust *= 0.5;
        }
        if aborted {
            break;
        }
        let mut stalled = !accepted;
        if accepted {
            window.push(energy);
            if window.len() > cfg.convergence_window {
                let oldest = window.remove(0);
                if oldest - energy < cfg.convergence_eps {
                    stalled = true;
                }
            }
        }
        if stalled {
            if polishing {
                break;
            }
            polishing = true;
            step_scale = 0.1;
            trust = 1.0;
            window.clear();
            window.push(energy);
        }
    }

    let (final_breakdown, eval) = model.energy_only(&x)?;
    let reposed_rmse = (eval
        .posed
        .iter()
        .zip(&frame.positions)
        .map(|(a, b)| (*a - *b).length_squared())
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(ProjectionResult {
        residual_collisions: count_clearance_violations(&x, sdf, cfg.clearance),
        x,
        energies: final_breakdown,
        iterations,
        reposed_rmse,
        aborted_non_finite: aborted,
    })
}

#[derive(Debug, Clone)]
pub struct SequenceReport {
    pub results: Vec<ProjectionResult>,
    /// Mean per-vertex displacement between consecutive canonical frames.
    pub temporal_smoothness: f64,
    pub mean_iterations: f64,
}

/// Warm-started projection: frame 0 starts from the template, frame t from
/// frame t−1's solution.
pub fn project_sequence(
    body: &BodyModel,
    net: &FieldNet,
    sdf: &SdfField,
    template: &GarmentTemplate,
    frames: &[FrameTarget],
    cfg: &ProjectionConfig,
) -> ProjectionErrorResult<SequenceReport> {
    let mut results = Vec::with_capacity(frames.len());
    let mut init = template.mesh.vertices.clone();
    for (fi, frame) in frames.iter().enumerate() {
        let result = project_frame(body, net, sdf, template, frame, &init, cfg).map_err(|e| {
            ProjectionError::Frame {
                frame: fi,
                source: Box::new(e),
            }
        })?;
        init = result.x.clone();
        results.push(result);
    }
    let mut smooth = 0.0;
    let mut pairs = 0;
    for w in results.windows(2) {
        let n = w[0].x.len();
        smooth += w[0]
            .x
            .iter()
            .zip(&w[1].x)
            .map(|(a, b)| (*a - *b).length())
            .sum::<f64>()
            / n as f64;
        pairs += 1;
    }
    let mean_iterations =
        results.iter().map(|r| r.iterations as f64).sum::<f64>() / results.len().max(1) as f64;
    Ok(SequenceReport {
        temporal_smoothness: if pairs > 0 { smooth / pairs as f64 } else { 0.0 },
        mean_iterations,
        results,
    })
}
