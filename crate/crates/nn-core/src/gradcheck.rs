//! Finite-difference gradient audits. Every differentiable path in the
//! workspace is checked against central differences through these helpers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::{ParamVisitor, Parameterized};

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub probes: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>, // (tensor, index, analytic, fd)
}

impl AuditReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    let denom = analytic.abs().max(fd.abs()).max(1e-6);
    (analytic - fd).abs() / denom
}

/// Audits analytic parameter gradients.
///
/// `compute_loss_and_grads` must zero the gradient buffers, run a full
/// forward/backward, and return the loss. `eval_loss` must run only the
/// forward pass for the current parameters. Both must be deterministic
/// (same data, same RNG draws) across calls.
pub fn audit_params<P: Parameterized>(
    net: &mut P,
    mut compute_loss_and_grads: impl FnMut(&mut P) -> f64,
    mut eval_loss: impl FnMut(&mut P) -> f64,
    n_probes: usize,
    h: f64,
    seed: u64,
) -> AuditReport {
    let _ = compute_loss_and_grads(net);

    // snapshot gradients and tensor names
    let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
    let mut grab = |name: &str, _: &[usize], _: &mut [f64], grad: &mut [f64]| {
        tensors.push((name.to_string(), grad.to_vec()));
    };
    net.for_each_param(&mut ParamVisitor::new(&mut grab));
    let total: usize = tensors.iter().map(|(_, g)| g.len()).sum();
    assert!(total > 0, "net has no parameters");

    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    let mut sum_rel = 0.0;
    let mut worst = None;
    for _ in 0..n_probes {
        let flat = rng.random_range(0..total);
        let (mut ti, mut idx) = (0, flat);
        while idx >= tensors[ti].1.len() {
            idx -= tensors[ti].1.len();
            ti += 1;
        }
        let analytic = tensors[ti].1[idx];
        let name = tensors[ti].0.clone();

        let plus = eval_perturbed(net, &name, idx, h, &mut eval_loss);
        let minus = eval_perturbed(net, &name, idx, -h, &mut eval_loss);
        let fd = (plus - minus) / (2.0 * h);
        let re = rel_err(analytic, fd);
        sum_rel += re;
        if re > max_rel {
            max_rel = re;
            worst = Some((name, idx, analytic, fd));
        }
    }
    AuditReport {
        probes: n_probes,
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / n_probes.max(1) as f64,
        worst,
    }
}

fn eval_perturbed<P: Parameterized>(
    net: &mut P,
    target: &str,
    idx: usize,
    delta: f64,
    eval_loss: &mut impl FnMut(&mut P) -> f64,
) -> f64 {
    set_param_delta(net, target, idx, delta);
    let loss = eval_loss(net);
    set_param_delta(net, target, idx, -delta);
    loss
}

fn set_param_delta<P: Parameterized>(net: &mut P, target: &str, idx: usize, delta: f64) {
    let mut f = |name: &str, _: &[usize], value: &mut [f64], _: &mut [f64]| {
        if name == target {
            value[idx] += delta;
        }
    };
    net.for_each_param(&mut ParamVisitor::new(&mut f));
}

/// Audits an analytic gradient with respect to a plain input vector.
pub fn audit_input(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    analytic_grad: &[f64],
    n_probes: usize,
    h: f64,
    seed: u64,
) -> AuditReport {
    assert_eq!(x0.len(), analytic_grad.len());
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.to_vec();
    let mut max_rel: f64 = 0.0;
    let mut sum_rel = 0.0;
    let mut worst = None;
    for _ in 0..n_probes {
        let i = rng.random_range(0..x.len());
        x[i] = x0[i] + h;
        let plus = f(&x);
        x[i] = x0[i] - h;
        let minus = f(&x);
        x[i] = x0[i];
        let fd = (plus - minus) / (2.0 * h);
        let re = rel_err(analytic_grad[i], fd);
        sum_rel += re;
        if re > max_rel {
            max_rel = re;
            worst = Some(("input".to_string(), i, analytic_grad[i], fd));
        }
    }
    AuditReport {
        probes: n_probes,
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / n_probes.max(1) as f64,
        worst,
    }
}
