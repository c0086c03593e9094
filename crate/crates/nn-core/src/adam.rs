//! Adaptive-moment optimizer with bias correction and a staged,
//! monotone non-increasing learning-rate schedule.

use std::collections::BTreeMap;

use crate::params::{ParamVisitor, Parameterized};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// (step, new learning rate) pairs; rates must be non-increasing.
    pub schedule: Vec<(usize, f64)>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            schedule: Vec::new(),
        }
    }
}

impl AdamConfig {
    /// The staged two-phase schedule used for the generative training:
    /// 1e-4 for the warm phase, then 1e-5 once the full loss is active.
    pub fn staged(switch_step: usize) -> Self {
        Self {
            learning_rate: 1e-4,
            schedule: vec![(switch_step, 1e-5)],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Per-parameter first/second moment accumulators keyed by tensor name.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    moments: BTreeMap<String, Moments>,
    step_count: usize,
    skipped_nan_steps: usize,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        let mut last = cfg.learning_rate;
        for &(_, lr) in &cfg.schedule {
            assert!(lr <= last, "learning-rate schedule must be non-increasing");
            last = lr;
        }
        Self {
            cfg,
            moments: BTreeMap::new(),
            step_count: 0,
            skipped_nan_steps: 0,
        }
    }

    pub fn current_lr(&self) -> f64 {
        let mut lr = self.cfg.learning_rate;
        for &(at, rate) in &self.cfg.schedule {
            if self.step_count >= at {
                lr = rate;
            }
        }
        lr
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn skipped_nan_steps(&self) -> usize {
        self.skipped_nan_steps
    }

    /// Applies one update from the gradients currently held by the net.
    /// A non-finite gradient anywhere skips the whole step and counts the
    /// incident.
    pub fn step<P: Parameterized>(&mut self, net: &mut P) {
        // scan for NaN first so a poisoned batch cannot half-update
        let mut any_bad = false;
        let mut scan = |_: &str, _: &[usize], _: &mut [f64], grad: &mut [f64]| {
            if grad.iter().any(|g| !g.is_finite()) {
                any_bad = true;
            }
        };
        net.for_each_param(&mut ParamVisitor::new(&mut scan));
        if any_bad {
            self.skipped_nan_steps += 1;
            self.step_count += 1;
            return;
        }

        self.step_count += 1;
        let lr = self.current_lr();
        let t = self.step_count as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let eps = self.cfg.epsilon;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let moments = &mut self.moments;
        let mut update = |name: &str, _: &[usize], value: &mut [f64], grad: &mut [f64]| {
            let entry = moments.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; value.len()],
                v: vec![0.0; value.len()],
            });
            assert_eq!(entry.m.len(), value.len(), "tensor {name} changed size");
            for i in 0..value.len() {
                let g = grad[i];
                entry.m[i] = b1 * entry.m[i] + (1.0 - b1) * g;
                entry.v[i] = b2 * entry.v[i] + (1.0 - b2) * g * g;
                let mhat = entry.m[i] / bc1;
                let vhat = entry.v[i] / bc2;
                value[i] -= lr * mhat / (vhat.sqrt() + eps);
                debug_assert!(value[i].is_finite());
            }
        };
        net.for_each_param(&mut ParamVisitor::new(&mut update));
    }
}
