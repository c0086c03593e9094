//! Compact pose descriptor: PCA over flattened per-joint rotation features,
//! projected to ten dimensions.

use std::path::Path;

use glam::DVec3;

use body_model::pose_features;
use nn_core::{ParamEntry, ParamStore};

use crate::{RegressorError, RegressorResult};

pub const POSE_DESCRIPTOR_DIM: usize = 10;

#[derive(Debug, Clone)]
pub struct PoseDescriptorModel {
    pub mean: Vec<f64>,
    /// Row-major components, POSE_DESCRIPTOR_DIM x feature_dim; rows are
    /// orthonormal.
    pub components: Vec<f64>,
    pub feature_dim: usize,
    /// Fraction of corpus variance the kept components explain (logged,
    /// not enforced).
    pub explained_variance: f64,
}

impl PoseDescriptorModel {
    pub fn apply_features(&self, features: &[f64]) -> Vec<f64> {
        assert_eq!(features.len(), self.feature_dim);
        (0..POSE_DESCRIPTOR_DIM)
            .map(|c| {
                let row = &self.components[c * self.feature_dim..(c + 1) * self.feature_dim];
                row.iter()
                    .zip(features.iter().zip(&self.mean))
                    .map(|(w, (x, m))| w * (x - m))
                    .sum()
            })
            .collect()
    }

    pub fn apply(&self, theta: &[DVec3]) -> Vec<f64> {
        self.apply_features(&pose_features(theta))
    }

    /// PCA reconstruction of a feature vector from its descriptor.
    pub fn reconstruct(&self, descriptor: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &d) in descriptor.iter().enumerate() {
            let row = &self.components[c * self.feature_dim..(c + 1) * self.feature_dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += d * w;
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> RegressorResult<()> {
        let mut store = ParamStore::default();
        store.meta.insert("kind".into(), "pose_pca".into());
        store
            .meta
            .insert("explained_variance".into(), self.explained_variance.to_string());
        store.entries.push(ParamEntry {
            name: "mean".into(),
            shape: vec![self.feature_dim],
            data: self.mean.clone(),
        });
        store.entries.push(ParamEntry {
            name: "components".into(),
            shape: vec![POSE_DESCRIPTOR_DIM, self.feature_dim],
            data: self.components.clone(),
        });
        store.save(path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> RegressorResult<Self> {
        let store = ParamStore::load(path)?;
        let mean = store
            .entries
            .iter()
            .find(|e| e.name == "mean")
            .ok_or(nn_core::NnError::MissingTensor("mean".into()))?;
        let comps = store
            .entries
            .iter()
            .find(|e| e.name == "components")
            .ok_or(nn_core::NnError::MissingTensor("components".into()))?;
        Ok(Self {
            feature_dim: mean.shape[0],
            mean: mean.data.clone(),
            components: comps.data.clone(),
            explained_variance: store
                .meta
                .get("explained_variance")
                .and_then(|s| s.parse().ok())
                .unwrap_or(0.0),
        })
    }
}

/// Fits the descriptor on a pose corpus (≥ 1,000 frames).
pub fn fit_pose_descriptor(corpus: &[Vec<DVec3>]) -> RegressorResult<PoseDescriptorModel> {
    if corpus.len() < 1000 {
        return Err(RegressorError::CorpusTooSmall {
            need: 1000,
            got: corpus.len(),
        });
    }
    let features: Vec<Vec<f64>> = corpus.iter().map(|theta| pose_features(theta)).collect();
    let dim = features[0].len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in &features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x / n;
        }
    }
    // covariance (upper triangle suffices; Jacobi wants the full matrix)
    let mut cov = vec![0.0; dim * dim];
    for f in &features {
        for i in 0..dim {
            let di = f[i] - mean[i];
            if di == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[i * dim + j] += di * (f[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[i * dim + j] = cov[j * dim + i];
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen(&cov, dim);
    // sort descending by eigenvalue
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let max_l = eigenvalues[order[0]].max(0.0);
    let rank = eigenvalues
        .iter()
        .filter(|&&l| l > max_l * 1e-10)
        .count();
    if rank < POSE_DESCRIPTOR_DIM {
        return Err(RegressorError::RankDeficient {
            rank,
            need: POSE_DESCRIPTOR_DIM,
        });
    }

    let mut components = vec![0.0; POSE_DESCRIPTOR_DIM * dim];
    let mut kept = 0.0;
    for (c, &col) in order.iter().take(POSE_DESCRIPTOR_DIM).enumerate() {
        kept += eigenvalues[col].max(0.0);
        // column `col` of the eigenvector matrix
        let row = &mut components[c * dim..(c + 1) * dim];
        for (i, r) in row.iter_mut().enumerate() {
            *r = eigenvectors[i * dim + col];
        }
        // deterministic sign: strongest entry positive
        let strongest = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if row[strongest] < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(PoseDescriptorModel {
        mean,
        components,
        feature_dim: dim,
        explained_variance: if total > 0.0 { kept / total } else { 0.0 },
    })
}

/// Cyclic Jacobi for symmetric matrices; returns (eigenvalues, row-major
/// eigenvector matrix with eigenvectors in columns).
fn jacobi_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i * n + i]).collect();
    (eigenvalues, v)
}
