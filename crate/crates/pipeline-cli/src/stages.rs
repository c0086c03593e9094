//! Pipeline stages with content-hashed stamps: rerunning a completed stage
//! with unchanged config and inputs is a no-op.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use glam::DVec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use body_model::{build_default_body, BodyBuildConfig, BodyModel, BodyParams};
use cloth_sim::{generate_dataset, load_frame, load_sequence_params, settle_template, skirt_sheet};
use diffuse_field::{
    build_sdf_grid, train_field_net, ClosestPointIndex, DiffusionConfig, FieldNet,
    FieldNetConfig, FieldTrainConfig, SdfField, SdfGrid, SdfNetConfig,
};
use garment_model::{GarmentTemplate, PoseContext, PosedOp};
use generative_vae::{train_vae, GarmentVae};
use nn_core::Mat;
use projection::{
    load_canonical_frames, project_frame, save_canonical_frames, FrameTarget, ProjectionResult,
};
use regressor::{
    descriptor_sequence, fit_pose_descriptor, train_regressor, PoseDescriptorModel,
    RegressorConfig, RegressorNet, RegressorTrainConfig, SequenceSample,
};

use crate::collision::{count_collisions, CollisionCount};
use crate::config::RunConfig;

pub struct Paths {
    pub root: PathBuf,
}

impl Paths {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.data_root.clone(),
        }
    }

    pub fn body_json(&self) -> PathBuf {
        self.root.join("body/model.json")
    }

    pub fn template_obj(&self) -> PathBuf {
        self.root.join("template/garment.obj")
    }

    pub fn dataset(&self, split: &str) -> PathBuf {
        self.root.join("data").join(split)
    }

    pub fn fieldnet(&self) -> PathBuf {
        self.root.join("fields/fieldnet.ckpt")
    }

    pub fn sdf_grid(&self) -> PathBuf {
        self.root.join("fields/sdf_grid.json")
    }

    pub fn sdf_net(&self) -> PathBuf {
        self.root.join("fields/sdf_net.ckpt")
    }

    pub fn fields_report(&self) -> PathBuf {
        self.root.join("fields/report.json")
    }

    pub fn canonical(&self, split: &str, id: &str) -> PathBuf {
        self.root.join("canonical").join(split).join(format!("seq_{id}.json"))
    }

    pub fn canonical_report(&self) -> PathBuf {
        self.root.join("canonical/report.json")
    }

    pub fn vae_ckpt(&self) -> PathBuf {
        self.root.join("vae/vae.ckpt")
    }

    pub fn vae_log(&self) -> PathBuf {
        self.root.join("vae/train_log.csv")
    }

    pub fn pca_ckpt(&self) -> PathBuf {
        self.root.join("regressor/pose_pca.ckpt")
    }

    pub fn regressor_ckpt(&self) -> PathBuf {
        self.root.join("regressor/regressor.ckpt")
    }

    pub fn regressor_log(&self) -> PathBuf {
        self.root.join("regressor/train_log.csv")
    }

    pub fn eval_dir(&self, seq: &str) -> PathBuf {
        self.root.join("eval").join(seq)
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.root.join("ablation")
    }

    fn stamp(&self, stage: &str) -> PathBuf {
        self.root.join("stamps").join(format!("{stage}.json"))
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct Stamp {
    stage: String,
    config_hash: u64,
    inputs_hash: u64,
}

/// Runs `body` unless an identical stamp and the probe output already
/// exist. Writes the resolved config snapshot on every invocation.
pub fn run_stage(
    cfg: &RunConfig,
    paths: &Paths,
    stage: &str,
    config_hash: u64,
    inputs_hash: u64,
    probe_outputs: &[PathBuf],
    force: bool,
    body: impl FnOnce() -> Result<()>,
) -> Result<bool> {
    std::fs::create_dir_all(&paths.root)?;
    std::fs::write(paths.root.join("config.resolved.json"), cfg.resolved_json())?;
    let stamp = Stamp {
        stage: stage.to_string(),
        config_hash,
        inputs_hash,
    };
    let stamp_path = paths.stamp(stage);
    if !force {
        if let Ok(text) = std::fs::read_to_string(&stamp_path) {
            if let Ok(prev) = serde_json::from_str::<Stamp>(&text) {
                if prev == stamp && probe_outputs.iter().all(|p| p.exists()) {
                    println!("[{stage}] up to date, skipping");
                    return Ok(false);
                }
            }
        }
    }
    let t = Instant::now();
    body()?;
    std::fs::create_dir_all(stamp_path.parent().unwrap())?;
    std::fs::write(&stamp_path, serde_json::to_string_pretty(&stamp)?)?;
    println!("[{stage}] done in {:.1?}", t.elapsed());
    Ok(true)
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap())?;
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- loaders

pub fn load_body(paths: &Paths) -> Result<BodyModel> {
    BodyModel::load(paths.body_json()).context("loading body model (run gen-data first)")
}

pub fn load_template(paths: &Paths, body: &BodyModel) -> Result<GarmentTemplate> {
    GarmentTemplate::load(paths.template_obj(), body.content_hash())
        .context("loading garment template")
}

fn require_meta(store: &nn_core::ParamStore, key: &str, expect: u64, what: &str) -> Result<()> {
    let got: u64 = store
        .meta
        .get(key)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| anyhow!("{what}: checkpoint missing provenance key {key}"))?;
    if got != expect {
        bail!(
            "{what}: checkpoint was built against {key}={got:#x}, but the current artifact hashes to {expect:#x}; \
             regenerate the downstream stages"
        );
    }
    Ok(())
}

pub fn load_fields(paths: &Paths, body: &BodyModel) -> Result<(FieldNet, SdfField)> {
    let (net, store) = FieldNet::load(paths.fieldnet()).context("loading field net")?;
    require_meta(&store, "body_hash", body.content_hash(), "field net")?;
    let grid = SdfGrid::load(paths.sdf_grid()).context("loading SDF grid")?;
    let (sdf, sdf_store) = SdfField::load_net(grid, paths.sdf_net()).context("loading SDF net")?;
    require_meta(&sdf_store, "body_hash", body.content_hash(), "SDF net")?;
    Ok((net, sdf))
}

pub fn load_vae(paths: &Paths, path: &Path, sdf: &SdfField, template: &GarmentTemplate) -> Result<GarmentVae> {
    let _ = paths;
    let (vae, store) = GarmentVae::load(path).context("loading VAE")?;
    require_meta(&store, "sdf_hash", sdf.grid.content_hash(), "VAE")?;
    require_meta(
        &store,
        "template_hash",
        template_hash(template),
        "VAE",
    )?;
    Ok(vae)
}

pub fn template_hash(template: &GarmentTemplate) -> u64 {
    let mut h = nn_core::Fnv::new();
    for v in &template.mesh.vertices {
        h.update(&v.x.to_le_bytes());
        h.update(&v.y.to_le_bytes());
        h.update(&v.z.to_le_bytes());
    }
    h.update(&template.body_hash.to_le_bytes());
    h.finish()
}

fn vae_hash(path: &Path) -> Result<u64> {
    Ok(nn_core::ParamStore::load(path)?.content_hash())
}

// ---------------------------------------------------------------- stages

pub fn gen_data(cfg: &RunConfig, force: bool) -> Result<bool> {
    let paths = Paths::new(cfg);
    let config_hash = cfg.section_hash(&["body", "garment", "sim", "dataset"]);
    run_stage(
        cfg,
        &paths,
        "gen-data",
        config_hash,
        0,
        &[
            paths.body_json(),
            paths.template_obj(),
            paths.dataset("train").join("manifest.json"),
            paths.dataset("test").join("manifest.json"),
        ],
        force,
        || {
            let body = build_default_body(&BodyBuildConfig {
                cell_size: cfg.body.cell_size,
                blend: cfg.body.blend,
                seed: cfg.stage_seed("body"),
                pose_basis_scale: cfg.body.pose_basis_scale,
            })?;
            std::fs::create_dir_all(paths.body_json().parent().unwrap())?;
            body.save(paths.body_json())?;
            println!(
                "[gen-data] body: {} vertices, {} faces",
                body.vertex_count(),
                body.template.face_count()
            );

            let sheet = skirt_sheet(
                &body,
                cfg.garment.cols,
                cfg.garment.rows,
                cfg.garment.radius_top,
                cfg.garment.radius_bottom,
                cfg.garment.y_top,
                cfg.garment.y_bottom,
            );
            let sim = cfg.sim.to_sim_config(cfg.garment.clearance, cfg.stage_seed("sim"));
            let template_mesh = settle_template(&sheet, &body, &sim, cfg.garment.template_slack)?;
            let template = GarmentTemplate::new(
                template_mesh,
                cfg.garment.clearance,
                body.content_hash(),
            )?;
            std::fs::create_dir_all(paths.template_obj().parent().unwrap())?;
            template.save(paths.template_obj())?;
            println!("[gen-data] template: {} vertices", template.vertex_count());

            let train_manifest = generate_dataset(
                paths.dataset("train"),
                &body,
                &sheet,
                cfg.dataset.train_shapes,
                &cfg.dataset.train_clips,
                cfg.dataset.frames_per_clip,
                &sim,
                cfg.stage_seed("data-train"),
            )?;
            println!(
                "[gen-data] train: {} sequences, {} frames",
                train_manifest.sequences.len(),
                train_manifest.total_frames
            );
            let test_manifest = generate_dataset(
                paths.dataset("test"),
                &body,
                &sheet,
                cfg.dataset.test_shapes,
                &cfg.dataset.test_clips,
                cfg.dataset.test_frames_per_clip,
                &sim,
                cfg.stage_seed("data-test"),
            )?;
            println!(
                "[gen-data] test: {} sequences, {} frames",
                test_manifest.sequences.len(),
                test_manifest.total_frames
            );
            Ok(())
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FieldsReport {
    pub fieldnet_weights_l1_mean: f64,
    pub fieldnet_weights_l1_max: f64,
    pub fieldnet_shape_mae: f64,
    pub fieldnet_pose_mae: f64,
    pub sdf_max_err: f64,
    pub sdf_mean_err: f64,
}

pub fn train_fields(cfg: &RunConfig, force: bool) -> Result<bool> {
    let paths = Paths::new(cfg);
    let body = load_body(&paths)?;
    let config_hash = cfg.section_hash(&["fields"]);
    let inputs_hash = body.content_hash();
    run_stage(
        cfg,
        &paths,
        "train-fields",
        config_hash,
        inputs_hash,
        &[paths.fieldnet(), paths.sdf_grid(), paths.sdf_net(), paths.fields_report()],
        force,
        || {
            std::fs::create_dir_all(paths.fieldnet().parent().unwrap())?;
            let grid = build_sdf_grid(&body.template, cfg.fields.sdf_spacing, cfg.fields.sdf_margin)?;
            grid.save(paths.sdf_grid())?;
            // the body is sculpted from this capsule union; the network
            // only has to carry the residual against it
            let mut prior = body_model::default_capsules();
            prior.blend = cfg.body.blend;
            let (sdf_net, sdf_report) = diffuse_field::sdf::fit_sdf_net_with_prior(
                &grid,
                &body.template,
                &SdfNetConfig {
                    hidden: cfg.fields.sdf_hidden.clone(),
                    seed: cfg.stage_seed("sdf-net"),
                },
                &diffuse_field::sdf::SdfFitConfig {
                    samples: cfg.fields.sdf_samples,
                    epochs: cfg.fields.sdf_epochs,
                    seed: cfg.stage_seed("sdf-fit"),
                    ..Default::default()
                },
                Some(prior),
            )?;
            println!(
                "[train-fields] sdf: max {:.4} m, mean {:.5} m",
                sdf_report.held_out_max_err, sdf_report.held_out_mean_err
            );
            let field = SdfField {
                grid,
                net: Some(sdf_net),
            };
            field.save_net(
                paths.sdf_net(),
                &[("body_hash", body.content_hash().to_string())],
            )?;

            let index = ClosestPointIndex::new(Arc::new(body.clone()));
            let (fieldnet, f_report) = train_field_net(
                &index,
                &DiffusionConfig::default(),
                FieldNetConfig::for_body(&body, cfg.fields.trunk_hidden.clone(), cfg.stage_seed("fieldnet")),
                &FieldTrainConfig {
                    train_points: cfg.fields.train_points,
                    train_mc_samples: cfg.fields.train_mc_samples,
                    epochs: cfg.fields.epochs,
                    seed: cfg.stage_seed("fieldnet-data"),
                    ..FieldTrainConfig::default()
                },
            )?;
            println!(
                "[train-fields] fieldnet: weights L1 mean {:.4} max {:.4}",
                f_report.held_out_weights_l1_mean, f_report.held_out_weights_l1_max
            );
            fieldnet.save(
                paths.fieldnet(),
                &[("body_hash", body.content_hash().to_string())],
            )?;
            let report = FieldsReport {
                fieldnet_weights_l1_mean: f_report.held_out_weights_l1_mean,
                fieldnet_weights_l1_max: f_report.held_out_weights_l1_max,
                fieldnet_shape_mae: f_report.held_out_shape_mae,
                fieldnet_pose_mae: f_report.held_out_pose_mae,
                sdf_max_err: sdf_report.held_out_max_err,
                sdf_mean_err: sdf_report.held_out_mean_err,
            };
            std::fs::write(paths.fields_report(), serde_json::to_string_pretty(&report)?)?;
            Ok(())
        },
    )
}

#[derive(Debug, Serialize, Deserialize, Default, Clone)]
pub struct ProjectReport {
    pub sequences: Vec<SequenceProjection>,
}

#[derive(Debug, Serialize, Deserialize, Clone)]
pub struct SequenceProjection {
    pub split: String,
    pub id: String,
    pub frames: usize,
    pub mean_iterations: f64,
    pub mean_reposed_rmse: f64,
    pub max_reposed_rmse: f64,
    pub temporal_smoothness: f64,
    /// Frames whose residual clearance violations did not exceed the
    /// violations of their initialization.
    pub non_increasing_frames: usize,
}

pub fn dataset_sequence_ids(paths: &Paths, split: &str) -> Result<Vec<String>> {
    let manifest: cloth_sim::DatasetManifest = serde_json::from_str(
        &std::fs::read_to_string(paths.dataset(split).join("manifest.json"))
            .context("dataset manifest missing (run gen-data)")?,
    )?;
    Ok(manifest.sequences.iter().map(|s| s.id.clone()).collect())
}

pub fn load_targets(
    paths: &Paths,
    split: &str,
    id: &str,
    max_frames: usize,
) -> Result<(Vec<FrameTarget>, f64)> {
    let dir = paths.dataset(split).join(format!("seq_{id}"));
    let (params, dt) = load_sequence_params(&dir)?;
    let take = params.len().min(max_frames);
    let mut frames = Vec::with_capacity(take);
    for (fi, p) in params.iter().take(take).enumerate() {
        let positions = load_frame(dir.join(format!("frame_{fi:04}.bin")))?;
        frames.push(FrameTarget {
            positions,
            beta: p.beta,
            theta: p.theta.clone(),
            global: p.global(),
        });
    }
    Ok((frames, dt))
}

pub fn project(cfg: &RunConfig, force: bool) -> Result<bool> {
    let paths = Paths::new(cfg);
    let body = load_body(&paths)?;
    let template = load_template(&paths, &body)?;
    let (fieldnet, sdf) = load_fields(&paths, &body)?;
    template
        .validate_against_sdf(&sdf.grid)
        .context("template clearance gate")?;
    let config_hash = cfg.section_hash(&["projection"]);
    let mut inputs = nn_core::Fnv::new();
    inputs.update(&body.content_hash().to_le_bytes());
    inputs.update(&sdf.grid.content_hash().to_le_bytes());
    run_stage(
        cfg,
        &paths,
        "project",
        config_hash,
        inputs.finish(),
        &[paths.canonical_report()],
        force,
        || {
            let pcfg = cfg.projection.to_projection_config(cfg.garment.clearance);
            let mut report = ProjectReport::default();
            for (split, max_frames) in [
                ("train", cfg.projection.frames_per_train_seq),
                ("test", cfg.projection.frames_per_test_seq),
            ] {
                let ids = dataset_sequence_ids(&paths, split)?;
                let results: Vec<Result<SequenceProjection>> = ids
                    .par_iter()
                    .map(|id| {
                        let (frames, _dt) = load_targets(&paths, split, id, max_frames)?;
                        let mut results: Vec<ProjectionResult> = Vec::with_capacity(frames.len());
                        let mut init = template.mesh.vertices.clone();
                        let mut non_increasing = 0;
                        for frame in &frames {
                            let init_violations = projection::solve::count_clearance_violations(
                                &init,
                                &sdf,
                                pcfg.clearance,
                            );
                            let r = project_frame(
                                &body, &fieldnet, &sdf, &template, frame, &init, &pcfg,
                            )?;
                            if r.residual_collisions <= init_violations {
                                non_increasing += 1;
                            }
                            init = r.x.clone();
                            results.push(r);
                        }
                        let out = paths.canonical(split, id);
                        std::fs::create_dir_all(out.parent().unwrap())?;
                        save_canonical_frames(&results, &out)?;
                        let n = results.len() as f64;
                        let mean_rmse =
                            results.iter().map(|r| r.reposed_rmse).sum::<f64>() / n;
                        let max_rmse = results
                            .iter()
                            .map(|r| r.reposed_rmse)
                            .fold(0.0f64, f64::max);
                        let mean_iter =
                            results.iter().map(|r| r.iterations as f64).sum::<f64>() / n;
                        let mut smooth = 0.0;
                        for w in results.windows(2) {
                            smooth += w[0]
                                .x
                                .iter()
                                .zip(&w[1].x)
                                .map(|(a, b)| (*a - *b).length())
                                .sum::<f64>()
                                / w[0].x.len() as f64;
                        }
                        Ok(SequenceProjection {
                            split: split.to_string(),
                            id: id.clone(),
                            frames: results.len(),
                            mean_iterations: mean_iter,
                            mean_reposed_rmse: mean_rmse,
                            max_reposed_rmse: max_rmse,
                            temporal_smoothness: smooth / (results.len().max(2) - 1) as f64,
                            non_increasing_frames: non_increasing,
                        })
                    })
                    .collect();
                for r in results {
                    report.sequences.push(r?);
                }
            }
            report.sequences.sort_by(|a, b| (a.split.clone(), a.id.clone()).cmp(&(b.split.clone(), b.id.clone())));
            std::fs::write(
                paths.canonical_report(),
                serde_json::to_string_pretty(&report)?,
            )?;
            let total_frames: usize = report.sequences.iter().map(|s| s.frames).sum();
            let mean_rmse: f64 = report
                .sequences
                .iter()
                .map(|s| s.mean_reposed_rmse * s.frames as f64)
                .sum::<f64>()
                / total_frames as f64;
            println!(
                "[project] {} sequences, {} frames, mean reposed RMSE {:.4} m",
                report.sequences.len(),
                total_frames,
                mean_rmse
            );
            Ok(())
        },
    )
}

pub fn load_split_frames(paths: &Paths, split: &str) -> Result<Vec<(String, Vec<Vec<DVec3>>)>> {
    let ids = dataset_sequence_ids(paths, split)?;
    let mut out = Vec::new();
    for id in ids {
        let (_, frames) = load_canonical_frames(paths.canonical(split, &id))?;
        out.push((id, frames));
    }
    Ok(out)
}

fn vae_log_csv(path: &Path, logs: &[generative_vae::EpochLog]) -> Result<()> {
    let rows: Vec<String> = logs
        .iter()
        .map(|l| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                l.epoch,
                l.phase,
                l.loss.rec,
                l.loss.laplacian,
                l.loss.kl,
                l.loss.collision_recon,
                l.loss.collision_sampled,
                l.loss.total,
                l.test_recon_collisions,
                l.test_sampled_collisions
            )
        })
        .collect();
    write_csv(
        path,
        "epoch,phase,rec,laplacian,kl,collision_recon,collision_sampled,total,test_recon_collisions,test_sampled_collisions",
        &rows,
    )
}

pub fn stage_train_vae(cfg: &RunConfig, force: bool) -> Result<bool> {
    let paths = Paths::new(cfg);
    let body = load_body(&paths)?;
    let template = load_template(&paths, &body)?;
    let (_, sdf) = load_fields(&paths, &body)?;
    let config_hash = cfg.section_hash(&["vae"]);
    let mut inputs = nn_core::Fnv::new();
    inputs.update(&sdf.grid.content_hash().to_le_bytes());
    inputs.update(&template_hash(&template).to_le_bytes());
    run_stage(
        cfg,
        &paths,
        "train-vae",
        config_hash,
        inputs.finish(),
        &[paths.vae_ckpt(), paths.vae_log()],
        force,
        || {
            let train: Vec<Vec<DVec3>> = load_split_frames(&paths, "train")?
                .into_iter()
                .flat_map(|(_, f)| f)
                .collect();
            let test: Vec<Vec<DVec3>> = load_split_frames(&paths, "test")?
                .into_iter()
                .flat_map(|(_, f)| f)
                .collect();
            let tcfg = cfg
                .vae
                .to_train_config(cfg.garment.clearance, cfg.stage_seed("vae"), true, true);
            let (vae, outcome) = train_vae(
                &template.mesh.vertices,
                &train,
                &test,
                &sdf,
                &template.rest,
                &tcfg,
            )?;
            println!(
                "[train-vae] recon RMSE train {:.4} m / test {:.4} m; final test collisions {} recon / {} sampled{}",
                outcome.train_recon_rmse,
                outcome.test_recon_rmse,
                outcome.logs.last().map_or(0, |l| l.test_recon_collisions),
                outcome.logs.last().map_or(0, |l| l.test_sampled_collisions),
                if outcome.recon_degraded_flag {
                    " [flag: collision loss degraded reconstruction]"
                } else {
                    ""
                }
            );
            std::fs::create_dir_all(paths.vae_ckpt().parent().unwrap())?;
            vae.save(
                paths.vae_ckpt(),
                &[
                    ("sdf_hash", sdf.grid.content_hash().to_string()),
                    ("template_hash", template_hash(&template).to_string()),
                    ("body_hash", body.content_hash().to_string()),
                ],
            )?;
            vae_log_csv(&paths.vae_log(), &outcome.logs)?;
            Ok(())
        },
    )
}

/// Builds regressor training sequences: inputs γ ∥ β, targets the encoder
/// means of the projected frames.
pub fn regressor_sequences(
    paths: &Paths,
    split: &str,
    pca: &PoseDescriptorModel,
    vae: &GarmentVae,
    max_frames: usize,
) -> Result<Vec<SequenceSample>> {
    let ids = dataset_sequence_ids(paths, split)?;
    let mut out = Vec::new();
    for id in ids {
        let dir = paths.dataset(split).join(format!("seq_{id}"));
        let (params, dt) = load_sequence_params(&dir)?;
        let (_, canonical) = load_canonical_frames(paths.canonical(split, &id))?;
        let take = canonical.len().min(max_frames).min(params.len());
        let descriptors = descriptor_sequence(pca, &params[..take], dt);
        let targets = vae.encode_means(&canonical[..take])?;
        let mut inputs = Vec::with_capacity(take);
        let mut target_rows = Vec::with_capacity(take);
        for (fi, d) in descriptors.iter().enumerate() {
            let mut row = d.0.clone();
            row.extend_from_slice(&params[fi].beta);
            inputs.push(row);
            target_rows.push(targets.row(fi).to_vec());
        }
        out.push(SequenceSample {
            inputs,
            targets: target_rows,
        });
    }
    Ok(out)
}

pub fn stage_train_regressor(cfg: &RunConfig, force: bool) -> Result<bool> {
    let paths = Paths::new(cfg);
    let body = load_body(&paths)?;
    let template = load_template(&paths, &body)?;
    let (_, sdf) = load_fields(&paths, &body)?;
    let vae = load_vae(&paths, &paths.vae_ckpt(), &sdf, &template)?;
    let config_hash = cfg.section_hash(&["regressor"]);
    let inputs_hash = vae_hash(&paths.vae_ckpt())?;
    run_stage(
        cfg,
        &paths,
        "train-regressor",
        config_hash,
        inputs_hash,
        &[paths.pca_ckpt(), paths.regressor_ckpt(), paths.regressor_log()],
        force,
        || {
            let pca = fit_pose_pca(&paths, &body)?;
            println!(
                "[train-regressor] pose PCA explains {:.1}% of corpus variance",
                pca.explained_variance * 100.0
            );
            std::fs::create_dir_all(paths.pca_ckpt().parent().unwrap())?;
            pca.save(paths.pca_ckpt())?;

            let train = regressor_sequences(
                &paths,
                "train",
                &pca,
                &vae,
                cfg.projection.frames_per_train_seq,
            )?;
            let validation = regressor_sequences(
                &paths,
                "test",
                &pca,
                &vae,
                cfg.projection.frames_per_test_seq,
            )?;
            let mut net = RegressorNet::new(RegressorConfig {
                input_dim: regressor::MOTION_DESCRIPTOR_DIM + body_model::SHAPE_DIM,
                hidden: cfg.regressor.hidden,
                layers: cfg.regressor.layers,
                latent_dim: cfg.vae.latent_dim,
                seed: cfg.stage_seed("regressor"),
            });
            let (_, dt) = load_sequence_params(
                paths
                    .dataset("train")
                    .join(format!("seq_{}", dataset_sequence_ids(&paths, "train")?[0])),
            )?;
            let log = train_regressor(
                &mut net,
                &train,
                &validation,
                &RegressorTrainConfig {
                    epochs: cfg.regressor.epochs,
                    window: cfg.regressor.window,
                    learning_rate: cfg.regressor.learning_rate,
                    lr_drop_epoch: cfg.regressor.lr_drop_epoch,
                    lr_after_drop: cfg.regressor.lr_after_drop,
                    rho_vel: cfg.regressor.rho_vel,
                    rho_acc: cfg.regressor.rho_acc,
                    dt,
                    seed: cfg.stage_seed("regressor-train"),
                },
            )?;
            println!(
                "[train-regressor] final val latent L1 {:.4}",
                log.val_latent_l1.last().copied().unwrap_or(f64::NAN)
            );
            net.save(
                paths.regressor_ckpt(),
                &[
                    ("vae_hash", vae_hash(&paths.vae_ckpt())?.to_string()),
                    ("pca_hash", nn_core::ParamStore::load(paths.pca_ckpt())?.content_hash().to_string()),
                ],
            )?;
            let rows: Vec<String> = log
                .epoch_losses
                .iter()
                .zip(&log.val_latent_l1)
                .enumerate()
                .map(|(e, (l, v))| format!("{e},{l},{v}"))
                .collect();
            write_csv(&paths.regressor_log(), "epoch,train_loss,val_latent_l1", &rows)?;
            Ok(())
        },
    )
}

/// Pose-descriptor corpus: every training pose, densified by resampling
/// the (procedural) training clips when the dataset alone is below the
/// thousand-frame floor.
pub fn fit_pose_pca(paths: &Paths, body: &BodyModel) -> Result<PoseDescriptorModel> {
    let manifest: cloth_sim::DatasetManifest = serde_json::from_str(&std::fs::read_to_string(
        paths.dataset("train").join("manifest.json"),
    )?)?;
    let mut corpus = Vec::new();
    for id in dataset_sequence_ids(paths, "train")? {
        let (params, _) = load_sequence_params(paths.dataset("train").join(format!("seq_{id}")))?;
        corpus.extend(params.into_iter().map(|p| p.theta));
    }
    if corpus.len() < 1000 {
        let needed = 1000usize.div_ceil(manifest.sequences.len().max(1)) + 2;
        for entry in &manifest.sequences {
            let clip = cloth_sim::clip_by_name(&entry.clip)?;
            let mut beta = [0.0; body_model::SHAPE_DIM];
            for (i, b) in entry.beta.iter().take(beta.len()).enumerate() {
                beta[i] = *b;
            }
            let dense = cloth_sim::make_sequence(&clip, beta, body.joint_count(), needed, manifest.dt / 2.0);
            corpus.extend(dense.into_iter().map(|p| p.theta));
        }
    }
    Ok(fit_pose_descriptor(&corpus)?)
}

// ------------------------------------------------------------- rollouts

pub struct RolloutFrame {
    pub latent: Vec<f64>,
    pub canonical: Vec<DVec3>,
    pub posed: Vec<DVec3>,
    pub t_regress_ms: f64,
    pub t_decode_ms: f64,
    pub t_pose_ms: f64,
}

/// Regress → decode → pose for one sequence, timing each step.
pub fn rollout_sequence(
    body: &BodyModel,
    fieldnet: &FieldNet,
    vae: &GarmentVae,
    pca: &PoseDescriptorModel,
    net: &RegressorNet,
    params: &[BodyParams],
    dt: f64,
) -> Vec<RolloutFrame> {
    let descriptors = descriptor_sequence(pca, params, dt);
    let mut state = net.initial_state(1);
    let mut out = Vec::with_capacity(params.len());
    for (fi, p) in params.iter().enumerate() {
        let mut row = descriptors[fi].0.clone();
        row.extend_from_slice(&p.beta);
        let input = Mat::from_rows(&[row]);

        let t0 = Instant::now();
        let cache = net.rollout(&[input], &mut state);
        let latent = cache.outputs[0].clone();
        let t_regress = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let canonical = vae.decode(&latent).pop().unwrap();
        let t_decode = t1.elapsed().as_secs_f64() * 1e3;

        let t2 = Instant::now();
        let ctx = PoseContext::new(body, &p.beta, &p.theta, &p.global());
        let op = PosedOp::new(fieldnet, &ctx);
        let posed = op.forward(&canonical).posed;
        let t_pose = t2.elapsed().as_secs_f64() * 1e3;

        out.push(RolloutFrame {
            latent: latent.row(0).to_vec(),
            canonical,
            posed,
            t_regress_ms: t_regress,
            t_decode_ms: t_decode,
            t_pose_ms: t_pose,
        });
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub sequence: String,
    pub frames: usize,
    pub mean_collision_pct: f64,
    pub max_collision_pct: f64,
    pub vertex_frame_collision_pct: f64,
    pub mean_t_regress_ms: f64,
    pub mean_t_decode_ms: f64,
    pub mean_t_pose_ms: f64,
    pub used_winding_fallback: bool,
}

pub fn eval(cfg: &RunConfig, force: bool) -> Result<bool> {
    let paths = Paths::new(cfg);
    let body = load_body(&paths)?;
    let template = load_template(&paths, &body)?;
    let (fieldnet, sdf) = load_fields(&paths, &body)?;
    let vae = load_vae(&paths, &paths.vae_ckpt(), &sdf, &template)?;
    let (net, reg_store) = RegressorNet::load(paths.regressor_ckpt())?;
    require_meta(&reg_store, "vae_hash", vae_hash(&paths.vae_ckpt())?, "regressor")?;
    let pca = PoseDescriptorModel::load(paths.pca_ckpt())?;
    require_meta(
        &reg_store,
        "pca_hash",
        nn_core::ParamStore::load(paths.pca_ckpt())?.content_hash(),
        "regressor",
    )?;

    let seq = cfg.eval.sequence.clone();
    let config_hash = cfg.section_hash(&["eval"]);
    let inputs_hash = reg_store.content_hash();
    run_stage(
        cfg,
        &paths,
        &format!("eval-{seq}"),
        config_hash,
        inputs_hash,
        &[paths.eval_dir(&seq).join("summary.json")],
        force,
        || {
            let (split, id) = split_of(&seq);
            let (params, dt) =
                load_sequence_params(paths.dataset(split).join(format!("seq_{id}")))?;
            // timing runs single-threaded so the per-frame latency numbers
            // reflect the serial runtime path
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
            let frames = pool.install(|| {
                rollout_sequence(&body, &fieldnet, &vae, &pca, &net, &params, dt)
            });

            let mut frame_rows = Vec::with_capacity(frames.len());
            let mut det_rows = Vec::with_capacity(frames.len());
            let mut counts: Vec<CollisionCount> = Vec::with_capacity(frames.len());
            let dir = paths.eval_dir(&seq);
            std::fs::create_dir_all(&dir)?;
            for (fi, frame) in frames.iter().enumerate() {
                let posed_body = body.skin_body(&params[fi]);
                let c = count_collisions(&frame.posed, &posed_body);
                frame_rows.push(format!(
                    "{},{},{},{:.3},{:.3},{:.3}",
                    fi,
                    c.count,
                    c.percentage(),
                    frame.t_regress_ms,
                    frame.t_decode_ms,
                    frame.t_pose_ms
                ));
                det_rows.push(format!("{},{},{}", fi, c.count, c.percentage()));
                counts.push(c);
                if cfg.eval.export_obj && fi < cfg.eval.max_obj_frames {
                    let mesh = template.mesh.with_positions(frame.posed.clone())?;
                    mesh_core::save_obj(&mesh, dir.join(format!("frame_{fi:04}.obj")))?;
                }
            }
            write_csv(
                &dir.join("frames.csv"),
                "frame,collisions,pct,t_regress_ms,t_decode_ms,t_pose_ms",
                &frame_rows,
            )?;
            write_csv(&dir.join("collisions.csv"), "frame,collisions,pct", &det_rows)?;

            let n = frames.len() as f64;
            let total_verts: usize = counts.iter().map(|c| c.total).sum();
            let total_hits: usize = counts.iter().map(|c| c.count).sum();
            let summary = EvalSummary {
                sequence: seq.clone(),
                frames: frames.len(),
                mean_collision_pct: counts.iter().map(|c| c.percentage()).sum::<f64>() / n,
                max_collision_pct: counts.iter().map(|c| c.percentage()).fold(0.0, f64::max),
                vertex_frame_collision_pct: 100.0 * total_hits as f64 / total_verts as f64,
                mean_t_regress_ms: frames.iter().map(|f| f.t_regress_ms).sum::<f64>() / n,
                mean_t_decode_ms: frames.iter().map(|f| f.t_decode_ms).sum::<f64>() / n,
                mean_t_pose_ms: frames.iter().map(|f| f.t_pose_ms).sum::<f64>() / n,
                used_winding_fallback: counts.iter().any(|c| c.fallback),
            };
            std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "[eval] {}: mean collision {:.3}% | regress {:.2} ms, decode {:.2} ms, pose {:.2} ms",
                seq,
                summary.mean_collision_pct,
                summary.mean_t_regress_ms,
                summary.mean_t_decode_ms,
                summary.mean_t_pose_ms
            );
            Ok(())
        },
    )
}

/// Sequence ids are `<shape>_<clip>`; eval ids carry a `test_`/`train_`
/// prefix selecting the split.
pub fn split_of(seq: &str) -> (&'static str, String) {
    if let Some(rest) = seq.strip_prefix("test_") {
        ("test", rest.to_string())
    } else if let Some(rest) = seq.strip_prefix("train_") {
        ("train", rest.to_string())
    } else {
        ("test", seq.to_string())
    }
}

pub fn export(cfg: &RunConfig, force: bool) -> Result<bool> {
    let mut cfg = cfg.clone();
    cfg.eval.export_obj = true;
    eval(&cfg, force)
}
