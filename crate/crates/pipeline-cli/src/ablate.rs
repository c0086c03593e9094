//! Paired ablation runs: full model, without the self-supervised term,
//! and without any collision loss — identical data and seeds otherwise.

use anyhow::{Context, Result};
use glam::DVec3;
use serde::{Deserialize, Serialize};

use generative_vae::{sample_latents, train_vae};
use regressor::{train_regressor, RegressorConfig, RegressorNet, RegressorTrainConfig};

use crate::collision::count_collisions;
use crate::config::RunConfig;
use crate::stages::{self, Paths};

pub const VARIANTS: [(&str, bool, bool); 3] = [
    ("full", true, true),
    ("no_selfsup", true, false),
    ("no_collision", false, false),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub trained: bool,
    /// Interpenetrating vertex-frames over all test rollouts, percent.
    pub test_vertex_frame_pct: f64,
    /// Mean of per-frame collision percentages.
    pub test_mean_frame_pct: f64,
    /// Fraction of 1,000 prior samples with at least one interpenetrating
    /// vertex against the canonical body.
    pub sampled_dirty_fraction: f64,
    /// Interpenetrating vertices across all 1,000 decoded prior samples.
    pub sampled_vertex_count: usize,
    pub final_test_recon_collisions: usize,
    pub final_test_sampled_collisions: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationSummary {
    pub rows: Vec<AblationRow>,
    /// full < no_selfsup < no_collision on the test collision percentage.
    pub ordering_holds: bool,
}

pub fn ablate(cfg: &RunConfig, force: bool) -> Result<bool> {
    let paths = Paths::new(cfg);
    let body = stages::load_body(&paths)?;
    let template = stages::load_template(&paths, &body)?;
    let (fieldnet, sdf) = stages::load_fields(&paths, &body)?;
    template.validate_against_sdf(&sdf.grid)?;

    let config_hash = cfg.section_hash(&["vae", "regressor", "projection"]);
    let mut inputs = nn_core::Fnv::new();
    inputs.update(&sdf.grid.content_hash().to_le_bytes());
    inputs.update(&stages::template_hash(&template).to_le_bytes());
    let dir = paths.ablation_dir();
    let run = crate::stages::run_stage(
        cfg,
        &paths,
        "ablate",
        config_hash,
        inputs.finish(),
        &[dir.join("table.csv"), dir.join("summary.json")],
        force,
        || {
            std::fs::create_dir_all(&dir)?;
            let train_frames: Vec<Vec<DVec3>> = stages::load_split_frames(&paths, "train")?
                .into_iter()
                .flat_map(|(_, f)| f)
                .collect();
            let test_frames: Vec<Vec<DVec3>> = stages::load_split_frames(&paths, "test")?
                .into_iter()
                .flat_map(|(_, f)| f)
                .collect();

            // one shared pose descriptor for every variant
            let pca = stages::fit_pose_pca(&paths, &body)?;

            let mut rows = Vec::new();
            for (name, supervised, self_supervised) in VARIANTS {
                println!("[ablate] training configuration `{name}`");
                let tcfg = cfg.vae.to_train_config(
                    cfg.garment.clearance,
                    cfg.stage_seed("vae"),
                    supervised,
                    self_supervised,
                );
                let trained = train_vae(
                    &template.mesh.vertices,
                    &train_frames,
                    &test_frames,
                    &sdf,
                    &template.rest,
                    &tcfg,
                );
                let (vae, outcome) = match trained {
                    Ok(v) => v,
                    Err(e) => {
                        println!("[ablate] `{name}` failed to train: {e}");
                        rows.push(AblationRow {
                            config: name.to_string(),
                            trained: false,
                            test_vertex_frame_pct: f64::NAN,
                            test_mean_frame_pct: f64::NAN,
                            sampled_dirty_fraction: f64::NAN,
                            sampled_vertex_count: 0,
                            final_test_recon_collisions: 0,
                            final_test_sampled_collisions: 0,
                        });
                        continue;
                    }
                };
                vae.save(
                    dir.join(format!("vae_{name}.ckpt")),
                    &[
                        ("sdf_hash", sdf.grid.content_hash().to_string()),
                        ("template_hash", stages::template_hash(&template).to_string()),
                        ("variant", name.to_string()),
                    ],
                )?;
                let log_rows: Vec<String> = outcome
                    .logs
                    .iter()
                    .map(|l| {
                        format!(
                            "{},{},{},{},{},{}",
                            l.epoch,
                            l.phase,
                            l.loss.total,
                            l.test_recon_collisions,
                            l.test_sampled_collisions,
                            l.test_recon_collisions + l.test_sampled_collisions
                        )
                    })
                    .collect();
                crate::stages::write_csv(
                    &dir.join(format!("curves_{name}.csv")),
                    "epoch,phase,loss,test_recon_collisions,test_sampled_collisions,held_out_total",
                    &log_rows,
                )?;

                // regressor on this variant's encodings
                let train_seq = stages::regressor_sequences(
                    &paths,
                    "train",
                    &pca,
                    &vae,
                    cfg.projection.frames_per_train_seq,
                )?;
                let val_seq = stages::regressor_sequences(
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
                let (_, dt) = cloth_sim::load_sequence_params(paths.dataset("train").join(
                    format!(
                        "seq_{}",
                        stages::dataset_sequence_ids(&paths, "train")?[0]
                    ),
                ))?;
                train_regressor(
                    &mut net,
                    &train_seq,
                    &val_seq,
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
                net.save(
                    dir.join(format!("regressor_{name}.ckpt")),
                    &[("variant", name.to_string())],
                )?;

                // world-space collision audit over every test sequence
                let mut total_hits = 0usize;
                let mut total_verts = 0usize;
                let mut frame_pcts = Vec::new();
                for id in stages::dataset_sequence_ids(&paths, "test")? {
                    let (params, dt) = cloth_sim::load_sequence_params(
                        paths.dataset("test").join(format!("seq_{id}")),
                    )?;
                    let frames = stages::rollout_sequence(
                        &body, &fieldnet, &vae, &pca, &net, &params, dt,
                    );
                    for (fi, frame) in frames.iter().enumerate() {
                        let posed_body = body.skin_body(&params[fi]);
                        let c = count_collisions(&frame.posed, &posed_body);
                        total_hits += c.count;
                        total_verts += c.total;
                        frame_pcts.push(c.percentage());
                    }
                }

                // prior-sample audit against the canonical body
                let latents = sample_latents(1000, vae.latent_dim(), cfg.stage_seed("sample-audit"));
                let decoded = vae.decode(&latents);
                let mut dirty = 0usize;
                let mut dirty_verts = 0usize;
                for garment in &decoded {
                    let hits = garment
                        .iter()
                        .filter(|&&p| sdf.grid.query(p).value < 0.0)
                        .count();
                    if hits > 0 {
                        dirty += 1;
                    }
                    dirty_verts += hits;
                }

                rows.push(AblationRow {
                    config: name.to_string(),
                    trained: true,
                    test_vertex_frame_pct: 100.0 * total_hits as f64 / total_verts.max(1) as f64,
                    test_mean_frame_pct: frame_pcts.iter().sum::<f64>()
                        / frame_pcts.len().max(1) as f64,
                    sampled_dirty_fraction: dirty as f64 / 1000.0,
                    sampled_vertex_count: dirty_verts,
                    final_test_recon_collisions: outcome
                        .logs
                        .last()
                        .map_or(0, |l| l.test_recon_collisions),
                    final_test_sampled_collisions: outcome
                        .logs
                        .last()
                        .map_or(0, |l| l.test_sampled_collisions),
                });
                println!(
                    "[ablate] `{name}`: test {:.3}% vertex-frames, sampled dirty {:.1}%",
                    rows.last().unwrap().test_vertex_frame_pct,
                    rows.last().unwrap().sampled_dirty_fraction * 100.0
                );
            }

            let table_rows: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{},{}",
                        r.config,
                        r.trained,
                        r.test_vertex_frame_pct,
                        r.test_mean_frame_pct,
                        r.sampled_dirty_fraction,
                        r.sampled_vertex_count
                    )
                })
                .collect();
            crate::stages::write_csv(
                &dir.join("table.csv"),
                "config,trained,test_vertex_frame_pct,test_mean_frame_pct,sampled_dirty_fraction,sampled_vertex_count",
                &table_rows,
            )?;
            let ordering_holds = rows.len() == 3
                && rows[0].test_vertex_frame_pct < rows[1].test_vertex_frame_pct
                && rows[1].test_vertex_frame_pct < rows[2].test_vertex_frame_pct;
            let summary = AblationSummary {
                rows,
                ordering_holds,
            };
            std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            println!("[ablate] ordering full < no_selfsup < no_collision: {ordering_holds}");
            Ok(())
        },
    )
    .context("ablation stage")?;
    Ok(run)
}
