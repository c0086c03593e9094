//! Fast end-to-end smoke run of every stage on a miniature configuration,
//! plus the stamp/no-op resume contract.

use pipeline_cli::config::RunConfig;
use pipeline_cli::stages;

/// A configuration small enough to run the full chain in tens of seconds.
fn tiny_config(root: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 123;
    cfg.data_root = root.to_path_buf();
    cfg.body.cell_size = 0.06;
    cfg.garment.cols = 12;
    cfg.garment.rows = 8;
    cfg.dataset.train_shapes = 2;
    cfg.dataset.train_clips = vec!["walk".into(), "sway".into()];
    cfg.dataset.frames_per_clip = 10;
    cfg.dataset.test_shapes = 1;
    cfg.dataset.test_clips = vec!["walk".into()];
    cfg.dataset.test_frames_per_clip = 8;
    cfg.sim.settle_frames = 20;
    cfg.fields.trunk_hidden = vec![24, 24];
    cfg.fields.train_points = 600;
    cfg.fields.train_mc_samples = 24;
    cfg.fields.epochs = 4;
    cfg.fields.sdf_spacing = 0.035;
    cfg.fields.sdf_hidden = vec![24, 24];
    cfg.fields.sdf_samples = 1500;
    cfg.fields.sdf_epochs = 6;
    cfg.projection.max_iterations = 40;
    cfg.projection.frames_per_train_seq = 4;
    cfg.projection.frames_per_test_seq = 4;
    cfg.vae.width = 32;
    cfg.vae.depth = 2;
    cfg.vae.latent_dim = 8;
    cfg.vae.batch = 4;
    cfg.vae.random_batch = 4;
    cfg.vae.phase1_epochs = 3;
    cfg.vae.phase2_epochs = 4;
    cfg.vae.collision_ramp_epochs = 2;
    cfg.vae.audit_samples = 8;
    cfg.regressor.hidden = 16;
    cfg.regressor.epochs = 5;
    cfg.regressor.window = 4;
    cfg.eval.sequence = "test_000_walk".into();
    cfg
}

#[test]
fn full_chain_runs_and_stamps_make_reruns_noops() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());

    assert!(stages::gen_data(&cfg, false).unwrap());
    assert!(stages::train_fields(&cfg, false).unwrap());
    assert!(stages::project(&cfg, false).unwrap());
    assert!(stages::stage_train_vae(&cfg, false).unwrap());
    assert!(stages::stage_train_regressor(&cfg, false).unwrap());
    assert!(stages::eval(&cfg, false).unwrap());

    // identical config and inputs: every stage is a no-op on rerun
    assert!(!stages::gen_data(&cfg, false).unwrap());
    assert!(!stages::train_fields(&cfg, false).unwrap());
    assert!(!stages::project(&cfg, false).unwrap());
    assert!(!stages::stage_train_vae(&cfg, false).unwrap());
    assert!(!stages::stage_train_regressor(&cfg, false).unwrap());
    assert!(!stages::eval(&cfg, false).unwrap());

    // a config change invalidates the stamp of the affected stage
    let mut changed = cfg.clone();
    changed.vae.phase2_epochs += 1;
    assert!(stages::stage_train_vae(&changed, false).unwrap());

    // eval artifacts exist with the declared schema
    let eval_dir = dir.path().join("eval/test_000_walk");
    let frames = std::fs::read_to_string(eval_dir.join("frames.csv")).unwrap();
    assert!(frames.starts_with("frame,collisions,pct,t_regress_ms,t_decode_ms,t_pose_ms"));
    let collisions = std::fs::read_to_string(eval_dir.join("collisions.csv")).unwrap();
    assert!(collisions.starts_with("frame,collisions,pct"));
    assert!(eval_dir.join("summary.json").exists());
    assert!(dir.path().join("config.resolved.json").exists());
}

#[test]
fn checkpoint_provenance_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    stages::gen_data(&cfg, false).unwrap();
    stages::train_fields(&cfg, false).unwrap();
    stages::project(&cfg, false).unwrap();
    stages::stage_train_vae(&cfg, false).unwrap();
    stages::stage_train_regressor(&cfg, false).unwrap();

    // rebuild the body with a different seed: the field net no longer
    // matches and downstream loads must refuse with a provenance message
    let mut other = cfg.clone();
    other.seed = 999;
    stages::gen_data(&other, true).unwrap();
    let paths = stages::Paths::new(&cfg);
    let body = stages::load_body(&paths).unwrap();
    let err = stages::load_fields(&paths, &body).unwrap_err();
    let msg = format!("{err:#}");
    assert!(
        msg.contains("hash") || msg.contains("regenerate"),
        "unexpected error: {msg}"
    );
}
