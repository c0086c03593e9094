//! End-to-end draping checks: the skirt settles on the body without
//! penetrations, follows motion clips, and the dataset writer round-trips.

use body_model::{build_default_body, BodyBuildConfig, BodyParams};
use cloth_sim::{
    audit_penetrations, clip_by_name, generate_dataset, load_frame, load_sequence_params,
    make_sequence, settle_template, simulate_sequence, skirt_sheet, SimConfig,
};

fn setup() -> (body_model::BodyModel, cloth_sim::GarmentSheet) {
    let body = build_default_body(&BodyBuildConfig::default()).unwrap();
    let sheet = skirt_sheet(&body, 24, 16, 0.19, 0.27, 1.02, 0.5);
    (body, sheet)
}

#[test]
fn drape_on_static_body_is_penetration_free() {
    let (body, sheet) = setup();
    let cfg = SimConfig::default();
    let rest = BodyParams::rest(body.joint_count());
    let frames = vec![rest; 20];
    let out = simulate_sequence(&sheet, &body, &frames, &cfg).unwrap();
    let posed = body.skin_body(&BodyParams::rest(body.joint_count()));
    for (fi, positions) in out.iter().enumerate() {
        let inside = audit_penetrations(positions, &posed);
        assert!(inside.is_empty(), "frame {fi}: {} inside", inside.len());
    }
    // the drape stays a connected skirt: no vertex flies away
    for p in &out[out.len() - 1] {
        assert!(p.length() < 3.0);
    }
}

#[test]
fn template_settles_close_to_sheet_and_clears_body() {
    let (body, sheet) = setup();
    let cfg = SimConfig::default();
    let template = settle_template(&sheet, &body, &cfg, 0.002).unwrap();
    assert_eq!(template.vertex_count(), sheet.mesh.vertex_count());
    // the settled template stays within a dress-length of the sheet
    let rmse = (template
        .vertices
        .iter()
        .zip(&sheet.mesh.vertices)
        .map(|(a, b)| (*a - *b).length_squared())
        .sum::<f64>()
        / template.vertex_count() as f64)
        .sqrt();
    assert!(rmse < 0.06, "settle moved the sheet by {rmse} m rmse");
    let posed = body.skin_body(&BodyParams::rest(body.joint_count()));
    assert!(audit_penetrations(&template.vertices, &posed).is_empty());
}

#[test]
fn walking_clip_keeps_garment_outside_body() {
    let (body, sheet) = setup();
    let cfg = SimConfig::default();
    let clip = clip_by_name("walk").unwrap();
    let params = make_sequence(&clip, [0.0; 10], body.joint_count(), 30, cfg.dt);
    let out = simulate_sequence(&sheet, &body, &params, &cfg).unwrap();
    for (fi, positions) in out.iter().enumerate() {
        let posed = body.skin_body(&params[fi]);
        let inside = audit_penetrations(positions, &posed);
        assert!(inside.is_empty(), "frame {fi}: {} inside", inside.len());
    }
    // the skirt actually moved with the walk
    let first = &out[0];
    let last = &out[out.len() - 1];
    let moved = first
        .iter()
        .zip(last)
        .map(|(a, b)| (*a - *b).length())
        .fold(0.0, f64::max);
    assert!(moved > 0.2, "garment barely moved: {moved}");
}

#[test]
fn deterministic_given_seed_and_config() {
    let (body, sheet) = setup();
    let cfg = SimConfig::default();
    let clip = clip_by_name("sway").unwrap();
    let params = make_sequence(&clip, [0.5; 10], body.joint_count(), 10, cfg.dt);
    let a = simulate_sequence(&sheet, &body, &params, &cfg).unwrap();
    let b = simulate_sequence(&sheet, &body, &params, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dataset_generation_bookkeeping_and_audit() {
    let (body, sheet) = setup();
    let cfg = SimConfig {
        settle_frames: 30,
        ..SimConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let clips = vec!["walk".to_string(), "sway".to_string()];
    let manifest =
        generate_dataset(dir.path(), &body, &sheet, 2, &clips, 12, &cfg, 99).unwrap();
    assert_eq!(manifest.sequences.len(), 4);
    assert_eq!(manifest.total_frames, 4 * 12);
    assert_eq!(manifest.garment_vertices, sheet.mesh.vertex_count());
    for entry in &manifest.sequences {
        assert_eq!(entry.beta.len(), 10);
        for b in &entry.beta {
            assert!((-2.0..=2.0).contains(b), "beta {b} outside [-2, 2]");
        }
        let seq_dir = dir.path().join(format!("seq_{}", entry.id));
        let (params, dt) = load_sequence_params(&seq_dir).unwrap();
        assert_eq!(params.len(), 12);
        assert!((dt - cfg.dt).abs() < 1e-12);
        // re-audit every stored frame against its posed body
        for fi in 0..entry.frames {
            let positions = load_frame(seq_dir.join(format!("frame_{fi:04}.bin"))).unwrap();
            let posed = body.skin_body(&params[fi]);
            let inside = audit_penetrations(&positions, &posed);
            assert!(inside.is_empty(), "{}: frame {fi} has {} inside", entry.id, inside.len());
        }
    }
}
