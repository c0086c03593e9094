use std::sync::Arc;
use std::time::Instant;
use body_model::{build_default_body, default_capsules, BodyBuildConfig, BodyModel};
use diffuse_field::*;
use glam::DVec3;

fn main() {
    let t0 = Instant::now();
    let model = Arc::new(build_default_body(&BodyBuildConfig::default()).unwrap());
    let t = Instant::now();
    let grid = build_sdf_grid(&model.template, 0.02, 0.18).unwrap();
    println!("sdf grid dims {:?} ({:.1?})", grid.dims, t.elapsed());

    let t = Instant::now();
    let prior = default_capsules();
    let (net, report) = sdf::fit_sdf_net_with_prior(&grid, &model.template, &SdfNetConfig::default(), &Default::default(), Some(prior)).unwrap();
    println!("sdf fit: max {:.4} mean {:.5} loss {:.6} ({:.1?})", report.held_out_max_err, report.held_out_mean_err, report.final_loss, t.elapsed());
    worst_sdf(&net, &grid, &model);

    let t = Instant::now();
    let index = ClosestPointIndex::new(model.clone());
    let diff_cfg = DiffusionConfig::default();
    let net_cfg = FieldNetConfig::for_body(&model, vec![64, 64, 64, 64], 7);
    let train_cfg = FieldTrainConfig::default();
    let (_fnet, freport) = train_field_net(&index, &diff_cfg, net_cfg, &train_cfg).unwrap();
    println!("fieldnet: w_l1 mean {:.4} max {:.4} shape_mae {:.5} pose_mae {:.6} loss {:.4} ({:.1?})",
        freport.held_out_weights_l1_mean, freport.held_out_weights_l1_max,
        freport.held_out_shape_mae, freport.held_out_pose_mae, freport.final_loss, t.elapsed());
    println!("total {:.1?}", t0.elapsed());
}

fn worst_sdf(net: &SdfNet, grid: &SdfGrid, model: &BodyModel) {
    use rand::SeedableRng;
    let sampler = ShellSampler::new(&model.template);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(999);
    let pts: Vec<DVec3> = (0..3000).map(|_| {
        use rand::Rng;
        let off: f64 = rng.random_range(-0.02..0.15);
        let _ = off;
        sampler.shell_point(&mut rng, -0.02, 0.15)
    }).collect();
    let eval = net.forward_batch(&pts);
    let mut errs: Vec<(f64, DVec3)> = pts.iter().enumerate().map(|(i, &p)| ((eval.values[i] - grid.query(p).value).abs(), p)).collect();
    errs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (e, p) in errs.iter().take(5) {
        println!("  worst sdf err {:.4} at {:?} (grid {:.4})", e, p, grid.query(*p).value);
    }
}
