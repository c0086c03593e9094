//! Central finite-difference audits of every layer type.

use nn_core::gradcheck::{audit_input, audit_params};
use nn_core::{
    zero_grads, Activation, Dense, GruCell, LayerNorm, Mat, Mlp, MlpConfig, ParamVisitor,
    Parameterized,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mat(rows: usize, cols: usize, seed: u64, scale: f64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mat::zeros(rows, cols);
    m.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-scale..scale));
    m
}

fn scalar_loss(y: &Mat, weights: &Mat) -> f64 {
    // fixed random projection keeps the loss sensitive to every output
    y.data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b + 0.5 * a * a * b.abs())
        .sum()
}

fn scalar_loss_grad(y: &Mat, weights: &Mat) -> Mat {
    let mut d = Mat::zeros(y.rows(), y.cols());
    for (i, (a, b)) in y.data().iter().zip(weights.data()).enumerate() {
        d.data_mut()[i] = b + a * b.abs();
    }
    d
}

struct MlpUnderTest {
    mlp: Mlp,
    head: Dense,
    x: Mat,
    proj: Mat,
}

impl Parameterized for MlpUnderTest {
    fn for_each_param(&mut self, v: &mut ParamVisitor) {
        self.mlp.visit("trunk", v);
        self.head.visit("head", v);
    }
}

impl MlpUnderTest {
    fn loss(&self) -> f64 {
        let (h, _) = self.mlp.forward(&self.x);
        let y = self.head.forward(&h);
        scalar_loss(&y, &self.proj)
    }

    fn loss_and_grads(&mut self) -> f64 {
        zero_grads(self);
        let (h, cache) = self.mlp.forward(&self.x);
        let y = self.head.forward(&h);
        let loss = scalar_loss(&y, &self.proj);
        let dy = scalar_loss_grad(&y, &self.proj);
        let dh = self.head.backward(&h, &dy);
        self.mlp.backward(&cache, &dh);
        loss
    }
}

#[test]
fn two_layer_net_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = MlpUnderTest {
        mlp: Mlp::new(&MlpConfig {
            dims: vec![5, 12, 12],
            activation: Activation::Softplus,
            layer_norm: false,
            seed: 11,
        }),
        head: Dense::new(12, 4, &mut rng),
        x: random_mat(6, 5, 21, 1.0),
        proj: random_mat(6, 4, 22, 1.0),
    };
    let report = audit_params(
        &mut net,
        |n| n.loss_and_grads(),
        |n| n.loss(),
        150,
        1e-5,
        77,
    );
    assert!(
        report.max_rel_err <= 1e-4,
        "max rel err {} worst {:?}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn layernorm_relu_stack_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = MlpUnderTest {
        mlp: Mlp::new(&MlpConfig {
            dims: vec![6, 10, 10],
            activation: Activation::Relu,
            layer_norm: true,
            seed: 31,
        }),
        head: Dense::new(10, 3, &mut rng),
        x: random_mat(4, 6, 41, 1.5),
        proj: random_mat(4, 3, 42, 1.0),
    };
    // keep probes away from ReLU kinks: perturbation h is far below typical
    // preactivation magnitudes at this init
    let report = audit_params(
        &mut net,
        |n| n.loss_and_grads(),
        |n| n.loss(),
        150,
        1e-6,
        78,
    );
    assert!(
        report.max_rel_err <= 1e-4,
        "max rel err {} worst {:?}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn layernorm_constant_row_zero_and_input_grad() {
    let ln = LayerNorm::new(5);
    let x = Mat::from_vec(1, 5, vec![2.0; 5]);
    let (y, _) = ln.forward(&x);
    for &v in y.data() {
        assert!(v.abs() < 1e-9);
    }

    // input gradient audit on a non-degenerate row
    let x0 = vec![0.3, -1.2, 0.9, 2.1, -0.4];
    let proj = vec![0.7, -0.3, 1.1, 0.2, -0.9];
    let f = |xs: &[f64]| {
        let ln = LayerNorm::new(5);
        let (y, _) = ln.forward(&Mat::from_vec(1, 5, xs.to_vec()));
        y.data().iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let mut ln2 = LayerNorm::new(5);
    let (_, cache) = ln2.forward(&Mat::from_vec(1, 5, x0.clone()));
    let d = ln2.backward(&cache, &Mat::from_vec(1, 5, proj.clone()));
    let report = audit_input(f, &x0, d.data(), 50, 1e-6, 9);
    assert!(report.max_rel_err <= 1e-6, "{}", report.max_rel_err);
}

struct GruUnderTest {
    cell: GruCell,
    xs: Vec<Mat>,
    proj: Mat,
}

impl Parameterized for GruUnderTest {
    fn for_each_param(&mut self, v: &mut ParamVisitor) {
        self.cell.visit("cell", v);
    }
}

impl GruUnderTest {
    fn rollout(&self) -> (f64, Vec<nn_core::GruStepCache>, Mat) {
        let mut h = self.cell.initial_state(self.xs[0].rows());
        let mut caches = Vec::new();
        for x in &self.xs {
            let (next, cache) = self.cell.step(x, &h);
            caches.push(cache);
            h = next;
        }
        (scalar_loss(&h, &self.proj), caches, h)
    }

    fn loss(&self) -> f64 {
        self.rollout().0
    }

    fn loss_and_grads(&mut self) -> f64 {
        zero_grads(self);
        let (loss, caches, h_last) = self.rollout();
        let mut dh = scalar_loss_grad(&h_last, &self.proj);
        for cache in caches.iter().rev() {
            let (_, dh_prev) = self.cell.backward_step(cache, &dh);
            dh = dh_prev;
        }
        loss
    }
}

#[test]
fn gru_five_step_unroll_gradients() {
    let mut net = GruUnderTest {
        cell: GruCell::new(4, 7, 17),
        xs: (0..5).map(|i| random_mat(3, 4, 100 + i, 1.2)).collect(),
        proj: random_mat(3, 7, 200, 1.0),
    };
    let report = audit_params(
        &mut net,
        |n| n.loss_and_grads(),
        |n| n.loss(),
        150,
        1e-5,
        79,
    );
    assert!(
        report.max_rel_err <= 1e-4,
        "max rel err {} worst {:?}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn checkpoint_round_trip_through_net() {
    let cfg = MlpConfig {
        dims: vec![3, 8, 8],
        activation: Activation::Tanh,
        layer_norm: true,
        seed: 5,
    };
    let mut net = Mlp::new(&cfg);
    let store = nn_core::ParamStore::from_net(&mut net);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("mlp.ckpt");
    store.save(&p).unwrap();

    let mut other = Mlp::new(&MlpConfig { seed: 999, ..cfg });
    let loaded = nn_core::ParamStore::load(&p).unwrap();
    loaded.load_into(&mut other).unwrap();
    let x = random_mat(4, 3, 1, 1.0);
    let (y0, _) = net.forward(&x);
    let (y1, _) = other.forward(&x);
    assert_eq!(y0.data(), y1.data());
}
