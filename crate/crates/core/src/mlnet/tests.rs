use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::formation::{make_uniform_pattern, sample_binary_frames, SensingOperator};
use crate::image::ExposureImage;
use crate::likelihood::Observations;
use crate::solvers::{solve_ista, PatchProblem, SolverConfig};
use crate::synthesis::{Dictionary, IntensityTransform};

fn observations(rng: &mut ChaCha8Rng, side: usize, op: &SensingOperator<f64>, frames: usize) -> Observations {
    let truth = Array2::from_shape_fn((side, side), |_| rng.random_range(0.3..8.0));
    let rates = ExposureImage::new(op.forward(truth.view())).unwrap();
    let seed = rng.random();
    let pattern = make_uniform_pattern(2, 2, 1, 4, seed).unwrap();
    sample_binary_frames(&rates, &pattern, frames, seed).unwrap().observations()
}

#[test]
fn zero_layers_give_constant_patch() {
    let dict = Dictionary::dct(4, 5).unwrap();
    let op = SensingOperator::new(2, 1.0).unwrap();
    let rho = IntensityTransform::new(10.0).unwrap();
    let params = MlNetParams::ista_init(&dict, &op, rho, 0.1, 1.0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let obs = observations(&mut rng, 4, &op, 3);
    let (x, tape) = forward(&params, &obs).unwrap();
    assert!(x.iter().all(|&v| v == 10.0));
    assert_eq!(tape.layers(), 0);
}

#[test]
fn huge_threshold_gives_constant_patch() {
    let dict = Dictionary::dct(4, 5).unwrap();
    let op = SensingOperator::new(2, 1.0).unwrap();
    let rho = IntensityTransform::new(10.0).unwrap();
    let params = MlNetParams::ista_init(&dict, &op, rho, 0.1, 1e9, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs = observations(&mut rng, 4, &op, 3);
    let (x, tape) = forward(&params, &obs).unwrap();
    assert!(tape.output_code().iter().all(|&v| v == 0.0));
    assert!(x.iter().all(|&v| v == 10.0));
}

#[test]
fn matches_fixed_step_ista() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = Dictionary::dct(4, 6).unwrap();
        let op = SensingOperator::new(2, 1.0).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let obs = observations(&mut rng, 4, &op, 4);
        let (params, eta) = MlNetParams::ista_init_auto(&dict, &op, rho, 0.5, 0, &[&obs]).unwrap();
        let problem = PatchProblem::new(&obs, &dict, &op, rho).unwrap();
        for layers in 1..=10 {
            let net = params.clone().with_layers(layers);
            let (_, tape) = forward(&net, &obs).unwrap();
            let cfg = SolverConfig::fixed_ista(0.5, eta, layers);
            let (z, report) = solve_ista(&problem, &cfg, Array1::zeros(36).view()).unwrap();
            assert_eq!(report.iterations.len(), layers);
            let diff = (&z - tape.output_code()).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
            assert!(diff <= 1e-10, "seed {seed} T={layers}: {diff}");
        }
    }
}

#[test]
fn loss_examples() {
    let e = Array1::from_vec(vec![1.0]);
    let t = Array1::from_vec(vec![3.0]);
    assert_eq!(loss(e.view(), t.view(), LossKind::Mse).unwrap(), 2.0);
    assert_eq!(loss(t.view(), t.view(), LossKind::Mse).unwrap(), 0.0);
    let z = Array1::from_vec(vec![0.0]);
    let t = Array1::from_vec(vec![std::f64::consts::E - 1.0]);
    assert!((loss(z.view(), t.view(), LossKind::LogMse).unwrap() - 0.5).abs() < 1e-15);
    let neg = Array1::from_vec(vec![-1.0]);
    assert!(loss(z.view(), neg.view(), LossKind::LogMse).is_err());
    let pairs = vec![(e.clone(), Array1::from_vec(vec![3.0])), (e.clone(), e.clone())];
    assert_eq!(batch_loss(&pairs, LossKind::Mse).unwrap(), 1.0);
}

#[test]
fn shrink_subgradients() {
    assert_eq!(shrink_subgradient(5.0, 2.0), 1.0);
    assert_eq!(shrink_threshold_derivative(5.0, 2.0), -1.0);
    assert_eq!(shrink_subgradient(-5.0, 2.0), 1.0);
    assert_eq!(shrink_threshold_derivative(-5.0, 2.0), 1.0);
    assert_eq!(shrink_subgradient(1.0, 2.0), 0.0);
    assert_eq!(shrink_threshold_derivative(1.0, 2.0), 0.0);
    assert_eq!(shrink_subgradient(2.0, 2.0), 0.0);
}

/// Random network around an ISTA initialization with all tensors perturbed.
fn random_instance(seed: u64) -> (MlNetParams<f64>, Observations, Array1<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = SensingOperator::new(2, 0.8).unwrap();
    let rho = IntensityTransform::new(3.0).unwrap();
    let atoms = Array2::from_shape_fn((16, 6), |_| rng.random_range(-1.0..1.0));
    let dict = Dictionary::from_atoms(atoms).unwrap().0;
    let base = MlNetParams::ista_init(&dict, &op, rho, 0.05, 1.0, 3).unwrap();
    let mut jitter = |a: &Array2<f64>, s: f64| a.mapv(|v| v + s * rng.random_range(-1.0..1.0));
    let a = jitter(base.a(), 0.2);
    let q = jitter(base.q(), 0.2);
    let w = jitter(base.w(), 0.02);
    let d = jitter(base.d(), 0.2);
    let theta = Array1::from_shape_fn(6, |_| rng.random_range(0.0..0.05));
    let params = MlNetParams::from_parts(3, 4, a, q, w, theta, d, op.clone(), rho).unwrap();
    let obs = observations(&mut rng, 4, &op, 2);
    let z0 = Array1::from_shape_fn(6, |_| rng.random_range(-0.5..0.5));
    let truth = Array1::from_shape_fn(16, |_| rng.random_range(0.0..10.0));
    (params, obs, z0, truth)
}

/// Every pre-shrinkage value is at least `margin` away from `±θ` and every
/// `Qz` entry at least `margin` away from the kink of `ρ'`.
fn smooth_enough(params: &MlNetParams<f64>, tape: &LayerTape<f64>, margin: f64) -> bool {
    let b_ok = tape.b.iter().all(|b| {
        b.iter()
            .zip(params.theta())
            .all(|(&bi, &t)| (bi.abs() - t).abs() > margin)
    });
    let a_ok = tape.z[..tape.layers()]
        .iter()
        .all(|z| params.q().dot(z).iter().all(|v| v.abs() > margin));
    b_ok && a_ok
}

fn end_to_end(params: &MlNetParams<f64>, obs: &Observations, z0: &Array1<f64>, truth: &Array1<f64>, kind: LossKind) -> f64 {
    let (x, _) = forward_from(params, obs, z0.view()).unwrap();
    loss(x.view(), truth.view(), kind).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let mut checked = 0;
    for seed in 0..60u64 {
        let (params, obs, z0, truth) = random_instance(seed);
        let (x, tape) = forward_from(&params, &obs, z0.view()).unwrap();
        if !smooth_enough(&params, &tape, 1e-3) {
            continue;
        }
        let kind = if seed % 2 == 0 { LossKind::Mse } else { LossKind::LogMse };
        let (dd, dz) = grad_output_dictionary(&params, &tape, truth.view(), kind).unwrap();
        let mut grads = backward(&params, &tape, &obs, dz.view()).unwrap();
        grads.d = dd;
        assert!(x.iter().all(|v| v.is_finite()));
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let h = 1e-5;
        for kind_p in ParamKind::ALL {
            let analytic = grads.tensor(kind_p);
            let scale = analytic.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            for _ in 0..20 {
                let idx = rng.random_range(0..analytic.len());
                let mut plus = params.clone();
                plus.tensor_mut(kind_p)[idx] += h;
                let mut minus = params.clone();
                minus.tensor_mut(kind_p)[idx] -= h;
                let fd = (end_to_end(&plus, &obs, &z0, &truth, kind) - end_to_end(&minus, &obs, &z0, &truth, kind)) / (2.0 * h);
                let a = analytic[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4 * scale).max(1e-10);
                assert!(rel <= 1e-4, "seed {seed} {kind_p}[{idx}]: {a} vs {fd}");
            }
        }
        for i in 0..6 {
            let mut zp = z0.clone();
            zp[i] += h;
            let mut zm = z0.clone();
            zm[i] -= h;
            let fd = (end_to_end(&params, &obs, &zp, &truth, kind) - end_to_end(&params, &obs, &zm, &truth, kind)) / (2.0 * h);
            let a = grads.z0[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel <= 1e-4, "seed {seed} z0[{i}]: {a} vs {fd}");
        }
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} smooth instances");
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let (params, obs, z0, _) = random_instance(3);
    let (_, tape) = forward_from(&params, &obs, z0.view()).unwrap();
    let g = backward(&params, &tape, &obs, Array1::zeros(6).view()).unwrap();
    assert_eq!(g, Gradients::zeros(&params));
}

#[test]
fn output_dictionary_gradient_trivial_cases() {
    let (params, obs, _, _) = random_instance(4);
    let (x, tape) = forward(&params.clone().with_layers(0), &obs).unwrap();
    let params0 = params.clone().with_layers(0);
    let (dd, _) = grad_output_dictionary(&params0, &tape, x.view(), LossKind::Mse).unwrap();
    assert!(dd.iter().all(|&v| v == 0.0));
    let (x, tape) = forward(&params, &obs).unwrap();
    let (dd, _) = grad_output_dictionary(&params, &tape, x.view(), LossKind::Mse).unwrap();
    assert!(dd.iter().all(|&v| v == 0.0));
}

fn tiny_dataset(count: usize, seed: u64) -> (Vec<TrainingSample<f64>>, Dictionary<f64>, SensingOperator<f64>, IntensityTransform<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = SensingOperator::new(2, 1.0).unwrap();
    let dict = Dictionary::dct(4, 5).unwrap();
    let rho = IntensityTransform::new(10.0).unwrap();
    let samples = (0..count)
        .map(|_| {
            let level = rng.random_range(1.0..9.0);
            let truth = Array2::from_shape_fn((4, 4), |(i, j)| level + 0.3 * (i as f64 - j as f64));
            let rates = ExposureImage::new(op.forward(truth.view())).unwrap();
            let s = rng.random();
            let pattern = make_uniform_pattern(2, 2, 1, 4, s).unwrap();
            let obs = sample_binary_frames(&rates, &pattern, 4, s).unwrap().observations();
            TrainingSample {
                truth: truth.into_shape_with_order(16).unwrap(),
                obs,
            }
        })
        .collect();
    (samples, dict, op, rho)
}

#[test]
fn zero_rate_leaves_params_unchanged() {
    let (data, dict, op, rho) = tiny_dataset(20, 5);
    let init = MlNetParams::ista_init(&dict, &op, rho, 0.02, 1.0, 3).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 5,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (params, history) = train_mlnet(&data, &init, &cfg).unwrap();
    assert_eq!(params, init);
    let v0 = history.rows[0].validation_loss;
    assert!(history.rows.iter().all(|r| r.validation_loss == v0));
    assert_eq!(history.rows.len(), 6);
}

#[test]
fn training_is_deterministic_and_round_robin() {
    let (data, dict, op, rho) = tiny_dataset(30, 6);
    let init = MlNetParams::ista_init(&dict, &op, rho, 0.02, 1.0, 3).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.02,
        epochs: 5,
        batch_size: 5,
        patience: 100,
        ..TrainConfig::default()
    };
    let (p1, h1) = train_mlnet(&data, &init, &cfg).unwrap();
    let (p2, h2) = train_mlnet(&data, &init, &cfg).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
    let kinds: Vec<_> = h1.rows[1..].iter().map(|r| r.tensor.unwrap()).collect();
    assert_eq!(kinds, ParamKind::ALL.to_vec());

    // one epoch changes exactly the scheduled tensor
    let one = TrainConfig { epochs: 1, ..cfg.clone() };
    let (_, h) = train_mlnet(&data, &init, &one).unwrap();
    if h.best_epoch == 1 {
        let (p, _) = train_mlnet(&data, &init, &one).unwrap();
        for kind in ParamKind::ALL {
            assert_eq!(p.tensor(kind) == init.tensor(kind), kind != ParamKind::W, "{kind}");
        }
    }
}
