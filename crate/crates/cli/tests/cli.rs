use std::path::Path;
use std::process::{Command, Output};

use jotrecon::experiment::load_simulation;
use jotrecon::io::{read_tensor, write_tensor, Tensor};
use jotrecon::mlnet::MlNetParams;
use jotrecon::synthesis::Dictionary;
use jotrecon::{Observations, SensingOperator};
use ndarray::Array2;

fn jotrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jotrecon"))
        .args(args)
        .env("JOTRECON_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = jotrecon(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn image(path: &Path) -> Array2<f64> {
    read_tensor(path).unwrap().into_array2().unwrap()
}

#[test]
fn simulate_shapes_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&[
        "simulate", "--out", p(&sim), "--scene-size", "64", "--factor", "5", "--sigma", "3", "--tile", "5", "--q-min",
        "1", "--q-max", "10", "--frames", "4",
    ]);
    let bits = read_tensor(sim.join("bits.btsr")).unwrap();
    assert_eq!(bits.shape(), &[4, 320, 320]);
    assert_eq!(read_tensor(sim.join("rate.btsr")).unwrap().shape(), &[320, 320]);
    let stored = load_simulation(&sim).unwrap();
    assert_eq!(stored.config.factor, 5);
    assert_eq!(stored.config.frames, 4);
    assert_eq!(stored.truth.unwrap().dim(), (64, 64));
    // the recorded manifest reproduces itself
    let text = std::fs::read_to_string(sim.join("manifest.txt")).unwrap();
    let again = jotrecon::io::Manifest::from_text(&text).unwrap();
    assert_eq!(again.to_text(), text);
}

#[test]
fn rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["simulate", "--out", p(out), "--scene-size", "24", "--frames", "3", "--seed", "9"]);
    }
    for name in ["bits.btsr", "thresholds.btsr", "rate.btsr", "truth.btsr", "manifest.txt"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_scene_gives_zero_bits() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("zero.btsr");
    write_tensor(&scene, &Tensor::from_array2(&Array2::zeros((12, 12)))).unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--out", p(&sim), "--scene", p(&scene), "--frames", "5"]);
    let stored = load_simulation(&sim).unwrap();
    assert!(stored.stack.bits().iter().all(|&b| b == 0));
}

#[test]
fn zero_budget_returns_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--out", p(&sim), "--scene-size", "16"]);
    let out = dir.path().join("x.btsr");
    ok(&["reconstruct", "--input", p(&sim), "--out", p(&out), "--max-iters", "0"]);
    assert!(image(&out).iter().all(|&v| v == 10.0));
}

#[test]
fn step_reset_visible_in_report() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--out", p(&sim), "--scene-size", "16"]);
    let report = dir.path().join("r.csv");
    ok(&[
        "reconstruct", "--input", p(&sim), "--out", p(&dir.path().join("x.btsr")), "--report", p(&report), "--method",
        "fista_reset", "--max-iters", "20", "--tolerance", "0",
    ]);
    let text = std::fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "iteration,objective,step_start,step,backtracks,wall_time_s");
    for line in lines.skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let t: usize = cols[0].parse().unwrap();
        let start: f64 = cols[2].parse().unwrap();
        if t == 1 || t.is_multiple_of(5) {
            assert_eq!(start, 1.0, "iteration {t}");
        } else {
            assert!(start < 1.0, "iteration {t}");
        }
    }
}

#[test]
fn untrained_network_matches_fixed_step_ista() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let net = dir.path().join("net");
    let sim = dir.path().join("sim");
    let common = ["--scene-size", "16", "--atoms", "10"];
    let with = |extra: &[&str]| -> Vec<String> { extra.iter().chain(common.iter()).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    run(with(&["make-dataset", "--out", p(&data), "--train-patches", "8"]));
    let history = dir.path().join("h.csv");
    run(with(&[
        "train", "--dataset", p(&data), "--out", p(&net), "--history", p(&history), "--epochs", "0", "--layers", "6",
        "--fixed-step", "0.002",
    ]));
    assert_eq!(std::fs::read_to_string(&history).unwrap().lines().count(), 2);
    run(with(&["simulate", "--out", p(&sim)]));
    let a = dir.path().join("net.btsr");
    let b = dir.path().join("ista.btsr");
    run(with(&["reconstruct", "--input", p(&sim), "--out", p(&a), "--method", "mlnet", "--params", p(&net)]));
    run(with(&[
        "reconstruct", "--input", p(&sim), "--out", p(&b), "--method", "ista", "--fixed-step", "0.002", "--max-iters", "6",
        "--tolerance", "0",
    ]));
    let diff = (&image(&a) - &image(&b)).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(diff <= 1e-9, "{diff}");

    // zero epochs leave the ISTA initialization
    let params = MlNetParams::load(&net).unwrap();
    let dict = Dictionary::dct(8, 10).unwrap();
    let op = SensingOperator::new(3, 1.5).unwrap();
    let init = MlNetParams::ista_init(&dict, &op, jotrecon::synthesis::IntensityTransform::new(10.0).unwrap(), 0.002, 4.0, 6)
        .unwrap();
    assert_eq!(params, init);
}

#[test]
fn history_has_one_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["make-dataset", "--out", p(&data), "--train-patches", "20", "--atoms", "8", "--scene-size", "16"]);
    let history = dir.path().join("h.csv");
    ok(&[
        "train", "--dataset", p(&data), "--out", p(&dir.path().join("net")), "--history", p(&history), "--epochs", "7",
        "--layers", "2", "--batch-size", "4",
    ]);
    let text = std::fs::read_to_string(&history).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    let tensors: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(tensors, ["init", "W", "A", "Q", "theta", "D", "W", "A"]);
}

#[test]
fn psnr_verb() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.btsr");
    let b = dir.path().join("b.btsr");
    let t = Array2::from_shape_fn((4, 4), |(i, j)| (i + j) as f64);
    write_tensor(&a, &Tensor::from_array2(&t)).unwrap();
    write_tensor(&b, &Tensor::from_array2(&(&t + 1.0))).unwrap();
    assert_eq!(ok(&["psnr", "--estimate", p(&a), "--truth", p(&a)]).trim(), "inf");
    let db: f64 = ok(&["psnr", "--estimate", p(&b), "--truth", p(&a), "--peak", "10"]).trim().parse().unwrap();
    assert!((db - 20.0).abs() < 1e-3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(jotrecon(&["simulate", "--out", p(dir.path()), "--beta", "2"]).status.code(), Some(2));
    assert_eq!(jotrecon(&["simulate", "--out", p(dir.path()), "--frames", "x"]).status.code(), Some(2));
    assert_eq!(jotrecon(&["reconstruct", "--input", "/nonexistent", "--out", "x"]).status.code(), Some(2));

    // a network whose step is absurdly large blows up before the first epoch
    let data = dir.path().join("data");
    ok(&["make-dataset", "--out", p(&data), "--train-patches", "4", "--scene-size", "16", "--atoms", "8"]);
    let out = jotrecon(&[
        "train", "--dataset", p(&data), "--out", p(&dir.path().join("net")), "--epochs", "0", "--fixed-step", "1e300",
        "--atoms", "8", "--layers", "5",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_deduplicates_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let text = ok(&[
        "sweep-exposures", "--frame-list", "2,1,2", "--methods", "ml", "--seeds", "1", "--out", p(&out), "--scene-size",
        "12", "--max-iters", "20",
    ]);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "frames,method,psnr_db,seeds");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,ml,") && rows[2].starts_with("2,ml,"));
}

#[test]
fn dataset_round_trip_preserves_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["make-dataset", "--out", p(&data), "--train-patches", "5", "--scene-size", "16", "--frames", "3"]);
    let (samples, cfg) = jotrecon::experiment::load_dataset(&data).unwrap();
    assert_eq!(samples.len(), 5);
    assert_eq!(cfg.frames, 3);
    let regenerated = jotrecon::experiment::make_dataset(&cfg, 5, 0).unwrap();
    for (a, b) in samples.iter().zip(&regenerated) {
        assert_eq!(a.truth, b.truth);
        let (oa, ob): (&Observations, &Observations) = (&a.obs, &b.obs);
        assert_eq!(oa.ones(), ob.ones());
        assert_eq!(oa.thresholds(), ob.thresholds());
    }
}
