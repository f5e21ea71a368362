use std::path::Path;

use ndarray::{s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Metric, MethodKind, SceneSource};
use crate::error::{Error, Result};
use crate::formation::{sample_binary_frames, BinaryFrameStack, SensingOperator};
use crate::image::ExposureImage;
use crate::io::{read_tensor, write_tensor, Manifest, Tensor, TensorData};
use crate::likelihood::Observations;
use crate::metrics::{log_psnr, psnr};
use crate::mlnet::{MlNetParams, TrainingSample};
use crate::scene::{hdr_scene, load_scene, synthetic_scene};
use crate::solvers::{reconstruct_image, Method, PatchSetup, Reconstruction};

/// Seeds of generated training scenes start here so they never coincide
/// with evaluation scene seeds.
pub const TRAINING_SCENE_SEED_BASE: u64 = 1 << 40;

pub fn scene_for_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Array2<f64>> {
    match &cfg.scene {
        SceneSource::Synthetic => synthetic_scene(cfg.scene_height, cfg.scene_width, cfg.range, seed),
        SceneSource::Hdr => hdr_scene(cfg.scene_height, cfg.scene_width, cfg.range, seed),
        SceneSource::File(path) => load_scene(path, cfg.range),
    }
}

/// The evaluation scene of `cfg`.
pub fn scene(cfg: &ExperimentConfig) -> Result<Array2<f64>> {
    scene_for_seed(cfg, cfg.scene_seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub truth: Array2<f64>,
    /// High-resolution sensor rates `Hx`.
    pub rates: Array2<f64>,
    pub stack: BinaryFrameStack,
}

pub fn simulate(cfg: &ExperimentConfig, truth: &Array2<f64>, seed: u64) -> Result<Simulation> {
    let op = cfg.operator()?;
    let x = ExposureImage::new(truth.clone())?;
    let rates = op.forward(x.view());
    let pattern = cfg.threshold_pattern()?;
    let stack = sample_binary_frames(&ExposureImage::new(rates.clone())?, &pattern, cfg.frames, seed)?;
    Ok(Simulation {
        truth: truth.clone(),
        rates,
        stack,
    })
}

fn thresholds_tensor(t: &Array2<u32>) -> Tensor {
    Tensor::from_array2(&t.mapv(f64::from))
}

fn thresholds_from(values: Array2<f64>) -> Result<Array2<u32>> {
    if values.iter().any(|&v| !(v >= 1.0) || v.fract() != 0.0 || v > u32::MAX as f64) {
        return Err(Error::Malformed("thresholds must be positive integers".into()));
    }
    Ok(values.mapv(|v| v as u32))
}

pub fn save_simulation(dir: impl AsRef<Path>, cfg: &ExperimentConfig, sim: &Simulation) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(dir.join("truth.btsr"), &Tensor::from_array2(&sim.truth))?;
    write_tensor(dir.join("rate.btsr"), &Tensor::from_array2(&sim.rates))?;
    write_tensor(dir.join("bits.btsr"), &Tensor::from_bits3(sim.stack.bits())?)?;
    write_tensor(dir.join("thresholds.btsr"), &thresholds_tensor(sim.stack.thresholds()))?;
    let mut manifest = cfg.to_manifest();
    let (h, w) = sim.stack.dims();
    manifest
        .set("sensor_height", h)
        .set("sensor_width", w)
        .set("frames_stored", sim.stack.frames());
    manifest.write(dir.join("manifest.txt"))
}

/// Loaded simulation directory: the stack, the ground truth if present, and
/// the recorded configuration.
pub struct StoredSimulation {
    pub stack: BinaryFrameStack,
    pub truth: Option<Array2<f64>>,
    pub config: ExperimentConfig,
}

pub fn load_simulation(dir: impl AsRef<Path>) -> Result<StoredSimulation> {
    let dir = dir.as_ref();
    let mut manifest = Manifest::read(dir.join("manifest.txt"))?;
    let bits = read_tensor(dir.join("bits.btsr"))?.into_bits3()?;
    let thresholds = thresholds_from(read_tensor(dir.join("thresholds.btsr"))?.into_array2()?)?;
    let stack = BinaryFrameStack::new(bits, thresholds)?;
    let expected: (usize, usize) = (manifest.parse_required("sensor_height")?, manifest.parse_required("sensor_width")?);
    if stack.dims() != expected {
        return Err(Error::Malformed(format!(
            "manifest lists sensor {expected:?}, files hold {:?}",
            stack.dims()
        )));
    }
    let truth_path = dir.join("truth.btsr");
    let truth = if truth_path.exists() {
        Some(read_tensor(truth_path)?.into_array2()?)
    } else {
        None
    };
    // bookkeeping keys are not configuration
    let mut config_manifest = Manifest::new();
    for (k, v) in manifest.entries() {
        if !matches!(k.as_str(), "sensor_height" | "sensor_width" | "frames_stored") {
            config_manifest.set(k, v);
        }
    }
    manifest = config_manifest;
    Ok(StoredSimulation {
        stack,
        truth,
        config: ExperimentConfig::from_manifest(&manifest)?,
    })
}

/// Image quality under the configured metric and peak.
pub fn quality(cfg: &ExperimentConfig, estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    match cfg.metric {
        Metric::Psnr => psnr(estimate.view(), truth.view(), cfg.peak()),
        Metric::LogPsnr => log_psnr(estimate.view(), truth.view(), cfg.peak()),
    }
}

/// Reconstructs the exposure from `obs` with the method of `cfg`. `params`
/// is required for the network method.
pub fn reconstruct(
    cfg: &ExperimentConfig,
    obs: &Observations,
    params: Option<&MlNetParams<f64>>,
    parallel: bool,
) -> Result<Reconstruction<f64>> {
    let op = cfg.operator()?;
    let dict = cfg.dictionary()?;
    let rho = cfg.rho()?;
    let solver = cfg.solver_config();
    let method = match cfg.method {
        MethodKind::Ml => Method::Ml(cfg.ml_config()),
        MethodKind::Ista | MethodKind::Fista | MethodKind::FistaReset => Method::Regularized(solver),
        MethodKind::MlNet => {
            let params = params.ok_or_else(|| Error::Config("method mlnet needs a params bundle".into()))?;
            if !operator_matches(params.op(), &op) {
                return Err(Error::Config(format!(
                    "params were built for factor {} sigma {}, config has factor {} sigma {}",
                    params.op().factor(),
                    params.op().sigma(),
                    op.factor(),
                    op.sigma()
                )));
            }
            Method::MlNet(params)
        }
    };
    let op_ref = match &method {
        Method::MlNet(p) => p.op(),
        _ => &op,
    };
    let setup = PatchSetup {
        dict: &dict,
        op: op_ref,
        rho,
        stride: cfg.stride,
        parallel,
    };
    reconstruct_image(obs, &method, &setup)
}

/// Training pairs from generated scenes with disjoint seeds: each scene is
/// simulated whole and patches are cut at random patch-aligned positions.
pub fn make_dataset(cfg: &ExperimentConfig, count: usize, seed: u64) -> Result<Vec<TrainingSample<f64>>> {
    if count == 0 {
        return Err(Error::Config("dataset size must be >= 1".into()));
    }
    let op = cfg.operator()?;
    let p = cfg.patch;
    if cfg.scene_height < p || cfg.scene_width < p {
        return Err(Error::Config("scene is smaller than one patch".into()));
    }
    let per_scene = 64.min(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    let mut scene_index = 0u64;
    while samples.len() < count {
        let scene_seed = TRAINING_SCENE_SEED_BASE + seed.wrapping_mul(1 << 20) + scene_index;
        let truth = scene_for_seed(cfg, scene_seed)?;
        let sim = simulate(cfg, &truth, scene_seed ^ 0x5eed)?;
        let obs = sim.stack.observations();
        let (h, w) = truth.dim();
        for _ in 0..per_scene.min(count - samples.len()) {
            let r = rng.random_range(0..=h - p);
            let c = rng.random_range(0..=w - p);
            let patch = truth.slice(s![r..r + p, c..c + p]).to_owned();
            let s = op.factor();
            samples.push(TrainingSample {
                truth: patch.into_shape_with_order(p * p).expect("contiguous"),
                obs: obs.crop(r * s, c * s, p * s, p * s)?,
            });
        }
        scene_index += 1;
    }
    Ok(samples)
}

pub fn save_dataset(dir: impl AsRef<Path>, cfg: &ExperimentConfig, samples: &[TrainingSample<f64>]) -> Result<()> {
    let dir = dir.as_ref();
    let first = samples.first().ok_or_else(|| Error::Config("empty dataset".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = samples.len();
    let p = cfg.patch;
    let (sh, sw) = first.obs.dims();
    let frames = first.obs.frames() as usize;
    let mut truth = Vec::with_capacity(n * p * p);
    let mut bits = Vec::with_capacity(n * frames * sh * sw);
    let mut thresholds = Vec::with_capacity(n * sh * sw);
    for s in samples {
        if s.obs.dims() != (sh, sw) || s.obs.frames() as usize != frames || s.truth.len() != p * p {
            return Err(Error::invalid("dataset samples have inconsistent shapes"));
        }
        truth.extend(s.truth.iter().copied());
        // exact counts are what the likelihood sees; store them as the first n₁ frames
        for k in 0..frames as u32 {
            bits.extend(s.obs.ones().iter().map(|&ones| u8::from(k < ones)));
        }
        thresholds.extend(s.obs.thresholds().iter().map(|&q| f64::from(q)));
    }
    write_tensor(dir.join("truth.btsr"), &Tensor::new(vec![n, p, p], TensorData::Float64(truth))?)?;
    write_tensor(dir.join("bits.btsr"), &Tensor::new(vec![n, frames, sh, sw], TensorData::Bits(bits))?)?;
    write_tensor(
        dir.join("thresholds.btsr"),
        &Tensor::new(vec![n, sh, sw], TensorData::Float64(thresholds))?,
    )?;
    let mut manifest = cfg.to_manifest();
    manifest.set("samples", n);
    manifest.write(dir.join("manifest.txt"))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Vec<TrainingSample<f64>>, ExperimentConfig)> {
    let dir = dir.as_ref();
    let mut manifest = Manifest::read(dir.join("manifest.txt"))?;
    let n: usize = manifest.parse_required("samples")?;
    let truth = read_tensor(dir.join("truth.btsr"))?.into_arrayd()?;
    let bits = read_tensor(dir.join("bits.btsr"))?.into_bitsd()?;
    let thresholds = read_tensor(dir.join("thresholds.btsr"))?.into_arrayd()?;
    if truth.ndim() != 3 || bits.ndim() != 4 || thresholds.ndim() != 3 {
        return Err(Error::Malformed("dataset tensors have the wrong rank".into()));
    }
    if truth.shape()[0] != n || bits.shape()[0] != n || thresholds.shape()[0] != n {
        return Err(Error::Malformed("dataset tensors disagree on the sample count".into()));
    }
    if bits.shape()[2..] != thresholds.shape()[1..] {
        return Err(Error::Malformed("bit and threshold shapes disagree".into()));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = truth.index_axis(Axis(0), i);
        let b: Array3<u8> = bits
            .index_axis(Axis(0), i)
            .to_owned()
            .into_dimensionality()
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let q: Array2<f64> = thresholds
            .index_axis(Axis(0), i)
            .to_owned()
            .into_dimensionality()
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let stack = BinaryFrameStack::new(b, thresholds_from(q)?)?;
        samples.push(TrainingSample {
            truth: t.iter().copied().collect(),
            obs: stack.observations(),
        });
    }
    let mut config_manifest = Manifest::new();
    for (k, v) in manifest.entries() {
        if k != "samples" {
            config_manifest.set(k, v);
        }
    }
    manifest = config_manifest;
    Ok((samples, ExperimentConfig::from_manifest(&manifest)?))
}

fn operator_matches(a: &SensingOperator<f64>, b: &SensingOperator<f64>) -> bool {
    a.factor() == b.factor() && a.sigma() == b.sigma() && a.truncation() == b.truncation()
}
