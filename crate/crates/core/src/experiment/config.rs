use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::formation::{make_hdr_pattern, make_uniform_pattern, SensingOperator, ThresholdPattern};
use crate::io::Manifest;
use crate::mlnet::{format_order, parse_order, LossKind, ParamKind, TrainConfig};
use crate::solvers::{MlConfig, SolverConfig, StepRule, Variant};
use crate::synthesis::{Dictionary, IntensityTransform};

#[derive(Clone, Debug, PartialEq)]
pub enum SceneSource {
    Synthetic,
    Hdr,
    /// PGM (scaled to the range) or float tensor file.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatternSpec {
    Uniform { q_min: u32, q_max: u32 },
    /// Threshold covering of `[1, range]`.
    Hdr,
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodKind {
    Ml,
    Ista,
    Fista,
    /// FISTA with the step size restored every `reset_period` iterations.
    FistaReset,
    MlNet,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Ml => "ml",
            MethodKind::Ista => "ista",
            MethodKind::Fista => "fista",
            MethodKind::FistaReset => "fista_reset",
            MethodKind::MlNet => "mlnet",
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ml" => MethodKind::Ml,
            "ista" => MethodKind::Ista,
            "fista" => MethodKind::Fista,
            "fista_reset" | "fista-reset" => MethodKind::FistaReset,
            "mlnet" => MethodKind::MlNet,
            other => return Err(Error::Config(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    LogPsnr,
}

/// Every knob of an experiment. Serialized as flat `key=value` pairs; see
/// [`ExperimentConfig::KEYS`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scene: SceneSource,
    pub scene_height: usize,
    pub scene_width: usize,
    pub scene_seed: u64,
    /// Exposure range `[0, range]` of generated scenes and PGM inputs.
    pub range: f64,
    pub factor: usize,
    pub sigma: f64,
    pub pattern: PatternSpec,
    pub tile: usize,
    pub pattern_seed: u64,
    pub frames: usize,
    pub c: f64,
    pub mu: f64,
    pub patch: usize,
    pub atoms_per_axis: usize,
    pub dictionary: Option<PathBuf>,
    pub stride: usize,
    pub method: MethodKind,
    pub max_iters: usize,
    pub tolerance: f64,
    pub eta0: f64,
    pub beta: f64,
    pub reset_period: usize,
    /// Fixed step for ISTA (0 = backtracking).
    pub fixed_step: f64,
    pub layers: usize,
    pub params: Option<PathBuf>,
    /// Sampling seed for the binary frames.
    pub seed: u64,
    pub peak: Option<f64>,
    pub metric: Metric,
    pub train_patches: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub validation_fraction: f64,
    pub order: Vec<ParamKind>,
    pub loss: LossKind,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scene: SceneSource::Synthetic,
            scene_height: 64,
            scene_width: 64,
            scene_seed: 0,
            range: 10.0,
            factor: 3,
            sigma: 1.5,
            pattern: PatternSpec::Uniform { q_min: 1, q_max: 9 },
            tile: 3,
            pattern_seed: 0,
            frames: 4,
            c: 10.0,
            mu: 4.0,
            patch: 8,
            atoms_per_axis: 16,
            dictionary: None,
            stride: 4,
            method: MethodKind::Fista,
            max_iters: 2000,
            tolerance: 1e-8,
            eta0: 1.0,
            beta: 0.5,
            reset_period: 5,
            fixed_step: 0.0,
            layers: 4,
            params: None,
            seed: 1,
            peak: None,
            metric: Metric::Psnr,
            train_patches: 2000,
            epochs: 20,
            batch_size: 100,
            learning_rate: 0.01,
            patience: 5,
            validation_fraction: 0.2,
            order: ParamKind::ALL.to_vec(),
            loss: LossKind::Mse,
            threads: None,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for '{key}': '{value}'")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    match value {
        "" | "none" => None,
        v => Some(PathBuf::from(v)),
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "scene",
        "scene_size",
        "scene_height",
        "scene_width",
        "scene_seed",
        "range",
        "factor",
        "sigma",
        "pattern",
        "tile",
        "q_min",
        "q_max",
        "pattern_seed",
        "frames",
        "c",
        "mu",
        "patch",
        "atoms",
        "dictionary",
        "stride",
        "method",
        "max_iters",
        "tolerance",
        "eta0",
        "beta",
        "reset_period",
        "fixed_step",
        "layers",
        "params",
        "seed",
        "peak",
        "metric",
        "train_patches",
        "epochs",
        "batch_size",
        "learning_rate",
        "patience",
        "validation_fraction",
        "order",
        "loss",
        "threads",
    ];

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scene" => {
                self.scene = match value {
                    "synthetic" => SceneSource::Synthetic,
                    "hdr" => SceneSource::Hdr,
                    path => SceneSource::File(PathBuf::from(path)),
                }
            }
            "scene_height" => self.scene_height = parse(key, value)?,
            "scene_width" => self.scene_width = parse(key, value)?,
            "scene_size" => {
                let n = parse(key, value)?;
                self.scene_height = n;
                self.scene_width = n;
            }
            "scene_seed" => self.scene_seed = parse(key, value)?,
            "range" => self.range = parse(key, value)?,
            "factor" => self.factor = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "pattern" => {
                self.pattern = match value {
                    "uniform" => match self.pattern {
                        PatternSpec::Uniform { .. } => self.pattern.clone(),
                        _ => PatternSpec::Uniform { q_min: 1, q_max: 9 },
                    },
                    "hdr" => PatternSpec::Hdr,
                    path => PatternSpec::File(PathBuf::from(path)),
                }
            }
            "q_min" | "q_max" => {
                let v: u32 = parse(key, value)?;
                let (mut lo, mut hi) = match self.pattern {
                    PatternSpec::Uniform { q_min, q_max } => (q_min, q_max),
                    _ => (1, 9),
                };
                if key == "q_min" {
                    lo = v;
                } else {
                    hi = v;
                }
                self.pattern = PatternSpec::Uniform { q_min: lo, q_max: hi };
            }
            "tile" => self.tile = parse(key, value)?,
            "pattern_seed" => self.pattern_seed = parse(key, value)?,
            "frames" => self.frames = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "patch" => self.patch = parse(key, value)?,
            "atoms" => self.atoms_per_axis = parse(key, value)?,
            "dictionary" => self.dictionary = optional_path(value),
            "stride" => self.stride = parse(key, value)?,
            "method" => self.method = value.parse()?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "eta0" => self.eta0 = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "reset_period" => self.reset_period = parse(key, value)?,
            "fixed_step" => self.fixed_step = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "params" => self.params = optional_path(value),
            "seed" => self.seed = parse(key, value)?,
            "peak" => {
                self.peak = match value {
                    "" | "range" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "metric" => {
                self.metric = match value {
                    "psnr" => Metric::Psnr,
                    "log_psnr" | "log-psnr" => Metric::LogPsnr,
                    other => return Err(Error::Config(format!("unknown metric '{other}'"))),
                }
            }
            "train_patches" => self.train_patches = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "validation_fraction" => self.validation_fraction = parse(key, value)?,
            "order" => self.order = parse_order(value)?,
            "loss" => self.loss = value.parse()?,
            "threads" => {
                self.threads = match value {
                    "" | "auto" | "0" => None,
                    v => Some(parse(key, v)?),
                }
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(manifest)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, manifest: &Manifest) -> Result<()> {
        for (k, v) in manifest.entries() {
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        m.set(
            "scene",
            match &self.scene {
                SceneSource::Synthetic => "synthetic".to_string(),
                SceneSource::Hdr => "hdr".to_string(),
                SceneSource::File(p) => p.display().to_string(),
            },
        );
        m.set("scene_height", self.scene_height)
            .set("scene_width", self.scene_width)
            .set("scene_seed", self.scene_seed)
            .set("range", self.range)
            .set("factor", self.factor)
            .set("sigma", self.sigma);
        match &self.pattern {
            PatternSpec::Uniform { q_min, q_max } => {
                m.set("pattern", "uniform").set("q_min", q_min).set("q_max", q_max);
            }
            PatternSpec::Hdr => {
                m.set("pattern", "hdr");
            }
            PatternSpec::File(p) => {
                m.set("pattern", p.display());
            }
        }
        m.set("tile", self.tile)
            .set("pattern_seed", self.pattern_seed)
            .set("frames", self.frames)
            .set("c", self.c)
            .set("mu", self.mu)
            .set("patch", self.patch)
            .set("atoms", self.atoms_per_axis)
            .set("dictionary", path(&self.dictionary))
            .set("stride", self.stride)
            .set("method", self.method.name())
            .set("max_iters", self.max_iters)
            .set("tolerance", self.tolerance)
            .set("eta0", self.eta0)
            .set("beta", self.beta)
            .set("reset_period", self.reset_period)
            .set("fixed_step", self.fixed_step)
            .set("layers", self.layers)
            .set("params", path(&self.params))
            .set("seed", self.seed)
            .set("peak", self.peak.map_or("range".to_string(), |p| p.to_string()))
            .set(
                "metric",
                match self.metric {
                    Metric::Psnr => "psnr",
                    Metric::LogPsnr => "log_psnr",
                },
            )
            .set("train_patches", self.train_patches)
            .set("epochs", self.epochs)
            .set("batch_size", self.batch_size)
            .set("learning_rate", self.learning_rate)
            .set("patience", self.patience)
            .set("validation_fraction", self.validation_fraction)
            .set("order", format_order(&self.order))
            .set("loss", self.loss)
            .set("threads", self.threads.map_or("auto".to_string(), |t| t.to_string()));
        m
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.scene_height == 0 || self.scene_width == 0 {
            return bad("scene dims must be positive");
        }
        if !(self.range > 0.0) {
            return bad("range must be positive");
        }
        if self.factor == 0 {
            return bad("factor must be >= 1");
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be >= 0");
        }
        if self.tile == 0 {
            return bad("tile must be >= 1");
        }
        if let PatternSpec::Uniform { q_min, q_max } = self.pattern {
            if q_min == 0 || q_max < q_min {
                return bad("need 1 <= q_min <= q_max");
            }
        }
        if self.frames == 0 {
            return bad("frames must be >= 1");
        }
        if !(self.c > 0.0) {
            return bad("c must be positive");
        }
        if !(self.mu >= 0.0) {
            return bad("mu must be >= 0");
        }
        if self.patch == 0 || self.atoms_per_axis == 0 || self.stride == 0 {
            return bad("patch, atoms and stride must be >= 1");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) || !(self.eta0 > 0.0) {
            return bad("need eta0 > 0 and beta in (0, 1)");
        }
        if self.reset_period == 0 {
            return bad("reset_period must be >= 1");
        }
        if !(self.fixed_step >= 0.0) {
            return bad("fixed_step must be >= 0");
        }
        if let Some(p) = self.peak {
            if !(p > 0.0) {
                return bad("peak must be positive");
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1");
        }
        self.train_config().validate()
    }

    pub fn operator(&self) -> Result<SensingOperator<f64>> {
        SensingOperator::new(self.factor, self.sigma)
    }

    pub fn rho(&self) -> Result<IntensityTransform<f64>> {
        IntensityTransform::new(self.c)
    }

    pub fn dictionary(&self) -> Result<Dictionary<f64>> {
        let dict = match &self.dictionary {
            Some(path) => Dictionary::load(path)?,
            None => Dictionary::dct(self.patch, self.atoms_per_axis)?,
        };
        if dict.patch_side() != self.patch {
            return Err(Error::Config(format!(
                "dictionary patch side {} does not match patch={}",
                dict.patch_side(),
                self.patch
            )));
        }
        Ok(dict)
    }

    pub fn threshold_pattern(&self) -> Result<ThresholdPattern> {
        match &self.pattern {
            PatternSpec::Uniform { q_min, q_max } => make_uniform_pattern(self.tile, self.tile, *q_min, *q_max, self.pattern_seed),
            PatternSpec::Hdr => make_hdr_pattern(self.range, self.tile),
            PatternSpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                ThresholdPattern::from_text(&text)
            }
        }
    }

    pub fn peak(&self) -> f64 {
        self.peak.unwrap_or(self.range)
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        let variant = match self.method {
            MethodKind::Ista => Variant::Ista,
            MethodKind::FistaReset => Variant::FistaStepReset {
                period: self.reset_period,
            },
            _ => Variant::Fista,
        };
        let fixed = self.fixed_step > 0.0;
        SolverConfig {
            mu: self.mu,
            eta0: if fixed { self.fixed_step } else { self.eta0 },
            beta: self.beta,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            variant,
            step_rule: if fixed { StepRule::Fixed } else { StepRule::Backtracking },
        }
    }

    pub fn ml_config(&self) -> MlConfig<f64> {
        MlConfig {
            eta0: self.eta0,
            beta: self.beta,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            ..MlConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            order: self.order.clone(),
            validation_fraction: self.validation_fraction,
            patience: self.patience,
            decay: 0.5,
            loss: self.loss,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("frames", "16").unwrap();
        cfg.set("q_max", "10").unwrap();
        cfg.set("method", "fista_reset").unwrap();
        cfg.set("params", "net").unwrap();
        cfg.set("order", "A,W,theta").unwrap();
        cfg.set("loss", "log_mse").unwrap();
        let back = ExperimentConfig::from_manifest(&cfg.to_manifest()).unwrap();
        assert_eq!(back, cfg);
        for key in cfg.to_manifest().entries().iter().map(|(k, _)| k) {
            assert!(ExperimentConfig::KEYS.contains(&key.as_str()), "{key}");
        }
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut cfg = ExperimentConfig::default();
        assert!(matches!(cfg.set("frames", "many"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("colour", "red"), Err(Error::Config(_))));
        let m = Manifest::from_text("beta=1.5\n").unwrap();
        assert!(matches!(ExperimentConfig::from_manifest(&m), Err(Error::Config(_))));
    }

    #[test]
    fn reset_variant_maps_to_solver() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("method", "fista_reset").unwrap();
        assert_eq!(cfg.solver_config().variant, Variant::FistaStepReset { period: 5 });
    }
}
