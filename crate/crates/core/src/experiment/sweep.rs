use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::config::{ExperimentConfig, MethodKind};
use super::pipeline::{quality, reconstruct, scene, simulate};
use crate::error::{Error, Result};
use crate::likelihood::Observations;
use crate::mlnet::MlNetParams;

/// ISTA-initialized network for `cfg`, with the step estimated on up to 16
/// patch crops of `obs`.
pub fn ista_network(cfg: &ExperimentConfig, obs: &Observations, layers: usize) -> Result<MlNetParams<f64>> {
    let op = cfg.operator()?;
    let dict = cfg.dictionary()?;
    let side = cfg.patch * cfg.factor;
    let (h, w) = obs.dims();
    if h < side || w < side {
        return Err(Error::Config("image is smaller than one patch".into()));
    }
    let mut crops = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            let r = (h - side) * i / 3 / cfg.factor * cfg.factor;
            let c = (w - side) * j / 3 / cfg.factor * cfg.factor;
            crops.push(obs.crop(r, c, side, side)?);
        }
    }
    let refs: Vec<&Observations> = crops.iter().collect();
    Ok(MlNetParams::ista_init_auto(&dict, &op, cfg.rho()?, cfg.mu, layers, &refs)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExposureRow {
    pub frames: usize,
    pub method: MethodKind,
    /// Mean over seeds.
    pub psnr: f64,
    pub seeds: usize,
}

pub const EXPOSURE_CSV_HEADER: &str = "frames,method,psnr_db,seeds";

/// Sorted, deduplicated list; duplicates are reported with a warning.
pub fn dedup_sorted(values: &[usize]) -> Vec<usize> {
    let set: BTreeSet<usize> = values.iter().copied().collect();
    if set.len() != values.len() {
        log::warn!("duplicate entries in {values:?} ignored");
    }
    set.into_iter().collect()
}

/// PSNR against the number of frames. Sampling seeds are `cfg.seed + i`; for
/// a given seed the frames of a smaller K are a prefix of a larger K's.
pub fn sweep_exposures(
    cfg: &ExperimentConfig,
    frame_counts: &[usize],
    methods: &[MethodKind],
    seeds: usize,
    params: Option<&MlNetParams<f64>>,
) -> Result<Vec<ExposureRow>> {
    if seeds == 0 || methods.is_empty() || frame_counts.is_empty() {
        return Err(Error::Config("sweep needs at least one seed, method and frame count".into()));
    }
    let truth = scene(cfg)?;
    let mut rows = Vec::new();
    for k in dedup_sorted(frame_counts) {
        let mut at_k = cfg.clone();
        at_k.frames = k;
        let mut totals = vec![0.0; methods.len()];
        for s in 0..seeds as u64 {
            let sim = simulate(&at_k, &truth, cfg.seed + s)?;
            let obs = sim.stack.observations();
            for (total, &method) in totals.iter_mut().zip(methods) {
                let mut run = at_k.clone();
                run.method = method;
                let rec = reconstruct(&run, &obs, params, true)?;
                *total += quality(&run, &rec.image, &truth)?;
            }
        }
        for (total, &method) in totals.iter().zip(methods) {
            rows.push(ExposureRow {
                frames: k,
                method,
                psnr: total / seeds as f64,
                seeds,
            });
        }
    }
    Ok(rows)
}

pub fn exposure_csv(rows: &[ExposureRow]) -> String {
    let mut out = format!("{EXPOSURE_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{}", r.frames, r.method.name(), r.psnr, r.seeds);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthRow {
    /// Iterations for the solver, layers for the networks.
    pub depth: usize,
    pub method: String,
    pub psnr: f64,
    pub seconds: f64,
}

pub const DEPTH_CSV_HEADER: &str = "depth,method,psnr_db,seconds";

/// Quality against computational budget: FISTA with a fixed iteration
/// budget, the ISTA-initialized network and, if given, a trained network,
/// each at every depth.
pub fn sweep_depth(cfg: &ExperimentConfig, depths: &[usize], trained: Option<&MlNetParams<f64>>) -> Result<Vec<DepthRow>> {
    let truth = scene(cfg)?;
    let sim = simulate(cfg, &truth, cfg.seed)?;
    let obs = sim.stack.observations();
    let init = ista_network(cfg, &obs, 0)?;
    let mut rows = Vec::new();
    for depth in dedup_sorted(depths) {
        let mut fista = cfg.clone();
        fista.method = MethodKind::Fista;
        fista.max_iters = depth;
        fista.tolerance = 0.0;
        let rec = reconstruct(&fista, &obs, None, true)?;
        rows.push(DepthRow {
            depth,
            method: "fista".into(),
            psnr: quality(cfg, &rec.image, &truth)?,
            seconds: rec.elapsed.as_secs_f64(),
        });
        let mut net = cfg.clone();
        net.method = MethodKind::MlNet;
        let mut candidates = vec![("mlnet_init", init.clone().with_layers(depth))];
        if let Some(p) = trained {
            candidates.push(("mlnet", p.clone().with_layers(depth)));
        }
        for (name, params) in candidates {
            let rec = reconstruct(&net, &obs, Some(&params), true)?;
            rows.push(DepthRow {
                depth,
                method: name.into(),
                psnr: quality(cfg, &rec.image, &truth)?,
                seconds: rec.elapsed.as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

pub fn depth_csv(rows: &[DepthRow]) -> String {
    let mut out = format!("{DEPTH_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.depth, r.method, r.psnr, r.seconds);
    }
    out
}
