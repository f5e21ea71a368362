//! Whole-image reconstruction: per-patch solves over an overlapping grid,
//! averaged where patches overlap.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::ml::{solve_ml_unregularized, MlConfig};
use super::problem::PatchProblem;
use super::proximal::{solve_fista, SolverConfig};
use super::report::SolverReport;
use crate::error::{Error, Result};
use crate::formation::SensingOperator;
use crate::likelihood::Observations;
use crate::mlnet::{self, MlNetParams};
use crate::scalar::Real;
use crate::synthesis::{Dictionary, IntensityTransform, PatchGrid};

#[derive(Clone, Copy, Debug)]
pub enum Method<'a, T> {
    /// Unregularized ML on the whole image, started from the constant `c`.
    Ml(MlConfig<T>),
    /// ℓ₁-regularized patch solves (ISTA or FISTA per the config).
    Regularized(SolverConfig<T>),
    MlNet(&'a MlNetParams<T>),
}

#[derive(Clone, Copy, Debug)]
pub struct PatchSetup<'a, T> {
    pub dict: &'a Dictionary<T>,
    pub op: &'a SensingOperator<T>,
    pub rho: IntensityTransform<T>,
    pub stride: usize,
    pub parallel: bool,
}

#[derive(Clone, Debug)]
pub struct Reconstruction<T> {
    pub image: Array2<T>,
    /// One report per patch in grid order, or a single report for ML.
    pub reports: Vec<SolverReport<T>>,
    /// Wall time of the solve phase only.
    pub elapsed: Duration,
}

fn patch_observations(obs: &Observations, grid: &PatchGrid, index: usize, factor: usize) -> Result<Observations> {
    let (r, c) = grid.origin(index);
    let side = grid.patch() * factor;
    obs.crop(r * factor, c * factor, side, side)
}

pub fn reconstruct_image<T: Real>(
    obs: &Observations,
    method: &Method<'_, T>,
    setup: &PatchSetup<'_, T>,
) -> Result<Reconstruction<T>> {
    let factor = setup.op.factor();
    let (sh, sw) = obs.dims();
    if sh % factor != 0 || sw % factor != 0 {
        return Err(Error::invalid(format!(
            "sensor dims {sh}x{sw} are not divisible by the oversampling factor {factor}"
        )));
    }
    let (h, w) = (sh / factor, sw / factor);

    if let Method::Ml(config) = method {
        let x0 = Array2::from_elem((h, w), setup.rho.scale());
        let start = Instant::now();
        let (x, report) = solve_ml_unregularized(obs, setup.op, x0.view(), config)?;
        return Ok(Reconstruction {
            image: x,
            reports: vec![report],
            elapsed: start.elapsed(),
        });
    }

    let patch = match method {
        Method::MlNet(params) => params.patch_side(),
        _ => setup.dict.patch_side(),
    };
    let grid = PatchGrid::new(h, w, patch, setup.stride)?;
    let crops = (0..grid.len())
        .map(|i| patch_observations(obs, &grid, i, factor))
        .collect::<Result<Vec<_>>>()?;

    let solve = |(index, crop): (usize, &Observations)| -> Result<(Array2<T>, SolverReport<T>)> {
        let solved = match method {
            Method::Regularized(config) => {
                let problem = PatchProblem::new(crop, setup.dict, setup.op, setup.rho)?;
                let z0 = Array1::zeros(problem.atom_count());
                solve_fista(&problem, config, z0.view()).map(|(z, report)| {
                    let x = setup.rho.apply(&setup.dict.synthesize(z.view()));
                    (x, report)
                })
            }
            Method::MlNet(params) => mlnet::forward_with_report(params, crop),
            Method::Ml(_) => unreachable!(),
        };
        let (x, report) = solved.map_err(|source| Error::Patch {
            patch: index,
            source: Box::new(source),
        })?;
        let x = x
            .into_shape_with_order((patch, patch))
            .map_err(|e| Error::Malformed(e.to_string()))?;
        Ok((x, report))
    };

    let start = Instant::now();
    let solved: Vec<(Array2<T>, SolverReport<T>)> = if setup.parallel {
        crops.par_iter().enumerate().map(solve).collect::<Result<_>>()?
    } else {
        crops.iter().enumerate().map(solve).collect::<Result<_>>()?
    };
    let elapsed = start.elapsed();
    let (patches, reports): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    Ok(Reconstruction {
        image: grid.aggregate(&patches)?,
        reports,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::{make_uniform_pattern, sample_binary_frames};
    use crate::image::ExposureImage;

    fn observe(truth: &Array2<f64>, op: &SensingOperator<f64>, frames: usize, seed: u64) -> Observations {
        let rates = ExposureImage::new(op.forward(truth.view())).unwrap();
        let pattern = make_uniform_pattern(2, 2, 1, 4, seed).unwrap();
        sample_binary_frames(&rates, &pattern, frames, seed).unwrap().observations()
    }

    #[test]
    fn single_patch_matches_direct_solve() {
        let op = SensingOperator::new(2, 1.0).unwrap();
        let dict = Dictionary::dct(4, 5).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let truth = Array2::from_shape_fn((4, 4), |(i, j)| 2.0 + (i + j) as f64);
        let obs = observe(&truth, &op, 4, 3);
        let cfg = SolverConfig {
            mu: 0.5,
            max_iters: 100,
            ..SolverConfig::default()
        };
        let setup = PatchSetup {
            dict: &dict,
            op: &op,
            rho,
            stride: 4,
            parallel: false,
        };
        let rec = reconstruct_image(&obs, &Method::Regularized(cfg), &setup).unwrap();
        let problem = PatchProblem::new(&obs, &dict, &op, rho).unwrap();
        let (z, _) = solve_fista(&problem, &cfg, Array1::zeros(25).view()).unwrap();
        let direct = rho.apply(&dict.synthesize(z.view())).into_shape_with_order((4, 4)).unwrap();
        assert_eq!(rec.image, direct);
    }

    #[test]
    fn parallel_equals_serial() {
        let op = SensingOperator::new(2, 1.0).unwrap();
        let dict = Dictionary::dct(4, 5).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let truth = Array2::from_shape_fn((10, 10), |(i, j)| 1.0 + ((i * 3 + j) % 7) as f64);
        let obs = observe(&truth, &op, 3, 5);
        let cfg = SolverConfig {
            mu: 0.5,
            max_iters: 50,
            ..SolverConfig::default()
        };
        let mut setup = PatchSetup {
            dict: &dict,
            op: &op,
            rho,
            stride: 2,
            parallel: false,
        };
        let serial = reconstruct_image(&obs, &Method::Regularized(cfg), &setup).unwrap();
        setup.parallel = true;
        let parallel = reconstruct_image(&obs, &Method::Regularized(cfg), &setup).unwrap();
        assert_eq!(serial.image, parallel.image);
        assert_eq!(serial.reports.len(), 16);
    }

    #[test]
    fn constant_scene_independent_of_stride() {
        let op = SensingOperator::new(2, 1.0).unwrap();
        let dict = Dictionary::dct(4, 4).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        // exact counts so every patch sees identical statistics
        let ones = Array2::from_elem((16, 16), 3u32);
        let obs = Observations::new(8, Array2::from_elem((16, 16), 1), ones).unwrap();
        let cfg = SolverConfig {
            mu: 0.1,
            tolerance: 1e-12,
            max_iters: 5000,
            ..SolverConfig::default()
        };
        let mut setup = PatchSetup {
            dict: &dict,
            op: &op,
            rho,
            stride: 4,
            parallel: true,
        };
        let tiled = reconstruct_image(&obs, &Method::Regularized(cfg), &setup).unwrap();
        setup.stride = 1;
        let dense = reconstruct_image(&obs, &Method::Regularized(cfg), &setup).unwrap();
        let mean: f64 = tiled.image.mean().unwrap();
        for (&a, &b) in tiled.image.iter().zip(dense.image.iter()) {
            let (a, b): (f64, f64) = (a, b);
            assert!((a - b).abs() < 1e-6 && (a - mean).abs() < 1e-6, "{a} {b} {mean}");
        }
    }

    #[test]
    fn patch_errors_carry_index() {
        let op = SensingOperator::new(2, 1.0).unwrap();
        let dict = Dictionary::dct(4, 4).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let obs = Observations::new(2, Array2::from_elem((8, 16), 1), Array2::zeros((8, 16))).unwrap();
        let bad = SolverConfig {
            beta: 2.0,
            ..SolverConfig::default()
        };
        let setup = PatchSetup {
            dict: &dict,
            op: &op,
            rho,
            stride: 4,
            parallel: false,
        };
        match reconstruct_image(&obs, &Method::Regularized(bad), &setup) {
            Err(Error::Patch { patch: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
