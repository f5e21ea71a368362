//! Unregularized maximum likelihood over the low-resolution exposure by
//! projected gradient with backtracking.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};

use super::report::{IterationRecord, SolverReport, SolverStatus};
use crate::error::{Error, Result};
use crate::formation::SensingOperator;
use crate::likelihood::Observations;
use crate::scalar::{lit, Real};

const MAX_BACKTRACKS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlConfig<T> {
    pub eta0: T,
    pub beta: T,
    pub max_iters: usize,
    pub tolerance: T,
    /// Lower bound of the feasible set.
    pub floor: T,
}

impl<T: Real> Default for MlConfig<T> {
    fn default() -> Self {
        MlConfig {
            eta0: T::one(),
            beta: lit(0.5),
            max_iters: 2000,
            tolerance: lit(1e-8),
            floor: lit(1e-8),
        }
    }
}

impl<T: Real> MlConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > T::zero()) || !self.eta0.is_finite() {
            return Err(Error::invalid("eta0 must be positive"));
        }
        if !(self.beta > T::zero() && self.beta < T::one()) {
            return Err(Error::invalid("beta must lie in (0, 1)"));
        }
        if !(self.floor > T::zero()) {
            return Err(Error::invalid("floor must be positive"));
        }
        if !(self.tolerance >= T::zero()) {
            return Err(Error::invalid("tolerance must be >= 0"));
        }
        Ok(())
    }
}

/// Minimizes `ℓ(Hx | B)` over `x ≥ floor`, starting from `x0 > 0`.
///
/// The step grows by `1/β` after every accepted iteration so that a small
/// step found early does not throttle the rest of the run.
pub fn solve_ml_unregularized<T: Real>(
    obs: &Observations,
    op: &SensingOperator<T>,
    x0: ArrayView2<'_, T>,
    config: &MlConfig<T>,
) -> Result<(Array2<T>, SolverReport<T>)> {
    config.validate()?;
    let expected = op.output_dims(x0.dim());
    if obs.dims() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: obs.dims(),
        });
    }
    if let Some((index, _)) = x0.indexed_iter().find(|(_, &v)| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::invalid(format!("initial exposure must be positive, bad value at {index:?}")));
    }
    let start = Instant::now();
    let two = lit::<T>(2.0);
    let floor = config.floor;

    let mut x = x0.to_owned();
    let mut fx = obs.nll(op.forward(x.view()).view())?;
    let mut report = SolverReport::new(fx);
    if !fx.is_finite() {
        report.status = SolverStatus::Diverged { iteration: 0 };
        return Ok((x, report));
    }
    let mut eta = config.eta0;

    for t in 1..=config.max_iters {
        let step_start = eta;
        let grad = op.adjoint(obs.gradient(op.forward(x.view()).view())?.view());
        let mut backtracks = 0;
        let (candidate, f_candidate) = loop {
            let cand = Zip::from(&x)
                .and(&grad)
                .map_collect(|&xi, &gi| (xi - eta * gi).max(floor));
            let fc = obs.nll(op.forward(cand.view()).view())?;
            let mut inner = T::zero();
            let mut dist = T::zero();
            Zip::from(&cand).and(&x).and(&grad).for_each(|&c, &xi, &g| {
                let d = c - xi;
                inner += d * g;
                dist += d * d;
            });
            if fc <= fx + inner + dist / (two * eta) && fc <= fx {
                break (cand, fc);
            }
            backtracks += 1;
            if backtracks > MAX_BACKTRACKS {
                report.status = SolverStatus::Diverged { iteration: t };
                return Ok((x, report));
            }
            eta *= config.beta;
        };
        let change = (fx - f_candidate).abs();
        x = candidate;
        fx = f_candidate;
        report.iterations.push(IterationRecord {
            iteration: t,
            objective: fx,
            step_start,
            step: eta,
            backtracks,
            elapsed: start.elapsed(),
        });
        if change <= config.tolerance * fx.abs() {
            report.status = SolverStatus::Converged;
            break;
        }
        eta /= config.beta;
    }
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn exact_counts(ratios: &[f64], frames: u32) -> Observations {
        let ones = Array2::from_shape_fn((1, ratios.len()), |(_, j)| (ratios[j] * frames as f64).round() as u32);
        Observations::new(frames, Array2::from_elem((1, ratios.len()), 1), ones).unwrap()
    }

    #[test]
    fn recovers_closed_form_mle() {
        let ratios = [0.1, 0.5, 0.9];
        let obs = exact_counts(&ratios, 10_000);
        let op = SensingOperator::<f64>::identity();
        let x0 = Array2::from_elem((1, 3), 10.0);
        let cfg = MlConfig {
            tolerance: 0.0,
            max_iters: 5000,
            ..MlConfig::default()
        };
        let (x, _) = solve_ml_unregularized(&obs, &op, x0.view(), &cfg).unwrap();
        for (j, r) in ratios.iter().enumerate() {
            let expected = -(1.0 - r).ln();
            assert!((x[[0, j]] - expected).abs() < 1e-4, "r={r}: {} vs {expected}", x[[0, j]]);
        }
    }

    #[test]
    fn zero_bits_drive_to_floor() {
        let obs = exact_counts(&[0.0, 0.0], 20);
        let op = SensingOperator::<f64>::identity();
        let x0 = Array2::from_elem((1, 2), 3.0);
        let (x, _) = solve_ml_unregularized(&obs, &op, x0.view(), &MlConfig::default()).unwrap();
        assert!(x.iter().all(|&v| v == 1e-8));
    }

    #[test]
    fn objective_monotone() {
        use crate::formation::{make_uniform_pattern, sample_binary_frames};
        use crate::image::ExposureImage;
        let op = SensingOperator::new(2, 1.0).unwrap();
        let truth = Array2::from_shape_fn((6, 6), |(i, j)| 1.0 + (i * j) as f64 * 0.3);
        let rates = ExposureImage::new(op.forward(truth.view())).unwrap();
        let pattern = make_uniform_pattern(2, 2, 1, 4, 9).unwrap();
        let obs = sample_binary_frames(&rates, &pattern, 6, 9).unwrap().observations();
        let x0 = Array2::from_elem((6, 6), 10.0);
        let cfg = MlConfig {
            max_iters: 300,
            ..MlConfig::default()
        };
        let (_, report) = solve_ml_unregularized(&obs, &op, x0.view(), &cfg).unwrap();
        let mut prev = report.initial_objective;
        for r in &report.iterations {
            assert!(r.objective <= prev);
            prev = r.objective;
        }
    }

    #[test]
    fn rejects_nonpositive_start() {
        let obs = exact_counts(&[0.5], 10);
        let op = SensingOperator::<f64>::identity();
        let x0 = Array2::zeros((1, 1));
        assert!(solve_ml_unregularized(&obs, &op, x0.view(), &MlConfig::default()).is_err());
    }
}
