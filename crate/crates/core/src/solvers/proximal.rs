//! ISTA and FISTA with backtracking for `min_z ℓ(Hρ(Dz)) + μ‖z‖₁`.

use std::time::Instant;

use ndarray::{Array1, ArrayView1, Zip};

use super::problem::{l1_norm, PatchProblem};
use super::report::{IterationRecord, SolverReport, SolverStatus};
use super::shrink::shrink_scalar;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Backtracking gives up after this many step reductions in one iteration.
const MAX_BACKTRACKS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Ista,
    Fista,
    /// FISTA whose step size is restored to `eta0` every `period` iterations.
    FistaStepReset { period: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepRule {
    Backtracking,
    /// Always use `eta0`.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    pub mu: T,
    pub eta0: T,
    pub beta: T,
    pub max_iters: usize,
    /// Stop when `|F_t - F_{t-1}| <= tolerance · |F_t|`.
    pub tolerance: T,
    pub variant: Variant,
    pub step_rule: StepRule,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            mu: lit(4.0),
            eta0: T::one(),
            beta: lit(0.5),
            max_iters: 2000,
            tolerance: lit(1e-8),
            variant: Variant::Fista,
            step_rule: StepRule::Backtracking,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= T::zero()) || !self.mu.is_finite() {
            return Err(Error::invalid("mu must be finite and >= 0"));
        }
        if !(self.eta0 > T::zero()) || !self.eta0.is_finite() {
            return Err(Error::invalid("eta0 must be positive"));
        }
        if !(self.beta > T::zero() && self.beta < T::one()) {
            return Err(Error::invalid("beta must lie in (0, 1)"));
        }
        if !(self.tolerance >= T::zero()) {
            return Err(Error::invalid("tolerance must be >= 0"));
        }
        if let Variant::FistaStepReset { period: 0 } = self.variant {
            return Err(Error::invalid("step reset period must be >= 1"));
        }
        Ok(())
    }

    /// Fixed-step ISTA with `max_iters` iterations and no early stop.
    pub fn fixed_ista(mu: T, eta: T, iterations: usize) -> Self {
        SolverConfig {
            mu,
            eta0: eta,
            max_iters: iterations,
            tolerance: T::zero(),
            variant: Variant::Ista,
            step_rule: StepRule::Fixed,
            ..Self::default()
        }
    }
}

/// Next momentum term `(1 + √(1 + 4m²)) / 2`.
pub fn fista_momentum<T: Real>(m: T) -> T {
    (T::one() + (T::one() + lit::<T>(4.0) * m * m).sqrt()) / lit(2.0)
}

pub fn solve_ista<T: Real>(
    problem: &PatchProblem<'_, T>,
    config: &SolverConfig<T>,
    z0: ArrayView1<'_, T>,
) -> Result<(Array1<T>, SolverReport<T>)> {
    let config = SolverConfig {
        variant: Variant::Ista,
        ..*config
    };
    proximal_gradient(problem, &config, z0)
}

/// Runs the configured variant (ISTA if `config.variant` says so).
pub fn solve_fista<T: Real>(
    problem: &PatchProblem<'_, T>,
    config: &SolverConfig<T>,
    z0: ArrayView1<'_, T>,
) -> Result<(Array1<T>, SolverReport<T>)> {
    proximal_gradient(problem, config, z0)
}

fn proximal_gradient<T: Real>(
    problem: &PatchProblem<'_, T>,
    config: &SolverConfig<T>,
    z0: ArrayView1<'_, T>,
) -> Result<(Array1<T>, SolverReport<T>)> {
    config.validate()?;
    let mu = config.mu;
    let two = lit::<T>(2.0);
    let start = Instant::now();

    let mut x = z0.to_owned();
    let mut y = x.clone();
    let mut momentum = T::one();
    let mut eta = config.eta0;
    let mut previous = problem.objective(x.view(), mu)?;
    let mut report = SolverReport::new(previous);
    if !previous.is_finite() {
        report.status = SolverStatus::Diverged { iteration: 0 };
        return Ok((x, report));
    }

    for t in 1..=config.max_iters {
        if let Variant::FistaStepReset { period } = config.variant {
            if t % period == 0 {
                eta = config.eta0;
            }
        }
        let step_start = eta;
        let (fy, gy) = problem.data_value_and_grad(y.view())?;
        let mut backtracks = 0;
        let (candidate, f_candidate) = loop {
            let threshold = mu * eta;
            let cand = Zip::from(&y)
                .and(&gy)
                .map_collect(|&yi, &gi| shrink_scalar(yi - eta * gi, threshold));
            let fc = problem.data_value(cand.view())?;
            if config.step_rule == StepRule::Fixed {
                break (cand, fc);
            }
            let mut inner = T::zero();
            let mut dist = T::zero();
            Zip::from(&cand).and(&y).and(&gy).for_each(|&c, &yi, &g| {
                let d = c - yi;
                inner += d * g;
                dist += d * d;
            });
            if fc <= fy + inner + dist / (two * eta) {
                break (cand, fc);
            }
            backtracks += 1;
            if backtracks > MAX_BACKTRACKS {
                report.status = SolverStatus::Diverged { iteration: t };
                return Ok((x, report));
            }
            eta *= config.beta;
        };

        let objective = f_candidate + mu * l1_norm(candidate.view());
        if !objective.is_finite() {
            report.status = SolverStatus::Diverged { iteration: t };
            return Ok((x, report));
        }
        y = match config.variant {
            Variant::Ista => candidate.clone(),
            Variant::Fista | Variant::FistaStepReset { .. } => {
                let next = fista_momentum(momentum);
                let weight = (momentum - T::one()) / next;
                momentum = next;
                Zip::from(&candidate)
                    .and(&x)
                    .map_collect(|&c, &xo| c + weight * (c - xo))
            }
        };
        x = candidate;
        report.iterations.push(IterationRecord {
            iteration: t,
            objective,
            step_start,
            step: eta,
            backtracks,
            elapsed: start.elapsed(),
        });
        let change = (objective - previous).abs();
        previous = objective;
        if change <= config.tolerance * objective.abs() {
            report.status = SolverStatus::Converged;
            break;
        }
    }
    Ok((x, report))
}
