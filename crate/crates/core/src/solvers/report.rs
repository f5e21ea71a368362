use std::fmt::Write as _;
use std::time::Duration;

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    /// The objective became non-finite; the returned iterate is the last finite one.
    Diverged { iteration: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<T> {
    /// 1-based outer iteration.
    pub iteration: usize,
    pub objective: T,
    /// Step size at the start of the iteration, before backtracking.
    pub step_start: T,
    /// Accepted step size.
    pub step: T,
    pub backtracks: usize,
    /// Cumulative solver time up to the end of this iteration.
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverReport<T> {
    pub initial_objective: T,
    pub iterations: Vec<IterationRecord<T>>,
    pub status: SolverStatus,
}

impl<T: Real> SolverReport<T> {
    pub(crate) fn new(initial_objective: T) -> Self {
        SolverReport {
            initial_objective,
            iterations: Vec::new(),
            status: SolverStatus::MaxIterations,
        }
    }

    pub fn final_objective(&self) -> T {
        self.iterations
            .last()
            .map_or(self.initial_objective, |r| r.objective)
    }

    pub fn best_objective(&self) -> T {
        self.iterations
            .iter()
            .map(|r| r.objective)
            .fold(self.initial_objective, T::min)
    }

    pub fn elapsed(&self) -> Duration {
        self.iterations.last().map_or(Duration::ZERO, |r| r.elapsed)
    }

    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }
}

pub const REPORT_CSV_HEADER: &str = "iteration,objective,step_start,step,backtracks,wall_time_s";

/// Merges per-patch reports into one table: objectives are summed (a patch
/// that stopped early contributes its final value), steps are averaged over
/// the patches still running, and wall time is the cumulative solver time
/// summed over patches.
pub fn merged_report_csv<T: Real>(reports: &[SolverReport<T>]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    let initial: f64 = reports.iter().map(|r| r.initial_objective.to_f64().unwrap()).sum();
    let _ = writeln!(out, "0,{initial:.12e},,,0,0");
    let rows = reports.iter().map(|r| r.iterations.len()).max().unwrap_or(0);
    for i in 0..rows {
        let mut objective = 0.0;
        let mut step_start = 0.0;
        let mut step = 0.0;
        let mut running = 0usize;
        let mut backtracks = 0usize;
        let mut elapsed = 0.0;
        for r in reports {
            match r.iterations.get(i) {
                Some(rec) => {
                    objective += rec.objective.to_f64().unwrap();
                    step_start += rec.step_start.to_f64().unwrap();
                    step += rec.step.to_f64().unwrap();
                    backtracks += rec.backtracks;
                    elapsed += rec.elapsed.as_secs_f64();
                    running += 1;
                }
                None => {
                    objective += r.final_objective().to_f64().unwrap();
                    elapsed += r.elapsed().as_secs_f64();
                }
            }
        }
        let n = running.max(1) as f64;
        let _ = writeln!(
            out,
            "{},{objective:.12e},{:.6e},{:.6e},{backtracks},{elapsed:.6}",
            i + 1,
            step_start / n,
            step / n
        );
    }
    out
}
