use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, Zip};

use super::params::MlNetParams;
use crate::error::{Error, Result};
use crate::likelihood::Observations;
use crate::scalar::{lit, Real};
use crate::solvers::{shrink_derivative, shrink_each, shrink_threshold_derivative, IterationRecord, SolverReport, SolverStatus};

/// Iterates of a forward pass: `z[t]` for `t = 0..=T` and `b[t]` for the
/// pre-shrinkage value of layer `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTape<T> {
    pub z: Vec<Array1<T>>,
    pub b: Vec<Array1<T>>,
}

impl<T: Real> LayerTape<T> {
    pub fn layers(&self) -> usize {
        self.b.len()
    }

    pub fn output_code(&self) -> &Array1<T> {
        self.z.last().expect("tape holds z_0")
    }
}

/// Quantities of one layer evaluated at `z`.
struct Layer<T> {
    a1: Array1<T>,
    a2: Array1<T>,
    /// `Hᵀ∇ℓ(λ)`
    u: Array1<T>,
    v: Array1<T>,
    /// `∇²ℓ(λ)` diagonal, present only when requested.
    hess: Option<Array2<T>>,
}

fn layer<T: Real>(params: &MlNetParams<T>, obs: &Observations, z: &Array1<T>, with_hessian: bool) -> Result<Layer<T>> {
    let p = params.patch_side();
    let rho = params.rho();
    let a1 = params.a().dot(z);
    let a2 = params.q().dot(z);
    let x = rho.apply(&a1).into_shape_with_order((p, p)).expect("n = p²");
    let rates = params.op().forward(x.view());
    let (grad, hess) = if with_hessian {
        let (_, g, h) = obs.evaluate(rates.view())?;
        (g, Some(h))
    } else {
        (obs.gradient(rates.view())?, None)
    };
    let u = params.op().adjoint(grad.view()).into_shape_with_order(p * p).expect("contiguous");
    let v = &rho.apply_first(&a2) * &u;
    Ok(Layer { a1, a2, u, v, hess })
}

fn finite<T: Real>(v: &Array1<T>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs the network from `z0`; returns the output patch `ρ(D z_T)` (flattened)
/// and the tape.
pub fn forward_from<T: Real>(
    params: &MlNetParams<T>,
    obs: &Observations,
    z0: ArrayView1<'_, T>,
) -> Result<(Array1<T>, LayerTape<T>)> {
    params.check_observations(obs)?;
    if z0.len() != params.atom_count() {
        return Err(Error::invalid("initial code length does not match the network"));
    }
    let mut tape = LayerTape {
        z: vec![z0.to_owned()],
        b: Vec::with_capacity(params.layers()),
    };
    for t in 1..=params.layers() {
        let z = tape.z.last().expect("nonempty");
        let l = layer(params, obs, z, false).map_err(|e| match e {
            e if e.is_numeric() => Error::LayerNonFinite { layer: t },
            e => e,
        })?;
        let b = z - &params.w().dot(&l.v);
        let next = shrink_each(b.view(), params.theta().view())?;
        if !finite(&b) || !finite(&next) {
            return Err(Error::LayerNonFinite { layer: t });
        }
        tape.b.push(b);
        tape.z.push(next);
    }
    let out = params.rho().apply(&params.d().dot(tape.output_code()));
    Ok((out, tape))
}

/// Runs the network from `z_0 = 0`.
pub fn forward<T: Real>(params: &MlNetParams<T>, obs: &Observations) -> Result<(Array1<T>, LayerTape<T>)> {
    forward_from(params, obs, Array1::zeros(params.atom_count()).view())
}

/// Forward pass with a per-layer report: `objective` is the data term
/// `ℓ(Hρ(D z_t))` of each layer's output, evaluated after timing.
pub fn forward_with_report<T: Real>(params: &MlNetParams<T>, obs: &Observations) -> Result<(Array1<T>, SolverReport<T>)> {
    params.check_observations(obs)?;
    let start = Instant::now();
    let mut z = Array1::zeros(params.atom_count());
    let mut codes = Vec::with_capacity(params.layers());
    let mut times = Vec::with_capacity(params.layers());
    for t in 1..=params.layers() {
        let l = layer(params, obs, &z, false).map_err(|e| match e {
            e if e.is_numeric() => Error::LayerNonFinite { layer: t },
            e => e,
        })?;
        let b = &z - &params.w().dot(&l.v);
        z = shrink_each(b.view(), params.theta().view())?;
        if !finite(&z) {
            return Err(Error::LayerNonFinite { layer: t });
        }
        times.push(start.elapsed());
        codes.push(z.clone());
    }
    let out = params.rho().apply(&params.d().dot(&z));

    let data = |code: &Array1<T>| -> Result<T> {
        let p = params.patch_side();
        let x = params.rho().apply(&params.d().dot(code)).into_shape_with_order((p, p)).expect("n = p²");
        obs.nll(params.op().forward(x.view()).view())
    };
    let mut report = SolverReport::new(data(&Array1::zeros(params.atom_count()))?);
    for (t, (code, elapsed)) in codes.iter().zip(times).enumerate() {
        report.iterations.push(IterationRecord {
            iteration: t + 1,
            objective: data(code)?,
            step_start: T::zero(),
            step: T::zero(),
            backtracks: 0,
            elapsed,
        });
    }
    report.status = SolverStatus::Converged;
    Ok((out, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `½‖x̂ − x*‖²`
    Mse,
    /// `½‖log(1 + x̂) − log(1 + x*)‖²`
    LogMse,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "log_mse" | "log-mse" => Ok(LossKind::LogMse),
            other => Err(Error::Config(format!("unknown loss '{other}'"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::LogMse => "log_mse",
        })
    }
}

fn check_loss_inputs<T: Real>(estimate: ArrayView1<'_, T>, truth: ArrayView1<'_, T>, kind: LossKind) -> Result<()> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: (truth.len(), 1),
            found: (estimate.len(), 1),
        });
    }
    if kind == LossKind::LogMse && truth.iter().chain(estimate.iter()).any(|&v| v < T::zero()) {
        return Err(Error::invalid("log loss needs nonnegative intensities"));
    }
    Ok(())
}

pub fn loss<T: Real>(estimate: ArrayView1<'_, T>, truth: ArrayView1<'_, T>, kind: LossKind) -> Result<T> {
    check_loss_inputs(estimate, truth, kind)?;
    let half = lit::<T>(0.5);
    let sum = Zip::from(estimate).and(truth).fold(T::zero(), |acc, &e, &t| {
        let r = match kind {
            LossKind::Mse => e - t,
            LossKind::LogMse => e.ln_1p() - t.ln_1p(),
        };
        acc + r * r
    });
    Ok(half * sum)
}

/// `∂f/∂x̂`
pub fn loss_gradient<T: Real>(estimate: ArrayView1<'_, T>, truth: ArrayView1<'_, T>, kind: LossKind) -> Result<Array1<T>> {
    check_loss_inputs(estimate, truth, kind)?;
    Ok(Zip::from(estimate).and(truth).map_collect(|&e, &t| match kind {
        LossKind::Mse => e - t,
        LossKind::LogMse => (e.ln_1p() - t.ln_1p()) / (T::one() + e),
    }))
}

/// Mean of per-sample losses.
pub fn batch_loss<T: Real>(pairs: &[(Array1<T>, Array1<T>)], kind: LossKind) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = T::zero();
    for (e, t) in pairs {
        total += loss(e.view(), t.view(), kind)?;
    }
    Ok(total / T::from_usize(pairs.len()).unwrap())
}

/// Gradients of a scalar loss with respect to every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub a: Array2<T>,
    pub q: Array2<T>,
    pub w: Array2<T>,
    pub theta: Array1<T>,
    pub d: Array2<T>,
    /// Gradient with respect to the initial code `z_0`.
    pub z0: Array1<T>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros(params: &MlNetParams<T>) -> Self {
        let (n, m) = (params.dim(), params.atom_count());
        Gradients {
            a: Array2::zeros((n, m)),
            q: Array2::zeros((n, m)),
            w: Array2::zeros((m, n)),
            theta: Array1::zeros(m),
            d: Array2::zeros((n, m)),
            z0: Array1::zeros(m),
        }
    }

    pub fn tensor(&self, kind: super::ParamKind) -> &[T] {
        use super::ParamKind::*;
        let s = match kind {
            A => self.a.as_slice(),
            Q => self.q.as_slice(),
            W => self.w.as_slice(),
            Theta => self.theta.as_slice(),
            D => self.d.as_slice(),
        };
        s.expect("contiguous")
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        self.a += &other.a;
        self.q += &other.q;
        self.w += &other.w;
        self.theta += &other.theta;
        self.d += &other.d;
        self.z0 += &other.z0;
    }

    pub(crate) fn scale(&mut self, s: T) {
        self.a *= s;
        self.q *= s;
        self.w *= s;
        self.theta *= s;
        self.d *= s;
        self.z0 *= s;
    }
}

fn outer_add<T: Real>(target: &mut Array2<T>, left: &Array1<T>, right: &Array1<T>, sign: T) {
    Zip::indexed(target).for_each(|(i, j), t| *t += sign * left[i] * right[j]);
}

/// Backpropagates `∂F/∂z_T` through the layers recorded in `tape`. The
/// `d` field of the result is left at zero; see [`grad_output_dictionary`].
pub fn backward<T: Real>(
    params: &MlNetParams<T>,
    tape: &LayerTape<T>,
    obs: &Observations,
    grad_output: ArrayView1<'_, T>,
) -> Result<Gradients<T>> {
    params.check_observations(obs)?;
    let m = params.atom_count();
    if tape.layers() != params.layers() || tape.z.len() != tape.layers() + 1 || grad_output.len() != m {
        return Err(Error::invalid("tape does not match the network"));
    }
    let p = params.patch_side();
    let rho = params.rho();
    let op = params.op();
    let mut grads = Gradients::zeros(params);
    let mut dz = grad_output.to_owned();

    for t in (0..tape.layers()).rev() {
        let z_prev = &tape.z[t];
        let b = &tape.b[t];
        let l = layer(params, obs, z_prev, true)?;
        let hess = l.hess.expect("requested");

        let db = Zip::from(&dz).and(b).and(params.theta()).map_collect(|&g, &bi, &th| g * shrink_derivative(bi, th));
        Zip::from(&mut grads.theta)
            .and(&dz)
            .and(b)
            .and(params.theta())
            .for_each(|acc, &g, &bi, &th| *acc += g * shrink_threshold_derivative(bi, th));
        outer_add(&mut grads.w, &db, &l.v, -T::one());
        let dv = -params.w().t().dot(&db);

        let da2 = &dv * &l.u * &rho.apply_second(&l.a2);
        let du = (&dv * &rho.apply_first(&l.a2)).into_shape_with_order((p, p)).expect("n = p²");
        let dlambda = &op.forward(du.view()) * &hess;
        let dx = op.adjoint(dlambda.view()).into_shape_with_order(p * p).expect("contiguous");
        let da1 = &dx * &rho.apply_first(&l.a1);

        outer_add(&mut grads.a, &da1, z_prev, T::one());
        outer_add(&mut grads.q, &da2, z_prev, T::one());
        dz = db + params.a().t().dot(&da1) + params.q().t().dot(&da2);
    }
    grads.z0 = dz;
    Ok(grads)
}

/// `δD = (∂f/∂x̂ ⊙ ρ'(D z_T)) z_Tᵀ` and `∂f/∂z_T = Dᵀ(∂f/∂x̂ ⊙ ρ'(D z_T))`.
pub fn grad_output_dictionary<T: Real>(
    params: &MlNetParams<T>,
    tape: &LayerTape<T>,
    truth: ArrayView1<'_, T>,
    kind: LossKind,
) -> Result<(Array2<T>, Array1<T>)> {
    let z_t = tape.output_code();
    if z_t.len() != params.atom_count() {
        return Err(Error::invalid("tape does not match the network"));
    }
    let pre = params.d().dot(z_t);
    let estimate = params.rho().apply(&pre);
    let dx = loss_gradient(estimate.view(), truth, kind)?;
    let dpre = &dx * &params.rho().apply_first(&pre);
    let mut dd = Array2::zeros(params.d().dim());
    outer_add(&mut dd, &dpre, z_t, T::one());
    Ok((dd, params.d().t().dot(&dpre)))
}

/// Loss of one sample and its gradient with respect to all parameters.
pub fn sample_gradients<T: Real>(
    params: &MlNetParams<T>,
    obs: &Observations,
    truth: ArrayView1<'_, T>,
    kind: LossKind,
) -> Result<(T, Gradients<T>)> {
    let (estimate, tape) = forward(params, obs)?;
    let value = loss(estimate.view(), truth, kind)?;
    let (dd, dz) = grad_output_dictionary(params, &tape, truth, kind)?;
    let mut grads = backward(params, &tape, obs, dz.view())?;
    grads.d = dd;
    Ok((value, grads))
}
