//! Per-patch regularized objective `ℓ(Hρ(Dz) | B) + μ‖z‖₁` and its smooth-part gradient.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::formation::SensingOperator;
use crate::likelihood::Observations;
use crate::scalar::Real;
use crate::synthesis::{Dictionary, IntensityTransform};

/// Observations of one patch's sensor region together with the synthesis model.
#[derive(Clone, Copy, Debug)]
pub struct PatchProblem<'a, T> {
    obs: &'a Observations,
    dict: &'a Dictionary<T>,
    op: &'a SensingOperator<T>,
    rho: IntensityTransform<T>,
}

/// Intermediate quantities of one evaluation at `z`.
pub(crate) struct Evaluation<T> {
    pub pre: Array1<T>,
    pub value: T,
    /// `Hᵀ∇ℓ(λ)` flattened to patch resolution
    pub back: Array1<T>,
    pub hess: Array2<T>,
}

impl<'a, T: Real> PatchProblem<'a, T> {
    pub fn new(
        obs: &'a Observations,
        dict: &'a Dictionary<T>,
        op: &'a SensingOperator<T>,
        rho: IntensityTransform<T>,
    ) -> Result<Self> {
        let p = dict.patch_side();
        let expected = op.output_dims((p, p));
        if obs.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: obs.dims(),
            });
        }
        Ok(PatchProblem { obs, dict, op, rho })
    }

    pub fn dict(&self) -> &Dictionary<T> {
        self.dict
    }

    pub fn op(&self) -> &SensingOperator<T> {
        self.op
    }

    pub fn rho(&self) -> IntensityTransform<T> {
        self.rho
    }

    pub fn observations(&self) -> &Observations {
        self.obs
    }

    pub fn atom_count(&self) -> usize {
        self.dict.atom_count()
    }

    fn check(&self, z: &ArrayView1<'_, T>) -> Result<()> {
        if z.len() != self.dict.atom_count() {
            return Err(Error::invalid(format!(
                "code length {} does not match {} atoms",
                z.len(),
                self.dict.atom_count()
            )));
        }
        Ok(())
    }

    /// Sensor rates `Hρ(a)` for a pre-activation `a = Dz`.
    pub(crate) fn rates_from_pre(&self, pre: &Array1<T>) -> Array2<T> {
        let p = self.dict.patch_side();
        let patch = self.rho.apply(pre).into_shape_with_order((p, p)).expect("n = p²");
        self.op.forward(patch.view())
    }

    /// `Hρ(Dz)`.
    pub fn rates(&self, z: ArrayView1<'_, T>) -> Array2<T> {
        self.rates_from_pre(&self.dict.synthesize(z))
    }

    /// Smooth term `ℓ(Hρ(Dz))`.
    pub fn data_value(&self, z: ArrayView1<'_, T>) -> Result<T> {
        self.check(&z)?;
        self.obs.nll(self.rates(z).view())
    }

    pub fn objective(&self, z: ArrayView1<'_, T>, mu: T) -> Result<T> {
        Ok(self.data_value(z)? + mu * l1_norm(z))
    }

    /// `Dᵀ diag(ρ'(Dz)) Hᵀ ∇ℓ(Hρ(Dz))` together with the smooth value.
    pub fn data_value_and_grad(&self, z: ArrayView1<'_, T>) -> Result<(T, Array1<T>)> {
        self.check(&z)?;
        let ev = self.evaluate(z, false)?;
        let v = &ev.back * &self.rho.apply_first(&ev.pre);
        Ok((ev.value, self.dict.atoms().t().dot(&v)))
    }

    pub fn data_grad(&self, z: ArrayView1<'_, T>) -> Result<Array1<T>> {
        Ok(self.data_value_and_grad(z)?.1)
    }

    pub(crate) fn evaluate(&self, z: ArrayView1<'_, T>, with_hessian: bool) -> Result<Evaluation<T>> {
        let pre = self.dict.synthesize(z);
        let rates = self.rates_from_pre(&pre);
        let (value, grad, hess) = if with_hessian {
            self.obs.evaluate(rates.view())?
        } else {
            let (v, g, _) = self.obs.evaluate(rates.view())?;
            (v, g, Array2::zeros((0, 0)))
        };
        let back = self.op.adjoint(grad.view());
        let n = back.len();
        Ok(Evaluation {
            pre,
            value,
            back: back.into_shape_with_order(n).expect("contiguous"),
            hess,
        })
    }

    /// Hessian-vector product of the smooth term at `z`.
    pub fn hessian_vector(&self, z: ArrayView1<'_, T>, v: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check(&z)?;
        let ev = self.evaluate(z, true)?;
        let p = self.dict.patch_side();
        let dv = self.dict.synthesize(v);
        let d1 = self.rho.apply_first(&ev.pre);
        let d2 = self.rho.apply_second(&ev.pre);
        let inner = (&d1 * &dv).into_shape_with_order((p, p)).expect("n = p²");
        let lifted = &self.op.forward(inner.view()) * &ev.hess;
        let pulled = self.op.adjoint(lifted.view());
        let pulled = pulled.into_shape_with_order(p * p).expect("contiguous");
        let mid = &d2 * &ev.back * &dv + &d1 * &pulled;
        Ok(self.dict.atoms().t().dot(&mid))
    }
}

pub fn l1_norm<T: Real>(z: ArrayView1<'_, T>) -> T {
    z.iter().map(|v| v.abs()).sum()
}

/// `ℓ(Hρ(Dz) | B) + μ‖z‖₁`.
pub fn objective<T: Real>(
    z: ArrayView1<'_, T>,
    obs: &Observations,
    dict: &Dictionary<T>,
    op: &SensingOperator<T>,
    rho: IntensityTransform<T>,
    mu: T,
) -> Result<T> {
    PatchProblem::new(obs, dict, op, rho)?.objective(z, mu)
}

/// Gradient of the smooth term with respect to the code.
pub fn data_grad<T: Real>(
    z: ArrayView1<'_, T>,
    obs: &Observations,
    dict: &Dictionary<T>,
    op: &SensingOperator<T>,
    rho: IntensityTransform<T>,
) -> Result<Array1<T>> {
    PatchProblem::new(obs, dict, op, rho)?.data_grad(z)
}

/// Power-iteration estimate of the largest Hessian eigenvalue magnitude at `z`,
/// a local Lipschitz constant of the smooth gradient.
pub fn lipschitz_estimate<T: Real>(problem: &PatchProblem<'_, T>, z: ArrayView1<'_, T>, iterations: usize) -> Result<T> {
    let m = problem.atom_count();
    // deterministic, non-degenerate start
    let mut v = Array1::from_shape_fn(m, |i| T::one() + T::from_usize(i % 7).unwrap() / T::from_usize(7).unwrap());
    let norm = v.mapv(|x| x * x).sum().sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut estimate = T::zero();
    for _ in 0..iterations.max(1) {
        let hv = problem.hessian_vector(z, v.view())?;
        let n = hv.mapv(|x| x * x).sum().sqrt();
        if n == T::zero() || !n.is_finite() {
            return Ok(n);
        }
        estimate = n;
        v = hv / n;
    }
    Ok(estimate)
}
