//! Binary-Poisson negative log-likelihood.
//!
//! A pixel with threshold `q` and rate `λ` reads zero with probability
//! `p = P(e < q)`, the lower tail of a Poisson variable, which equals the
//! regularized upper incomplete gamma `Q(q, λ)`. Both `ln p` and `ln(1 - p)`
//! are accumulated separately (series for `P(q, λ)` below the mode, Lentz
//! continued fraction for `Q(q, λ)` above it) so neither tail loses precision
//! when the other is close to one.
//!
//! Frames enter only through the per-pixel counts of zeros and ones.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::formation::BinaryFrameStack;
use crate::image::ExposureImage;
use crate::scalar::{count, lit, Real};

const MAX_TAIL_ITERATIONS: usize = 1_000_000;

/// Sufficient statistics of a frame stack: thresholds and per-pixel one counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observations {
    frames: u32,
    thresholds: Array2<u32>,
    ones: Array2<u32>,
}

impl Observations {
    pub fn new(frames: u32, thresholds: Array2<u32>, ones: Array2<u32>) -> Result<Self> {
        if thresholds.dim() != ones.dim() {
            return Err(Error::DimensionMismatch {
                expected: thresholds.dim(),
                found: ones.dim(),
            });
        }
        if thresholds.iter().any(|&q| q == 0) {
            return Err(Error::invalid("thresholds must be >= 1"));
        }
        if ones.iter().any(|&n| n > frames) {
            return Err(Error::invalid("one count exceeds number of frames"));
        }
        Ok(Observations {
            frames,
            thresholds,
            ones,
        })
    }

    pub fn frames(&self) -> u32 {
        self.frames
    }

    pub fn dims(&self) -> (usize, usize) {
        self.thresholds.dim()
    }

    pub fn thresholds(&self) -> &Array2<u32> {
        &self.thresholds
    }

    pub fn ones(&self) -> &Array2<u32> {
        &self.ones
    }

    pub fn pixel(&self, row: usize, col: usize) -> PixelLikelihoodContext {
        let ones = self.ones[[row, col]];
        PixelLikelihoodContext {
            q: self.thresholds[[row, col]],
            zeros: self.frames - ones,
            ones,
        }
    }

    /// Sub-window of the sensor.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        let (h, w) = self.dims();
        if row + height > h || col + width > w {
            return Err(Error::invalid(format!(
                "crop {height}x{width} at ({row},{col}) exceeds {h}x{w}"
            )));
        }
        let window = ndarray::s![row..row + height, col..col + width];
        Ok(Observations {
            frames: self.frames,
            thresholds: self.thresholds.slice(window).to_owned(),
            ones: self.ones.slice(window).to_owned(),
        })
    }

    /// Pools two sets of frames over the same sensor.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.thresholds != other.thresholds {
            return Err(Error::invalid("threshold maps differ"));
        }
        Observations::new(
            self.frames + other.frames,
            self.thresholds.clone(),
            &self.ones + &other.ones,
        )
    }

    fn check_dims<T>(&self, rates: &ArrayView2<'_, T>) -> Result<()> {
        if rates.dim() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: rates.dim(),
            });
        }
        Ok(())
    }

    /// `Σ_j [-n₀ ln p_j - n₁ ln(1 - p_j)]`; `+∞` if a one was observed at zero rate.
    pub fn nll<T: Real>(&self, rates: ArrayView2<'_, T>) -> Result<T> {
        self.check_dims(&rates)?;
        let mut total = T::zero();
        for (&lambda, (&q, &ones)) in rates
            .iter()
            .zip(self.thresholds.iter().zip(self.ones.iter()))
        {
            let ctx = PixelLikelihoodContext {
                q,
                zeros: self.frames - ones,
                ones,
            };
            total += ctx.value(lambda);
        }
        Ok(total)
    }

    /// Per-pixel `∂ℓ/∂λ_j`.
    pub fn gradient<T: Real>(&self, rates: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_dims(&rates)?;
        let mut out = Array2::zeros(self.dims());
        for ((i, j), &lambda) in rates.indexed_iter() {
            out[[i, j]] = self
                .pixel(i, j)
                .derivatives(lambda)
                .ok_or(Error::ImpossibleObservation { row: i, col: j })?
                .grad;
        }
        Ok(out)
    }

    /// Per-pixel `∂²ℓ/∂λ_j²` (the likelihood is separable, so this is the whole Hessian).
    pub fn hessian_diag<T: Real>(&self, rates: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_dims(&rates)?;
        let mut out = Array2::zeros(self.dims());
        for ((i, j), &lambda) in rates.indexed_iter() {
            out[[i, j]] = self
                .pixel(i, j)
                .derivatives(lambda)
                .ok_or(Error::ImpossibleObservation { row: i, col: j })?
                .hess;
        }
        Ok(out)
    }

    /// Value, gradient and Hessian diagonal in one pass.
    pub fn evaluate<T: Real>(&self, rates: ArrayView2<'_, T>) -> Result<(T, Array2<T>, Array2<T>)> {
        self.check_dims(&rates)?;
        let mut grad = Array2::zeros(self.dims());
        let mut hess = Array2::zeros(self.dims());
        let mut value = T::zero();
        let mut failure = None;
        Zip::indexed(&mut grad)
            .and(&mut hess)
            .and(&rates)
            .for_each(|(i, j), g, h, &lambda| {
                if failure.is_some() {
                    return;
                }
                match self.pixel(i, j).derivatives(lambda) {
                    Some(t) => {
                        value += t.value;
                        *g = t.grad;
                        *h = t.hess;
                    }
                    None => failure = Some(Error::ImpossibleObservation { row: i, col: j }),
                }
            });
        match failure {
            Some(e) => Err(e),
            None => Ok((value, grad, hess)),
        }
    }
}

/// Threshold and outcome counts of one pixel across all frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelLikelihoodContext {
    pub q: u32,
    pub zeros: u32,
    pub ones: u32,
}

/// Value and first two derivatives of one pixel's negative log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelTerms<T> {
    pub value: T,
    pub grad: T,
    pub hess: T,
}

impl PixelLikelihoodContext {
    pub fn value<T: Real>(&self, lambda: T) -> T {
        if lambda <= T::zero() {
            return if self.ones > 0 { T::infinity() } else { T::zero() };
        }
        let tails = poisson_tails(self.q, lambda);
        let mut v = T::zero();
        if self.zeros > 0 {
            v -= count::<T>(self.zeros) * tails.ln_below;
        }
        if self.ones > 0 {
            v -= count::<T>(self.ones) * tails.ln_at_or_above;
        }
        v
    }

    /// `None` only for a one-bit observed at zero rate.
    pub fn derivatives<T: Real>(&self, lambda: T) -> Option<PixelTerms<T>> {
        let n0 = count::<T>(self.zeros);
        let n1 = count::<T>(self.ones);
        if lambda <= T::zero() {
            if self.ones > 0 {
                return None;
            }
            // p(0) = 1; g(0) = [q = 1]; g'(0) = -1 for q = 1, +1 for q = 2, else 0
            let grad = if self.q == 1 { n0 } else { T::zero() };
            let hess = if self.q == 2 { n0 } else { T::zero() };
            return Some(PixelTerms {
                value: T::zero(),
                grad,
                hess,
            });
        }
        // g = -dp/dλ = e^{-λ} λ^{q-1} / (q-1)!
        let (tails, ln_r0, ln_r1) = tails_and_hazards(self.q, lambda);
        let mut value = T::zero();
        let mut grad = T::zero();
        let mut hess = T::zero();
        // g' = g ((q-1)/λ - 1); curvature is summed per outcome because
        // slope * grad of the combined gradient cancels
        let slope = count::<T>(self.q - 1) / lambda - T::one();
        if self.zeros > 0 {
            let r0 = ln_r0.exp();
            value -= n0 * tails.ln_below;
            grad += n0 * r0;
            hess += n0 * r0 * (r0 + slope);
        }
        if self.ones > 0 {
            let r1 = ln_r1.exp();
            value -= n1 * tails.ln_at_or_above;
            grad -= n1 * r1;
            hess += n1 * r1 * (r1 - slope);
        }
        Some(PixelTerms { value, grad, hess })
    }
}

/// Logarithms of the two Poisson tails around a threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonTails<T> {
    /// `ln P(e < q)`
    pub ln_below: T,
    /// `ln P(e >= q)`
    pub ln_at_or_above: T,
}

/// Both tails of Poisson(`lambda`) split at `q >= 1`, in log space.
pub fn poisson_tails<T: Real>(q: u32, lambda: T) -> PoissonTails<T> {
    tails_and_hazards(q, lambda).0
}

/// The tails together with `ln(g / P(e < q))` and `ln(g / P(e >= q))`, where
/// `g = e^{-λ} λ^{q-1} / (q-1)!`. In each branch one ratio is formed before the
/// common prefactor `e^{-λ} λ^q / Γ(q)` is exponentiated, so it keeps full
/// relative precision even when `λ` is large.
fn tails_and_hazards<T: Real>(q: u32, lambda: T) -> (PoissonTails<T>, T, T) {
    debug_assert!(q >= 1);
    if lambda <= T::zero() {
        let tails = PoissonTails {
            ln_below: T::zero(),
            ln_at_or_above: T::neg_infinity(),
        };
        return (tails, T::nan(), T::nan());
    }
    if q == 1 {
        let tails = PoissonTails {
            ln_below: -lambda,
            ln_at_or_above: ln_one_minus_exp(-lambda),
        };
        // g = e^{-λ}: ratios are 1 and 1 / (e^λ - 1)
        return (tails, T::zero(), -lambda.exp_m1().ln());
    }
    let a = count::<T>(q);
    let ln_lambda = lambda.ln();
    // ln(e^{-λ} λ^a / Γ(a)); g is this prefactor divided by λ
    let ln_prefactor = -lambda + a * ln_lambda - ln_factorial::<T>(q - 1);
    let ln_g = ln_prefactor - ln_lambda;
    if lambda < a + T::one() {
        let ln_series = lower_gamma_series(a, lambda).ln();
        let ln_above = ln_prefactor + ln_series;
        let ln_below = ln_one_minus_exp(ln_above);
        let tails = PoissonTails {
            ln_below,
            ln_at_or_above: ln_above,
        };
        (tails, ln_g - ln_below, -ln_lambda - ln_series)
    } else {
        let ln_fraction = upper_gamma_fraction(a, lambda).ln();
        let ln_below = ln_prefactor + ln_fraction;
        let ln_above = ln_one_minus_exp(ln_below);
        let tails = PoissonTails {
            ln_below,
            ln_at_or_above: ln_above,
        };
        (tails, -ln_lambda - ln_fraction, ln_g - ln_above)
    }
}

/// `P(e < q)` for `e ~ Poisson(lambda)`.
pub fn poisson_cdf_below<T: Real>(q: u32, lambda: T) -> Result<T> {
    if q == 0 {
        return Err(Error::invalid("threshold must be >= 1"));
    }
    if !lambda.is_finite() || lambda < T::zero() {
        return Err(Error::invalid(format!("rate must be finite and >= 0, got {lambda}")));
    }
    Ok(poisson_tails(q, lambda).ln_below.exp())
}

/// Negative log-likelihood of `rates` (sensor resolution) given the frames.
pub fn nll<T: Real>(rates: &ExposureImage<T>, stack: &BinaryFrameStack) -> Result<T> {
    stack.observations().nll(rates.view())
}

pub fn nll_grad<T: Real>(rates: &ExposureImage<T>, stack: &BinaryFrameStack) -> Result<Array2<T>> {
    stack.observations().gradient(rates.view())
}

pub fn nll_hess_diag<T: Real>(rates: &ExposureImage<T>, stack: &BinaryFrameStack) -> Result<Array2<T>> {
    stack.observations().hessian_diag(rates.view())
}

/// `Σ_{n≥0} x^n / (a (a+1) ... (a+n))`, so that `P(a, x) = e^{-x} x^a / Γ(a) · sum`.
fn lower_gamma_series<T: Real>(a: T, x: T) -> T {
    let mut ap = a;
    let mut term = T::one() / a;
    let mut sum = term;
    for _ in 0..MAX_TAIL_ITERATIONS {
        ap += T::one();
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * T::epsilon() {
            break;
        }
    }
    sum
}

/// Modified Lentz evaluation of the continued fraction with
/// `Q(a, x) = e^{-x} x^a / Γ(a) · cf`.
fn upper_gamma_fraction<T: Real>(a: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let two = lit::<T>(2.0);
    let mut b = x + T::one() - a;
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    let mut i = T::zero();
    for _ in 0..MAX_TAIL_ITERATIONS {
        i += T::one();
        let an = -i * (i - a);
        b += two;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let delta = d * c;
        h *= delta;
        if (delta - T::one()).abs() < T::epsilon() {
            break;
        }
    }
    h
}

/// `ln(e^{-λ} λ^n / n!)`
pub fn ln_poisson_pmf<T: Real>(n: u32, lambda: T) -> T {
    if n == 0 {
        return -lambda;
    }
    -lambda + count::<T>(n) * lambda.ln() - ln_factorial::<T>(n)
}

/// `ln(n!)`: exact product below 24, Stirling series above.
pub fn ln_factorial<T: Real>(n: u32) -> T {
    if n < 24 {
        let mut prod = 1.0f64;
        for k in 2..=n {
            prod *= k as f64;
        }
        return lit::<T>(prod.ln());
    }
    let x = count::<T>(n);
    let inv = T::one() / x;
    let inv2 = inv * inv;
    let series = inv
        * (lit::<T>(1.0 / 12.0)
            - inv2
                * (lit::<T>(1.0 / 360.0) - inv2 * (lit::<T>(1.0 / 1260.0) - inv2 * lit::<T>(1.0 / 1680.0))));
    x * x.ln() - x + lit::<T>(0.5) * (lit::<T>(2.0) * T::PI() * x).ln() + series
}

/// `ln(1 - e^x)` for `x <= 0`, accurate at both ends.
pub fn ln_one_minus_exp<T: Real>(x: T) -> T {
    if x > -T::LN_2() {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}
