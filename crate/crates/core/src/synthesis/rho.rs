use ndarray::{Array, ArrayBase, Data, Dimension};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Hybrid exponential-linear positivity map:
/// `ρ(x) = c·eˣ` for `x <= 0` and `c·(1 + x)` for `x > 0`.
///
/// `ρ` is positive, increasing and C¹. `ρ''` jumps at zero; the left value `c`
/// is used there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensityTransform<T> {
    c: T,
}

impl<T: Real> IntensityTransform<T> {
    pub fn new(c: T) -> Result<Self> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(Error::invalid(format!("intensity scale must be positive, got {c}")));
        }
        Ok(IntensityTransform { c })
    }

    pub fn scale(&self) -> T {
        self.c
    }

    #[inline]
    pub fn value(&self, x: T) -> T {
        if x <= T::zero() {
            self.c * x.exp()
        } else {
            self.c * (T::one() + x)
        }
    }

    #[inline]
    pub fn first(&self, x: T) -> T {
        if x <= T::zero() {
            self.c * x.exp()
        } else {
            self.c
        }
    }

    #[inline]
    pub fn second(&self, x: T) -> T {
        if x <= T::zero() {
            self.c * x.exp()
        } else {
            T::zero()
        }
    }

    /// Inverse on the range `(0, ∞)`.
    pub fn inverse(&self, y: T) -> T {
        if y <= self.c {
            (y / self.c).ln()
        } else {
            y / self.c - T::one()
        }
    }

    pub fn apply<S, D>(&self, x: &ArrayBase<S, D>) -> Array<T, D>
    where
        S: Data<Elem = T>,
        D: Dimension,
    {
        x.mapv(|v| self.value(v))
    }

    pub fn apply_first<S, D>(&self, x: &ArrayBase<S, D>) -> Array<T, D>
    where
        S: Data<Elem = T>,
        D: Dimension,
    {
        x.mapv(|v| self.first(v))
    }

    pub fn apply_second<S, D>(&self, x: &ArrayBase<S, D>) -> Array<T, D>
    where
        S: Data<Elem = T>,
        D: Dimension,
    {
        x.mapv(|v| self.second(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branch_values() {
        let r = IntensityTransform::new(10.0f64).unwrap();
        assert_eq!(r.value(0.0), 10.0);
        assert_eq!(r.value(1.0), 20.0);
        assert!((r.value(-1.0) - 3.678_794_4).abs() < 1e-7);
        assert_eq!(r.first(0.0), 10.0);
        assert_eq!(r.first(1e-300), 10.0);
        assert_eq!(r.second(0.0), 10.0);
        assert_eq!(r.second(1e-12), 0.0);
        assert!(IntensityTransform::new(0.0f64).is_err());
    }

    #[test]
    fn first_derivative_matches_differences() {
        let r = IntensityTransform::new(3.0f64).unwrap();
        for x in [-5.0, -1.0, -0.2, 0.3, 2.0, 40.0] {
            let h = 1e-6 * f64::max(1.0, f64::abs(x));
            let fd = (r.value(x + h) - r.value(x - h)) / (2.0 * h);
            assert!((fd - r.first(x)).abs() <= 1e-8 * r.first(x), "x={x}");
            let fd2 = (r.first(x + h) - r.first(x - h)) / (2.0 * h);
            assert!((fd2 - r.second(x)).abs() <= 1e-6 * r.first(x), "x={x}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let r = IntensityTransform::new(10.0f64).unwrap();
        for x in [-8.0, -0.5, 0.0, 0.5, 3.0] {
            assert!((r.inverse(r.value(x)) - x).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn positive_and_increasing(a in -50.0f64..50.0, b in -50.0f64..50.0, c in 0.1f64..1e5) {
            let r = IntensityTransform::new(c).unwrap();
            prop_assert!(r.value(a) > 0.0);
            if a < b {
                prop_assert!(r.value(a) < r.value(b));
            }
        }
    }
}
