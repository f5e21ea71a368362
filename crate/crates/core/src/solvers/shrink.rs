use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Soft threshold `sign(v)·max(|v| - θ, 0)`.
#[inline]
pub fn shrink_scalar<T: Real>(v: T, theta: T) -> T {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        T::zero()
    }
}

/// Coordinate-wise soft threshold with a common threshold.
pub fn shrink<T: Real>(v: ArrayView1<'_, T>, theta: T) -> Result<Array1<T>> {
    if !(theta >= T::zero()) {
        return Err(Error::invalid(format!("shrinkage threshold must be >= 0, got {theta}")));
    }
    Ok(v.mapv(|x| shrink_scalar(x, theta)))
}

/// Coordinate-wise soft threshold with per-coordinate thresholds.
pub fn shrink_each<T: Real>(v: ArrayView1<'_, T>, theta: ArrayView1<'_, T>) -> Result<Array1<T>> {
    if v.len() != theta.len() {
        return Err(Error::invalid(format!(
            "threshold length {} does not match vector length {}",
            theta.len(),
            v.len()
        )));
    }
    if let Some(i) = theta.iter().position(|&t| !(t >= T::zero())) {
        return Err(Error::invalid(format!("threshold {i} is negative")));
    }
    Ok(Zip::from(&v).and(&theta).map_collect(|&x, &t| shrink_scalar(x, t)))
}

/// `∂σ_θ(b)/∂b`: one outside the dead zone, zero inside and on its edge.
#[inline]
pub fn shrink_derivative<T: Real>(b: T, theta: T) -> T {
    if b.abs() > theta {
        T::one()
    } else {
        T::zero()
    }
}

/// `∂σ_θ(b)/∂θ`: `-sign(b)` outside the dead zone, zero inside and on its edge.
#[inline]
pub fn shrink_threshold_derivative<T: Real>(b: T, theta: T) -> T {
    if b > theta {
        -T::one()
    } else if b < -theta {
        T::one()
    } else {
        T::zero()
    }
}
