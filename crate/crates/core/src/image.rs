//! Validated nonnegative exposure grids.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Nonnegative, finite 2-D grid of exposure values (expected photoelectrons per pixel per frame).
#[derive(Clone, Debug, PartialEq)]
pub struct ExposureImage<T> {
    values: Array2<T>,
}

impl<T: Real> ExposureImage<T> {
    pub fn new(values: Array2<T>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("exposure image must be at least 1x1"));
        }
        validate_nonnegative(values.iter().copied())?;
        Ok(ExposureImage { values })
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        let arr = Array2::from_shape_vec((height, width), values)
            .map_err(|e| Error::invalid(format!("shape {height}x{width}: {e}")))?;
        Self::new(arr)
    }

    pub fn constant(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), value))
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn into_inner(self) -> Array2<T> {
        self.values
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }
}

pub(crate) fn validate_finite<T: Real>(values: impl Iterator<Item = T>) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
    }
    Ok(())
}

pub(crate) fn validate_nonnegative<T: Real>(values: impl Iterator<Item = T>) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if v < T::zero() {
            return Err(Error::Negative {
                index,
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(())
}
