//! The optical operator: nearest-neighbour upsampling followed by a truncated
//! Gaussian blur with replicate boundaries.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::image::{validate_finite, ExposureImage};
use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    #[default]
    Replicate,
}

/// Linear map from a low-resolution exposure to high-resolution sensor rates.
///
/// A low-resolution value `v` becomes an `s x s` block of `v` (no intensity
/// rescaling), and the upsampled grid is convolved with a normalized Gaussian
/// truncated at `ceil(truncation * sigma)` pixels. The operator therefore maps
/// constant images to the same constant.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingOperator<T> {
    factor: usize,
    sigma: f64,
    truncation: u32,
    boundary: BoundaryMode,
    kernel: Vec<T>,
}

impl<T: Real> SensingOperator<T> {
    pub const DEFAULT_TRUNCATION: u32 = 4;

    /// `sigma == 0` selects a delta kernel (pure replication).
    pub fn new(factor: usize, sigma: f64) -> Result<Self> {
        Self::with_truncation(factor, sigma, Self::DEFAULT_TRUNCATION)
    }

    pub fn with_truncation(factor: usize, sigma: f64, truncation: u32) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("upsampling factor must be >= 1"));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid(format!("gaussian sigma must be >= 0, got {sigma}")));
        }
        if truncation == 0 && sigma > 0.0 {
            return Err(Error::invalid("kernel truncation must be >= 1 sigma"));
        }
        Ok(SensingOperator {
            factor,
            sigma,
            truncation,
            boundary: BoundaryMode::Replicate,
            kernel: gaussian_kernel(sigma, truncation),
        })
    }

    /// The identity map (factor 1, delta kernel).
    pub fn identity() -> Self {
        Self::new(1, 0.0).expect("identity operator is valid")
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    /// Normalized 1-D kernel taps, length `2 * radius + 1`.
    pub fn kernel(&self) -> &[T] {
        &self.kernel
    }

    pub fn radius(&self) -> usize {
        self.kernel.len() / 2
    }

    pub fn output_dims(&self, (h, w): (usize, usize)) -> (usize, usize) {
        (h * self.factor, w * self.factor)
    }

    /// Applies the operator without validation.
    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let s = self.factor;
        let (h, w) = x.dim();
        let up = Array2::from_shape_fn((h * s, w * s), |(i, j)| x[[i / s, j / s]]);
        if self.kernel.len() == 1 {
            return up;
        }
        let rows = self.blur_rows(up.view());
        self.blur_cols(rows.view())
    }

    /// Applies the transpose of [`forward`](Self::forward). `y` must have
    /// dimensions divisible by the factor.
    pub fn adjoint(&self, y: ArrayView2<'_, T>) -> Array2<T> {
        let s = self.factor;
        let (hh, ww) = y.dim();
        debug_assert!(hh % s == 0 && ww % s == 0);
        let blurred = if self.kernel.len() == 1 {
            y.to_owned()
        } else {
            let cols = self.blur_cols_adjoint(y);
            self.blur_rows_adjoint(cols.view())
        };
        let mut out = Array2::zeros((hh / s, ww / s));
        for ((i, j), &v) in blurred.indexed_iter() {
            out[[i / s, j / s]] += v;
        }
        out
    }

    fn blur_rows(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let (h, w) = x.dim();
        let r = self.radius() as isize;
        let last = w as isize - 1;
        let mut out = Array2::zeros((h, w));
        for i in 0..h {
            let row = x.row(i);
            for j in 0..w {
                let mut acc = T::zero();
                for (k, &wk) in self.kernel.iter().enumerate() {
                    let jj = (j as isize + k as isize - r).clamp(0, last) as usize;
                    acc += wk * row[jj];
                }
                out[[i, j]] = acc;
            }
        }
        out
    }

    fn blur_cols(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let (h, w) = x.dim();
        let r = self.radius() as isize;
        let last = h as isize - 1;
        let mut out = Array2::zeros((h, w));
        for i in 0..h {
            for (k, &wk) in self.kernel.iter().enumerate() {
                let ii = (i as isize + k as isize - r).clamp(0, last) as usize;
                let src = x.row(ii);
                let mut dst = out.row_mut(i);
                dst.zip_mut_with(&src, |d, &s| *d += wk * s);
            }
        }
        out
    }

    fn blur_rows_adjoint(&self, y: ArrayView2<'_, T>) -> Array2<T> {
        let (h, w) = y.dim();
        let r = self.radius() as isize;
        let last = w as isize - 1;
        let mut out = Array2::zeros((h, w));
        for i in 0..h {
            for j in 0..w {
                let v = y[[i, j]];
                for (k, &wk) in self.kernel.iter().enumerate() {
                    let jj = (j as isize + k as isize - r).clamp(0, last) as usize;
                    out[[i, jj]] += wk * v;
                }
            }
        }
        out
    }

    fn blur_cols_adjoint(&self, y: ArrayView2<'_, T>) -> Array2<T> {
        let (h, w) = y.dim();
        let r = self.radius() as isize;
        let last = h as isize - 1;
        let mut out = Array2::zeros((h, w));
        for i in 0..h {
            let src = y.row(i);
            for (k, &wk) in self.kernel.iter().enumerate() {
                let ii = (i as isize + k as isize - r).clamp(0, last) as usize;
                let mut dst = out.row_mut(ii);
                dst.zip_mut_with(&src, |d, &s| *d += wk * s);
            }
        }
        out
    }
}

fn gaussian_kernel<T: Real>(sigma: f64, truncation: u32) -> Vec<T> {
    if sigma == 0.0 {
        return vec![T::one()];
    }
    let radius = (truncation as f64 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| lit(v / total)).collect()
}

/// `λ = Hx` on a validated image.
pub fn apply_sensing_operator<T: Real>(
    x: &ExposureImage<T>,
    op: &SensingOperator<T>,
) -> Result<ExposureImage<T>> {
    ExposureImage::new(op.forward(x.view()))
}

/// `Hᵀy`; `y` may hold signed values (gradients), so only finiteness is checked.
pub fn apply_sensing_adjoint<T: Real>(
    y: ArrayView2<'_, T>,
    op: &SensingOperator<T>,
) -> Result<Array2<T>> {
    let (h, w) = y.dim();
    let s = op.factor();
    if h % s != 0 || w % s != 0 || h == 0 || w == 0 {
        return Err(Error::DimensionMismatch {
            expected: ((h / s).max(1) * s, (w / s).max(1) * s),
            found: (h, w),
        });
    }
    validate_finite(y.iter().copied())?;
    Ok(op.adjoint(y))
}
