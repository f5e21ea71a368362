use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::{count, Real};

/// Placement of square patches over an image.
///
/// Patch origins step by `stride` along each axis; when the stride does not
/// tile the axis exactly, one extra patch is clamped to the far border so
/// every pixel is covered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    height: usize,
    width: usize,
    patch: usize,
    stride: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn axis_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=len - patch).step_by(stride).collect();
    if *out.last().unwrap() + patch < len {
        out.push(len - patch);
    }
    out
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch: usize, stride: usize) -> Result<Self> {
        if patch == 0 || stride == 0 || stride > patch {
            return Err(Error::invalid(format!(
                "stride must satisfy 1 <= stride <= patch, got stride {stride}, patch {patch}"
            )));
        }
        if height < patch || width < patch {
            return Err(Error::invalid(format!(
                "image {height}x{width} smaller than patch {patch}"
            )));
        }
        Ok(PatchGrid {
            height,
            width,
            patch,
            stride,
            rows: axis_origins(height, patch, stride),
            cols: axis_origins(width, patch, stride),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left corner of patch `index` (row-major over the grid).
    pub fn origin(&self, index: usize) -> (usize, usize) {
        (self.rows[index / self.cols.len()], self.cols[index % self.cols.len()])
    }

    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).map(move |i| self.origin(i))
    }

    /// Number of patches covering each pixel.
    pub fn coverage(&self) -> Array2<u32> {
        let mut cov = Array2::zeros((self.height, self.width));
        let p = self.patch;
        for (r, c) in self.origins() {
            cov.slice_mut(s![r..r + p, c..c + p]).mapv_inplace(|v| v + 1);
        }
        cov
    }

    pub fn extract<T: Real>(&self, image: ArrayView2<'_, T>) -> Result<Vec<Array2<T>>> {
        if image.dim() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: image.dim(),
            });
        }
        let p = self.patch;
        Ok(self
            .origins()
            .map(|(r, c)| image.slice(s![r..r + p, c..c + p]).to_owned())
            .collect())
    }

    /// Sums patches into place and divides by coverage.
    pub fn aggregate<T: Real>(&self, patches: &[Array2<T>]) -> Result<Array2<T>> {
        if patches.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} patches, got {}",
                self.len(),
                patches.len()
            )));
        }
        let p = self.patch;
        let mut sum = Array2::zeros(self.dims());
        for ((r, c), patch) in self.origins().zip(patches) {
            if patch.dim() != (p, p) {
                return Err(Error::DimensionMismatch {
                    expected: (p, p),
                    found: patch.dim(),
                });
            }
            let mut dst = sum.slice_mut(s![r..r + p, c..c + p]);
            dst += patch;
        }
        let cov = self.coverage();
        ndarray::Zip::from(&mut sum)
            .and(&cov)
            .for_each(|v, &n| *v /= count::<T>(n));
        Ok(sum)
    }
}

pub fn extract_patches<T: Real>(image: ArrayView2<'_, T>, grid: &PatchGrid) -> Result<Vec<Array2<T>>> {
    grid.extract(image)
}

pub fn aggregate_patches<T: Real>(patches: &[Array2<T>], grid: &PatchGrid) -> Result<Array2<T>> {
    grid.aggregate(patches)
}
