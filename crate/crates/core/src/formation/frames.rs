//! Binary frame sampling and stacking.

use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::pattern::ThresholdPattern;
use crate::error::{Error, Result};
use crate::image::ExposureImage;
use crate::likelihood::Observations;
use crate::scalar::Real;

/// `K` binary frames of a `height x width` sensor with its per-pixel thresholds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryFrameStack {
    bits: Array3<u8>,
    thresholds: Array2<u32>,
}

impl BinaryFrameStack {
    /// `bits` has shape `(K, height, width)` and holds only 0/1.
    pub fn new(bits: Array3<u8>, thresholds: Array2<u32>) -> Result<Self> {
        let (k, h, w) = bits.dim();
        if k == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("frame stack must have K >= 1 and a non-empty sensor"));
        }
        if thresholds.dim() != (h, w) {
            return Err(Error::DimensionMismatch {
                expected: (h, w),
                found: thresholds.dim(),
            });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("bits must be 0 or 1"));
        }
        if thresholds.iter().any(|&q| q == 0) {
            return Err(Error::invalid("thresholds must be >= 1"));
        }
        Ok(BinaryFrameStack { bits, thresholds })
    }

    pub fn frames(&self) -> usize {
        self.bits.dim().0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.thresholds.dim()
    }

    pub fn bits(&self) -> &Array3<u8> {
        &self.bits
    }

    pub fn thresholds(&self) -> &Array2<u32> {
        &self.thresholds
    }

    /// Per-pixel counts of ones and zeros.
    pub fn observations(&self) -> Observations {
        let ones = self.bits.map_axis(Axis(0), |lane| lane.iter().map(|&b| b as u32).sum::<u32>());
        Observations::new(self.frames() as u32, self.thresholds.clone(), ones)
            .expect("stack invariants imply valid observations")
    }
}

/// Draws `K` independent frames: bit `(k, j)` is one iff a Poisson(`λ_j`) draw
/// reaches the pixel threshold.
///
/// Each pixel owns the ChaCha stream `(seed, pixel index)` and consumes it frame
/// by frame, so the output does not depend on thread scheduling.
pub fn sample_binary_frames<T: Real>(
    rates: &ExposureImage<T>,
    pattern: &ThresholdPattern,
    frames: usize,
    seed: u64,
) -> Result<BinaryFrameStack> {
    if frames == 0 {
        return Err(Error::invalid("number of frames must be >= 1"));
    }
    let (h, w) = rates.dims();
    let thresholds = pattern.expand(h, w);
    let values: Vec<f64> = rates
        .view()
        .iter()
        .map(|v| v.to_f64().expect("finite rate"))
        .collect();
    let per_pixel: Vec<Vec<u8>> = values
        .par_iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let q = thresholds[[idx / w, idx % w]] as f64;
            if lambda <= 0.0 {
                return vec![0u8; frames];
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let dist = Poisson::new(lambda).expect("positive finite rate");
            (0..frames)
                .map(|_| u8::from(dist.sample(&mut rng) >= q))
                .collect()
        })
        .collect();
    let mut bits = Array3::zeros((frames, h, w));
    for (idx, pixel) in per_pixel.into_iter().enumerate() {
        for (k, b) in pixel.into_iter().enumerate() {
            bits[[k, idx / w, idx % w]] = b;
        }
    }
    BinaryFrameStack::new(bits, thresholds)
}

/// Concatenates stacks along the frame axis.
pub fn stack_exposures(stacks: &[BinaryFrameStack]) -> Result<BinaryFrameStack> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::invalid("cannot stack an empty list"))?;
    for s in &stacks[1..] {
        if s.dims() != first.dims() {
            return Err(Error::DimensionMismatch {
                expected: first.dims(),
                found: s.dims(),
            });
        }
        if s.thresholds != first.thresholds {
            return Err(Error::invalid("threshold maps differ between stacks"));
        }
    }
    let views: Vec<_> = stacks.iter().map(|s| s.bits.view()).collect();
    let bits = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::invalid(format!("concatenate: {e}")))?;
    BinaryFrameStack::new(bits, first.thresholds.clone())
}
