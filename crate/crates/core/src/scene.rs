//! Ground-truth exposure images: seeded procedural scenes and file loading.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{read_pgm, read_tensor};

/// Piecewise-smooth scene: a soft gradient background, a few flat ellipses and
/// rectangles with blurred edges, and a faint low-frequency texture,
/// normalized to `[0, range]`.
pub fn synthetic_scene(height: usize, width: usize, range: f64, seed: u64) -> Result<Array2<f64>> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("scene dims must be positive"));
    }
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::invalid("scene range must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let gx: f64 = rng.random_range(-1.0..1.0);
    let gy: f64 = rng.random_range(-1.0..1.0);
    let mut img = Array2::from_shape_fn((height, width), |(i, j)| 0.4 + 0.25 * (gx * j as f64 / wf + gy * i as f64 / hf));

    let shapes = rng.random_range(4..9);
    for _ in 0..shapes {
        let cy = rng.random_range(0.0..hf);
        let cx = rng.random_range(0.0..wf);
        let ry = rng.random_range(0.08..0.3) * hf;
        let rx = rng.random_range(0.08..0.3) * wf;
        let level: f64 = rng.random_range(-0.5..0.6);
        let ellipse = rng.random_bool(0.5);
        let edge = 1.5;
        for ((i, j), v) in img.indexed_iter_mut() {
            let dy = (i as f64 + 0.5 - cy) / ry;
            let dx = (j as f64 + 0.5 - cx) / rx;
            let d = if ellipse { (dx * dx + dy * dy).sqrt() } else { dx.abs().max(dy.abs()) };
            // signed distance in pixels, smoothed by a logistic edge
            let dist = (d - 1.0) * rx.min(ry);
            let w = 1.0 / (1.0 + (dist / edge).exp());
            *v = *v * (1.0 - w) + (*v + level) * w;
        }
    }

    let fy = rng.random_range(1.0..4.0) * std::f64::consts::TAU / hf;
    let fx = rng.random_range(1.0..4.0) * std::f64::consts::TAU / wf;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    img.indexed_iter_mut()
        .for_each(|((i, j), v)| *v += 0.06 * (fy * i as f64 + fx * j as f64 + phase).sin());

    normalize(&mut img, range);
    Ok(img)
}

/// Scene with a wide dynamic range: `range^(s)` of a normalized synthetic
/// scene `s ∈ [0, 1]`, shifted so the minimum is zero.
pub fn hdr_scene(height: usize, width: usize, range: f64, seed: u64) -> Result<Array2<f64>> {
    if !(range > 1.0) {
        return Err(Error::invalid("HDR range must exceed 1"));
    }
    let base = synthetic_scene(height, width, 1.0, seed)?;
    let mut img = base.mapv(|s| (1.0 + range).powf(s) - 1.0);
    normalize(&mut img, range);
    Ok(img)
}

fn normalize(img: &mut Array2<f64>, range: f64) {
    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        img.mapv_inplace(|v| (v - lo) / span * range);
    } else {
        img.fill(0.0);
    }
}

/// Loads a scene from a PGM (scaled so `maxval ↦ range`) or a float tensor
/// file (used as is).
pub fn load_scene(path: impl AsRef<Path>, range: f64) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let img = if is_pgm {
        read_pgm(path)?.normalized(range)
    } else {
        read_tensor(path)?.into_array2()?
    };
    if img.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!("{}: scene values must be finite and >= 0", path.display())));
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_and_determinism() {
        let a = synthetic_scene(32, 40, 10.0, 7).unwrap();
        let b = synthetic_scene(32, 40, 10.0, 7).unwrap();
        let c = synthetic_scene(32, 40, 10.0, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().copied().fold(0.0, f64::max);
        assert!(lo.abs() < 1e-12 && (hi - 10.0).abs() < 1e-12);
    }

    #[test]
    fn hdr_spans_range() {
        let a = hdr_scene(24, 24, 1e5, 1).unwrap();
        let hi = a.iter().copied().fold(0.0, f64::max);
        assert!((hi - 1e5).abs() < 1e-6);
        let median = {
            let mut v: Vec<f64> = a.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median < 1e4);
    }
}
