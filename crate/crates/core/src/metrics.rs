//! Image quality metrics.

use ndarray::{ArrayView2, Zip};

use crate::error::{Error, Result};

fn check(estimate: &ArrayView2<'_, f64>, truth: &ArrayView2<'_, f64>, peak: f64) -> Result<()> {
    if estimate.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            found: estimate.dim(),
        });
    }
    if estimate.is_empty() {
        return Err(Error::invalid("empty image"));
    }
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::invalid("peak must be positive"));
    }
    Ok(())
}

pub fn mse(estimate: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<f64> {
    check(&estimate, &truth, 1.0)?;
    let sum = Zip::from(&estimate).and(&truth).fold(0.0, |acc, &e, &t| acc + (e - t) * (e - t));
    Ok(sum / estimate.len() as f64)
}

/// `10·log₁₀(peak² / mse)`; `+∞` for identical images.
pub fn psnr(estimate: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>, peak: f64) -> Result<f64> {
    check(&estimate, &truth, peak)?;
    let err = mse(estimate, truth)?;
    Ok(10.0 * (peak * peak / err).log10())
}

/// PSNR of `log(1 + ·)` images with peak `log(1 + range_max)`.
pub fn log_psnr(estimate: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>, range_max: f64) -> Result<f64> {
    check(&estimate, &truth, range_max)?;
    if estimate.iter().chain(truth.iter()).any(|&v| v < 0.0) {
        return Err(Error::invalid("log PSNR needs nonnegative intensities"));
    }
    let le = estimate.mapv(f64::ln_1p);
    let lt = truth.mapv(f64::ln_1p);
    psnr(le.view(), lt.view(), range_max.ln_1p())
}

/// Formats a PSNR value, printing `inf` for exact reconstructions.
pub fn format_db(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn identical_is_infinite() {
        let a = Array2::from_elem((3, 3), 4.0);
        let db = psnr(a.view(), a.view(), 10.0).unwrap();
        assert!(db.is_infinite() && db > 0.0);
        assert_eq!(format_db(db), "inf");
    }

    #[test]
    fn mse_equal_to_peak_squared_is_zero_db() {
        let a = Array2::zeros((2, 2));
        let b = Array2::from_elem((2, 2), 10.0);
        assert!(psnr(a.view(), b.view(), 10.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn unit_offset_at_peak_ten_is_twenty_db() {
        let t = Array2::from_shape_fn((8, 8), |(i, j)| ((i + j) % 10) as f64);
        let e = &t + 1.0;
        assert!((psnr(e.view(), t.view(), 10.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn log_variant_uses_log_peak() {
        let t = Array2::from_elem((2, 2), 0.0);
        let e = Array2::from_elem((2, 2), std::f64::consts::E - 1.0);
        let expected = 10.0 * (11f64.ln().powi(2)).log10();
        assert!((log_psnr(e.view(), t.view(), 10.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let a = Array2::<f64>::zeros((2, 2));
        let b = Array2::<f64>::zeros((2, 3));
        assert!(psnr(a.view(), b.view(), 10.0).is_err());
        let e = Array2::<f64>::zeros((0, 0));
        assert!(psnr(e.view(), e.view(), 10.0).is_err());
        assert!(psnr(a.view(), a.view(), 0.0).is_err());
    }
}
