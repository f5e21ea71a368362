//! Sparse synthesis prior: `λ = Hρ(Dz)` per patch.

mod dictionary;
mod patches;
mod rho;

pub use dictionary::Dictionary;
pub use patches::{aggregate_patches, extract_patches, PatchGrid};
pub use rho::IntensityTransform;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::formation::SensingOperator;
use crate::scalar::Real;

/// `ρ(Dz)` reshaped to a square patch.
pub fn synthesize_patch<T: Real>(
    z: ArrayView1<'_, T>,
    dict: &Dictionary<T>,
    rho: &IntensityTransform<T>,
) -> Result<Array2<T>> {
    if z.len() != dict.atom_count() {
        return Err(Error::invalid(format!(
            "code length {} does not match {} atoms",
            z.len(),
            dict.atom_count()
        )));
    }
    let p = dict.patch_side();
    let flat = rho.apply(&dict.synthesize(z));
    Ok(flat.into_shape_with_order((p, p)).expect("n = patch_side²"))
}

/// Sensor-domain rates `H·patch`.
pub fn lift_to_sensor<T: Real>(patch: ArrayView2<'_, T>, op: &SensingOperator<T>) -> Array2<T> {
    op.forward(patch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_code_gives_scale() {
        let d = Dictionary::<f64>::dct(4, 6).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let patch = synthesize_patch(Array1::zeros(36).view(), &d, &rho).unwrap();
        assert!(patch.iter().all(|&v| v == 10.0));
        assert!(synthesize_patch(Array1::zeros(5).view(), &d, &rho).is_err());
    }

    #[test]
    fn unit_code_selects_atom() {
        let d = Dictionary::<f64>::dct(4, 4).unwrap();
        let rho = IntensityTransform::new(2.0).unwrap();
        let mut z = Array1::zeros(16);
        z[5] = 1.0;
        let patch = synthesize_patch(z.view(), &d, &rho).unwrap();
        for (p, &a) in patch.iter().zip(d.atoms().column(5)) {
            assert_eq!(*p, rho.value(a));
        }
    }

    #[test]
    fn composition_matches_explicit_operator() {
        let d = Dictionary::<f64>::dct(4, 5).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let op = SensingOperator::new(2, 0.9).unwrap();
        // H as an explicit 64x16 matrix
        let mut h = Array2::zeros((64, 16));
        for c in 0..16 {
            let mut e = Array2::zeros((4, 4));
            e[[c / 4, c % 4]] = 1.0;
            for (r, v) in op.forward(e.view()).iter().enumerate() {
                h[[r, c]] = *v;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Array1::from_shape_fn(25, |_| rng.random_range(-1.0..1.0));
        let patch = synthesize_patch(z.view(), &d, &rho).unwrap();
        let lifted = lift_to_sensor(patch.view(), &op);
        let dz = d.atoms().dot(&z);
        let brute = h.dot(&dz.mapv(|v| rho.value(v)));
        for (a, b) in lifted.iter().zip(brute.iter()) {
            assert!((a - b).abs() < 1e-12);
            assert!(*a > 0.0);
        }
    }
}
