use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::io::container::{read_tensor, write_tensor, Tensor};
use crate::scalar::{lit, Real};

/// Atoms whose norm is farther than this from one are renormalized on construction.
const NORM_SLACK: f64 = 1e-12;

/// Column-atom matrix mapping sparse codes to flattened (row-major) square patches.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary<T> {
    patch_side: usize,
    atoms: Array2<T>,
}

impl<T: Real> Dictionary<T> {
    /// Builds a dictionary from an `n x m` matrix, scaling each atom to unit norm.
    /// Returns the indices of atoms that needed rescaling.
    pub fn from_atoms(atoms: Array2<T>) -> Result<(Self, Vec<usize>)> {
        let (n, m) = atoms.dim();
        if n == 0 || m == 0 {
            return Err(Error::invalid("dictionary must be non-empty"));
        }
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::NotSquare(n));
        }
        let mut atoms = atoms;
        let mut rescaled = Vec::new();
        for (k, mut col) in atoms.columns_mut().into_iter().enumerate() {
            let norm = col.iter().map(|&v| v * v).sum::<T>().sqrt();
            if !norm.is_finite() || norm == T::zero() {
                return Err(Error::invalid(format!("atom {k} has zero or non-finite norm")));
            }
            if (norm - T::one()).abs() > lit(NORM_SLACK) {
                col.mapv_inplace(|v| v / norm);
                rescaled.push(k);
            }
        }
        Ok((
            Dictionary {
                patch_side: side,
                atoms,
            },
            rescaled,
        ))
    }

    /// Overcomplete separable cosine dictionary with `atoms_per_axis²` atoms.
    /// With `atoms_per_axis == patch_side` this is the orthonormal 2-D DCT-II basis.
    pub fn dct(patch_side: usize, atoms_per_axis: usize) -> Result<Self> {
        if patch_side == 0 || atoms_per_axis < patch_side {
            return Err(Error::invalid(format!(
                "need atoms_per_axis >= patch_side >= 1, got {atoms_per_axis} and {patch_side}"
            )));
        }
        let one_d = Array2::from_shape_fn((patch_side, atoms_per_axis), |(i, k)| {
            let arg = std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * atoms_per_axis) as f64;
            arg.cos()
        });
        let norms: Vec<f64> = one_d
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let n = patch_side * patch_side;
        let m = atoms_per_axis * atoms_per_axis;
        let atoms = Array2::from_shape_fn((n, m), |(p, a)| {
            let (i, j) = (p / patch_side, p % patch_side);
            let (ky, kx) = (a / atoms_per_axis, a % atoms_per_axis);
            lit::<T>(one_d[[i, ky]] / norms[ky] * one_d[[j, kx]] / norms[kx])
        });
        Ok(Self::from_atoms(atoms)?.0)
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    /// Flattened patch length `n`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &Array2<T> {
        &self.atoms
    }

    /// `Dz`
    pub fn synthesize(&self, z: ArrayView1<'_, T>) -> Array1<T> {
        self.atoms.dot(&z)
    }
}

impl Dictionary<f64> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensor(path, &Tensor::from_array2(&self.atoms))
    }

    /// Loads an `n x m` float tensor; atoms off unit norm are rescaled with a warning.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let tensor = read_tensor(path)?;
        let atoms = tensor.into_array2()?;
        let (dict, rescaled) = Self::from_atoms(atoms)?;
        if !rescaled.is_empty() {
            log::warn!(
                "{}: rescaled {} atom(s) to unit norm (first: {})",
                path.display(),
                rescaled.len(),
                rescaled[0]
            );
        }
        Ok(dict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_basis() {
        let d = Dictionary::<f64>::dct(8, 8).unwrap();
        assert_eq!((d.dim(), d.atom_count()), (64, 64));
        let gram = d.atoms().t().dot(d.atoms());
        for ((i, j), &v) in gram.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-10, "({i},{j}) = {v}");
        }
    }

    #[test]
    fn overcomplete_unit_columns() {
        let d = Dictionary::<f64>::dct(8, 16).unwrap();
        assert_eq!((d.dim(), d.atom_count()), (64, 256));
        for col in d.atoms().columns() {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert!(d.atoms().column(0).iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            Dictionary::from_atoms(Array2::<f64>::ones((6, 3))),
            Err(Error::NotSquare(6))
        ));
    }

    #[test]
    fn rescales_long_atoms() {
        let mut atoms = Array2::<f64>::zeros((4, 2));
        atoms[[0, 0]] = 2.0;
        atoms[[1, 1]] = 1.0;
        let (d, rescaled) = Dictionary::from_atoms(atoms).unwrap();
        assert_eq!(rescaled, vec![0]);
        assert_eq!(d.atoms()[[0, 0]], 1.0);
    }

    #[test]
    fn single_precision_dct() {
        let d = Dictionary::<f32>::dct(4, 6).unwrap();
        assert_eq!(d.atom_count(), 36);
    }
}
