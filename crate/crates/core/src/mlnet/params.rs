use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::formation::SensingOperator;
use crate::io::{read_tensor, write_tensor, Manifest, Tensor};
use crate::likelihood::Observations;
use crate::scalar::{lit, Real};
use crate::solvers::{lipschitz_estimate, PatchProblem};
use crate::synthesis::{Dictionary, IntensityTransform};

pub const PARAMS_FORMAT_VERSION: u16 = 1;

/// One trainable tensor of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    W,
    A,
    Q,
    Theta,
    D,
}

impl ParamKind {
    pub const ALL: [ParamKind; 5] = [ParamKind::W, ParamKind::A, ParamKind::Q, ParamKind::Theta, ParamKind::D];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::W => "W",
            ParamKind::A => "A",
            ParamKind::Q => "Q",
            ParamKind::Theta => "theta",
            ParamKind::D => "D",
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown parameter tensor '{s}'")))
    }
}

pub fn parse_order(text: &str) -> Result<Vec<ParamKind>> {
    let order = text
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<ParamKind>>>()?;
    if order.is_empty() {
        return Err(Error::Config("empty parameter order".into()));
    }
    Ok(order)
}

pub fn format_order(order: &[ParamKind]) -> String {
    order.iter().map(|k| k.name()).collect::<Vec<_>>().join(",")
}

/// Tied parameters of the unrolled network: every layer computes
/// `z ← σ_θ(z − W·(ρ'(Qz) ⊙ Hᵀ∇ℓ(Hρ(Az))))` and the output is `ρ(D z_T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlNetParams<T> {
    layers: usize,
    patch_side: usize,
    a: Array2<T>,
    q: Array2<T>,
    w: Array2<T>,
    theta: Array1<T>,
    d: Array2<T>,
    op: SensingOperator<T>,
    rho: IntensityTransform<T>,
}

impl<T: Real> MlNetParams<T> {
    /// `A`, `Q`, `D` are `n × m` with `n = patch_side²`, `W` is `m × n`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        layers: usize,
        patch_side: usize,
        a: Array2<T>,
        q: Array2<T>,
        w: Array2<T>,
        theta: Array1<T>,
        d: Array2<T>,
        op: SensingOperator<T>,
        rho: IntensityTransform<T>,
    ) -> Result<Self> {
        let n = patch_side * patch_side;
        let m = theta.len();
        if n == 0 || m == 0 {
            return Err(Error::invalid("empty network dimensions"));
        }
        for (name, t, shape) in [("A", &a, (n, m)), ("Q", &q, (n, m)), ("W", &w, (m, n)), ("D", &d, (n, m))] {
            if t.dim() != shape {
                return Err(Error::invalid(format!("{name} is {:?}, expected {shape:?}", t.dim())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
        }
        if theta.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(Error::invalid("theta must be finite and nonnegative"));
        }
        let standard = |t: Array2<T>| if t.is_standard_layout() { t } else { t.as_standard_layout().into_owned() };
        Ok(MlNetParams {
            layers,
            patch_side,
            a: standard(a),
            q: standard(q),
            w: standard(w),
            d: standard(d),
            theta,
            op,
            rho,
        })
    }

    /// Parameters that make each layer one fixed-step ISTA iteration:
    /// `A = Q = D`, `W = ηDᵀ`, `θ = μη`.
    pub fn ista_init(
        dict: &Dictionary<T>,
        op: &SensingOperator<T>,
        rho: IntensityTransform<T>,
        eta: T,
        mu: T,
        layers: usize,
    ) -> Result<Self> {
        if !(eta > T::zero()) || !(mu >= T::zero()) {
            return Err(Error::invalid("ista_init needs eta > 0 and mu >= 0"));
        }
        let d = dict.atoms().clone();
        let w = d.t().mapv(|v| eta * v);
        let theta = Array1::from_elem(dict.atom_count(), mu * eta);
        Self::from_parts(layers, dict.patch_side(), d.clone(), d.clone(), w, theta, d, op.clone(), rho)
    }

    /// `ista_init` with `η = 0.9 / L̂`, `L̂` the largest power-iteration
    /// Hessian estimate at `z = 0` over the sample patches.
    pub fn ista_init_auto(
        dict: &Dictionary<T>,
        op: &SensingOperator<T>,
        rho: IntensityTransform<T>,
        mu: T,
        layers: usize,
        samples: &[&Observations],
    ) -> Result<(Self, T)> {
        let eta = ista_step(dict, op, rho, samples)?;
        Ok((Self::ista_init(dict, op, rho, eta, mu, layers)?, eta))
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn dim(&self) -> usize {
        self.patch_side * self.patch_side
    }

    pub fn atom_count(&self) -> usize {
        self.theta.len()
    }

    pub fn a(&self) -> &Array2<T> {
        &self.a
    }

    pub fn q(&self) -> &Array2<T> {
        &self.q
    }

    pub fn w(&self) -> &Array2<T> {
        &self.w
    }

    pub fn theta(&self) -> &Array1<T> {
        &self.theta
    }

    pub fn d(&self) -> &Array2<T> {
        &self.d
    }

    pub fn op(&self) -> &SensingOperator<T> {
        &self.op
    }

    pub fn rho(&self) -> IntensityTransform<T> {
        self.rho
    }

    /// Mutable view of one tensor flattened; `θ` is re-projected onto `θ >= 0`
    /// by [`MlNetParams::project`].
    pub(crate) fn tensor_mut(&mut self, kind: ParamKind) -> &mut [T] {
        let slice = match kind {
            ParamKind::A => self.a.as_slice_mut(),
            ParamKind::Q => self.q.as_slice_mut(),
            ParamKind::W => self.w.as_slice_mut(),
            ParamKind::Theta => self.theta.as_slice_mut(),
            ParamKind::D => self.d.as_slice_mut(),
        };
        slice.expect("parameter tensors are contiguous")
    }

    pub fn tensor(&self, kind: ParamKind) -> &[T] {
        let slice = match kind {
            ParamKind::A => self.a.as_slice(),
            ParamKind::Q => self.q.as_slice(),
            ParamKind::W => self.w.as_slice(),
            ParamKind::Theta => self.theta.as_slice(),
            ParamKind::D => self.d.as_slice(),
        };
        slice.expect("parameter tensors are contiguous")
    }

    pub(crate) fn project(&mut self) {
        self.theta.mapv_inplace(|v| v.max(T::zero()));
    }

    pub(crate) fn check_observations(&self, obs: &Observations) -> Result<()> {
        let expected = self.op.output_dims((self.patch_side, self.patch_side));
        if obs.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: obs.dims(),
            });
        }
        Ok(())
    }
}

pub(crate) fn ista_step<T: Real>(
    dict: &Dictionary<T>,
    op: &SensingOperator<T>,
    rho: IntensityTransform<T>,
    samples: &[&Observations],
) -> Result<T> {
    let z = Array1::zeros(dict.atom_count());
    let mut lipschitz = T::zero();
    for obs in samples {
        let problem = PatchProblem::new(obs, dict, op, rho)?;
        lipschitz = lipschitz.max(lipschitz_estimate(&problem, z.view(), 50)?);
    }
    if !(lipschitz > T::zero()) || !lipschitz.is_finite() {
        return Err(Error::invalid("could not estimate a step size from the samples"));
    }
    Ok(lit::<T>(0.9) / lipschitz)
}

impl MlNetParams<f64> {
    /// Writes `manifest.txt` and one tensor file per parameter into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Manifest::new();
        manifest
            .set("format_version", PARAMS_FORMAT_VERSION)
            .set("layers", self.layers)
            .set("patch_side", self.patch_side)
            .set("atoms", self.atom_count())
            .set("c", self.rho.scale())
            .set("factor", self.op.factor())
            .set("sigma", self.op.sigma())
            .set("truncation", self.op.truncation())
            .set("order", format_order(&ParamKind::ALL));
        manifest.write(dir.join("manifest.txt"))?;
        write_tensor(dir.join("A.btsr"), &Tensor::from_array2(&self.a))?;
        write_tensor(dir.join("Q.btsr"), &Tensor::from_array2(&self.q))?;
        write_tensor(dir.join("W.btsr"), &Tensor::from_array2(&self.w))?;
        write_tensor(dir.join("theta.btsr"), &Tensor::from_array1(&self.theta))?;
        write_tensor(dir.join("D.btsr"), &Tensor::from_array2(&self.d))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::read(dir.join("manifest.txt"))?;
        let version: u16 = manifest.parse_required("format_version")?;
        if version != PARAMS_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: PARAMS_FORMAT_VERSION,
            });
        }
        let op = SensingOperator::with_truncation(
            manifest.parse_required("factor")?,
            manifest.parse_required("sigma")?,
            manifest.parse_required("truncation")?,
        )?;
        let rho = IntensityTransform::new(manifest.parse_required("c")?)?;
        let read2 = |name: &str| read_tensor(dir.join(format!("{name}.btsr")))?.into_array2();
        let params = Self::from_parts(
            manifest.parse_required("layers")?,
            manifest.parse_required("patch_side")?,
            read2("A")?,
            read2("Q")?,
            read2("W")?,
            read_tensor(dir.join("theta.btsr"))?.into_array1()?,
            read2("D")?,
            op,
            rho,
        )?;
        let atoms: usize = manifest.parse_required("atoms")?;
        if atoms != params.atom_count() {
            return Err(Error::Malformed(format!(
                "manifest lists {atoms} atoms but tensors have {}",
                params.atom_count()
            )));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ista_init_structure() {
        let dict = Dictionary::dct(4, 5).unwrap();
        let op = SensingOperator::new(2, 1.0).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let p = MlNetParams::ista_init(&dict, &op, rho, 0.25, 4.0, 3).unwrap();
        assert_eq!(p.a(), dict.atoms());
        assert_eq!(p.q(), dict.atoms());
        assert_eq!(p.d(), dict.atoms());
        assert_eq!(p.w(), &dict.atoms().t().mapv(|v| 0.25 * v));
        assert!(p.theta().iter().all(|&t| t == 1.0));
    }

    #[test]
    fn rejects_negative_theta_and_bad_shapes() {
        let dict = Dictionary::<f64>::dct(4, 5).unwrap();
        let op = SensingOperator::new(2, 1.0).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let d = dict.atoms().clone();
        let w = d.t().to_owned();
        let mut theta = Array1::from_elem(25, 0.1);
        theta[3] = -1.0;
        assert!(MlNetParams::from_parts(2, 4, d.clone(), d.clone(), w.clone(), theta, d.clone(), op.clone(), rho).is_err());
        let theta = Array1::from_elem(25, 0.1);
        assert!(MlNetParams::from_parts(2, 4, d.clone(), d.clone(), d.clone(), theta, d, op, rho).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dict = Dictionary::dct(4, 5).unwrap();
        let op = SensingOperator::new(2, 1.5).unwrap();
        let rho = IntensityTransform::new(10.0).unwrap();
        let p = MlNetParams::ista_init(&dict, &op, rho, 0.3, 4.0, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.save(dir.path()).unwrap();
        let back = MlNetParams::load(dir.path()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn order_parsing() {
        assert_eq!(parse_order("W,A,Q,theta,D").unwrap(), ParamKind::ALL.to_vec());
        assert!(parse_order("W,B").is_err());
    }
}
