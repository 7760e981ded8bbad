//! Material laws: the stress-dependent mobility `𝕄(ε(u), p)` and the
//! concentration-dependent pressure source `ℓ(φ)`, with their parameters.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParameters {
    pub mu: f64,
    pub lambda: f64,
    pub theta: f64,
    /// Bound `M` on the mobility, used in the weighted norms.
    #[serde(rename = "m")]
    pub m_bound: f64,
    #[serde(default)]
    pub lipschitz_m: Option<f64>,
    #[serde(default)]
    pub lipschitz_ell: Option<f64>,
}

impl PhysicalParameters {
    pub fn new(mu: f64, lambda: f64, theta: f64, m_bound: f64) -> Result<Self> {
        let p = Self {
            mu,
            lambda,
            theta,
            m_bound,
            lipschitz_m: None,
            lipschitz_ell: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.lambda > 0.0 && self.theta >= 0.0 && self.m_bound > 0.0) {
            return Err(Error::Input(format!(
                "parameters need mu > 0, lambda > 0, theta >= 0, M > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn example1() -> Self {
        Self::new(100.0, 1000.0, 1e-3, 20.0).unwrap()
    }

    /// Lamé moduli from Young's modulus and Poisson ratio.
    pub fn from_young(e: f64, nu: f64, theta: f64, m_bound: f64) -> Result<Self> {
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        Self::new(mu, lambda, theta, m_bound)
    }

    pub fn example2() -> Self {
        Self::from_young(1e-2, 0.3, 1.0, 1.0).unwrap()
    }
}

/// How the stress-like argument of the example mobilities is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StressReading {
    /// Cauchy stress `σ = 2με - p𝕀`.
    #[default]
    Matrix,
    /// Scalar `s = 2μ tr ε - p` multiplying `𝕀`.
    Scalar,
}

pub trait MaterialLaw: Send + Sync {
    fn label(&self) -> &str;

    fn params(&self) -> &PhysicalParameters;

    /// Mobility tensor `𝕄`.
    fn mobility(&self, strain: &Matrix3<f64>, pressure: f64, x: &Point) -> Matrix3<f64>;

    /// `𝕄⁻¹`; laws with a closed-form inverse should override this.
    fn minv(&self, strain: &Matrix3<f64>, pressure: f64, x: &Point) -> Matrix3<f64> {
        let m = self.mobility(strain, pressure, x);
        m.try_inverse().unwrap_or_else(|| Matrix3::from_element(f64::NAN))
    }

    fn ell(&self, phi: f64) -> f64;
}

fn stress(mu: f64, strain: &Matrix3<f64>, pressure: f64) -> Matrix3<f64> {
    strain * (2.0 * mu) - Matrix3::identity() * pressure
}

/// `𝕄 = 10⁻³ exp(-10⁻⁴ tr σ) 𝕀`, `ℓ(φ) = 1 + φ²/(1 + φ²)`.
#[derive(Debug, Clone)]
pub struct Example1Law {
    pub params: PhysicalParameters,
    pub reading: StressReading,
}

impl Example1Law {
    pub fn new(reading: StressReading) -> Self {
        Self {
            params: PhysicalParameters::example1(),
            reading,
        }
    }

    /// The scalar `m` with `𝕄 = m 𝕀`.
    pub fn scalar_mobility(&self, strain: &Matrix3<f64>, pressure: f64) -> f64 {
        let tr = match self.reading {
            StressReading::Matrix => stress(self.params.mu, strain, pressure).trace(),
            StressReading::Scalar => 3.0 * (2.0 * self.params.mu * strain.trace() - pressure),
        };
        1e-3 * (-1e-4 * tr).exp()
    }
}

impl MaterialLaw for Example1Law {
    fn label(&self) -> &str {
        match self.reading {
            StressReading::Matrix => "example1",
            StressReading::Scalar => "example1-scalar",
        }
    }

    fn params(&self) -> &PhysicalParameters {
        &self.params
    }

    fn mobility(&self, strain: &Matrix3<f64>, pressure: f64, _x: &Point) -> Matrix3<f64> {
        Matrix3::identity() * self.scalar_mobility(strain, pressure)
    }

    fn minv(&self, strain: &Matrix3<f64>, pressure: f64, _x: &Point) -> Matrix3<f64> {
        Matrix3::identity() / self.scalar_mobility(strain, pressure)
    }

    fn ell(&self, phi: f64) -> f64 {
        let q = phi * phi;
        1.0 + q / (1.0 + q)
    }
}

pub const EXAMPLE2_M0: f64 = 1e2;
pub const EXAMPLE2_M1: f64 = 1e3;
pub const EXAMPLE2_OMEGA: f64 = 3.497e12;
pub const EXAMPLE2_PHI_BOUNDARY: f64 = 2.29e-14;
pub const EXAMPLE2_TRACTION: f64 = -2e-4;

/// `𝕄 = m₀(𝕀 + m₀ m₁ σ²)`, `ℓ(φ) = K₀ φ` with `K₀ = Ω̃(2μ + 3λ)/3`.
#[derive(Debug, Clone)]
pub struct Example2Law {
    pub params: PhysicalParameters,
    pub reading: StressReading,
    pub m0: f64,
    pub m1: f64,
    pub k0: f64,
}

impl Example2Law {
    pub fn new(reading: StressReading) -> Self {
        let params = PhysicalParameters::example2();
        let k0 = EXAMPLE2_OMEGA * (2.0 * params.mu + 3.0 * params.lambda) / 3.0;
        Self {
            params,
            reading,
            m0: EXAMPLE2_M0,
            m1: EXAMPLE2_M1,
            k0,
        }
    }
}

impl MaterialLaw for Example2Law {
    fn label(&self) -> &str {
        match self.reading {
            StressReading::Matrix => "example2",
            StressReading::Scalar => "example2-scalar",
        }
    }

    fn params(&self) -> &PhysicalParameters {
        &self.params
    }

    fn mobility(&self, strain: &Matrix3<f64>, pressure: f64, _x: &Point) -> Matrix3<f64> {
        let sq = match self.reading {
            StressReading::Matrix => {
                let s = stress(self.params.mu, strain, pressure);
                s * s
            }
            StressReading::Scalar => {
                let s = 2.0 * self.params.mu * strain.trace() - pressure;
                Matrix3::identity() * (s * s)
            }
        };
        (Matrix3::identity() + sq * (self.m0 * self.m1)) * self.m0
    }

    fn minv(&self, strain: &Matrix3<f64>, pressure: f64, x: &Point) -> Matrix3<f64> {
        let m = self.mobility(strain, pressure, x);
        // 𝕄 is symmetric; invert through its eigen-decomposition.
        let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
        let inv = eig.eigenvalues.map(|v| 1.0 / v);
        eig.eigenvectors * Matrix3::from_diagonal(&inv) * eig.eigenvectors.transpose()
    }

    fn ell(&self, phi: f64) -> f64 {
        self.k0 * phi
    }
}

/// Constant mobility and affine `ℓ(φ) = a + bφ`.
#[derive(Debug, Clone)]
pub struct ConstantLaw {
    pub params: PhysicalParameters,
    pub mobility: Matrix3<f64>,
    pub ell_offset: f64,
    pub ell_slope: f64,
}

impl ConstantLaw {
    pub fn identity(params: PhysicalParameters) -> Self {
        Self {
            params,
            mobility: Matrix3::identity(),
            ell_offset: 0.0,
            ell_slope: 1.0,
        }
    }
}

impl MaterialLaw for ConstantLaw {
    fn label(&self) -> &str {
        "constant"
    }

    fn params(&self) -> &PhysicalParameters {
        &self.params
    }

    fn mobility(&self, _strain: &Matrix3<f64>, _pressure: f64, _x: &Point) -> Matrix3<f64> {
        self.mobility
    }

    fn ell(&self, phi: f64) -> f64 {
        self.ell_offset + self.ell_slope * phi
    }
}

pub const LAW_NAMES: &[&str] = &["example1", "example1-scalar", "example2", "example2-scalar", "identity"];

/// Looks up a built-in law. `params` overrides the law's own parameters.
pub fn law_by_name(name: &str, params: Option<PhysicalParameters>) -> Result<Box<dyn MaterialLaw>> {
    let mut law: Box<dyn MaterialLaw> = match name {
        "example1" => Box::new(Example1Law::new(StressReading::Matrix)),
        "example1-scalar" => Box::new(Example1Law::new(StressReading::Scalar)),
        "example2" => Box::new(Example2Law::new(StressReading::Matrix)),
        "example2-scalar" => Box::new(Example2Law::new(StressReading::Scalar)),
        "identity" => Box::new(ConstantLaw::identity(params.unwrap_or(PhysicalParameters::example1()))),
        other => {
            return Err(Error::Input(format!(
                "unknown law '{other}', expected one of {}",
                LAW_NAMES.join(", ")
            )))
        }
    };
    if let Some(p) = params {
        p.validate()?;
        law = match name {
            "example1" | "example1-scalar" => {
                let reading = if name == "example1" {
                    StressReading::Matrix
                } else {
                    StressReading::Scalar
                };
                Box::new(Example1Law { params: p, reading })
            }
            "example2" | "example2-scalar" => {
                let reading = if name == "example2" {
                    StressReading::Matrix
                } else {
                    StressReading::Scalar
                };
                let mut l = Example2Law::new(reading);
                l.params = p;
                l.k0 = EXAMPLE2_OMEGA * (2.0 * p.mu + 3.0 * p.lambda) / 3.0;
                Box::new(l)
            }
            _ => law,
        };
    }
    Ok(law)
}

/// Smallest and largest eigenvalue of the symmetric part, failing when the
/// smallest is not above `1e-12`.
pub fn check_spd(m: &Matrix3<f64>, cell: usize) -> Result<(f64, f64)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12) || !hi.is_finite() {
        return Err(Error::NonSpd {
            cell,
            min_eigenvalue: lo,
        });
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Serialize)]
pub struct LawDiagnostics {
    pub spd_ok: bool,
    pub eig_min: f64,
    pub eig_max: f64,
    pub symmetry_residual: f64,
    /// Largest finite-difference slope of `𝕄⁻¹` (Frobenius norm) with
    /// respect to the strain entries and the pressure.
    pub lipschitz_minv: f64,
    /// Largest finite-difference slope of `ℓ` over `φ ∈ [-2, 2]`.
    pub lipschitz_ell: f64,
}

/// Empirical eigenvalue range, symmetry and Lipschitz estimates of `𝕄⁻¹`
/// and `ℓ` on sampled `(strain, pressure)` pairs. Informational only.
pub fn law_diagnostics(law: &dyn MaterialLaw, samples: &[(Matrix3<f64>, f64)]) -> LawDiagnostics {
    let x = Point::zeros();
    let mut d = LawDiagnostics {
        spd_ok: true,
        eig_min: f64::INFINITY,
        eig_max: f64::NEG_INFINITY,
        symmetry_residual: 0.0,
        lipschitz_minv: 0.0,
        lipschitz_ell: 0.0,
    };
    for (strain, p) in samples {
        let a = law.minv(strain, *p, &x);
        let norm = a.norm().max(f64::MIN_POSITIVE);
        d.symmetry_residual = d.symmetry_residual.max((a - a.transpose()).norm() / norm);
        let eig = SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues;
        d.eig_min = d.eig_min.min(eig.min());
        d.eig_max = d.eig_max.max(eig.max());
        if !(eig.min() > 0.0) {
            d.spd_ok = false;
        }
        let h = 1e-6 * (1.0 + strain.amax() + p.abs());
        let mut slope = |s1: Matrix3<f64>, p1: f64, s2: Matrix3<f64>, p2: f64| {
            let diff = (law.minv(&s1, p1, &x) - law.minv(&s2, p2, &x)).norm() / (2.0 * h);
            d.lipschitz_minv = d.lipschitz_minv.max(diff);
        };
        for i in 0..3 {
            for j in i..3 {
                let mut e = Matrix3::zeros();
                e[(i, j)] = h;
                e[(j, i)] = h;
                slope(strain + e, *p, strain - e, *p);
            }
        }
        slope(*strain, p + h, *strain, p - h);
    }
    let h = 1e-6;
    for k in 0..=40 {
        let phi = -2.0 + 0.1 * k as f64;
        let s = (law.ell(phi + h) - law.ell(phi - h)).abs() / (2.0 * h);
        d.lipschitz_ell = d.lipschitz_ell.max(s);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_at_rest() {
        let law = Example1Law::new(StressReading::Matrix);
        let z = Matrix3::zeros();
        let minv = law.minv(&z, 0.0, &Point::zeros());
        assert!((minv - Matrix3::identity() * 1e3).amax() < 1e-9);
        assert_eq!(law.ell(0.0), 1.0);
        assert_eq!(law.ell(1.0), 1.5);
    }

    #[test]
    fn example2_at_rest() {
        let law = Example2Law::new(StressReading::Matrix);
        let m = law.mobility(&Matrix3::zeros(), 0.0, &Point::zeros());
        assert!((m - Matrix3::identity() * 100.0).amax() < 1e-12);
        assert!((law.ell(2.0 * 0.3) - 2.0 * law.ell(0.3)).abs() <= 1e-15 * law.ell(0.6).abs());
    }

    #[test]
    fn registry_rejects_unknown() {
        assert!(law_by_name("nope", None).is_err());
        assert_eq!(law_by_name("example2", None).unwrap().label(), "example2");
    }

    #[test]
    fn negative_definite_is_flagged() {
        assert!(check_spd(&(-Matrix3::identity()), 3).is_err());
        assert!(check_spd(&Matrix3::identity(), 3).is_ok());
    }
}
