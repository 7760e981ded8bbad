//! Manufactured solutions: closed forms for `u` and `φ`, with the remaining
//! fields and the data `f`, `g` derived from the strong form.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::jet::Jet;
use crate::coupling::{ConstantLaw, Example1Law, MaterialLaw, PhysicalParameters, StressReading};
use crate::quadrature::Point;

pub type VectorJet = Box<dyn Fn(&[Jet; 3]) -> [Jet; 3] + Send + Sync>;
pub type ScalarJet = Box<dyn Fn(&[Jet; 3]) -> Jet + Send + Sync>;

/// Exact fields evaluated pointwise, as needed by the error norms.
pub trait ExactSolution: Sync {
    fn displacement(&self, x: &Point) -> Vector3<f64>;
    fn strain(&self, x: &Point) -> Matrix3<f64>;
    fn pressure(&self, x: &Point) -> f64;
    fn flux(&self, x: &Point) -> Vector3<f64>;
    fn flux_divergence(&self, x: &Point) -> f64;
    fn concentration(&self, x: &Point) -> f64;
    /// `𝕄⁻¹` at the exact state.
    fn minv(&self, x: &Point) -> Matrix3<f64>;
}

pub struct ManufacturedCase {
    pub name: String,
    pub law: Box<dyn MaterialLaw>,
    pub u: VectorJet,
    pub phi: ScalarJet,
    /// Boundary faces whose barycenter satisfies this are Neumann for both
    /// fields; the rest are Dirichlet.
    pub neumann: Box<dyn Fn(&Point) -> bool + Send + Sync>,
    /// Step of the finite differences used for `ℓ'` and `div ζ`.
    pub fd_step: f64,
}

/// Fourth-order Richardson extrapolation of a central difference.
pub fn richardson_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

impl ManufacturedCase {
    fn u_jets(&self, x: &Point) -> [Jet; 3] {
        (self.u)(&Jet::coordinates(x))
    }

    fn phi_jet(&self, x: &Point) -> Jet {
        (self.phi)(&Jet::coordinates(x))
    }

    pub fn params(&self) -> &PhysicalParameters {
        self.law.params()
    }

    /// `∇u` with rows `∇u_i`.
    pub fn grad_u(&self, x: &Point) -> Matrix3<f64> {
        let u = self.u_jets(x);
        Matrix3::from_fn(|i, j| u[i].g[j])
    }

    pub fn div_u(&self, x: &Point) -> f64 {
        self.grad_u(x).trace()
    }

    pub fn grad_phi(&self, x: &Point) -> Vector3<f64> {
        self.phi_jet(x).g
    }

    /// `σ = 2με(u) - p𝕀`.
    pub fn stress(&self, x: &Point) -> Matrix3<f64> {
        2.0 * self.params().mu * self.strain(x) - Matrix3::identity() * self.pressure(x)
    }

    pub fn mobility(&self, x: &Point) -> Matrix3<f64> {
        self.law.mobility(&self.strain(x), self.pressure(x), x)
    }

    pub fn ell_prime(&self, phi: f64) -> f64 {
        richardson_derivative(|s| self.law.ell(s), phi, self.fd_step * phi.abs().max(1.0))
    }

    /// `f = -div σ`, from the Hessians of `u` and `ℓ'(φ)∇φ`.
    pub fn body_force(&self, x: &Point) -> Vector3<f64> {
        let prm = self.params();
        let u = self.u_jets(x);
        let phi = self.phi_jet(x);
        let grad_div = Vector3::from_fn(|i, _| (0..3).map(|j| u[j].h[(j, i)]).sum::<f64>());
        let grad_p = -prm.lambda * grad_div + phi.g * self.ell_prime(phi.v);
        let div_strain = Vector3::from_fn(|i, _| 0.5 * (u[i].laplacian() + grad_div[i]));
        -(2.0 * prm.mu * div_strain - grad_p)
    }

    /// `g = θφ - div ζ`.
    pub fn source(&self, x: &Point) -> f64 {
        self.params().theta * self.concentration(x) - self.flux_divergence(x)
    }

    /// `σ n`.
    pub fn traction(&self, x: &Point, n: &Vector3<f64>) -> Vector3<f64> {
        self.stress(x) * n
    }
}

impl ExactSolution for ManufacturedCase {
    fn displacement(&self, x: &Point) -> Vector3<f64> {
        let u = self.u_jets(x);
        Vector3::new(u[0].v, u[1].v, u[2].v)
    }

    fn strain(&self, x: &Point) -> Matrix3<f64> {
        let g = self.grad_u(x);
        (g + g.transpose()) * 0.5
    }

    /// `p = -λ div u + ℓ(φ)`.
    fn pressure(&self, x: &Point) -> f64 {
        -self.params().lambda * self.div_u(x) + self.law.ell(self.concentration(x))
    }

    /// `ζ = 𝕄 ∇φ`.
    fn flux(&self, x: &Point) -> Vector3<f64> {
        self.mobility(x) * self.grad_phi(x)
    }

    fn flux_divergence(&self, x: &Point) -> f64 {
        (0..3)
            .map(|i| {
                richardson_derivative(
                    |s| {
                        let mut y = *x;
                        y[i] = s;
                        self.flux(&y)[i]
                    },
                    x[i],
                    self.fd_step,
                )
            })
            .sum()
    }

    fn concentration(&self, x: &Point) -> f64 {
        self.phi_jet(x).v
    }

    fn minv(&self, x: &Point) -> Matrix3<f64> {
        self.law.minv(&self.strain(x), self.pressure(x), x)
    }
}

fn on_far_faces(x: &Point) -> bool {
    let tol = 1e-9;
    x.iter().any(|c| (c - 1.0).abs() < tol)
}

/// The nonlinear manufactured case on the unit cube: Neumann on the faces
/// `x = 1`, `y = 1`, `z = 1`, Dirichlet elsewhere.
pub fn example1_case(reading: StressReading) -> ManufacturedCase {
    ManufacturedCase {
        name: "example1".into(),
        law: Box::new(Example1Law::new(reading)),
        u: Box::new(|x| {
            let [x, y, z] = *x;
            let s = 0.2;
            [
                (x.sq() + x * x.cos() * y.sin()) * s,
                (y.sq() + x * y.cos() * x.sin()) * s,
                (z.sq() + x * x.cos() * y.cos()) * s,
            ]
        }),
        phi: Box::new(|x| {
            let [x, y, z] = *x;
            (y * PI).cos() + (x * PI).sin() + x.sq() + y.sq() + z.sq()
        }),
        neumann: Box::new(on_far_faces),
        fd_step: 1e-3,
    }
}

fn patch_displacement() -> VectorJet {
    Box::new(|x| {
        let [x, y, z] = *x;
        [
            x * 0.10 - y * 0.05 + z * 0.02 + x.sq() * 0.03 + y * z * 0.04 + 0.01,
            x * 0.02 + y * 0.07 - z.sq() * 0.05 + x * y * 0.02 - 0.02,
            -x * 0.03 + z * 0.04 + y.sq() * 0.06 - x * z * 0.01 + 0.03,
        ]
    })
}

/// Polynomial case inside the discrete spaces with a constant
/// concentration, so the coupling `ℓ(φ)` is active and exactly
/// representable.
pub fn patch_coupled_case() -> ManufacturedCase {
    let mut law = ConstantLaw::identity(PhysicalParameters::example1());
    law.ell_offset = 0.3;
    law.ell_slope = 0.5;
    ManufacturedCase {
        name: "patch-coupled".into(),
        law: Box::new(law),
        u: patch_displacement(),
        phi: Box::new(|_| Jet::constant(0.7)),
        neumann: Box::new(on_far_faces),
        fd_step: 1e-3,
    }
}

/// Polynomial case with a quadratic concentration, so the flux `∇φ` is a
/// nontrivial linear field with constant divergence. `ℓ` is constant here:
/// with a nonconstant `φ` the discrete source `ℓ(φ_h)` only sees cell means.
pub fn patch_transport_case() -> ManufacturedCase {
    let mut law = ConstantLaw::identity(PhysicalParameters::example1());
    law.ell_offset = 0.4;
    law.ell_slope = 0.0;
    ManufacturedCase {
        name: "patch-transport".into(),
        law: Box::new(law),
        u: patch_displacement(),
        phi: Box::new(|x| {
            let [x, y, z] = *x;
            x * 0.3 - y * 0.2 + z * 0.5 + x.sq() * 0.4 - y * z * 0.3 + z.sq() * 0.2 + 1.0
        }),
        neumann: Box::new(on_far_faces),
        fd_step: 1e-3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_is_fourth_order() {
        let d = richardson_derivative(f64::sin, 0.7, 1e-2);
        assert!((d - 0.7f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn example1_fields_at_origin() {
        let case = example1_case(StressReading::Matrix);
        let o = Point::zeros();
        assert!(case.displacement(&o).norm() < 1e-15);
        assert!((case.concentration(&o) - 1.0).abs() < 1e-15);
        // ∂x u_1 = (2x + cos x sin y - x sin x sin y)/5 = 0 at the origin.
        assert!(case.grad_u(&o)[(0, 0)].abs() < 1e-15);
        // ∂y u_3 = -x cos x sin y / 5 = 0, ∂x u_3 = (cos x cos y - x ...)/5.
        assert!((case.grad_u(&o)[(2, 0)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn patch_flux_is_linear() {
        let case = patch_transport_case();
        let x = Point::new(0.2, 0.5, 0.9);
        let d = case.flux_divergence(&x);
        assert!((d - (0.8 + 0.4)).abs() < 1e-8);
    }
}
