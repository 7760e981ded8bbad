//! Weighted error norms of a discrete state against an exact solution,
//! evaluated by cell quadrature on the projected discrete fields.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::manufactured::ExactSolution;
use crate::assembly::{DofMap, SolutionState};
use crate::coupling::PhysicalParameters;
use crate::mesh::PolyMesh;
use crate::poly::{Calculus, Poly};
use crate::space_elasticity::{ElasticityLocal, NPRESS};
use crate::space_hdiv::{eval_p1_vector, FluxLocal};

/// What the discrete concentration is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiReference {
    #[default]
    Pointwise,
    /// The cell mean of the exact concentration.
    CellMean,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ErrorComponents {
    pub u: f64,
    pub p: f64,
    pub zeta: f64,
    pub phi: f64,
    pub total: f64,
}

fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&g| v[g]))
}

/// Errors in the weighted norms
/// `‖u‖² = 2μ‖ε(u)‖²`, `‖p‖² = ((2μ)⁻¹ + λ⁻¹)‖p‖²`,
/// `‖ζ‖² = ‖ζ‖²_𝕄 + M‖div ζ‖²`, `‖φ‖² = (M⁻¹ + θ)‖φ‖²`,
/// comparing with `Π^ε u_h` and `Π⁰ ζ_h`.
#[allow(clippy::too_many_arguments)]
pub fn compute_errors(
    mesh: &PolyMesh,
    map: &DofMap,
    elast: &[ElasticityLocal],
    flux: &[FluxLocal],
    params: &PhysicalParameters,
    state: &SolutionState,
    exact: &dyn ExactSolution,
    quad_order: usize,
    phi_reference: PhiReference,
) -> ErrorComponents {
    let per_cell: Vec<[f64; 4]> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|k| {
            let el = &elast[k];
            let fl = &flux[k];
            let frame = mesh.cell(k).frame();
            let proj = el.project(&gather(&state.u, &map.elasticity_map(mesh, k)));
            let strain_h = Calculus::new(el.h).sym_grad(&proj);
            let p_h = Poly::from_coeffs((0..NPRESS).map(|j| state.p[map.pressure(k, j)]).collect());
            let zdofs = gather(&state.zeta, &map.flux_map(mesh, k));
            let zeta_h = fl.project(&zdofs);
            let div_h = (&fl.div * &zdofs)[0];
            let phi_h = state.phi[k];
            let rule = mesh.cell_quadrature(k, quad_order);
            let phi_ref = match phi_reference {
                PhiReference::Pointwise => None,
                PhiReference::CellMean => Some(rule.integrate(|x| exact.concentration(x)) / mesh.cell(k).volume),
            };
            let mut e = [0.0; 4];
            for (x, w) in rule.points.iter().zip(&rule.weights) {
                let xh = frame.local(x);
                let de = exact.strain(x) - nalgebra::Matrix3::from_fn(|i, j| strain_h[i][j].eval(&xh));
                e[0] += w * de.norm_squared();
                let dp = exact.pressure(x) - p_h.eval(&xh);
                e[1] += w * dp * dp;
                let dz = exact.flux(x) - eval_p1_vector(&zeta_h, &frame, x);
                let dd = exact.flux_divergence(x) - div_h;
                e[2] += w * (dz.dot(&(exact.minv(x) * dz)) + params.m_bound * dd * dd);
                let dphi = phi_ref.unwrap_or_else(|| exact.concentration(x)) - phi_h;
                e[3] += w * dphi * dphi;
            }
            e
        })
        .collect();
    let mut s = [0.0; 4];
    for e in per_cell {
        for i in 0..4 {
            s[i] += e[i];
        }
    }
    let u = (2.0 * params.mu * s[0]).max(0.0).sqrt();
    let p = ((1.0 / (2.0 * params.mu) + 1.0 / params.lambda) * s[1]).max(0.0).sqrt();
    let zeta = s[2].max(0.0).sqrt();
    let phi = ((1.0 / params.m_bound + params.theta) * s[3]).max(0.0).sqrt();
    ErrorComponents {
        u,
        p,
        zeta,
        phi,
        total: (u * u + p * p + zeta * zeta + phi * phi).sqrt(),
    }
}
