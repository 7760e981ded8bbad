//! Picard fixed-point driver for the coupled system.
//!
//! Each iteration solves elasticity with the pressure source frozen at the
//! previous concentration, then diffusion with the mobility frozen at the new
//! mechanical state. The elasticity operator is assembled and factored once.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::{DiffusionSolver, Discretization, DofMap, ElasticitySolver, ProblemData, SolutionState};
use crate::coupling::{LawDiagnostics, MaterialLaw};
use crate::error::{Error, Result};
use crate::mesh::PolyMesh;
use crate::space_elasticity::{ElasticityLocal, NPRESS};

/// Diagnostics recorded for one Picard iteration.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phi_increment: f64,
    pub phi_norm: f64,
    pub combined_increment: f64,
    pub elasticity_residual: f64,
    pub diffusion_residual: f64,
    pub assembly_seconds: f64,
    pub factorization_seconds: f64,
    pub minv_eig_min: f64,
    pub minv_eig_max: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub elasticity_assemblies: usize,
    pub diffusion_assemblies: usize,
    pub converged: bool,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn increments(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.phi_increment).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncrementNorm {
    /// Weighted concentration norm of the increment.
    #[default]
    Phi,
    /// Weighted norm of the increment of all four fields.
    Combined,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    #[serde(rename = "fp_tol")]
    pub tolerance: f64,
    #[serde(rename = "fp_max_iter")]
    pub max_iterations: usize,
    #[serde(rename = "fp_norm")]
    pub norm: IncrementNorm,
    /// Stop on the bare increment instead of the relative one with floor 1.
    pub abs_tol: bool,
    /// The relative test reads `‖Δ‖ ≤ tol·max(floor, ‖·‖)`; 0 makes it purely
    /// relative, which suits fields far below unit scale.
    #[serde(rename = "fp_norm_floor")]
    pub norm_floor: f64,
    #[serde(rename = "fp_damping")]
    pub damping: f64,
    /// Scaling of the elasticity stabilisation.
    pub stab_scale: f64,
    /// Cell quadrature degree for the weighted flux mass.
    pub quad_order: usize,
    #[serde(skip)]
    pub initial_phi: Option<DVector<f64>>,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_iterations: 50,
            norm: IncrementNorm::Phi,
            abs_tol: false,
            norm_floor: 1.0,
            damping: 1.0,
            stab_scale: 1.0,
            quad_order: 4,
            initial_phi: None,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Input("fixed point tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Input("max_iterations must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Input("damping must lie in (0, 1]".into()));
        }
        if !(self.norm_floor >= 0.0) {
            return Err(Error::Input("norm floor must be non-negative".into()));
        }
        if !(self.stab_scale > 0.0) {
            return Err(Error::Input("stabilisation scale must be positive".into()));
        }
        Ok(())
    }
}

/// `‖φ‖_{Q₂}` of a piecewise constant field.
pub fn phi_norm(mesh: &PolyMesh, law: &dyn MaterialLaw, phi: &DVector<f64>) -> f64 {
    let prm = law.params();
    let w = 1.0 / prm.m_bound + prm.theta;
    let s: f64 = (0..mesh.num_cells()).map(|k| mesh.cell(k).volume * phi[k] * phi[k]).sum();
    (w * s).sqrt()
}

/// Discrete weighted norm of a full state: elasticity energy with
/// stabilisation, weighted L² of the pressure, `M‖div ζ‖²` and `‖φ‖_{Q₂}`.
fn combined_norm(
    mesh: &PolyMesh,
    map: &DofMap,
    elast: &[ElasticityLocal],
    flux: &[crate::space_hdiv::FluxLocal],
    law: &dyn MaterialLaw,
    stab_scale: f64,
    d: &SolutionState,
) -> f64 {
    let prm = law.params();
    let mut s = phi_norm(mesh, law, &d.phi).powi(2);
    let pw = 1.0 / (2.0 * prm.mu) + 1.0 / prm.lambda;
    for k in 0..mesh.num_cells() {
        let idx = map.elasticity_map(mesh, k);
        let u = DVector::from_iterator(idx.len(), idx.iter().map(|&g| d.u[g]));
        s += u.dot(&(elast[k].stiffness(prm.mu, stab_scale) * &u));
        let p = DVector::from_iterator(NPRESS, (0..NPRESS).map(|j| d.p[map.pressure(k, j)]));
        s += pw * p.dot(&(&elast[k].pressure_gram * &p));
        let fidx = map.flux_map(mesh, k);
        let z = DVector::from_iterator(fidx.len(), fidx.iter().map(|&g| d.zeta[g]));
        let div = (&flux[k].div * z)[0];
        s += prm.m_bound * div * div * flux[k].volume;
    }
    s.sqrt()
}

/// Runs the Picard iteration. On hitting `max_iterations` the trace is
/// returned inside [`Error::NonConvergence`].
pub fn solve_coupled(
    mesh: &PolyMesh,
    law: &dyn MaterialLaw,
    data: &ProblemData,
    config: &FixedPointConfig,
) -> Result<(SolutionState, IterationTrace)> {
    config.validate()?;
    let disc = Discretization::new(mesh)?;
    solve_coupled_with(mesh, &disc, law, data, config)
}

/// [`solve_coupled`] on a prebuilt discretization.
pub fn solve_coupled_with(
    mesh: &PolyMesh,
    disc: &Discretization,
    law: &dyn MaterialLaw,
    data: &ProblemData,
    config: &FixedPointConfig,
) -> Result<(SolutionState, IterationTrace)> {
    config.validate()?;
    law.params().validate()?;
    let (map, elast, flux) = (&disc.map, &disc.elasticity[..], &disc.flux[..]);
    let mut trace = IterationTrace::default();

    let elasticity = ElasticitySolver::new(mesh, map, elast, law, config.stab_scale, data)?;
    let mut diffusion = DiffusionSolver::new(mesh, map, flux, data)?;
    let mut setup = (elasticity.assembly_seconds, elasticity.factorization_seconds);

    let mut state = SolutionState::zeros(map);
    if let Some(phi0) = &config.initial_phi {
        if phi0.len() != map.n_phi() {
            return Err(Error::Dimension(format!(
                "initial concentration has {} entries, mesh has {} cells",
                phi0.len(),
                map.n_phi()
            )));
        }
        state.phi = phi0.clone();
    }

    for it in 1..=config.max_iterations {
        let t0 = Instant::now();
        let (u, p, el_res) = elasticity.solve(map, elast, law, &state.phi);
        let el_seconds = t0.elapsed().as_secs_f64();
        let stats = diffusion.update(mesh, map, flux, elast, law, &u, &p, config.quad_order)?;
        let (zeta, phi_new, diff_res) = diffusion.solve(map)?;
        let phi = if config.damping < 1.0 {
            &phi_new * config.damping + &state.phi * (1.0 - config.damping)
        } else {
            phi_new
        };

        let delta = SolutionState {
            u: &u - &state.u,
            p: &p - &state.p,
            zeta: &zeta - &state.zeta,
            phi: &phi - &state.phi,
        };
        let phi_increment = phi_norm(mesh, law, &delta.phi);
        let phi_size = phi_norm(mesh, law, &phi);
        let combined_increment = match config.norm {
            IncrementNorm::Phi => phi_increment,
            IncrementNorm::Combined => combined_norm(mesh, map, elast, flux, law, config.stab_scale, &delta),
        };
        let size = match config.norm {
            IncrementNorm::Phi => phi_size,
            IncrementNorm::Combined => {
                let full = SolutionState {
                    u: u.clone(),
                    p: p.clone(),
                    zeta: zeta.clone(),
                    phi: phi.clone(),
                };
                combined_norm(mesh, map, elast, flux, law, config.stab_scale, &full)
            }
        };
        state = SolutionState { u, p, zeta, phi };

        trace.records.push(IterationRecord {
            iteration: it,
            phi_increment,
            phi_norm: phi_size,
            combined_increment,
            elasticity_residual: el_res,
            diffusion_residual: diff_res,
            assembly_seconds: setup.0 + stats.assembly_seconds,
            factorization_seconds: setup.1 + stats.factorization_seconds,
            minv_eig_min: stats.minv_min,
            minv_eig_max: stats.minv_max,
        });
        setup = (0.0, 0.0);
        log::debug!(
            "picard {it}: dphi={phi_increment:.3e} phi={phi_size:.3e} elasticity {el_seconds:.2}s diffusion {:.2}s",
            stats.assembly_seconds + stats.factorization_seconds
        );

        let threshold = if config.abs_tol {
            config.tolerance
        } else {
            config.tolerance * size.max(config.norm_floor)
        };
        if combined_increment <= threshold {
            trace.converged = true;
            break;
        }
    }
    trace.elasticity_assemblies = elasticity.assemblies;
    trace.diffusion_assemblies = diffusion.assemblies;
    if !trace.converged {
        return Err(Error::NonConvergence {
            iterations: trace.records.len(),
            trace: Box::new(trace),
        });
    }
    Ok((state, trace))
}

/// Constants entering the smallness condition of the well-posedness
/// analysis that are not computable from the law alone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmallnessConstants {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    /// Successive increment quotients `δ_{n+1} / δ_n`.
    pub ratios: Vec<f64>,
    /// Geometric mean of the quotients after the first iteration.
    pub empirical_ratio: Option<f64>,
    /// `C₁ L_ℓ √(2μ) M² C₂² L_𝕄`, when constants are supplied.
    pub smallness: Option<f64>,
    pub insufficient_data: bool,
}

/// Empirical contraction rate of a trace and the theoretical smallness
/// expression. Informational only.
pub fn check_contraction_diagnostics(
    trace: &IterationTrace,
    law: &dyn MaterialLaw,
    diagnostics: Option<&LawDiagnostics>,
    constants: Option<SmallnessConstants>,
) -> ContractionReport {
    let inc = trace.increments();
    let ratios: Vec<f64> = inc
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    // The first quotient compares against the start-up increment from φ⁰.
    let tail: Vec<f64> = if ratios.len() > 1 { ratios[1..].to_vec() } else { ratios.clone() };
    let tail: Vec<f64> = tail.into_iter().filter(|r| *r > 0.0 && r.is_finite()).collect();
    let empirical_ratio = if tail.is_empty() {
        None
    } else {
        Some((tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp())
    };
    let prm = law.params();
    let smallness = constants.and_then(|c| {
        let l_ell = prm.lipschitz_ell.or(diagnostics.map(|d| d.lipschitz_ell))?;
        let l_m = prm.lipschitz_m.or(diagnostics.map(|d| d.lipschitz_minv))?;
        Some(c.c1 * l_ell * (2.0 * prm.mu).sqrt() * prm.m_bound.powi(2) * c.c2 * c.c2 * l_m)
    });
    ContractionReport {
        insufficient_data: inc.len() < 2,
        ratios,
        empirical_ratio,
        smallness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{ConstantLaw, PhysicalParameters};

    fn trace_from(incs: &[f64]) -> IterationTrace {
        IterationTrace {
            records: incs
                .iter()
                .enumerate()
                .map(|(i, &d)| IterationRecord {
                    iteration: i + 1,
                    phi_increment: d,
                    ..Default::default()
                })
                .collect(),
            converged: true,
            ..Default::default()
        }
    }

    #[test]
    fn contraction_ratio_of_geometric_trace() {
        let law = ConstantLaw::identity(PhysicalParameters::example1());
        let incs: Vec<f64> = (0..8).map(|i| 0.5f64.powi(i)).collect();
        let r = check_contraction_diagnostics(&trace_from(&incs), &law, None, None);
        assert!((r.empirical_ratio.unwrap() - 0.5).abs() < 0.05);
        assert!(!r.insufficient_data);
        assert!(r.smallness.is_none());
    }

    #[test]
    fn single_iteration_is_insufficient() {
        let law = ConstantLaw::identity(PhysicalParameters::example1());
        let r = check_contraction_diagnostics(&trace_from(&[1.0]), &law, None, None);
        assert!(r.insufficient_data);
        assert!(r.empirical_ratio.is_none());
    }

    #[test]
    fn config_validation() {
        let mut c = FixedPointConfig::default();
        assert!(c.validate().is_ok());
        c.tolerance = 0.0;
        assert!(c.validate().is_err());
        c = FixedPointConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_keys() {
        let c: FixedPointConfig = serde_json::from_str(r#"{"fp_tol": 1e-7, "fp_norm": "combined"}"#).unwrap();
        assert_eq!(c.tolerance, 1e-7);
        assert_eq!(c.norm, IncrementNorm::Combined);
        assert_eq!(c.max_iterations, 50);
    }
}
