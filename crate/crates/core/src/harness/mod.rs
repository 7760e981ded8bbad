//! Problem setups on top of the solver: manufactured cases with error
//! norms and convergence tables, the lithiation demo, and field export.

pub mod convergence;
pub mod errors;
pub mod export;
pub mod jet;
pub mod lithiation;
pub mod manufactured;

use std::time::Instant;

use crate::assembly::{Discretization, ProblemData, SolutionState};
use crate::error::Result;
use crate::mesh::{BoundaryTag, PolyMesh};
use crate::solver::{solve_coupled_with, FixedPointConfig, IterationTrace};

pub use convergence::{least_squares_rate, observed_rate, run_convergence, ConvergenceReport, ConvergenceRow};
pub use errors::{compute_errors, ErrorComponents, PhiReference};
pub use export::export_vtk;
pub use lithiation::{run_lithiation, LithiationConfig, LithiationResult};
pub use manufactured::{
    example1_case, patch_coupled_case, patch_transport_case, ExactSolution, ManufacturedCase,
};

/// Tags the boundary of `mesh` with the case's Neumann predicate.
pub fn prepare_mesh(mesh: PolyMesh, case: &ManufacturedCase) -> Result<PolyMesh> {
    mesh.classify_boundary(|x| {
        if (case.neumann)(x) {
            BoundaryTag::Neumann
        } else {
            BoundaryTag::Dirichlet
        }
    })
}

pub struct CaseResult {
    pub discretization: Discretization,
    pub state: SolutionState,
    pub trace: IterationTrace,
    pub seconds: f64,
}

/// Solves a manufactured case on a tagged mesh, with all data taken from
/// the exact solution.
pub fn solve_case(mesh: &PolyMesh, case: &ManufacturedCase, config: &FixedPointConfig) -> Result<CaseResult> {
    let t0 = Instant::now();
    let body_force = |x: &_| case.body_force(x);
    let displacement = |x: &_| case.displacement(x);
    let traction = |x: &_, n: &_| case.traction(x, n);
    let source = |x: &_| case.source(x);
    let concentration = |x: &_| case.concentration(x);
    let flux = |x: &_| case.flux(x);
    let data = ProblemData {
        body_force: Some(&body_force),
        displacement_bc: Some(&displacement),
        traction: Some(&traction),
        source: Some(&source),
        concentration_bc: Some(&concentration),
        boundary_flux: Some(&flux),
    };
    let discretization = Discretization::new(mesh)?;
    let (state, trace) = solve_coupled_with(mesh, &discretization, case.law.as_ref(), &data, config)?;
    Ok(CaseResult {
        discretization,
        state,
        trace,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

impl CaseResult {
    pub fn errors(
        &self,
        mesh: &PolyMesh,
        case: &ManufacturedCase,
        quad_order: usize,
        phi_reference: PhiReference,
    ) -> ErrorComponents {
        let d = &self.discretization;
        compute_errors(
            mesh,
            &d.map,
            &d.elasticity,
            &d.flux,
            case.params(),
            &self.state,
            case,
            quad_order,
            phi_reference,
        )
    }
}
