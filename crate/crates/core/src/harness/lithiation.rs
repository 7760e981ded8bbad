//! Lithiation of a perforated cylinder: the axis is the `z` axis, the
//! inner surface is clamped with zero flux, the outer surface carries the
//! boundary concentration and a normal traction, and the bases are clamped
//! or free.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::export_vtk;
use crate::assembly::{Discretization, ProblemData, SolutionState};
use crate::coupling::{law_by_name, EXAMPLE2_PHI_BOUNDARY, EXAMPLE2_TRACTION};
use crate::error::{Error, Result};
use crate::mesh::{Field, PolyMesh};
use crate::quadrature::Point;
use crate::solver::{solve_coupled_with, FixedPointConfig, IterationTrace};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LithiationConfig {
    pub law: String,
    pub clamped: bool,
    /// Normal traction on the outer surface, `t = T n`.
    pub traction: f64,
    pub phi_boundary: f64,
    #[serde(flatten)]
    pub fixed_point: FixedPointConfig,
}

impl Default for LithiationConfig {
    fn default() -> Self {
        Self {
            law: "example2".into(),
            clamped: false,
            traction: EXAMPLE2_TRACTION,
            phi_boundary: EXAMPLE2_PHI_BOUNDARY,
            // The concentration lives near 1e-14, so the stopping test must
            // not be floored at unit scale.
            fixed_point: FixedPointConfig {
                norm_floor: 0.0,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Inner,
    Outer,
    Base,
}

fn radius(x: &Point) -> f64 {
    x[0].hypot(x[1])
}

/// Classifies boundary faces by their normal and the radius of their
/// barycenter relative to the mid radius.
pub fn classify_cylinder(mesh: &PolyMesh) -> Vec<Option<Surface>> {
    let (mut r_min, mut r_max) = (f64::INFINITY, 0.0f64);
    for v in &mesh.vertices {
        r_min = r_min.min(radius(v));
        r_max = r_max.max(radius(v));
    }
    let mid = 0.5 * (r_min + r_max);
    (0..mesh.num_faces())
        .map(|f| {
            if !mesh.is_boundary_face(f) {
                return None;
            }
            let g = mesh.face(f);
            Some(if g.normal[2].abs() > 0.5 {
                Surface::Base
            } else if radius(&g.barycenter) < mid {
                Surface::Inner
            } else {
                Surface::Outer
            })
        })
        .collect()
}

fn apply_tags(mesh: &mut PolyMesh, clamped: bool) -> Result<()> {
    let surfaces = classify_cylinder(mesh);
    let mut mech = (Vec::new(), Vec::new());
    let mut transport = (Vec::new(), Vec::new());
    for (f, s) in surfaces.iter().enumerate() {
        match s {
            Some(Surface::Inner) => {
                mech.0.push(f);
                transport.1.push(f);
            }
            Some(Surface::Outer) => {
                mech.1.push(f);
                transport.0.push(f);
            }
            Some(Surface::Base) => {
                if clamped {
                    mech.0.push(f);
                } else {
                    mech.1.push(f);
                }
                transport.1.push(f);
            }
            None => {}
        }
    }
    if mech.0.is_empty() || transport.0.is_empty() {
        return Err(Error::Constraint("mesh has no inner or outer surface".into()));
    }
    mesh.set_tags(Field::Mechanics, &mech.0, &mech.1)?;
    mesh.set_tags(Field::Transport, &transport.0, &transport.1)
}

pub struct LithiationResult {
    pub mesh: PolyMesh,
    pub discretization: Discretization,
    pub state: SolutionState,
    pub trace: IterationTrace,
    /// Largest vertex displacement magnitude.
    pub max_displacement: f64,
}

/// Tags `mesh` for the lithiation setup and solves.
pub fn run_lithiation(mut mesh: PolyMesh, config: &LithiationConfig) -> Result<LithiationResult> {
    apply_tags(&mut mesh, config.clamped)?;
    let law = law_by_name(&config.law, None)?;
    let surfaces = classify_cylinder(&mesh);
    let mid = {
        let r: Vec<f64> = mesh.vertices.iter().map(radius).collect();
        0.5 * (r.iter().cloned().fold(f64::INFINITY, f64::min) + r.iter().cloned().fold(0.0, f64::max))
    };
    debug_assert_eq!(surfaces.len(), mesh.num_faces());
    let t = config.traction;
    // Only the lateral outer surface is loaded; free bases are traction free.
    let traction = move |x: &Point, n: &nalgebra::Vector3<f64>| {
        if n[2].abs() < 0.5 && radius(x) > mid {
            n * t
        } else {
            nalgebra::Vector3::zeros()
        }
    };
    let phi_b = config.phi_boundary;
    let concentration = move |_: &Point| phi_b;
    let data = ProblemData {
        traction: Some(&traction),
        concentration_bc: Some(&concentration),
        ..Default::default()
    };
    let discretization = Discretization::new(&mesh)?;
    let (state, trace) = solve_coupled_with(&mesh, &discretization, law.as_ref(), &data, &config.fixed_point)?;
    let map = &discretization.map;
    let max_displacement = (0..map.nv)
        .map(|v| (0..3).map(|c| state.u[map.u_vertex(v, c)].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(LithiationResult {
        mesh,
        discretization,
        state,
        trace,
        max_displacement,
    })
}

impl LithiationResult {
    pub fn export(&self, path: &Path) -> Result<()> {
        export_vtk(&self.mesh, &self.discretization, &self.state, path)
    }
}
