//! VTU export of a solution state.

use std::path::Path;

use nalgebra::DVector;

use crate::assembly::{Discretization, SolutionState};
use crate::error::{Error, Result};
use crate::mesh::{write_vtu, PolyMesh, VtuField, VtuFieldData};

/// Writes the mesh with point data `displacement` (vertex DoFs) and cell
/// data `pressure`, `concentration`, `flux`, `flux_magnitude` and
/// `flux_divergence`. Cell values are taken at the barycenter.
pub fn export_vtk(mesh: &PolyMesh, disc: &Discretization, state: &SolutionState, path: &Path) -> Result<()> {
    let map = &disc.map;
    if state.u.len() != map.n_u() || state.phi.len() != map.n_phi() {
        return Err(Error::Dimension("state does not match the mesh".into()));
    }
    let mut disp = Vec::with_capacity(3 * map.nv);
    for v in 0..map.nv {
        disp.extend((0..3).map(|c| state.u[map.u_vertex(v, c)]));
    }
    let nc = mesh.num_cells();
    let mut pressure = Vec::with_capacity(nc);
    let mut flux = Vec::with_capacity(3 * nc);
    let mut magnitude = Vec::with_capacity(nc);
    let mut divergence = Vec::with_capacity(nc);
    for k in 0..nc {
        // Scaled monomials are centred at the barycenter, so the constant
        // coefficient is the value there.
        pressure.push(state.p[map.pressure(k, 0)]);
        let idx = map.flux_map(mesh, k);
        let z = DVector::from_iterator(idx.len(), idx.iter().map(|&g| state.zeta[g]));
        let coeffs = disc.flux[k].project(&z);
        let zb = [coeffs[0][0], coeffs[1][0], coeffs[2][0]];
        flux.extend_from_slice(&zb);
        magnitude.push(zb.iter().map(|v| v * v).sum::<f64>().sqrt());
        divergence.push((&disc.flux[k].div * &z)[0]);
    }
    let fields = [
        VtuField {
            name: "displacement".into(),
            components: 3,
            data: VtuFieldData::Point(disp),
        },
        VtuField {
            name: "pressure".into(),
            components: 1,
            data: VtuFieldData::Cell(pressure),
        },
        VtuField {
            name: "concentration".into(),
            components: 1,
            data: VtuFieldData::Cell(state.phi.iter().copied().collect()),
        },
        VtuField {
            name: "flux".into(),
            components: 3,
            data: VtuFieldData::Cell(flux),
        },
        VtuField {
            name: "flux_magnitude".into(),
            components: 1,
            data: VtuFieldData::Cell(magnitude),
        },
        VtuField {
            name: "flux_divergence".into(),
            components: 1,
            data: VtuFieldData::Cell(divergence),
        },
    ];
    write_vtu(mesh, &fields, path)
}
