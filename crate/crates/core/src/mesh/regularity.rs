//! Shape-regularity diagnostics.
//!
//! The edge criterion `h_e >= ρ h_P` is checked exactly. Star-shapedness of
//! faces and cells is only estimated with respect to the barycenter: the
//! barycenter must see every fan triangle with positive orientation and its
//! distance to every edge line (faces) or face plane (cells) must be at least
//! `ρ h_P`. Faces are measured against `ρ h_P`, not `ρ h_f`.

use super::PolyMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRegularity {
    pub star_shaped_ok: bool,
    pub face_ok: bool,
    pub edge_ok: bool,
}

impl CellRegularity {
    pub fn all_ok(&self) -> bool {
        self.star_shaped_ok && self.face_ok && self.edge_ok
    }
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub rho: f64,
    pub cells: Vec<CellRegularity>,
}

impl RegularityReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 1.0;
        }
        self.cells.iter().filter(|c| c.all_ok()).count() as f64 / self.cells.len() as f64
    }

    pub fn edge_pass_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 1.0;
        }
        self.cells.iter().filter(|c| c.edge_ok).count() as f64 / self.cells.len() as f64
    }
}

pub fn check_regularity(mesh: &PolyMesh, rho: f64) -> RegularityReport {
    let cells = (0..mesh.num_cells())
        .map(|c| {
            let cell = &mesh.cells[c];
            let geo = mesh.cell(c);
            let r = rho * geo.diameter;
            let edge_ok = cell.edges.iter().all(|&e| mesh.geometry.edge_lengths[e] >= r);
            let mut face_ok = true;
            let mut star_shaped_ok = true;
            for (k, &f) in cell.faces.iter().enumerate() {
                let fg = mesh.face(f);
                let n_out = fg.normal * cell.orientation[k];
                if (fg.barycenter - geo.barycenter).dot(&n_out) < r {
                    star_shaped_ok = false;
                }
                let l = &mesh.faces[f].vertices;
                for i in 0..l.len() {
                    let (a, b) = (mesh.vertices[l[i]], mesh.vertices[l[(i + 1) % l.len()]]);
                    let twice_area = (a - fg.barycenter).cross(&(b - fg.barycenter)).dot(&fg.normal);
                    let len = (b - a).norm();
                    if twice_area <= 0.0 || twice_area / len < r {
                        face_ok = false;
                    }
                    let cone = (fg.barycenter - geo.barycenter).dot(&(a - geo.barycenter).cross(&(b - geo.barycenter)))
                        * cell.orientation[k];
                    if cone <= 0.0 {
                        star_shaped_ok = false;
                    }
                }
            }
            CellRegularity {
                star_shaped_ok,
                face_ok,
                edge_ok,
            }
        })
        .collect();
    RegularityReport { rho, cells }
}
