//! Polyhedral meshes: topology, geometric cache and boundary tags.
//!
//! A mesh is immutable once built. Faces are planar polygons stored once with
//! a global normal; interior faces point from the lower to the higher cell
//! index and boundary faces point outward. Each cell records, per face, the
//! sign that turns the global normal into its outward normal.

mod io;
mod regularity;
mod structured;

use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Frame2, Frame3, MomentTable};
use crate::quadrature::{tetra_rule, triangle_rule, Point, QuadRule};

pub use io::{load_mesh, save_mesh_json, write_vtu, MeshFormat, VtuField, VtuFieldData};
pub use regularity::{check_regularity, CellRegularity, RegularityReport};
pub use structured::{build_box_mesh, build_structured_mesh, StructuredKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// The two physical fields may split the boundary differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Mechanics,
    Transport,
}

#[derive(Debug, Clone, Default)]
pub struct BoundaryTags {
    pub mechanics: Vec<Option<BoundaryTag>>,
    pub transport: Vec<Option<BoundaryTag>>,
}

impl BoundaryTags {
    pub fn field(&self, field: Field) -> &[Option<BoundaryTag>] {
        match field {
            Field::Mechanics => &self.mechanics,
            Field::Transport => &self.transport,
        }
    }

    fn field_mut(&mut self, field: Field) -> &mut Vec<Option<BoundaryTag>> {
        match field {
            Field::Mechanics => &mut self.mechanics,
            Field::Transport => &mut self.transport,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Counter-clockwise loop around the global normal.
    pub vertices: Vec<usize>,
    /// `edges[i]` joins `vertices[i]` and `vertices[i + 1]`.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub faces: Vec<usize>,
    /// `+1` when the global face normal is outward for this cell.
    pub orientation: Vec<f64>,
    /// Sorted global vertex ids.
    pub vertices: Vec<usize>,
    /// Sorted global edge ids.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FaceGeometry {
    pub area: f64,
    pub normal: Vector3<f64>,
    pub barycenter: Point,
    pub diameter: f64,
    pub frame: Frame2,
}

#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub volume: f64,
    pub barycenter: Point,
    pub diameter: f64,
}

impl CellGeometry {
    pub fn frame(&self) -> Frame3 {
        Frame3::new(self.barycenter, self.diameter)
    }
}

#[derive(Debug, Clone)]
pub struct GeometricCache {
    pub cells: Vec<CellGeometry>,
    pub faces: Vec<FaceGeometry>,
    pub edge_lengths: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PolyMesh {
    pub vertices: Vec<Point>,
    pub edges: Vec<[usize; 2]>,
    pub faces: Vec<Face>,
    pub cells: Vec<Cell>,
    /// Owner (lower index) and optional neighbour of each face.
    pub face_cells: Vec<(usize, Option<usize>)>,
    pub tags: BoundaryTags,
    pub geometry: GeometricCache,
}

const PLANARITY_TOL: f64 = 1e-10;
const CLOSURE_TOL: f64 = 1e-12;

impl PolyMesh {
    /// Builds and validates a mesh from vertex coordinates, face vertex loops
    /// and cell face lists. Face loop orientation is arbitrary on input.
    pub fn new(vertices: Vec<Point>, faces: Vec<Vec<usize>>, cells: Vec<Vec<usize>>) -> Result<Self> {
        let nv = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.len() < 3 {
                return Err(Error::Topology(format!("face {i} has fewer than 3 vertices")));
            }
            if let Some(v) = f.iter().find(|&&v| v >= nv) {
                return Err(Error::Topology(format!("face {i} references missing vertex {v}")));
            }
            let mut s = f.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != f.len() {
                return Err(Error::Topology(format!("face {i} repeats a vertex")));
            }
        }
        for (c, cf) in cells.iter().enumerate() {
            if cf.len() < 4 {
                return Err(Error::Topology(format!("cell {c} has fewer than 4 faces")));
            }
            if let Some(f) = cf.iter().find(|&&f| f >= faces.len()) {
                return Err(Error::Topology(format!("cell {c} references missing face {f}")));
            }
        }

        let mut face_users: Vec<Vec<usize>> = vec![Vec::new(); faces.len()];
        for (c, cf) in cells.iter().enumerate() {
            for &f in cf {
                face_users[f].push(c);
            }
        }
        let mut face_cells = Vec::with_capacity(faces.len());
        for (f, users) in face_users.iter().enumerate() {
            match users.as_slice() {
                [] => return Err(Error::Topology(format!("dangling face {f}"))),
                [a] => face_cells.push((*a, None)),
                [a, b] if a != b => face_cells.push(((*a).min(*b), Some((*a).max(*b)))),
                _ => {
                    return Err(Error::Topology(format!(
                        "face {f} is referenced by {} cells",
                        users.len()
                    )))
                }
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut face_list: Vec<Face> = faces
            .into_iter()
            .map(|loop_| {
                let n = loop_.len();
                let edges_of_face = (0..n)
                    .map(|i| {
                        let (a, b) = (loop_[i], loop_[(i + 1) % n]);
                        let key = (a.min(b), a.max(b));
                        *edge_index.entry(key).or_insert_with(|| {
                            edges.push([key.0, key.1]);
                            edges.len() - 1
                        })
                    })
                    .collect();
                Face {
                    vertices: loop_,
                    edges: edges_of_face,
                }
            })
            .collect();

        let mut face_geom = Vec::with_capacity(face_list.len());
        for (i, f) in face_list.iter().enumerate() {
            face_geom.push(face_geometry(i, &vertices, &f.vertices)?);
        }

        let mut cell_list = Vec::with_capacity(cells.len());
        for (c, cf) in cells.into_iter().enumerate() {
            let orientation = orient_cell(c, &cf, &face_list, &face_geom, &vertices)?;
            let mut cv: Vec<usize> = cf.iter().flat_map(|&f| face_list[f].vertices.clone()).collect();
            cv.sort_unstable();
            cv.dedup();
            let mut ce: Vec<usize> = cf.iter().flat_map(|&f| face_list[f].edges.clone()).collect();
            ce.sort_unstable();
            ce.dedup();
            let euler = cv.len() as i64 - ce.len() as i64 + cf.len() as i64;
            if euler != 2 {
                return Err(Error::Topology(format!(
                    "cell {c} has Euler characteristic {euler}, expected 2"
                )));
            }
            cell_list.push(Cell {
                faces: cf,
                orientation,
                vertices: cv,
                edges: ce,
            });
        }

        // Global normals: owner-outward.
        for (f, &(owner, neighbour)) in face_cells.iter().enumerate() {
            let sign_owner = cell_sign(&cell_list[owner], f);
            if let Some(nb) = neighbour {
                let sign_nb = cell_sign(&cell_list[nb], f);
                if sign_owner * sign_nb > 0.0 {
                    return Err(Error::Topology(format!(
                        "cells {owner} and {nb} both see face {f} with the same orientation"
                    )));
                }
            }
            if sign_owner < 0.0 {
                let face = &mut face_list[f];
                face.vertices.reverse();
                // Edge i joined v_i and v_{i+1}; after reversal the edge list
                // must be rotated to keep that convention.
                face.edges.reverse();
                face.edges.rotate_left(1);
                let g = &mut face_geom[f];
                g.normal = -g.normal;
                g.frame.t2 = -g.frame.t2;
                for c in std::iter::once(owner).chain(neighbour) {
                    let cell = &mut cell_list[c];
                    let k = cell.faces.iter().position(|&x| x == f).unwrap();
                    cell.orientation[k] = -cell.orientation[k];
                }
            }
        }

        let mut cell_geom = Vec::with_capacity(cell_list.len());
        for (c, cell) in cell_list.iter().enumerate() {
            cell_geom.push(cell_geometry(c, cell, &face_geom, &face_list, &vertices)?);
        }

        let edge_lengths = edges
            .iter()
            .map(|[a, b]| (vertices[*a] - vertices[*b]).norm())
            .collect();

        let nf = face_list.len();
        Ok(Self {
            vertices,
            edges,
            faces: face_list,
            cells: cell_list,
            face_cells,
            tags: BoundaryTags {
                mechanics: vec![None; nf],
                transport: vec![None; nf],
            },
            geometry: GeometricCache {
                cells: cell_geom,
                faces: face_geom,
                edge_lengths,
            },
        })
    }

    /// Builds a mesh from per-cell polygon loops, merging faces that share
    /// the same vertex set.
    pub fn from_cell_polygons(vertices: Vec<Point>, cells: &[Vec<Vec<usize>>]) -> Result<Self> {
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut faces: Vec<Vec<usize>> = Vec::new();
        let mut cell_faces = Vec::with_capacity(cells.len());
        for polys in cells {
            let mut cf = Vec::with_capacity(polys.len());
            for p in polys {
                let mut key = p.clone();
                key.sort_unstable();
                let id = *index.entry(key).or_insert_with(|| {
                    faces.push(p.clone());
                    faces.len() - 1
                });
                cf.push(id);
            }
            cell_faces.push(cf);
        }
        Self::new(vertices, faces, cell_faces)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_cells[f].1.is_none()
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(|&f| self.is_boundary_face(f))
    }

    pub fn cell(&self, c: usize) -> &CellGeometry {
        &self.geometry.cells[c]
    }

    pub fn face(&self, f: usize) -> &FaceGeometry {
        &self.geometry.faces[f]
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        self.geometry.cells.iter().fold(0.0, |m, c| m.max(c.diameter))
    }

    pub fn total_volume(&self) -> f64 {
        self.geometry.cells.iter().map(|c| c.volume).sum()
    }

    /// Tags every boundary face, for both fields, from its barycenter.
    pub fn classify_boundary<F>(self, predicate: F) -> Result<Self>
    where
        F: Fn(&Point) -> BoundaryTag,
    {
        self.classify_boundary_field(Field::Mechanics, &predicate)?
            .classify_boundary_field(Field::Transport, &predicate)
    }

    /// Tags the boundary of one field only.
    pub fn classify_boundary_field<F>(mut self, field: Field, predicate: F) -> Result<Self>
    where
        F: Fn(&Point) -> BoundaryTag,
    {
        let nf = self.faces.len();
        let mut tags = vec![None; nf];
        for f in 0..nf {
            if self.is_boundary_face(f) {
                tags[f] = Some(predicate(&self.geometry.faces[f].barycenter));
            }
        }
        if !tags.iter().any(|t| *t == Some(BoundaryTag::Dirichlet)) {
            return Err(Error::EmptyDirichlet);
        }
        *self.tags.field_mut(field) = tags;
        Ok(self)
    }

    /// Tags from explicit face lists. Faces not listed stay untagged.
    pub fn set_tags(&mut self, field: Field, dirichlet: &[usize], neumann: &[usize]) -> Result<()> {
        let nf = self.faces.len();
        let tags = self.tags.field_mut(field);
        for (&f, tag) in dirichlet
            .iter()
            .map(|f| (f, BoundaryTag::Dirichlet))
            .chain(neumann.iter().map(|f| (f, BoundaryTag::Neumann)))
        {
            if f >= nf {
                return Err(Error::Parse(format!("tagged face {f} does not exist")));
            }
            tags[f] = Some(tag);
        }
        Ok(())
    }

    pub fn tag(&self, field: Field, f: usize) -> Option<BoundaryTag> {
        self.tags.field(field)[f]
    }

    /// Outward normal of face `f` as seen from `cell` (local face slot `k`).
    pub fn outward_normal(&self, cell: usize, k: usize) -> Vector3<f64> {
        let c = &self.cells[cell];
        self.geometry.faces[c.faces[k]].normal * c.orientation[k]
    }

    /// Sub-tetrahedral rule exact for `degree` on cell `c`: each face is fanned
    /// from its barycenter and every triangle coned to the cell barycenter.
    pub fn cell_quadrature(&self, c: usize, degree: usize) -> QuadRule {
        let cell = &self.cells[c];
        let apex = self.geometry.cells[c].barycenter;
        let mut rule = QuadRule::default();
        for (k, &f) in cell.faces.iter().enumerate() {
            let xf = self.geometry.faces[f].barycenter;
            let loop_ = &self.faces[f].vertices;
            let n = loop_.len();
            for i in 0..n {
                let (a, b) = (self.vertices[loop_[i]], self.vertices[loop_[(i + 1) % n]]);
                let (a, b) = if cell.orientation[k] > 0.0 { (a, b) } else { (b, a) };
                rule.append(tetra_rule(&apex, &xf, &a, &b, degree));
            }
        }
        rule
    }

    /// Moments of all scaled monomials of degree `<= degree` over cell `c`.
    pub fn cell_moments(&self, c: usize, degree: usize) -> MomentTable {
        let rule = self.cell_quadrature(c, degree);
        MomentTable::from_rule(&rule, self.geometry.cells[c].frame(), degree)
    }

    /// Fan rule on face `f` exact for `degree`.
    pub fn face_quadrature(&self, f: usize, degree: usize) -> QuadRule {
        let g = &self.geometry.faces[f];
        let loop_ = &self.faces[f].vertices;
        let n = loop_.len();
        let mut rule = QuadRule::default();
        for i in 0..n {
            let (a, b) = (self.vertices[loop_[i]], self.vertices[loop_[(i + 1) % n]]);
            let mut tri = triangle_rule(&g.barycenter, &a, &b, degree);
            if (a - g.barycenter).cross(&(b - g.barycenter)).dot(&g.normal) < 0.0 {
                tri.weights.iter_mut().for_each(|w| *w = -*w);
            }
            rule.append(tri);
        }
        rule
    }

    /// Closure residual `‖Σ σ_f |f| n_f‖ / Σ |f|` of a cell.
    pub fn closure_residual(&self, c: usize) -> f64 {
        let cell = &self.cells[c];
        let mut s = Vector3::zeros();
        let mut area = 0.0;
        for (k, &f) in cell.faces.iter().enumerate() {
            let g = &self.geometry.faces[f];
            s += g.normal * (g.area * cell.orientation[k]);
            area += g.area;
        }
        s.norm() / area
    }
}

fn cell_sign(cell: &Cell, f: usize) -> f64 {
    let k = cell.faces.iter().position(|&x| x == f).unwrap();
    cell.orientation[k]
}

fn face_geometry(i: usize, vertices: &[Point], loop_: &[usize]) -> Result<FaceGeometry> {
    let n = loop_.len();
    let p0 = vertices[loop_[0]];
    let mut area_vec = Vector3::zeros();
    for k in 1..n - 1 {
        area_vec += (vertices[loop_[k]] - p0).cross(&(vertices[loop_[k + 1]] - p0));
    }
    let area = 0.5 * area_vec.norm();
    let diameter = loop_
        .iter()
        .flat_map(|&a| loop_.iter().map(move |&b| (a, b)))
        .map(|(a, b)| (vertices[a] - vertices[b]).norm())
        .fold(0.0, f64::max);
    if area <= 1e-14 * diameter * diameter || diameter == 0.0 {
        return Err(Error::Geometry(format!("face {i} has zero area")));
    }
    let normal = area_vec / (2.0 * area);
    let mean = loop_.iter().map(|&v| vertices[v]).sum::<Point>() / n as f64;
    let mut bary = Vector3::zeros();
    let mut tot = 0.0;
    for k in 0..n {
        let (a, b) = (vertices[loop_[k]], vertices[loop_[(k + 1) % n]]);
        let w = 0.5 * (a - mean).cross(&(b - mean)).dot(&normal);
        bary += (mean + a + b) / 3.0 * w;
        tot += w;
    }
    let barycenter = bary / tot;
    let off_plane = loop_
        .iter()
        .map(|&v| (vertices[v] - barycenter).dot(&normal).abs())
        .fold(0.0, f64::max);
    if off_plane > PLANARITY_TOL * diameter {
        return Err(Error::Geometry(format!(
            "face {i} is not planar (off-plane distance {off_plane:e})"
        )));
    }
    let t1 = {
        let d = vertices[loop_[1]] - vertices[loop_[0]];
        let d = d - normal * d.dot(&normal);
        d.normalize()
    };
    let t2 = normal.cross(&t1);
    Ok(FaceGeometry {
        area,
        normal,
        barycenter,
        diameter,
        frame: Frame2 {
            origin: barycenter,
            t1,
            t2,
            scale: diameter,
        },
    })
}

/// Consistent outward orientation of a cell's faces from edge adjacency,
/// with the global sign fixed by the signed volume.
fn orient_cell(
    c: usize,
    cf: &[usize],
    faces: &[Face],
    geom: &[FaceGeometry],
    vertices: &[Point],
) -> Result<Vec<f64>> {
    let mut by_edge: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
    for (k, &f) in cf.iter().enumerate() {
        let l = &faces[f].vertices;
        for i in 0..l.len() {
            let (a, b) = (l[i], l[(i + 1) % l.len()]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push((k, a < b));
        }
    }
    if let Some((e, _)) = by_edge.iter().find(|(_, u)| u.len() != 2) {
        return Err(Error::Topology(format!(
            "cell {c} is not closed: edge ({}, {}) is used by {} faces",
            e.0,
            e.1,
            by_edge[e].len()
        )));
    }
    let mut sign = vec![0.0; cf.len()];
    sign[0] = 1.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(k) = queue.pop_front() {
        let l = &faces[cf[k]].vertices;
        for i in 0..l.len() {
            let (a, b) = (l[i], l[(i + 1) % l.len()]);
            for &(j, fwd) in &by_edge[&(a.min(b), a.max(b))] {
                if j == k {
                    continue;
                }
                // Adjacent faces must traverse the shared edge in opposite
                // directions once oriented.
                let mine = (a < b) == (sign[k] > 0.0);
                let want = if mine { -1.0 } else { 1.0 };
                let s = if fwd { want } else { -want };
                if sign[j] == 0.0 {
                    sign[j] = s;
                    queue.push_back(j);
                } else if sign[j] != s {
                    return Err(Error::Topology(format!("cell {c} is not orientable")));
                }
            }
        }
    }
    if sign.iter().any(|s| *s == 0.0) {
        return Err(Error::Topology(format!("cell {c} surface is disconnected")));
    }
    let reference = cf
        .iter()
        .flat_map(|&f| faces[f].vertices.iter())
        .map(|&v| vertices[v])
        .sum::<Point>()
        / cf.iter().map(|&f| faces[f].vertices.len()).sum::<usize>() as f64;
    let vol: f64 = cf
        .iter()
        .zip(&sign)
        .map(|(&f, s)| s * geom[f].area * (geom[f].barycenter - reference).dot(&geom[f].normal))
        .sum::<f64>()
        / 3.0;
    if vol < 0.0 {
        sign.iter_mut().for_each(|s| *s = -*s);
    }
    Ok(sign)
}

fn cell_geometry(
    c: usize,
    cell: &Cell,
    geom: &[FaceGeometry],
    faces: &[Face],
    vertices: &[Point],
) -> Result<CellGeometry> {
    let reference = cell.vertices.iter().map(|&v| vertices[v]).sum::<Point>() / cell.vertices.len() as f64;
    let mut volume = 0.0;
    let mut first = Vector3::zeros();
    let mut surface = Vector3::zeros();
    let mut total_area = 0.0;
    for (k, &f) in cell.faces.iter().enumerate() {
        let g = &geom[f];
        let s = cell.orientation[k];
        surface += g.normal * (g.area * s);
        total_area += g.area;
        let l = &faces[f].vertices;
        for i in 0..l.len() {
            let (a, b) = (vertices[l[i]], vertices[l[(i + 1) % l.len()]]);
            let v = s * (g.barycenter - reference).dot(&(a - reference).cross(&(b - reference))) / 6.0;
            volume += v;
            first += (reference + g.barycenter + a + b) / 4.0 * v;
        }
    }
    if surface.norm() > CLOSURE_TOL * total_area {
        return Err(Error::Topology(format!("cell {c} fails the closure check")));
    }
    let diameter = cell
        .vertices
        .iter()
        .flat_map(|&a| cell.vertices.iter().map(move |&b| (a, b)))
        .map(|(a, b)| (vertices[a] - vertices[b]).norm())
        .fold(0.0, f64::max);
    if volume <= 1e-14 * diameter.powi(3) {
        return Err(Error::Geometry(format!("cell {c} has non-positive volume {volume:e}")));
    }
    Ok(CellGeometry {
        volume,
        barycenter: first / volume,
        diameter,
    })
}
