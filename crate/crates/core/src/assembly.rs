//! Global numbering, boundary constraints and the two block systems.
//!
//! Both subproblems have cell-local unknowns (divergence moments and the P1
//! pressure for elasticity, interior flux moments for diffusion). They are
//! eliminated exactly per cell before the global factorization and recovered
//! afterwards, which leaves an SPD elasticity system on the boundary DoFs and
//! a smaller symmetric saddle system for diffusion. The uncondensed block
//! systems are also available for inspection and testing.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::coupling::{check_spd, MaterialLaw};
use crate::error::{Error, Result};
use crate::linsolve::{nested_dissection, Cholesky, CscMatrix, CscPattern, QuasiDefiniteLdlt, SparseLu, SKIP};
use crate::mesh::{BoundaryTag, Field, PolyMesh};
use crate::poly::{Calculus, Poly};
use crate::quadrature::Point;
use crate::space_elasticity::{face_mean, ElasticityLocal, NPRESS};
use crate::space_hdiv::{face_flux_moments, FluxLocal};

pub type VectorField<'a> = dyn Fn(&Point) -> Vector3<f64> + Sync + 'a;
pub type ScalarField<'a> = dyn Fn(&Point) -> f64 + Sync + 'a;
/// Traction as a function of position and outward unit normal.
pub type TractionField<'a> = dyn Fn(&Point, &Vector3<f64>) -> Vector3<f64> + Sync + 'a;

/// Data of the coupled problem. Missing entries are zero.
#[derive(Default)]
pub struct ProblemData<'a> {
    pub body_force: Option<&'a VectorField<'a>>,
    pub displacement_bc: Option<&'a VectorField<'a>>,
    pub traction: Option<&'a TractionField<'a>>,
    pub source: Option<&'a ScalarField<'a>>,
    pub concentration_bc: Option<&'a ScalarField<'a>>,
    /// Flux field whose normal moments are imposed on the transport
    /// Neumann boundary.
    pub boundary_flux: Option<&'a VectorField<'a>>,
}

/// Global numbering of all four fields.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub nv: usize,
    pub ne: usize,
    pub nf: usize,
    pub nc: usize,
    /// Displacement DoFs on the mechanical Dirichlet boundary.
    pub u_fixed: Vec<bool>,
    /// Flux face DoFs on the transport Neumann boundary.
    pub flux_fixed: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &PolyMesh) -> Result<Self> {
        let (nv, ne, nf, nc) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_faces(), mesh.num_cells());
        let mut map = Self {
            nv,
            ne,
            nf,
            nc,
            u_fixed: vec![false; 3 * (nv + ne + nf + nc)],
            flux_fixed: vec![false; 3 * (nf + nc)],
        };
        let mut any_mech = false;
        let mut any_transport = false;
        for f in mesh.boundary_faces() {
            if mesh.tag(Field::Mechanics, f) == Some(BoundaryTag::Dirichlet) {
                any_mech = true;
                let face = &mesh.faces[f];
                for c in 0..3 {
                    for &v in &face.vertices {
                        let i = map.u_vertex(v, c);
                        map.u_fixed[i] = true;
                    }
                    for &e in &face.edges {
                        let i = map.u_edge(e, c);
                        map.u_fixed[i] = true;
                    }
                    let i = map.u_face(f, c);
                    map.u_fixed[i] = true;
                }
            }
            match mesh.tag(Field::Transport, f) {
                Some(BoundaryTag::Neumann) => {
                    for j in 0..3 {
                        let i = map.flux_face(f, j);
                        map.flux_fixed[i] = true;
                    }
                }
                Some(BoundaryTag::Dirichlet) => any_transport = true,
                None => {}
            }
        }
        if !any_mech {
            return Err(Error::Constraint("no mechanical Dirichlet face: the elasticity system is singular".into()));
        }
        if !any_transport {
            return Err(Error::Constraint("no transport Dirichlet face: the concentration datum is unusable".into()));
        }
        Ok(map)
    }

    pub fn n_u(&self) -> usize {
        3 * (self.nv + self.ne + self.nf + self.nc)
    }

    /// Displacement DoFs attached to vertices, edges and faces.
    pub fn n_u_boundary(&self) -> usize {
        3 * (self.nv + self.ne + self.nf)
    }

    pub fn n_p(&self) -> usize {
        NPRESS * self.nc
    }

    pub fn n_flux(&self) -> usize {
        3 * (self.nf + self.nc)
    }

    pub fn n_phi(&self) -> usize {
        self.nc
    }

    pub fn u_vertex(&self, v: usize, c: usize) -> usize {
        3 * v + c
    }

    pub fn u_edge(&self, e: usize, c: usize) -> usize {
        3 * (self.nv + e) + c
    }

    pub fn u_face(&self, f: usize, c: usize) -> usize {
        3 * (self.nv + self.ne + f) + c
    }

    /// Location of a vertex, edge or face displacement DoF.
    pub fn u_boundary_point(&self, mesh: &PolyMesh, g: usize) -> Point {
        let e = g / 3;
        if e < self.nv {
            mesh.vertices[e]
        } else if e < self.nv + self.ne {
            let [a, b] = mesh.edges[e - self.nv];
            (mesh.vertices[a] + mesh.vertices[b]) * 0.5
        } else {
            mesh.face(e - self.nv - self.ne).barycenter
        }
    }

    pub fn u_cell(&self, k: usize, d: usize) -> usize {
        3 * (self.nv + self.ne + self.nf + k) + d
    }

    pub fn pressure(&self, k: usize, j: usize) -> usize {
        NPRESS * k + j
    }

    pub fn flux_face(&self, f: usize, j: usize) -> usize {
        3 * f + j
    }

    pub fn flux_cell(&self, k: usize, d: usize) -> usize {
        3 * (self.nf + k) + d
    }

    /// Local-to-global displacement indices of a cell.
    pub fn elasticity_map(&self, mesh: &PolyMesh, k: usize) -> Vec<usize> {
        let c = &mesh.cells[k];
        let mut out = Vec::with_capacity(3 * (c.vertices.len() + c.edges.len() + c.faces.len()) + 3);
        for &v in &c.vertices {
            out.extend((0..3).map(|d| self.u_vertex(v, d)));
        }
        for &e in &c.edges {
            out.extend((0..3).map(|d| self.u_edge(e, d)));
        }
        for &f in &c.faces {
            out.extend((0..3).map(|d| self.u_face(f, d)));
        }
        out.extend((0..3).map(|d| self.u_cell(k, d)));
        out
    }

    /// Local-to-global flux indices of a cell.
    pub fn flux_map(&self, mesh: &PolyMesh, k: usize) -> Vec<usize> {
        let c = &mesh.cells[k];
        let mut out = Vec::with_capacity(3 * c.faces.len() + 3);
        for &f in &c.faces {
            out.extend((0..3).map(|j| self.flux_face(f, j)));
        }
        out.extend((0..3).map(|d| self.flux_cell(k, d)));
        out
    }
}

/// Full per-field DoF vectors.
#[derive(Debug, Clone)]
pub struct SolutionState {
    pub u: DVector<f64>,
    pub p: DVector<f64>,
    pub zeta: DVector<f64>,
    pub phi: DVector<f64>,
}

impl SolutionState {
    pub fn zeros(map: &DofMap) -> Self {
        Self {
            u: DVector::zeros(map.n_u()),
            p: DVector::zeros(map.n_p()),
            zeta: DVector::zeros(map.n_flux()),
            phi: DVector::zeros(map.n_phi()),
        }
    }
}

/// Symmetric block system `[[A, Bᵀ], [B, -C]]` on the free unknowns,
/// with its right side. `offsets` gives the start of the second field.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    pub offset: usize,
    /// Global index of every free unknown of the first field.
    pub first_field: Vec<usize>,
}

impl BlockSystem {
    pub fn solve(&self) -> Result<Vec<f64>> {
        let mut lu = SparseLu::analyze(&self.matrix)?;
        lu.factorize(&self.matrix)?;
        lu.solve(&self.rhs)
    }
}

/// Scatters a solution of a [`BlockSystem`] into full field vectors, filling
/// constrained entries from `fixed`.
pub fn apply_solution(
    system: &BlockSystem,
    x: &[f64],
    first_len: usize,
    fixed: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.len() != system.rhs.len() || fixed.len() != first_len {
        return Err(Error::Dimension(format!(
            "solution has {} entries, system has {}",
            x.len(),
            system.rhs.len()
        )));
    }
    let mut first = fixed.clone();
    for (k, &g) in system.first_field.iter().enumerate() {
        first[g] = x[k];
    }
    let second = DVector::from_column_slice(&x[system.offset..]);
    Ok((first, second))
}

/// Numbering and all φ-independent local operators of a mesh.
pub struct Discretization {
    pub map: DofMap,
    pub elasticity: Vec<ElasticityLocal>,
    pub flux: Vec<FluxLocal>,
}

impl Discretization {
    pub fn new(mesh: &PolyMesh) -> Result<Self> {
        Ok(Self {
            map: DofMap::new(mesh)?,
            elasticity: elasticity_locals(mesh)?,
            flux: flux_locals(mesh)?,
        })
    }
}

/// Builds all local elasticity operators (φ-independent).
pub fn elasticity_locals(mesh: &PolyMesh) -> Result<Vec<ElasticityLocal>> {
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| ElasticityLocal::new(mesh, c))
        .collect()
}

pub fn flux_locals(mesh: &PolyMesh) -> Result<Vec<FluxLocal>> {
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| FluxLocal::new(mesh, c))
        .collect()
}

/// Cell average of a vector field by a degree-`order` cell rule.
fn cell_mean(mesh: &PolyMesh, c: usize, f: &VectorField, order: usize) -> Vector3<f64> {
    let rule = mesh.cell_quadrature(c, order);
    let mut s = Vector3::zeros();
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        s += f(p) * *w;
    }
    s / mesh.cell(c).volume
}

fn cell_integral(mesh: &PolyMesh, c: usize, f: &ScalarField, order: usize) -> f64 {
    mesh.cell_quadrature(c, order).integrate(|p| f(p))
}

/// Global interpolant of a smooth displacement given with its divergence.
pub fn interpolate_displacement(mesh: &PolyMesh, map: &DofMap, u: &VectorField, div_u: &ScalarField) -> DVector<f64> {
    let mut out = DVector::zeros(map.n_u());
    for (v, x) in mesh.vertices.iter().enumerate() {
        let val = u(x);
        for c in 0..3 {
            out[map.u_vertex(v, c)] = val[c];
        }
    }
    for (e, [a, b]) in mesh.edges.iter().enumerate() {
        let val = u(&((mesh.vertices[*a] + mesh.vertices[*b]) * 0.5));
        for c in 0..3 {
            out[map.u_edge(e, c)] = val[c];
        }
    }
    for f in 0..mesh.num_faces() {
        let val = face_mean(mesh, f, u);
        for c in 0..3 {
            out[map.u_face(f, c)] = val[c];
        }
    }
    for k in 0..mesh.num_cells() {
        let g = mesh.cell(k);
        let frame = g.frame();
        let rule = mesh.cell_quadrature(k, 8);
        for d in 0..3 {
            out[map.u_cell(k, d)] = g.diameter / g.volume * rule.integrate(|p| div_u(p) * frame.local(p)[d]);
        }
    }
    out
}

/// Global Fortin interpolant of a smooth flux.
pub fn interpolate_flux(mesh: &PolyMesh, map: &DofMap, xi: &VectorField) -> DVector<f64> {
    let mut out = DVector::zeros(map.n_flux());
    for f in 0..mesh.num_faces() {
        let m = face_flux_moments(mesh, f, xi);
        for j in 0..3 {
            out[map.flux_face(f, j)] = m[j];
        }
    }
    for k in 0..mesh.num_cells() {
        let frame = mesh.cell(k).frame();
        let vol = mesh.cell(k).volume;
        let rule = mesh.cell_quadrature(k, 8);
        for d in 0..3 {
            let e = Vector3::from_fn(|i, _| if i == d { 1.0 } else { 0.0 });
            out[map.flux_cell(k, d)] = rule.integrate(|p| xi(p).dot(&frame.local(p).cross(&e))) / vol;
        }
    }
    out
}

/// Prescribed displacement DoFs (zero elsewhere).
fn dirichlet_displacement(mesh: &PolyMesh, map: &DofMap, data: &ProblemData) -> DVector<f64> {
    let mut g = DVector::zeros(map.n_u());
    let Some(ud) = data.displacement_bc else {
        return g;
    };
    for f in mesh.boundary_faces() {
        if mesh.tag(Field::Mechanics, f) != Some(BoundaryTag::Dirichlet) {
            continue;
        }
        let face = &mesh.faces[f];
        for &v in &face.vertices {
            let val = ud(&mesh.vertices[v]);
            for c in 0..3 {
                g[map.u_vertex(v, c)] = val[c];
            }
        }
        for &e in &face.edges {
            let [a, b] = mesh.edges[e];
            let val = ud(&((mesh.vertices[a] + mesh.vertices[b]) * 0.5));
            for c in 0..3 {
                g[map.u_edge(e, c)] = val[c];
            }
        }
        let val = face_mean(mesh, f, ud);
        for c in 0..3 {
            g[map.u_face(f, c)] = val[c];
        }
    }
    g
}

/// Prescribed flux face DoFs on the transport Neumann boundary.
fn neumann_flux(mesh: &PolyMesh, map: &DofMap, data: &ProblemData) -> DVector<f64> {
    let mut g = DVector::zeros(map.n_flux());
    let Some(zn) = data.boundary_flux else {
        return g;
    };
    for f in mesh.boundary_faces() {
        if mesh.tag(Field::Transport, f) == Some(BoundaryTag::Neumann) {
            let m = face_flux_moments(mesh, f, zn);
            for j in 0..3 {
                g[map.flux_face(f, j)] = m[j];
            }
        }
    }
    g
}

/// Local right side of the displacement rows: `∫ f̄·v` plus tractions on
/// mechanical Neumann faces.
fn elasticity_load(mesh: &PolyMesh, local: &ElasticityLocal, data: &ProblemData) -> DVector<f64> {
    let k = local.cell;
    let mut rhs = DVector::zeros(local.ndof());
    if let Some(f) = data.body_force {
        rhs += local.load(&cell_mean(mesh, k, f, 6));
    }
    if let Some(t) = data.traction {
        let c = &mesh.cells[k];
        for (slot, &f) in c.faces.iter().enumerate() {
            if mesh.is_boundary_face(f) && mesh.tag(Field::Mechanics, f) == Some(BoundaryTag::Neumann) {
                let n = mesh.outward_normal(k, slot);
                rhs += local.traction(mesh, slot, &|x| t(x, &n));
            }
        }
    }
    rhs
}

/// Pressure right side `-λ⁻¹ ∫_P ℓ(φ_P) m_j`.
fn pressure_rhs(local: &ElasticityLocal, ell: f64, lambda: f64) -> DVector<f64> {
    DVector::from_fn(NPRESS, |j, _| -ell / lambda * local.moments.values[j])
}

/// Full local saddle matrix `[[K, Bᵀ], [B, -C]]` of a cell.
fn elasticity_local_matrix(local: &ElasticityLocal, mu: f64, lambda: f64, stab_scale: f64) -> DMatrix<f64> {
    let n = local.ndof();
    let mut m = DMatrix::zeros(n + NPRESS, n + NPRESS);
    m.view_mut((0, 0), (n, n)).copy_from(&local.stiffness(mu, stab_scale));
    m.view_mut((n, 0), (NPRESS, n)).copy_from(&local.coupling);
    m.view_mut((0, n), (n, NPRESS)).copy_from(&local.coupling.transpose());
    m.view_mut((n, n), (NPRESS, NPRESS)).copy_from(&(-local.pressure_mass(lambda)));
    m
}

/// Uncondensed elasticity block system on free displacement DoFs and all
/// pressure coefficients, with Dirichlet data lifted to the right side.
#[allow(clippy::too_many_arguments)]
pub fn assemble_elasticity(
    mesh: &PolyMesh,
    map: &DofMap,
    locals: &[ElasticityLocal],
    law: &dyn MaterialLaw,
    stab_scale: f64,
    phi: &DVector<f64>,
    data: &ProblemData,
) -> Result<BlockSystem> {
    let prm = law.params();
    let mut free = vec![SKIP; map.n_u()];
    let mut first_field = Vec::new();
    for (g, fixed) in map.u_fixed.iter().enumerate() {
        if !fixed {
            free[g] = first_field.len();
            first_field.push(g);
        }
    }
    let offset = first_field.len();
    let n = offset + map.n_p();
    let elements: Vec<Vec<usize>> = (0..mesh.num_cells())
        .map(|k| {
            let mut e: Vec<usize> = map.elasticity_map(mesh, k).iter().map(|&g| free[g]).collect();
            e.extend((0..NPRESS).map(|j| offset + map.pressure(k, j)));
            e
        })
        .collect();
    let mut matrix = CscMatrix::zeros(CscPattern::from_elements(n, &elements, false));
    let mut rhs = vec![0.0; n];
    let g = dirichlet_displacement(mesh, map, data);
    for (k, local) in locals.iter().enumerate() {
        let lm = elasticity_local_matrix(local, prm.mu, prm.lambda, stab_scale);
        let gmap = map.elasticity_map(mesh, k);
        let mut f = DVector::zeros(local.ndof() + NPRESS);
        f.rows_mut(0, local.ndof()).copy_from(&elasticity_load(mesh, local, data));
        f.rows_mut(local.ndof(), NPRESS)
            .copy_from(&pressure_rhs(local, law.ell(phi[k]), prm.lambda));
        let mut lifted = DVector::zeros(local.ndof() + NPRESS);
        for (a, &gi) in gmap.iter().enumerate() {
            lifted[a] = g[gi];
        }
        f -= &lm * lifted;
        matrix.add_local(&elements[k], &lm);
        for (a, &i) in elements[k].iter().enumerate() {
            if i != SKIP {
                rhs[i] += f[a];
            }
        }
    }
    Ok(BlockSystem {
        matrix,
        rhs,
        offset,
        first_field,
    })
}

struct CondensedElasticityCell {
    /// `Y⁻¹` of the interior block (divergence moments and pressure).
    yinv: DMatrix<f64>,
    /// `Y⁻¹ Xᵀ`.
    yinv_xt: DMatrix<f64>,
    /// Interior right side without the pressure source.
    f_int_static: DVector<f64>,
}

/// Elasticity operator with cell unknowns condensed out and the boundary
/// system factored once.
pub struct ElasticitySolver {
    cells: Vec<CondensedElasticityCell>,
    maps: Vec<Vec<usize>>,
    free: Vec<usize>,
    matrix: CscMatrix,
    factor: Cholesky,
    fixed: DVector<f64>,
    static_rhs: Vec<f64>,
    lambda: f64,
    /// Number of matrix assemblies performed by this operator.
    pub assemblies: usize,
    pub assembly_seconds: f64,
    pub factorization_seconds: f64,
}

const N_INT: usize = 3 + NPRESS;

impl ElasticitySolver {
    pub fn new(
        mesh: &PolyMesh,
        map: &DofMap,
        locals: &[ElasticityLocal],
        law: &dyn MaterialLaw,
        stab_scale: f64,
        data: &ProblemData,
    ) -> Result<Self> {
        let t0 = std::time::Instant::now();
        let prm = *law.params();
        let nb_total = map.n_u_boundary();
        let mut free = vec![SKIP; nb_total];
        let mut nfree = 0;
        for g in 0..nb_total {
            if !map.u_fixed[g] {
                free[g] = nfree;
                nfree += 1;
            }
        }
        let fixed = dirichlet_displacement(mesh, map, data);
        let maps: Vec<Vec<usize>> = (0..mesh.num_cells())
            .map(|k| {
                let m = map.elasticity_map(mesh, k);
                m[..m.len() - 3].to_vec()
            })
            .collect();
        let elements: Vec<Vec<usize>> = maps.iter().map(|m| m.iter().map(|&g| free[g]).collect()).collect();
        let mut matrix = CscMatrix::zeros(CscPattern::from_elements(nfree, &elements, true));
        let mut static_rhs = vec![0.0; nfree];

        let condensed: Vec<(CondensedElasticityCell, DMatrix<f64>, DVector<f64>)> = locals
            .par_iter()
            .map(|local| {
                let lm = elasticity_local_matrix(local, prm.mu, prm.lambda, stab_scale);
                let nb = local.layout.nboundary();
                let y = lm.view((nb, nb), (N_INT, N_INT)).into_owned();
                let x = lm.view((0, nb), (nb, N_INT)).into_owned();
                let yinv = y
                    .try_inverse()
                    .ok_or(Error::SingularProjection { cell: local.cell, what: "interior elasticity block" })?;
                let yinv_xt = &yinv * x.transpose();
                let s = lm.view((0, 0), (nb, nb)) - &x * &yinv_xt;
                let s = (&s + s.transpose()) * 0.5;
                let load = elasticity_load(mesh, local, data);
                let mut f_int_static = DVector::zeros(N_INT);
                f_int_static.rows_mut(0, 3).copy_from(&load.rows(nb, 3));
                let f_b = load.rows(0, nb) - yinv_xt.transpose() * &f_int_static;
                Ok((
                    CondensedElasticityCell {
                        yinv,
                        yinv_xt,
                        f_int_static,
                    },
                    s,
                    f_b,
                ))
            })
            .collect::<Result<_>>()?;
        let mut cells = Vec::with_capacity(condensed.len());
        for (k, (cell, s, f_b)) in condensed.into_iter().enumerate() {
            matrix.add_local(&elements[k], &s);
            let lifted = DVector::from_iterator(maps[k].len(), maps[k].iter().map(|&g| fixed[g]));
            let f = f_b - &s * lifted;
            for (a, &i) in elements[k].iter().enumerate() {
                if i != SKIP {
                    static_rhs[i] += f[a];
                }
            }
            cells.push(cell);
        }
        let assembly_seconds = t0.elapsed().as_secs_f64();
        let t1 = std::time::Instant::now();
        let mut coords = vec![[0.0; 3]; nfree];
        for g in 0..nb_total {
            if free[g] != SKIP {
                coords[free[g]] = map.u_boundary_point(mesh, g).into();
            }
        }
        let perm = nested_dissection(&matrix.pattern, &coords, 64);
        let factor = Cholesky::with_ordering(&matrix, Some(&perm))?;
        log::debug!(
            "elasticity: {} unknowns, {} matrix entries, {} factor entries",
            matrix.pattern.n,
            matrix.pattern.row_idx.len(),
            factor.factor_len()
        );
        Ok(Self {
            cells,
            maps,
            free,
            matrix,
            factor,
            fixed,
            static_rhs,
            lambda: prm.lambda,
            assemblies: 1,
            assembly_seconds,
            factorization_seconds: t1.elapsed().as_secs_f64(),
        })
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    fn rhs(&self, locals: &[ElasticityLocal], law: &dyn MaterialLaw, phi: &DVector<f64>) -> Vec<f64> {
        let mut rhs = self.static_rhs.clone();
        for (k, cell) in self.cells.iter().enumerate() {
            let q = pressure_rhs(&locals[k], law.ell(phi[k]), self.lambda);
            let contrib = cell.yinv_xt.rows(3, NPRESS).transpose() * q;
            for (a, &g) in self.maps[k].iter().enumerate() {
                let i = self.free[g];
                if i != SKIP {
                    rhs[i] -= contrib[a];
                }
            }
        }
        rhs
    }

    /// Solves for `(u, p)` with the pressure source `ℓ(φ)`. Returns the
    /// relative residual of the condensed system alongside.
    pub fn solve(
        &self,
        map: &DofMap,
        locals: &[ElasticityLocal],
        law: &dyn MaterialLaw,
        phi: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, f64) {
        let rhs = self.rhs(locals, law, phi);
        let x = self.factor.solve(&rhs);
        let ax = self.matrix.matvec(&x);
        let rn: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let resid = ax.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / rn.max(f64::MIN_POSITIVE);

        let mut u = self.fixed.clone();
        for (g, &i) in self.free.iter().enumerate() {
            if i != SKIP {
                u[g] = x[i];
            }
        }
        let mut p = DVector::zeros(map.n_p());
        for (k, cell) in self.cells.iter().enumerate() {
            let ub = DVector::from_iterator(self.maps[k].len(), self.maps[k].iter().map(|&g| u[g]));
            let mut fi = cell.f_int_static.clone();
            fi.rows_mut(3, NPRESS)
                .copy_from(&pressure_rhs(&locals[k], law.ell(phi[k]), self.lambda));
            let y = &cell.yinv * fi - &cell.yinv_xt * ub;
            for d in 0..3 {
                u[map.u_cell(k, d)] = y[d];
            }
            for j in 0..NPRESS {
                p[map.pressure(k, j)] = y[3 + j];
            }
        }
        (u, p, resid)
    }
}

/// Strain of `Π^ε u_h` and pressure `p_h` on a cell, as evaluable
/// polynomials.
pub struct MechanicalState {
    pub strain: [[Poly; 3]; 3],
    pub pressure: Poly,
}

impl MechanicalState {
    pub fn new(local: &ElasticityLocal, u_local: &DVector<f64>, p_coeffs: &[f64]) -> Self {
        let proj = local.project(u_local);
        let strain = Calculus::new(local.h).sym_grad(&proj);
        Self {
            strain,
            pressure: Poly::from_coeffs(p_coeffs.to_vec()),
        }
    }

    pub fn eval(&self, xh: &Point) -> (Matrix3<f64>, f64) {
        let e = Matrix3::from_fn(|i, j| self.strain[i][j].eval(xh));
        (e, self.pressure.eval(xh))
    }
}

fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&g| v[g]))
}

/// Local weighted flux matrix for the current mechanical state, with the
/// range of `𝕄⁻¹` eigenvalues met at the quadrature points.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_local_matrix(
    mesh: &PolyMesh,
    flux: &FluxLocal,
    elast: &ElasticityLocal,
    u_local: &DVector<f64>,
    p_coeffs: &[f64],
    law: &dyn MaterialLaw,
    quad_order: usize,
) -> Result<(DMatrix<f64>, f64, f64)> {
    let k = flux.cell;
    let state = MechanicalState::new(elast, u_local, p_coeffs);
    let frame = mesh.cell(k).frame();
    let rule = mesh.cell_quadrature(k, quad_order);
    let mut minv = Vec::with_capacity(rule.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &rule.points {
        let (e, pr) = state.eval(&frame.local(p));
        let m = law.minv(&e, pr, p);
        let (a, b) = check_spd(&m, k)?;
        lo = lo.min(a);
        hi = hi.max(b);
        minv.push(m);
    }
    let xp = mesh.cell(k).barycenter;
    let (e0, p0) = state.eval(&Point::zeros());
    let scale = law.minv(&e0, p0, &xp).trace() / 3.0;
    let w = flux.weighted_gram(mesh, &rule, &minv);
    Ok((flux.weighted_matrix(&w, scale), lo, hi))
}

/// Uncondensed diffusion block system on free flux DoFs and all cell
/// concentrations.
#[allow(clippy::too_many_arguments)]
pub fn assemble_diffusion(
    mesh: &PolyMesh,
    map: &DofMap,
    flux_locals: &[FluxLocal],
    elast_locals: &[ElasticityLocal],
    law: &dyn MaterialLaw,
    u: &DVector<f64>,
    p: &DVector<f64>,
    data: &ProblemData,
    quad_order: usize,
) -> Result<BlockSystem> {
    let theta = law.params().theta;
    let mut free = vec![SKIP; map.n_flux()];
    let mut first_field = Vec::new();
    for (g, fixed) in map.flux_fixed.iter().enumerate() {
        if !fixed {
            free[g] = first_field.len();
            first_field.push(g);
        }
    }
    let offset = first_field.len();
    let n = offset + map.n_phi();
    let elements: Vec<Vec<usize>> = (0..mesh.num_cells())
        .map(|k| {
            let mut e: Vec<usize> = map.flux_map(mesh, k).iter().map(|&g| free[g]).collect();
            e.push(offset + k);
            e
        })
        .collect();
    let mut matrix = CscMatrix::zeros(CscPattern::from_elements(n, &elements, false));
    let mut rhs = vec![0.0; n];
    let gn = neumann_flux(mesh, map, data);
    for k in 0..mesh.num_cells() {
        let fl = &flux_locals[k];
        let el = &elast_locals[k];
        let ul = gather(u, &map.elasticity_map(mesh, k));
        let pk: Vec<f64> = (0..NPRESS).map(|j| p[map.pressure(k, j)]).collect();
        let (a, _, _) = diffusion_local_matrix(mesh, fl, el, &ul, &pk, law, quad_order)?;
        let nd = fl.ndof();
        let mut lm = DMatrix::zeros(nd + 1, nd + 1);
        lm.view_mut((0, 0), (nd, nd)).copy_from(&a);
        let b = fl.coupling();
        lm.view_mut((nd, 0), (1, nd)).copy_from(&b);
        lm.view_mut((0, nd), (nd, 1)).copy_from(&b.transpose());
        lm[(nd, nd)] = -theta * fl.volume;
        let f = diffusion_local_rhs(mesh, fl, data)?;
        let fmap = map.flux_map(mesh, k);
        let mut lifted = DVector::zeros(nd + 1);
        for (a, &g) in fmap.iter().enumerate() {
            lifted[a] = gn[g];
        }
        let f = f - &lm * lifted;
        matrix.add_local(&elements[k], &lm);
        for (a, &i) in elements[k].iter().enumerate() {
            if i != SKIP {
                rhs[i] += f[a];
            }
        }
    }
    Ok(BlockSystem {
        matrix,
        rhs,
        offset,
        first_field,
    })
}

/// Local right side `(⟨φ_D, ξ·n⟩_{Γ_D}, -∫_P g)` over flux DoFs and the
/// cell concentration.
fn diffusion_local_rhs(mesh: &PolyMesh, fl: &FluxLocal, data: &ProblemData) -> Result<DVector<f64>> {
    let k = fl.cell;
    let nd = fl.ndof();
    let mut f = DVector::zeros(nd + 1);
    if let Some(phi_d) = data.concentration_bc {
        for (slot, &face) in mesh.cells[k].faces.iter().enumerate() {
            if mesh.is_boundary_face(face) && mesh.tag(Field::Transport, face) == Some(BoundaryTag::Dirichlet) {
                let v = fl.dirichlet_face_vector(mesh, slot, phi_d);
                for j in 0..3 {
                    f[fl.layout.face(slot, j)] += v[j];
                }
            }
        }
    }
    if let Some(g) = data.source {
        f[nd] = -cell_integral(mesh, k, g, 6);
    }
    Ok(f)
}

struct CondensedFluxCell {
    /// `A_ii⁻¹ A_if`, recovering interior DoFs from face DoFs.
    recover: DMatrix<f64>,
}

/// Diffusion operator with the interior flux moments condensed out. The
/// face/concentration saddle system is refactored at every update, reusing
/// the symbolic analysis.
pub struct DiffusionSolver {
    free: Vec<usize>,
    offset: usize,
    elements: Vec<Vec<usize>>,
    face_maps: Vec<Vec<usize>>,
    pattern: CscPattern,
    ldlt: QuasiDefiniteLdlt,
    matrix: Option<CscMatrix>,
    cells: Vec<CondensedFluxCell>,
    fixed: DVector<f64>,
    static_rhs: Vec<f64>,
    current_rhs: Vec<f64>,
    pub assemblies: usize,
}

/// Per-iteration diagnostics of a diffusion solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiffusionStats {
    pub residual: f64,
    pub minv_min: f64,
    pub minv_max: f64,
    pub assembly_seconds: f64,
    pub factorization_seconds: f64,
}

/// Nested dissection on the free face flux DoFs (placed at the face
/// barycenters), with each cell concentration ordered right after the last
/// of its faces so that its pivot is taken on the condensed face block.
fn flux_ordering(mesh: &PolyMesh, free: &[usize], offset: usize, elements: &[Vec<usize>]) -> Vec<usize> {
    let face_elements: Vec<Vec<usize>> = elements.iter().map(|e| e[..e.len() - 1].to_vec()).collect();
    let face_pattern = CscPattern::from_elements(offset, &face_elements, true);
    let mut coords = vec![[0.0; 3]; offset];
    for (g, &i) in free.iter().enumerate() {
        if i != SKIP {
            coords[i] = mesh.face(g / 3).barycenter.into();
        }
    }
    let faces = nested_dissection(&face_pattern, &coords, 64);
    let mut position = vec![0usize; offset];
    for (k, &i) in faces.iter().enumerate() {
        position[i] = k;
    }
    let mut after: Vec<Vec<usize>> = vec![Vec::new(); offset];
    let mut order = Vec::with_capacity(offset + elements.len());
    for (k, e) in face_elements.iter().enumerate() {
        match e.iter().filter(|&&i| i != SKIP).max_by_key(|&&i| position[i]) {
            Some(&last) => after[last].push(offset + k),
            None => order.push(offset + k),
        }
    }
    for &i in &faces {
        order.push(i);
        order.extend_from_slice(&after[i]);
    }
    order
}

impl DiffusionSolver {
    pub fn new(mesh: &PolyMesh, map: &DofMap, flux_locals: &[FluxLocal], data: &ProblemData) -> Result<Self> {
        let nface = 3 * map.nf;
        let mut free = vec![SKIP; nface];
        let mut nfree = 0;
        for g in 0..nface {
            if !map.flux_fixed[g] {
                free[g] = nfree;
                nfree += 1;
            }
        }
        let offset = nfree;
        let face_maps: Vec<Vec<usize>> = (0..mesh.num_cells())
            .map(|k| {
                let m = map.flux_map(mesh, k);
                m[..m.len() - 3].to_vec()
            })
            .collect();
        let elements: Vec<Vec<usize>> = face_maps
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let mut e: Vec<usize> = m.iter().map(|&g| free[g]).collect();
                e.push(offset + k);
                e
            })
            .collect();
        let pattern = CscPattern::from_elements(offset + map.nc, &elements, true);
        let fixed = neumann_flux(mesh, map, data);
        let mut static_rhs = vec![0.0; offset + map.nc];
        for (k, fl) in flux_locals.iter().enumerate() {
            let f = diffusion_local_rhs(mesh, fl, data)?;
            let nb = 3 * mesh.cells[k].faces.len();
            for (a, &i) in elements[k].iter().enumerate() {
                if i != SKIP {
                    let la = if a < nb { a } else { fl.ndof() };
                    static_rhs[i] += f[la];
                }
            }
        }
        let perm = flux_ordering(mesh, &free, offset, &elements);
        let mut signs = vec![1i8; offset + map.nc];
        signs[offset..].fill(-1);
        let ldlt = QuasiDefiniteLdlt::analyze(&pattern, &perm, signs)?;
        log::debug!(
            "diffusion: {} unknowns, {} matrix entries, {} factor entries",
            pattern.n,
            pattern.nnz(),
            ldlt.factor_len()
        );
        Ok(Self {
            free,
            offset,
            elements,
            face_maps,
            pattern,
            ldlt,
            matrix: None,
            cells: Vec::new(),
            fixed,
            current_rhs: static_rhs.clone(),
            static_rhs,
            assemblies: 0,
        })
    }

    /// Assembles and factors the system for the current mechanical state.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        mesh: &PolyMesh,
        map: &DofMap,
        flux_locals: &[FluxLocal],
        elast_locals: &[ElasticityLocal],
        law: &dyn MaterialLaw,
        u: &DVector<f64>,
        p: &DVector<f64>,
        quad_order: usize,
    ) -> Result<DiffusionStats> {
        let t0 = std::time::Instant::now();
        let theta = law.params().theta;
        let locals: Vec<(CondensedFluxCell, DMatrix<f64>, f64, f64)> = (0..mesh.num_cells())
            .into_par_iter()
            .map(|k| {
                let fl = &flux_locals[k];
                let ul = gather(u, &map.elasticity_map(mesh, k));
                let pk: Vec<f64> = (0..NPRESS).map(|j| p[map.pressure(k, j)]).collect();
                let (a, lo, hi) = diffusion_local_matrix(mesh, fl, &elast_locals[k], &ul, &pk, law, quad_order)?;
                let nb = 3 * fl.layout.nf;
                let aii = a.view((nb, nb), (3, 3)).into_owned();
                let aif = a.view((nb, 0), (3, nb)).into_owned();
                let recover = aii
                    .try_inverse()
                    .ok_or(Error::SingularProjection { cell: k, what: "interior flux block" })?
                    * &aif;
                let s = a.view((0, 0), (nb, nb)) - aif.transpose() * &recover;
                let mut lm = DMatrix::zeros(nb + 1, nb + 1);
                lm.view_mut((0, 0), (nb, nb)).copy_from(&((&s + s.transpose()) * 0.5));
                let b = fl.coupling();
                for j in 0..nb {
                    lm[(nb, j)] = b[(0, j)];
                    lm[(j, nb)] = b[(0, j)];
                }
                lm[(nb, nb)] = -theta * fl.volume;
                Ok((CondensedFluxCell { recover }, lm, lo, hi))
            })
            .collect::<Result<_>>()?;
        let mut matrix = CscMatrix::zeros(self.pattern.clone());
        let mut cells = Vec::with_capacity(locals.len());
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut rhs = self.static_rhs.clone();
        for (k, (cell, lm, a, b)) in locals.into_iter().enumerate() {
            matrix.add_local(&self.elements[k], &lm);
            let nb = self.face_maps[k].len();
            let mut lifted = DVector::zeros(nb + 1);
            for (i, &g) in self.face_maps[k].iter().enumerate() {
                lifted[i] = self.fixed[g];
            }
            if lifted.amax() != 0.0 {
                let f = &lm * lifted;
                for (i, &r) in self.elements[k].iter().enumerate() {
                    if r != SKIP {
                        rhs[r] -= f[i];
                    }
                }
            }
            lo = lo.min(a);
            hi = hi.max(b);
            cells.push(cell);
        }
        let assembly_seconds = t0.elapsed().as_secs_f64();
        let t1 = std::time::Instant::now();
        self.ldlt.factorize(&matrix)?;
        self.cells = cells;
        self.matrix = Some(matrix);
        self.assemblies += 1;
        self.current_rhs = rhs;
        Ok(DiffusionStats {
            residual: 0.0,
            minv_min: lo,
            minv_max: hi,
            assembly_seconds,
            factorization_seconds: t1.elapsed().as_secs_f64(),
        })
    }

    /// Solves the factored system and recovers the full flux. Returns the
    /// relative residual of the condensed system.
    pub fn solve(&self, map: &DofMap) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        let matrix = self
            .matrix
            .as_ref()
            .ok_or_else(|| Error::LinearSolver("diffusion system used before assembly".into()))?;
        let (x, resid) = self.ldlt.solve(matrix, &self.current_rhs, 10)?;

        let mut zeta = self.fixed.clone();
        for (g, &i) in self.free.iter().enumerate() {
            if i != SKIP {
                zeta[g] = x[i];
            }
        }
        for (k, cell) in self.cells.iter().enumerate() {
            let zf = gather(&zeta, &self.face_maps[k]);
            let zi = -(&cell.recover * zf);
            for d in 0..3 {
                zeta[map.flux_cell(k, d)] = zi[d];
            }
        }
        let phi = DVector::from_column_slice(&x[self.offset..]);
        Ok((zeta, phi, resid))
    }

    pub fn matrix(&self) -> Option<&CscMatrix> {
        self.matrix.as_ref()
    }
}
