//! Lowest-order (k = 2) enhanced virtual element space for displacements and
//! the discontinuous P1 pressure space.
//!
//! Local DoFs, in order: three components at every cell vertex, at every edge
//! midpoint, the face means `(1/|f|) ∫_f v`, and the three divergence moments
//! `(h_P/|P|) ∫_P div v x̂_k`. Vertices and edges follow the sorted global ids
//! stored on the cell, faces follow the cell face list.
//!
//! Face traces are enhanced so that moments against `P2(f)` equal those of
//! the face `H¹` projection, which only needs boundary DoFs. That makes the
//! energy projection, the divergence and the cell mean computable.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::mesh::PolyMesh;
use crate::poly::{dim3, eval_monomials2, eval_monomials3, Calculus, MomentTable, Poly, VecPoly};
use crate::quadrature::Point;

/// Number of vector polynomials in `(P2)³`.
pub const NPOLY: usize = 30;
/// Scalar P1 pressure coefficients per cell.
pub const NPRESS: usize = 4;

/// Offsets of the DoF groups inside a local vector.
#[derive(Debug, Clone, Copy)]
pub struct ElasticityLayout {
    pub nv: usize,
    pub ne: usize,
    pub nf: usize,
}

impl ElasticityLayout {
    pub fn ndof(&self) -> usize {
        3 * (self.nv + self.ne + self.nf) + 3
    }

    pub fn vertex(&self, i: usize, c: usize) -> usize {
        3 * i + c
    }

    pub fn edge(&self, j: usize, c: usize) -> usize {
        3 * (self.nv + j) + c
    }

    pub fn face(&self, k: usize, c: usize) -> usize {
        3 * (self.nv + self.ne + k) + c
    }

    pub fn div(&self, d: usize) -> usize {
        3 * (self.nv + self.ne + self.nf) + d
    }

    /// Number of boundary DoFs (everything except the divergence moments).
    pub fn nboundary(&self) -> usize {
        3 * (self.nv + self.ne + self.nf)
    }
}

/// Scalar `H¹` projection of a face trace onto `P2(f)`, with local face
/// DoFs ordered as vertex values, edge-midpoint values, face mean.
#[derive(Debug, Clone)]
pub struct FaceProjector {
    /// Cell-local vertex index of each face vertex, in loop order.
    pub vertices: Vec<usize>,
    /// Cell-local edge index of each face edge, in loop order.
    pub edges: Vec<usize>,
    /// `6 × (2n + 1)` map from scalar face DoFs to `P2(f)` coefficients.
    pub proj: DMatrix<f64>,
    /// `∫_f φ_j m_i` for face monomials `φ_j` and cell monomials `m_i` of
    /// degree `<= 1`, shape `6 × 4`.
    pub cell_p1: DMatrix<f64>,
}

impl FaceProjector {
    fn n(&self) -> usize {
        self.vertices.len()
    }

    /// Local cell index of scalar face DoF `s` for component `c`.
    fn cell_index(&self, layout: &ElasticityLayout, face_slot: usize, s: usize, c: usize) -> usize {
        let n = self.n();
        if s < n {
            layout.vertex(self.vertices[s], c)
        } else if s < 2 * n {
            layout.edge(self.edges[s - n], c)
        } else {
            layout.face(face_slot, c)
        }
    }

    /// Row vector over scalar face DoFs giving `∫_f v g` for a cell P1
    /// polynomial `g` (4 coefficients).
    fn moment_row(&self, g: &[f64]) -> DVector<f64> {
        let qg = &self.cell_p1 * DVector::from_column_slice(&g[..4]);
        self.proj.transpose() * qg
    }
}

#[derive(Debug, Clone)]
pub struct ElasticityLocal {
    pub cell: usize,
    pub layout: ElasticityLayout,
    pub volume: f64,
    pub h: f64,
    pub moments: MomentTable,
    /// `NPOLY × ndof`: DoFs to `(P2)³` coefficients, index `10 c + i`.
    pub pi: DMatrix<f64>,
    /// `ndof × NPOLY`: DoFs of the basis polynomials.
    pub dofs_of_basis: DMatrix<f64>,
    /// `NPOLY × NPOLY` energy Gram `∫ ε(m_a):ε(m_b)`.
    pub energy_gram: DMatrix<f64>,
    /// `4 × ndof`: P1 coefficients of `div v`.
    pub div: DMatrix<f64>,
    /// `3 × ndof`: `∫_P v_d`.
    pub integral: DMatrix<f64>,
    /// `4 × ndof`: `-∫_P m_j div v`.
    pub coupling: DMatrix<f64>,
    /// `4 × 4` Gram of the pressure basis.
    pub pressure_gram: DMatrix<f64>,
    pub faces: Vec<FaceProjector>,
}

fn kronecker_sym_grad(calc: &Calculus, a: usize) -> [[Poly; 3]; 3] {
    calc.sym_grad(&basis_poly(a))
}

/// Vector basis polynomial `m_i e_c` with `a = 10 c + i`.
pub fn basis_poly(a: usize) -> VecPoly {
    let (c, i) = (a / 10, a % 10);
    let mut coeffs = vec![0.0; dim3(2)];
    coeffs[i] = 1.0;
    let mut v = [Poly::zero(0), Poly::zero(0), Poly::zero(0)];
    v[c] = Poly::from_coeffs(coeffs);
    v
}

fn p1_coeffs(p: &Poly) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, c) in out.iter_mut().zip(&p.coeffs) {
        *o = *c;
    }
    assert!(p.coeffs.iter().skip(4).all(|c| *c == 0.0));
    out
}

fn solve_dense(a: DMatrix<f64>, b: &DMatrix<f64>, cell: usize, what: &'static str) -> Result<DMatrix<f64>> {
    let scale = a.amax();
    let lu = a.full_piv_lu();
    let diag_min = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(diag_min > 1e-13 * scale) {
        return Err(Error::SingularProjection { cell, what });
    }
    lu.solve(b).ok_or(Error::SingularProjection { cell, what })
}

impl ElasticityLocal {
    pub fn new(mesh: &PolyMesh, cell: usize) -> Result<Self> {
        let c = &mesh.cells[cell];
        let geo = mesh.cell(cell);
        let layout = ElasticityLayout {
            nv: c.vertices.len(),
            ne: c.edges.len(),
            nf: c.faces.len(),
        };
        let ndof = layout.ndof();
        let (vol, h) = (geo.volume, geo.diameter);
        let frame = geo.frame();
        let calc = Calculus::new(h);
        let moments = mesh.cell_moments(cell, 4);

        let faces: Vec<FaceProjector> = (0..layout.nf)
            .map(|k| face_projector(mesh, cell, k))
            .collect::<Result<_>>()?;

        // DoFs of the (P2)³ basis.
        let mut dmat = DMatrix::zeros(ndof, NPOLY);
        for (i, &v) in c.vertices.iter().enumerate() {
            let m = eval_monomials3(&frame.local(&mesh.vertices[v]), 2);
            for comp in 0..3 {
                for (j, mj) in m.iter().enumerate() {
                    dmat[(layout.vertex(i, comp), 10 * comp + j)] = *mj;
                }
            }
        }
        for (i, &e) in c.edges.iter().enumerate() {
            let [a, b] = mesh.edges[e];
            let mid = (mesh.vertices[a] + mesh.vertices[b]) * 0.5;
            let m = eval_monomials3(&frame.local(&mid), 2);
            for comp in 0..3 {
                for (j, mj) in m.iter().enumerate() {
                    dmat[(layout.edge(i, comp), 10 * comp + j)] = *mj;
                }
            }
        }
        for (k, &f) in c.faces.iter().enumerate() {
            let rule = mesh.face_quadrature(f, 2);
            let mut mean = [0.0; 10];
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                for (acc, m) in mean.iter_mut().zip(eval_monomials3(&frame.local(p), 2)) {
                    *acc += w * m;
                }
            }
            let area = mesh.face(f).area;
            for comp in 0..3 {
                for (j, mj) in mean.iter().enumerate() {
                    dmat[(layout.face(k, comp), 10 * comp + j)] = mj / area;
                }
            }
        }
        for a in 0..NPOLY {
            let div = calc.div(&basis_poly(a));
            for d in 0..3 {
                let xk = Poly::monomial(unit_exponent(d));
                dmat[(layout.div(d), a)] = h / vol * moments.product(&div, &xk);
            }
        }

        // Scatter of a face moment row into cell DoFs for component `comp`.
        let scatter = |row: &mut DVector<f64>, k: usize, comp: usize, face_row: &DVector<f64>, s: f64| {
            for (sidx, v) in face_row.iter().enumerate() {
                row[faces[k].cell_index(&layout, k, sidx, comp)] += s * v;
            }
        };

        // ∫_P v_d = -|P| D4_d + h Σ_f σ_f Σ_c n_fc ∫_f v_c x̂_d.
        let mut integral = DMatrix::zeros(3, ndof);
        for d in 0..3 {
            let mut row = DVector::zeros(ndof);
            row[layout.div(d)] = -vol;
            let mut g = [0.0; 4];
            g[1 + d] = 1.0;
            for (k, &f) in c.faces.iter().enumerate() {
                let n = mesh.face(f).normal * c.orientation[k];
                let face_row = faces[k].moment_row(&g);
                for comp in 0..3 {
                    scatter(&mut row, k, comp, &face_row, h * n[comp]);
                }
            }
            integral.set_row(d, &row.transpose());
        }

        // Divergence: ∫ div v = Σ σ |f| n·mean, ∫ div v x̂_k = |P| D4_k / h.
        let mut div_moments = DMatrix::zeros(4, ndof);
        for (k, &f) in c.faces.iter().enumerate() {
            let g = mesh.face(f);
            let n = g.normal * c.orientation[k];
            for comp in 0..3 {
                div_moments[(0, layout.face(k, comp))] += g.area * n[comp];
            }
        }
        for d in 0..3 {
            div_moments[(1 + d, layout.div(d))] = vol / h;
        }
        let pressure_gram = moments.gram(1);
        let div = solve_dense(pressure_gram.clone(), &div_moments, cell, "pressure Gram")?;
        let coupling = -div_moments;

        // Energy Gram.
        let eps: Vec<[[Poly; 3]; 3]> = (0..NPOLY).map(|a| kronecker_sym_grad(&calc, a)).collect();
        let mut energy_gram = DMatrix::zeros(NPOLY, NPOLY);
        for a in 0..NPOLY {
            for b in a..NPOLY {
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        if eps[a][p][q].max_abs_coeff() != 0.0 && eps[b][p][q].max_abs_coeff() != 0.0 {
                            s += moments.product(&eps[a][p][q], &eps[b][p][q]);
                        }
                    }
                }
                energy_gram[(a, b)] = s;
                energy_gram[(b, a)] = s;
            }
        }

        // Right side of the energy projection: -∫ v·div ε(m_a) + ∮ v·ε(m_a)n.
        let mut rhs = DMatrix::zeros(NPOLY, ndof);
        for a in 0..NPOLY {
            let mut row = DVector::zeros(ndof);
            let w = calc.div_sym_grad(&basis_poly(a));
            for d in 0..3 {
                let wd = w[d].coeffs.first().copied().unwrap_or(0.0);
                if wd != 0.0 {
                    row -= integral.row(d).transpose() * wd;
                }
            }
            for (k, &f) in c.faces.iter().enumerate() {
                let n = mesh.face(f).normal * c.orientation[k];
                for comp in 0..3 {
                    let mut g = Poly::zero(1);
                    for q in 0..3 {
                        g = g.add(&eps[a][comp][q].scaled(n[q]));
                    }
                    let g = p1_coeffs(&g);
                    if g.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    scatter(&mut row, k, comp, &faces[k].moment_row(&g), 1.0);
                }
            }
            rhs.set_row(a, &row.transpose());
        }

        // Rigid body constraints: ∮ v·r for translations and rotations.
        let mut rbm = DMatrix::zeros(6, ndof);
        for (k, &f) in c.faces.iter().enumerate() {
            let area = mesh.face(f).area;
            for comp in 0..3 {
                rbm[(comp, layout.face(k, comp))] += area;
            }
            for axis in 0..3 {
                // (e_axis × x̂)_comp = Σ_q ε_{comp, axis, q} x̂_q
                for comp in 0..3 {
                    let mut g = [0.0; 4];
                    for q in 0..3 {
                        g[1 + q] = levi_civita(comp, axis, q);
                    }
                    if g.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let face_row = faces[k].moment_row(&g);
                    let mut row = DVector::zeros(ndof);
                    scatter(&mut row, k, comp, &face_row, 1.0);
                    for j in 0..ndof {
                        rbm[(3 + axis, j)] += row[j];
                    }
                }
            }
        }
        let rbm_poly = &rbm * &dmat;
        let mut kkt = DMatrix::zeros(NPOLY + 6, NPOLY + 6);
        kkt.view_mut((0, 0), (NPOLY, NPOLY)).copy_from(&energy_gram);
        kkt.view_mut((NPOLY, 0), (6, NPOLY)).copy_from(&rbm_poly);
        kkt.view_mut((0, NPOLY), (NPOLY, 6)).copy_from(&rbm_poly.transpose());
        let mut kkt_rhs = DMatrix::zeros(NPOLY + 6, ndof);
        kkt_rhs.view_mut((0, 0), (NPOLY, ndof)).copy_from(&rhs);
        kkt_rhs.view_mut((NPOLY, 0), (6, ndof)).copy_from(&rbm);
        let sol = solve_dense(kkt, &kkt_rhs, cell, "energy projection")?;
        let pi = sol.rows(0, NPOLY).into_owned();

        Ok(Self {
            cell,
            layout,
            volume: vol,
            h,
            moments,
            pi,
            dofs_of_basis: dmat,
            energy_gram,
            div,
            integral,
            coupling,
            pressure_gram,
            faces,
        })
    }

    pub fn ndof(&self) -> usize {
        self.layout.ndof()
    }

    /// `Πᵀ G Π`.
    pub fn consistency(&self) -> DMatrix<f64> {
        let k = self.pi.transpose() * &self.energy_gram * &self.pi;
        (&k + k.transpose()) * 0.5
    }

    /// `h_P (I - Π̃)ᵀ (I - Π̃)`.
    pub fn stab(&self) -> DMatrix<f64> {
        let mut resid = -(&self.dofs_of_basis * &self.pi);
        for i in 0..self.ndof() {
            resid[(i, i)] += 1.0;
        }
        let s = resid.transpose() * &resid * self.h;
        (&s + s.transpose()) * 0.5
    }

    /// `2μ (ΠᵀGΠ + s h_P (I-Π̃)ᵀ(I-Π̃))`.
    pub fn stiffness(&self, mu: f64, stab_scale: f64) -> DMatrix<f64> {
        (self.consistency() + self.stab() * stab_scale) * (2.0 * mu)
    }

    /// `λ⁻¹ ∫ p q`.
    pub fn pressure_mass(&self, lambda: f64) -> DMatrix<f64> {
        &self.pressure_gram / lambda
    }

    /// Load vector `∫_P f̄·v` for a constant `f̄`.
    pub fn load(&self, fbar: &Vector3<f64>) -> DVector<f64> {
        self.integral.transpose() * fbar
    }

    /// Traction vector `∫_f t·v` on local face slot `k`, with `t` sampled by
    /// a face rule. The trace is replaced by its face projection, which is
    /// exact for tractions in `P2(f)`.
    pub fn traction(&self, mesh: &PolyMesh, k: usize, t: &dyn Fn(&Point) -> Vector3<f64>) -> DVector<f64> {
        let f = mesh.cells[self.cell].faces[k];
        let fr = &mesh.face(f).frame;
        let rule = mesh.face_quadrature(f, 6);
        let mut mom = [[0.0; 6]; 3];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let (s, tt) = fr.local(p);
            let phi = eval_monomials2(s, tt, 2);
            let tv = t(p);
            for c in 0..3 {
                for j in 0..6 {
                    mom[c][j] += w * tv[c] * phi[j];
                }
            }
        }
        let fp = &self.faces[k];
        let mut out = DVector::zeros(self.ndof());
        for c in 0..3 {
            let row = fp.proj.transpose() * DVector::from_column_slice(&mom[c]);
            for (s, v) in row.iter().enumerate() {
                out[fp.cell_index(&self.layout, k, s, c)] += v;
            }
        }
        out
    }

    /// `(P2)³` coefficients of `Π^ε v`.
    pub fn project(&self, dofs: &DVector<f64>) -> VecPoly {
        let coeffs = &self.pi * dofs;
        std::array::from_fn(|c| Poly::from_coeffs(coeffs.rows(10 * c, 10).iter().copied().collect()))
    }

    /// Local DoFs of a smooth field given its values and divergence.
    pub fn interpolate(
        &self,
        mesh: &PolyMesh,
        u: &dyn Fn(&Point) -> Vector3<f64>,
        div_u: &dyn Fn(&Point) -> f64,
    ) -> DVector<f64> {
        let c = &mesh.cells[self.cell];
        let l = &self.layout;
        let mut out = DVector::zeros(l.ndof());
        for (i, &v) in c.vertices.iter().enumerate() {
            let val = u(&mesh.vertices[v]);
            for comp in 0..3 {
                out[l.vertex(i, comp)] = val[comp];
            }
        }
        for (i, &e) in c.edges.iter().enumerate() {
            let [a, b] = mesh.edges[e];
            let val = u(&((mesh.vertices[a] + mesh.vertices[b]) * 0.5));
            for comp in 0..3 {
                out[l.edge(i, comp)] = val[comp];
            }
        }
        for (k, &f) in c.faces.iter().enumerate() {
            let val = face_mean(mesh, f, u);
            for comp in 0..3 {
                out[l.face(k, comp)] = val[comp];
            }
        }
        let frame = mesh.cell(self.cell).frame();
        let rule = mesh.cell_quadrature(self.cell, 8);
        for d in 0..3 {
            out[l.div(d)] = self.h / self.volume * rule.integrate(|p| div_u(p) * frame.local(p)[d]);
        }
        out
    }
}

/// `(1/|f|) ∫_f u` by a degree-8 face rule.
pub fn face_mean(mesh: &PolyMesh, f: usize, u: &dyn Fn(&Point) -> Vector3<f64>) -> Vector3<f64> {
    let rule = mesh.face_quadrature(f, 8);
    let mut s = Vector3::zeros();
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        s += u(p) * *w;
    }
    s / mesh.face(f).area
}

fn unit_exponent(d: usize) -> [u32; 3] {
    let mut a = [0; 3];
    a[d] = 1;
    a
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

fn face_projector(mesh: &PolyMesh, cell: usize, k: usize) -> Result<FaceProjector> {
    let c = &mesh.cells[cell];
    let f = c.faces[k];
    let face = &mesh.faces[f];
    let g = mesh.face(f);
    let fr = &g.frame;
    let hf = fr.scale;
    let n = face.vertices.len();
    let cframe = mesh.cell(cell).frame();
    let vertices: Vec<usize> = face
        .vertices
        .iter()
        .map(|v| c.vertices.binary_search(v).unwrap())
        .collect();
    let edges: Vec<usize> = face.edges.iter().map(|e| c.edges.binary_search(e).unwrap()).collect();

    // Face monomials 1, s, t, s², st, t² in the scaled face frame.
    let grad = |s: f64, t: f64| -> [[f64; 2]; 6] {
        [
            [0.0, 0.0],
            [1.0 / hf, 0.0],
            [0.0, 1.0 / hf],
            [2.0 * s / hf, 0.0],
            [t / hf, s / hf],
            [0.0, 2.0 * t / hf],
        ]
    };
    let lap = [0.0, 0.0, 0.0, 2.0 / (hf * hf), 0.0, 2.0 / (hf * hf)];

    let rule = mesh.face_quadrature(f, 4);
    let mut gram = DMatrix::zeros(6, 6);
    let mut cell_p1 = DMatrix::zeros(6, 4);
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let (s, t) = fr.local(p);
        let phi = eval_monomials2(s, t, 2);
        let gr = grad(s, t);
        for i in 1..6 {
            for j in 1..6 {
                gram[(i, j)] += w * (gr[i][0] * gr[j][0] + gr[i][1] * gr[j][1]);
            }
        }
        for j in 0..6 {
            gram[(0, j)] += w * phi[j];
        }
        let m = eval_monomials3(&cframe.local(p), 1);
        for i in 0..6 {
            for j in 0..4 {
                cell_p1[(i, j)] += w * phi[i] * m[j];
            }
        }
    }

    // ∫∇v·∇φ_i = -Δφ_i |f| mean + Σ_e ∫_e v ∂_n φ_i, with Simpson on edges.
    let mut rhs = DMatrix::zeros(6, 2 * n + 1);
    rhs[(0, 2 * n)] = g.area;
    for i in 1..6 {
        rhs[(i, 2 * n)] = -lap[i] * g.area;
    }
    for e in 0..n {
        let (a, b) = (mesh.vertices[face.vertices[e]], mesh.vertices[face.vertices[(e + 1) % n]]);
        let len = (b - a).norm();
        let ne = (b - a).cross(&g.normal) / len;
        let ne2 = [ne.dot(&fr.t1), ne.dot(&fr.t2)];
        let mid = (a + b) * 0.5;
        for (slot, x, wt) in [(e, a, 1.0), (n + e, mid, 4.0), ((e + 1) % n, b, 1.0)] {
            let (s, t) = fr.local(&x);
            let gr = grad(s, t);
            for i in 1..6 {
                rhs[(i, slot)] += len / 6.0 * wt * (gr[i][0] * ne2[0] + gr[i][1] * ne2[1]);
            }
        }
    }
    let proj = solve_dense(gram, &rhs, cell, "face projection")?;
    Ok(FaceProjector {
        vertices,
        edges,
        proj,
        cell_p1,
    })
}
