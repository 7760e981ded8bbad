//! Lowest-order (k = 1) H(div)-conforming virtual element space for fluxes
//! and the piecewise-constant concentration space.
//!
//! Local DoFs: for every face, three moments `(1/|f|) ∫_f ξ·n_f m` with
//! `m ∈ {1, ŝ, t̂}` in the face frame and `n_f` the global face normal, so a
//! shared face carries identical DoFs in both cells; then three interior
//! moments `(1/|P|) ∫_P ξ·(x̂ × e_k)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::PolyMesh;
use crate::poly::{eval_monomials2, eval_monomials3, MomentTable};
use crate::quadrature::{Point, QuadRule};

/// Number of vector polynomials in `(P1)³`, indexed `4 c + i`.
pub const NPOLY: usize = 12;

#[derive(Debug, Clone, Copy)]
pub struct FluxLayout {
    pub nf: usize,
}

impl FluxLayout {
    pub fn ndof(&self) -> usize {
        3 * self.nf + 3
    }

    pub fn face(&self, k: usize, j: usize) -> usize {
        3 * k + j
    }

    pub fn interior(&self, d: usize) -> usize {
        3 * self.nf + d
    }
}

#[derive(Debug, Clone)]
pub struct FluxLocal {
    pub cell: usize,
    pub layout: FluxLayout,
    pub volume: f64,
    pub h: f64,
    pub moments: MomentTable,
    /// `NPOLY × ndof`: DoFs to `(P1)³` coefficients of `Π⁰ ξ`.
    pub pi: DMatrix<f64>,
    /// `ndof × NPOLY`.
    pub dofs_of_basis: DMatrix<f64>,
    /// `1 × ndof`: the constant `div ξ`.
    pub div: DMatrix<f64>,
    /// `|P| (I - Π̃)ᵀ (I - Π̃)`.
    pub stab: DMatrix<f64>,
    /// `Πᵀ G Π` with the unweighted `L²` Gram `G`.
    pub mass: DMatrix<f64>,
    /// Per face slot, inverse of the face `P1` Gram.
    pub face_gram_inv: Vec<Matrix3<f64>>,
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

fn invert(a: DMatrix<f64>, cell: usize, what: &'static str) -> Result<DMatrix<f64>> {
    let scale = a.amax();
    let lu = a.full_piv_lu();
    let diag_min = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(diag_min > 1e-13 * scale) {
        return Err(Error::SingularProjection { cell, what });
    }
    lu.try_inverse().ok_or(Error::SingularProjection { cell, what })
}

impl FluxLocal {
    pub fn new(mesh: &PolyMesh, cell: usize) -> Result<Self> {
        let c = &mesh.cells[cell];
        let geo = mesh.cell(cell);
        let layout = FluxLayout { nf: c.faces.len() };
        let ndof = layout.ndof();
        let (vol, h) = (geo.volume, geo.diameter);
        let frame = geo.frame();
        let moments = mesh.cell_moments(cell, 4);

        let mut dmat = DMatrix::zeros(ndof, NPOLY);
        let mut tmat = DMatrix::zeros(NPOLY, ndof);
        let mut face_gram_inv = Vec::with_capacity(layout.nf);
        let mut div = DMatrix::zeros(1, ndof);
        for (k, &f) in c.faces.iter().enumerate() {
            let g = mesh.face(f);
            let sigma = c.orientation[k];
            let rule = mesh.face_quadrature(f, 4);
            let mut mf = Matrix3::zeros();
            let mut q = DMatrix::<f64>::zeros(3, 10);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let (s, t) = g.frame.local(p);
                let phi = [1.0, s, t];
                let m = eval_monomials3(&frame.local(p), 2);
                for i in 0..3 {
                    for j in 0..3 {
                        mf[(i, j)] += w * phi[i] * phi[j];
                    }
                    for j in 0..10 {
                        q[(i, j)] += w * phi[i] * m[j];
                    }
                }
            }
            let mf_inv = mf
                .try_inverse()
                .ok_or(Error::SingularProjection { cell, what: "face Gram" })?;
            // DoFs of (P1)³ basis: (1/|f|) ∫ m_i n_c φ_j.
            for comp in 0..3 {
                for i in 0..4 {
                    for j in 0..3 {
                        dmat[(layout.face(k, j), 4 * comp + i)] = q[(j, i)] * g.normal[comp] / g.area;
                    }
                }
            }
            div[(0, layout.face(k, 0))] = sigma * g.area / vol;
            // Boundary part of ∫ ξ·∇m_j: σ ∫_f (ξ·n_f) m_j, with ξ·n_f
            // recovered from its three moments.
            let recon = mf_inv * g.area; // face DoFs -> P1(f) coefficients
            for j in 1..10 {
                for s in 0..3 {
                    let mut v = 0.0;
                    for i in 0..3 {
                        v += q[(i, j)] * recon[(i, s)];
                    }
                    tmat[(j - 1, layout.face(k, s))] += sigma * v;
                }
            }
            face_gram_inv.push(mf_inv);
        }
        // Volume part: -div ξ ∫ m_j.
        for j in 1..10 {
            let mj = moments.values[j];
            for s in 0..ndof {
                tmat[(j - 1, s)] -= div[(0, s)] * mj;
            }
        }
        for d in 0..3 {
            tmat[(9 + d, layout.interior(d))] = vol;
            // (x̂ × e_d)_comp = Σ_q ε_{comp q d} x̂_q
            for comp in 0..3 {
                for q in 0..3 {
                    let e = levi_civita(comp, q, d);
                    if e == 0.0 {
                        continue;
                    }
                    for i in 0..4 {
                        let mut a = crate::poly::exponents3(1)[i];
                        a[q] += 1;
                        dmat[(layout.interior(d), 4 * comp + i)] += e * moments.values[crate::poly::index3(a)] / vol;
                    }
                }
            }
        }

        // Decomposition basis in (P1)³ coefficients: ∇m_j (j = 1..9), x̂ × e_d.
        let mut emat = DMatrix::zeros(NPOLY, NPOLY);
        let e2 = crate::poly::exponents3(2);
        let e1 = crate::poly::exponents3(1);
        for j in 1..10 {
            let a = e2[j];
            for comp in 0..3 {
                if a[comp] == 0 {
                    continue;
                }
                let mut b = a;
                b[comp] -= 1;
                let i = e1.iter().position(|x| *x == b).unwrap();
                emat[(j - 1, 4 * comp + i)] += a[comp] as f64 / h;
            }
        }
        for d in 0..3 {
            for comp in 0..3 {
                for q in 0..3 {
                    let e = levi_civita(comp, q, d);
                    if e != 0.0 {
                        emat[(9 + d, 4 * comp + 1 + q)] += e;
                    }
                }
            }
        }
        let gram1 = moments.gram(1);
        let mut gram = DMatrix::zeros(NPOLY, NPOLY);
        for comp in 0..3 {
            gram.view_mut((4 * comp, 4 * comp), (4, 4)).copy_from(&gram1);
        }
        let mom = invert(emat, cell, "flux decomposition")? * tmat;
        let pi = invert(gram.clone(), cell, "flux Gram")? * mom;

        let mut resid = -(&dmat * &pi);
        for i in 0..ndof {
            resid[(i, i)] += 1.0;
        }
        let stab = {
            let s = resid.transpose() * &resid * vol;
            (&s + s.transpose()) * 0.5
        };
        let mass = {
            let m = pi.transpose() * &gram * &pi;
            (&m + m.transpose()) * 0.5
        };
        Ok(Self {
            cell,
            layout,
            volume: vol,
            h,
            moments,
            pi,
            dofs_of_basis: dmat,
            div,
            stab,
            mass,
            face_gram_inv,
        })
    }

    pub fn ndof(&self) -> usize {
        self.layout.ndof()
    }

    /// `∫ 𝕄⁻¹ m_a · m_b` from values of `𝕄⁻¹` at the points of `rule`.
    pub fn weighted_gram(&self, mesh: &PolyMesh, rule: &QuadRule, minv: &[Matrix3<f64>]) -> DMatrix<f64> {
        let frame = mesh.cell(self.cell).frame();
        let mut w = DMatrix::zeros(NPOLY, NPOLY);
        for ((p, wt), k) in rule.points.iter().zip(&rule.weights).zip(minv) {
            let m = eval_monomials3(&frame.local(p), 1);
            for c in 0..3 {
                for d in c..3 {
                    let kcd = k[(c, d)] * wt;
                    if kcd == 0.0 {
                        continue;
                    }
                    for i in 0..4 {
                        for j in 0..4 {
                            w[(4 * c + i, 4 * d + j)] += kcd * m[i] * m[j];
                        }
                    }
                }
            }
        }
        for c in 0..3 {
            for d in 0..c {
                for i in 0..4 {
                    for j in 0..4 {
                        w[(4 * c + i, 4 * d + j)] = w[(4 * d + j, 4 * c + i)];
                    }
                }
            }
        }
        w
    }

    /// `Πᵀ W Π + s |P| (I-Π̃)ᵀ(I-Π̃)`.
    pub fn weighted_matrix(&self, weighted_gram: &DMatrix<f64>, minv_scale: f64) -> DMatrix<f64> {
        let a = self.pi.transpose() * weighted_gram * &self.pi + &self.stab * minv_scale;
        (&a + a.transpose()) * 0.5
    }

    /// `ψ`-row of the coupling `∫_P ψ div ξ` for the constant `ψ = 1`.
    pub fn coupling(&self) -> DMatrix<f64> {
        &self.div * self.volume
    }

    /// `P1(f)` coefficients of `ξ·n_f` from the three DoFs of face slot `k`.
    pub fn normal_trace(&self, mesh: &PolyMesh, k: usize, face_dofs: &[f64; 3]) -> Vector3<f64> {
        let f = mesh.cells[self.cell].faces[k];
        self.face_gram_inv[k] * Vector3::from_column_slice(face_dofs) * mesh.face(f).area
    }

    /// `⟨φ_D, ξ·n_out⟩_f` on face slot `k`, as a vector over that face's DoFs.
    pub fn dirichlet_face_vector(&self, mesh: &PolyMesh, k: usize, phi_d: &dyn Fn(&Point) -> f64) -> Vector3<f64> {
        let c = &mesh.cells[self.cell];
        let f = c.faces[k];
        let g = mesh.face(f);
        let rule = mesh.face_quadrature(f, 6);
        let mut mom = Vector3::zeros();
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let (s, t) = g.frame.local(p);
            mom += Vector3::new(1.0, s, t) * (w * phi_d(p));
        }
        self.face_gram_inv[k] * mom * (g.area * c.orientation[k])
    }

    /// Coefficients of `Π⁰ ξ` as three `P1` coefficient arrays.
    pub fn project(&self, dofs: &DVector<f64>) -> [[f64; 4]; 3] {
        let p = &self.pi * dofs;
        std::array::from_fn(|c| std::array::from_fn(|i| p[4 * c + i]))
    }

    /// Local Fortin interpolant of a smooth field.
    pub fn interpolate(&self, mesh: &PolyMesh, xi: &dyn Fn(&Point) -> Vector3<f64>) -> DVector<f64> {
        let c = &mesh.cells[self.cell];
        let mut out = DVector::zeros(self.ndof());
        for (k, &f) in c.faces.iter().enumerate() {
            let v = face_flux_moments(mesh, f, xi);
            for j in 0..3 {
                out[self.layout.face(k, j)] = v[j];
            }
        }
        let frame = mesh.cell(self.cell).frame();
        let rule = mesh.cell_quadrature(self.cell, 8);
        for d in 0..3 {
            let e = Vector3::from_fn(|i, _| if i == d { 1.0 } else { 0.0 });
            out[self.layout.interior(d)] = rule.integrate(|p| xi(p).dot(&frame.local(p).cross(&e))) / self.volume;
        }
        out
    }
}

/// `(1/|f|) ∫_f ξ·n_f m` for the face monomials `1, ŝ, t̂`.
pub fn face_flux_moments(mesh: &PolyMesh, f: usize, xi: &dyn Fn(&Point) -> Vector3<f64>) -> [f64; 3] {
    let g = mesh.face(f);
    let rule = mesh.face_quadrature(f, 8);
    let mut out = [0.0; 3];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let (s, t) = g.frame.local(p);
        let m = eval_monomials2(s, t, 1);
        let xn = xi(p).dot(&g.normal) * w / g.area;
        for j in 0..3 {
            out[j] += xn * m[j];
        }
    }
    out
}

/// Value of a `(P1)³` coefficient triple at `x`.
pub fn eval_p1_vector(coeffs: &[[f64; 4]; 3], frame: &crate::poly::Frame3, x: &Point) -> Vector3<f64> {
    let m = eval_monomials3(&frame.local(x), 1);
    Vector3::from_fn(|c, _| (0..4).map(|i| coeffs[c][i] * m[i]).sum())
}
