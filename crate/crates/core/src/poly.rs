//! Scaled monomial bases, coefficient-level polynomial calculus and moment
//! tables.
//!
//! Every polynomial lives in the scaled variable `x̂ = (x - x_c) / h` of some
//! frame. Monomials are ordered graded-lexicographically (`x` exponent
//! descending, then `y`), and the ordering is prefix-stable across degrees so
//! a degree-`k` coefficient vector is also a valid degree-`k+1` one.

use nalgebra::{DMatrix, Vector3};

use crate::quadrature::{Point, QuadRule};

pub type MultiIndex = [u32; 3];

/// Number of trivariate monomials of degree `<= k`.
pub const fn dim3(k: usize) -> usize {
    (k + 1) * (k + 2) * (k + 3) / 6
}

/// Number of bivariate monomials of degree `<= k`.
pub const fn dim2(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

pub fn exponents3(k: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(dim3(k));
    for d in 0..=k as u32 {
        for a in (0..=d).rev() {
            for b in (0..=(d - a)).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

pub fn exponents2(k: usize) -> Vec<[u32; 2]> {
    let mut out = Vec::with_capacity(dim2(k));
    for d in 0..=k as u32 {
        for a in (0..=d).rev() {
            out.push([a, d - a]);
        }
    }
    out
}

pub fn index3(alpha: MultiIndex) -> usize {
    let d = (alpha[0] + alpha[1] + alpha[2]) as usize;
    let (a, b) = (alpha[0] as usize, alpha[1] as usize);
    let offset = if d == 0 { 0 } else { dim3(d - 1) };
    offset + (d - a) * (d - a + 1) / 2 + (d - a - b)
}

pub fn index2(alpha: [u32; 2]) -> usize {
    let d = (alpha[0] + alpha[1]) as usize;
    let offset = if d == 0 { 0 } else { dim2(d - 1) };
    offset + d - alpha[0] as usize
}

/// Degree of the monomial with graded-lex index `i`.
pub fn degree_of_index3(i: usize) -> usize {
    (0..).find(|&d| dim3(d) > i).unwrap()
}

/// Values of all monomials of degree `<= k` at the scaled point `xh`.
pub fn eval_monomials3(xh: &Point, k: usize) -> Vec<f64> {
    let pw = |v: f64| {
        let mut p = vec![1.0; k + 1];
        for i in 1..=k {
            p[i] = p[i - 1] * v;
        }
        p
    };
    let (px, py, pz) = (pw(xh.x), pw(xh.y), pw(xh.z));
    exponents3(k)
        .iter()
        .map(|a| px[a[0] as usize] * py[a[1] as usize] * pz[a[2] as usize])
        .collect()
}

pub fn eval_monomials2(s: f64, t: f64, k: usize) -> Vec<f64> {
    exponents2(k)
        .iter()
        .map(|a| s.powi(a[0] as i32) * t.powi(a[1] as i32))
        .collect()
}

/// Affine frame `x̂ = (x - center) / scale` of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame3 {
    pub center: Point,
    pub scale: f64,
}

impl Frame3 {
    pub fn new(center: Point, scale: f64) -> Self {
        Self { center, scale }
    }

    pub fn local(&self, x: &Point) -> Point {
        (x - self.center) / self.scale
    }
}

/// Planar frame of a face: origin, orthonormal in-plane axes and scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame2 {
    pub origin: Point,
    pub t1: Vector3<f64>,
    pub t2: Vector3<f64>,
    pub scale: f64,
}

impl Frame2 {
    pub fn local(&self, x: &Point) -> (f64, f64) {
        let d = x - self.origin;
        (d.dot(&self.t1) / self.scale, d.dot(&self.t2) / self.scale)
    }
}

/// Polynomial in scaled coordinates, coefficients in graded-lex order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn zero(k: usize) -> Self {
        Self {
            coeffs: vec![0.0; dim3(k)],
        }
    }

    pub fn monomial(alpha: MultiIndex) -> Self {
        let mut p = Self::zero((alpha[0] + alpha[1] + alpha[2]) as usize);
        p.coeffs[index3(alpha)] = 1.0;
        p
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        let k = degree_of_index3(coeffs.len().max(1) - 1);
        let mut coeffs = coeffs;
        coeffs.resize(dim3(k), 0.0);
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// Nominal degree (length of the coefficient vector).
    pub fn degree(&self) -> usize {
        degree_of_index3(self.coeffs.len().max(1) - 1)
    }

    pub fn eval(&self, xh: &Point) -> f64 {
        let m = eval_monomials3(xh, self.degree());
        self.coeffs.iter().zip(&m).map(|(c, m)| c * m).sum()
    }

    /// Partial derivative with respect to the scaled variable `x̂_i`.
    pub fn d(&self, i: usize) -> Poly {
        let k = self.degree();
        if k == 0 {
            return Poly::zero(0);
        }
        let mut out = Poly::zero(k - 1);
        for (j, a) in exponents3(k).iter().enumerate() {
            let c = self.coeffs[j];
            if c == 0.0 || a[i] == 0 {
                continue;
            }
            let mut b = *a;
            b[i] -= 1;
            out.coeffs[index3(b)] += c * a[i] as f64;
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let (ka, kb) = (self.degree(), other.degree());
        let ea = exponents3(ka);
        let eb = exponents3(kb);
        let mut out = Poly::zero(ka + kb);
        for (i, a) in ea.iter().enumerate() {
            if self.coeffs[i] == 0.0 {
                continue;
            }
            for (j, b) in eb.iter().enumerate() {
                if other.coeffs[j] == 0.0 {
                    continue;
                }
                let s = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                out.coeffs[index3(s)] += self.coeffs[i] * other.coeffs[j];
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            coeffs[i] += c;
        }
        Poly { coeffs }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

pub type VecPoly = [Poly; 3];

pub fn vec_poly_eval(v: &VecPoly, xh: &Point) -> Vector3<f64> {
    Vector3::new(v[0].eval(xh), v[1].eval(xh), v[2].eval(xh))
}

/// Coefficient-level differential operators for fields expressed in the
/// scaled variable of a frame with scale `h`. Each derivative carries one
/// factor `1/h`.
#[derive(Debug, Clone, Copy)]
pub struct Calculus {
    pub h: f64,
}

impl Calculus {
    pub fn new(h: f64) -> Self {
        Self { h }
    }

    pub fn grad(&self, p: &Poly) -> VecPoly {
        let s = 1.0 / self.h;
        [p.d(0).scaled(s), p.d(1).scaled(s), p.d(2).scaled(s)]
    }

    pub fn div(&self, v: &VecPoly) -> Poly {
        let s = 1.0 / self.h;
        v[0].d(0).add(&v[1].d(1)).add(&v[2].d(2)).scaled(s)
    }

    pub fn curl(&self, v: &VecPoly) -> VecPoly {
        let s = 1.0 / self.h;
        [
            v[2].d(1).add(&v[1].d(2).scaled(-1.0)).scaled(s),
            v[0].d(2).add(&v[2].d(0).scaled(-1.0)).scaled(s),
            v[1].d(0).add(&v[0].d(1).scaled(-1.0)).scaled(s),
        ]
    }

    /// Symmetric gradient `ε(v)` as a 3×3 array of polynomials.
    pub fn sym_grad(&self, v: &VecPoly) -> [[Poly; 3]; 3] {
        let s = 0.5 / self.h;
        std::array::from_fn(|i| std::array::from_fn(|j| v[i].d(j).add(&v[j].d(i)).scaled(s)))
    }

    /// Row-wise divergence of `ε(v)`.
    pub fn div_sym_grad(&self, v: &VecPoly) -> VecPoly {
        let e = self.sym_grad(v);
        let s = 1.0 / self.h;
        std::array::from_fn(|i| e[i][0].d(0).add(&e[i][1].d(1)).add(&e[i][2].d(2)).scaled(s))
    }

    pub fn laplacian(&self, p: &Poly) -> Poly {
        self.div(&self.grad(p))
    }
}

/// Integrals of every scaled monomial of degree `<= degree` over a cell or a
/// face.
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub frame: Frame3,
    pub degree: usize,
    pub values: Vec<f64>,
}

impl MomentTable {
    /// Exact moments from a quadrature rule that integrates degree `degree`
    /// exactly on the domain.
    pub fn from_rule(rule: &QuadRule, frame: Frame3, degree: usize) -> Self {
        let mut values = vec![0.0; dim3(degree)];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let m = eval_monomials3(&frame.local(p), degree);
            for (v, m) in values.iter_mut().zip(&m) {
                *v += w * m;
            }
        }
        Self {
            frame,
            degree,
            values,
        }
    }

    pub fn measure(&self) -> f64 {
        self.values[0]
    }

    pub fn integral(&self, p: &Poly) -> f64 {
        assert!(p.degree() <= self.degree, "moment table degree too low");
        p.coeffs.iter().zip(&self.values).map(|(c, m)| c * m).sum()
    }

    pub fn product(&self, p: &Poly, q: &Poly) -> f64 {
        self.integral(&p.mul(q))
    }

    /// Gram matrix `∫ m_i m_j` of the monomials of degree `<= k`.
    pub fn gram(&self, k: usize) -> DMatrix<f64> {
        assert!(2 * k <= self.degree);
        let e = exponents3(k);
        DMatrix::from_fn(e.len(), e.len(), |i, j| {
            let a = [e[i][0] + e[j][0], e[i][1] + e[j][1], e[i][2] + e[j][2]];
            self.values[index3(a)]
        })
    }
}

fn unit(c: usize, p: Poly) -> VecPoly {
    let mut v = [Poly::zero(0), Poly::zero(0), Poly::zero(0)];
    v[c] = p;
    v
}

fn cross_xhat(v: &VecPoly) -> VecPoly {
    let x = [
        Poly::monomial([1, 0, 0]),
        Poly::monomial([0, 1, 0]),
        Poly::monomial([0, 0, 1]),
    ];
    [
        x[1].mul(&v[2]).add(&x[2].mul(&v[1]).scaled(-1.0)),
        x[2].mul(&v[0]).add(&x[0].mul(&v[2]).scaled(-1.0)),
        x[0].mul(&v[1]).add(&x[1].mul(&v[0]).scaled(-1.0)),
    ]
}

/// `∇̂ ℳ_{k+1} \ {0}`: a basis of the gradient space `𝒢_k`.
pub fn gradient_basis(k: usize) -> Vec<VecPoly> {
    exponents3(k + 1)
        .iter()
        .skip(1)
        .map(|a| {
            let m = Poly::monomial(*a);
            [m.d(0), m.d(1), m.d(2)]
        })
        .collect()
}

/// `x̂ ∧ (ℳ_{k-1})³`: a spanning set of the complement `𝒢_k^⊕`.
pub fn cross_basis(k: usize) -> Vec<VecPoly> {
    if k == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for a in exponents3(k - 1) {
        for c in 0..3 {
            out.push(cross_xhat(&unit(c, Poly::monomial(a))));
        }
    }
    out
}

/// `curl (ℳ_{k+1})³` with zero fields dropped: a spanning set of `ℛ_k`.
pub fn curl_basis(k: usize) -> Vec<VecPoly> {
    let calc = Calculus::new(1.0);
    let mut out = Vec::new();
    for a in exponents3(k + 1) {
        for c in 0..3 {
            let v = calc.curl(&unit(c, Poly::monomial(a)));
            if v.iter().any(|p| p.max_abs_coeff() > 0.0) {
                out.push(v);
            }
        }
    }
    out
}

/// `x̂ ℳ_{k-1}`: a basis of the complement `ℛ_k^⊕`.
pub fn radial_basis(k: usize) -> Vec<VecPoly> {
    if k == 0 {
        return Vec::new();
    }
    let x = [
        Poly::monomial([1, 0, 0]),
        Poly::monomial([0, 1, 0]),
        Poly::monomial([0, 0, 1]),
    ];
    exponents3(k - 1)
        .iter()
        .map(|a| {
            let m = Poly::monomial(*a);
            std::array::from_fn(|c| x[c].mul(&m))
        })
        .collect()
}

/// Gram matrix `∫ u_i · u_j` of a set of vector polynomials.
pub fn vector_gram(table: &MomentTable, set: &[VecPoly]) -> DMatrix<f64> {
    let n = set.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..3).map(|c| table.product(&set[i][c], &set[j][c])).sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Numerical rank of a symmetric positive semi-definite matrix.
pub fn spd_rank(g: &DMatrix<f64>, rel_tol: f64) -> usize {
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    eig.eigenvalues.iter().filter(|v| **v > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(exponents3(0).len(), 1);
        assert_eq!(exponents3(1).len(), 4);
        assert_eq!(exponents3(2).len(), 10);
        assert_eq!(exponents2(3).len(), 10);
    }

    #[test]
    fn index_roundtrip() {
        for (i, a) in exponents3(6).iter().enumerate() {
            assert_eq!(index3(*a), i);
        }
        for (i, a) in exponents2(6).iter().enumerate() {
            assert_eq!(index2(*a), i);
        }
    }

    #[test]
    fn graded_lex_order() {
        assert_eq!(
            exponents3(2)[4..],
            [[2, 0, 0], [1, 1, 0], [1, 0, 1], [0, 2, 0], [0, 1, 1], [0, 0, 2]]
        );
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let g = Calculus::new(0.3).grad(&Poly::constant(4.0));
        assert!(g.iter().all(|p| p.max_abs_coeff() == 0.0));
    }

    #[test]
    fn div_of_xhat() {
        let h = 0.25;
        let v = [
            Poly::monomial([1, 0, 0]),
            Poly::monomial([0, 1, 0]),
            Poly::monomial([0, 0, 1]),
        ];
        let d = Calculus::new(h).div(&v);
        assert!((d.coeffs[0] - 3.0 / h).abs() < 1e-15);
    }

    #[test]
    fn product_of_monomials() {
        let p = Poly::monomial([1, 0, 0]).mul(&Poly::monomial([0, 2, 1]));
        assert_eq!(p, Poly::monomial([1, 2, 1]).add(&Poly::zero(4)));
    }
}
