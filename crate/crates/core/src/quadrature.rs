//! Gauss–Jacobi based quadrature on segments, triangles and tetrahedra.
//!
//! Simplex rules are collapsed (Duffy) tensor products: the Jacobian factors
//! `(1-u)^a` are absorbed into Gauss–Jacobi weights, so an `n`-point rule per
//! direction is exact for total degree `2n-1`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen, Vector3};

pub type Point = Vector3<f64>;

/// Quadrature points and weights in physical coordinates.
#[derive(Debug, Clone, Default)]
pub struct QuadRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: FnMut(&Point) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    pub fn append(&mut self, other: QuadRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

/// Nodes and weights of the `n`-point Gauss–Jacobi rule on `[-1, 1]` for the
/// weight `(1-t)^alpha (1+t)^beta`, via the Golub–Welsch eigenproblem.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let ab = alpha + beta;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let k = i as f64;
        let diag = if i == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * k + ab) * (2.0 * k + ab + 2.0))
        };
        jac[(i, i)] = diag;
        if i + 1 < n {
            let m = k + 1.0;
            let num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
            let den = (2.0 * m + ab).powi(2) * (2.0 * m + ab + 1.0) * (2.0 * m + ab - 1.0);
            let off = (num / den).sqrt();
            jac[(i, i + 1)] = off;
            jac[(i + 1, i)] = off;
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma(alpha + 1.0) * gamma(beta + 1.0) / gamma(ab + 2.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

// Exponents are always integers here.
fn gamma(x: f64) -> f64 {
    debug_assert!((x - x.round()).abs() < 1e-12);
    (1..x.round() as i64).map(|k| k as f64).product()
}

/// Rule on `[0, 1]` for the weight `(1-u)^alpha`, memoized since simplex
/// rules are rebuilt for every cell.
fn unit_jacobi(n: usize, alpha: u32) -> (Vec<f64>, Vec<f64>) {
    type Cache = Mutex<HashMap<(usize, u32), (Vec<f64>, Vec<f64>)>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&(n, alpha)) {
        return r.clone();
    }
    let r = unit_jacobi_uncached(n, alpha);
    cache.lock().unwrap().insert((n, alpha), r.clone());
    r
}

fn unit_jacobi_uncached(n: usize, alpha: u32) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_jacobi(n, alpha as f64, 0.0);
    let scale = 0.5f64.powi(alpha as i32 + 1);
    let u = t.iter().map(|t| 0.5 * (1.0 + t)).collect();
    let w = w.iter().map(|w| w * scale).collect();
    (u, w)
}

/// Gauss–Legendre rule on `[0, 1]` exact for polynomials of `degree`.
pub fn segment_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    unit_jacobi(degree / 2 + 1, 0)
}

fn points_for(degree: usize) -> usize {
    degree / 2 + 1
}

/// Rule on the triangle `(a, b, c)` exact for total degree `degree`.
pub fn triangle_rule(a: &Point, b: &Point, c: &Point, degree: usize) -> QuadRule {
    let n = points_for(degree);
    let (u, wu) = unit_jacobi(n, 1);
    let (v, wv) = unit_jacobi(n, 0);
    let area2 = (b - a).cross(&(c - a)).norm();
    let mut rule = QuadRule::default();
    for (ui, wui) in u.iter().zip(&wu) {
        for (vj, wvj) in v.iter().zip(&wv) {
            let s = *ui;
            let t = vj * (1.0 - ui);
            rule.points.push(a + (b - a) * s + (c - a) * t);
            rule.weights.push(wui * wvj * area2);
        }
    }
    rule
}

/// Rule on the tetrahedron `(a, b, c, d)` exact for total degree `degree`.
/// Weights carry the sign of the oriented volume, so a signed cone
/// decomposition of a closed surface integrates correctly.
pub fn tetra_rule(a: &Point, b: &Point, c: &Point, d: &Point, degree: usize) -> QuadRule {
    let n = points_for(degree);
    let (u, wu) = unit_jacobi(n, 2);
    let (v, wv) = unit_jacobi(n, 1);
    let (w, ww) = unit_jacobi(n, 0);
    let det6 = (b - a).dot(&(c - a).cross(&(d - a)));
    let mut rule = QuadRule::default();
    for (ui, wui) in u.iter().zip(&wu) {
        for (vj, wvj) in v.iter().zip(&wv) {
            for (wk, wwk) in w.iter().zip(&ww) {
                let s = *ui;
                let t = vj * (1.0 - ui);
                let r = wk * (1.0 - ui) * (1.0 - vj);
                rule.points.push(a + (b - a) * s + (c - a) * t + (d - a) * r);
                rule.weights.push(wui * wvj * wwk * det6);
            }
        }
    }
    rule
}
