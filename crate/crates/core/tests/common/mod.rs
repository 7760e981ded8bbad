//! Reference geometry, quadrature and Gram matrices built without the
//! library's own integration or projection code.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vemsad::mesh::{build_box_mesh, PolyMesh, StructuredKind};
use vemsad::quadrature::Point;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss01(n: usize) -> Vec<(f64, f64)> {
    let legendre = |x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
    };
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(x);
            ((1.0 - x) * 0.5, 1.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

#[derive(Default, Clone)]
pub struct Rule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate<T>(&self, f: impl Fn(&Point) -> T) -> T
    where
        T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Default,
    {
        let mut s = T::default();
        for (p, w) in self.points.iter().zip(&self.weights) {
            s = s + f(p) * *w;
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Collapsed (Duffy) product rule with `n` points per direction.
pub fn tet_rule(a: &Point, b: &Point, c: &Point, d: &Point, n: usize, out: &mut Rule) {
    let g = gauss01(n);
    let vol6 = (b - a).cross(&(c - a)).dot(&(d - a)).abs();
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            for &(w, ww) in &g {
                let (x, y, z) = (u, v * (1.0 - u), w * (1.0 - u) * (1.0 - v));
                out.points.push(a + (b - a) * x + (c - a) * y + (d - a) * z);
                out.weights.push(wu * wv * ww * (1.0 - u).powi(2) * (1.0 - v) * vol6);
            }
        }
    }
}

/// Rule on a convex cell: faces fanned from their vertex average, coned to
/// the cell vertex average.
pub fn convex_cell_rule(mesh: &PolyMesh, c: usize, n: usize) -> Rule {
    let cell = &mesh.cells[c];
    let avg = |ids: &[usize]| ids.iter().map(|&v| mesh.vertices[v]).sum::<Vector3<f64>>() / ids.len() as f64;
    let apex = avg(&cell.vertices);
    let mut rule = Rule::default();
    for &f in &cell.faces {
        let l = &mesh.faces[f].vertices;
        let fc = avg(l);
        for i in 0..l.len() {
            let (a, b) = (mesh.vertices[l[i]], mesh.vertices[l[(i + 1) % l.len()]]);
            tet_rule(&apex, &fc, &a, &b, n, &mut rule);
        }
    }
    rule
}

/// Tensor Gauss rule on an axis-aligned box.
pub fn box_rule(lo: &Point, hi: &Point, n: usize) -> Rule {
    let g = gauss01(n);
    let mut rule = Rule::default();
    let l = hi - lo;
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            for &(w, ww) in &g {
                rule.points.push(lo + Vector3::new(u * l.x, v * l.y, w * l.z));
                rule.weights.push(wu * wv * ww * l.x * l.y * l.z);
            }
        }
    }
    rule
}

/// Tensor Gauss rule on an axis-aligned face given by its vertices.
pub fn axis_face_rule(mesh: &PolyMesh, f: usize, n: usize) -> Rule {
    let pts: Vec<Point> = mesh.faces[f].vertices.iter().map(|&v| mesh.vertices[v]).collect();
    let lo = pts.iter().fold(Point::repeat(f64::INFINITY), |m, p| m.inf(p));
    let hi = pts.iter().fold(Point::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
    let axis = mesh.face(f).normal.iamax();
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let g = gauss01(n);
    let mut rule = Rule::default();
    for &(u, wu) in &g {
        for &(v, wv) in &g {
            let mut p = lo;
            p[a] += u * (hi[a] - lo[a]);
            p[b] += v * (hi[b] - lo[b]);
            rule.points.push(p);
            rule.weights.push(wu * wv * (hi[a] - lo[a]) * (hi[b] - lo[b]));
        }
    }
    rule
}

pub fn unit_cube() -> PolyMesh {
    box_cell(&Point::zeros(), &Point::repeat(1.0))
}

pub fn box_cell(lo: &Point, hi: &Point) -> PolyMesh {
    build_box_mesh(StructuredKind::Hex, [1, 1, 1], (*lo).into(), (*hi).into())
}

/// Single triangular prism over the triangle `tri` in the plane `z = z0`.
pub fn prism_cell(tri: [[f64; 2]; 3], z0: f64, height: f64) -> PolyMesh {
    let mut v = Vec::new();
    for z in [z0, z0 + height] {
        for p in tri {
            v.push(Point::new(p[0], p[1], z));
        }
    }
    let polys = vec![vec![
        vec![0, 1, 2],
        vec![3, 4, 5],
        vec![0, 1, 4, 3],
        vec![1, 2, 5, 4],
        vec![2, 0, 3, 5],
    ]];
    PolyMesh::from_cell_polygons(v, &polys).unwrap()
}

/// Random prism with a well-shaped base.
pub fn random_prism(rng: &mut StdRng) -> PolyMesh {
    loop {
        let tri: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let e1 = [tri[1][0] - tri[0][0], tri[1][1] - tri[0][1]];
        let e2 = [tri[2][0] - tri[0][0], tri[2][1] - tri[0][1]];
        let area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        let long = [e1, e2, [tri[2][0] - tri[1][0], tri[2][1] - tri[1][1]]]
            .iter()
            .map(|e| e[0].hypot(e[1]))
            .fold(0.0, f64::max);
        if area > 0.15 * long * long {
            return prism_cell(tri, rng.gen_range(-1.0..1.0), rng.gen_range(0.4..1.5));
        }
    }
}

/// Random axis-aligned cube.
pub fn random_cube(rng: &mut StdRng) -> PolyMesh {
    let lo = Point::from_fn(|_, _| rng.gen_range(-2.0..2.0));
    let side = rng.gen_range(0.2..3.0);
    box_cell(&lo, &(lo + Point::repeat(side)))
}

fn clip_polygon(poly: &[Point], n: &Vector3<f64>, d: f64, cut: &mut Vec<Point>) -> Vec<Point> {
    let mut out = Vec::new();
    let tol = 1e-12;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sa, sb) = (n.dot(&a) - d, n.dot(&b) - d);
        if sa <= tol {
            out.push(a);
            if sa.abs() <= tol {
                cut.push(a);
            }
        }
        if (sa < -tol && sb > tol) || (sa > tol && sb < -tol) {
            let p = a + (b - a) * (sa / (sa - sb));
            out.push(p);
            cut.push(p);
        }
    }
    out
}

fn sort_cap(points: Vec<Point>, n: &Vector3<f64>) -> Vec<Point> {
    let mut uniq: Vec<Point> = Vec::new();
    for p in points {
        if uniq.iter().all(|q| (q - p).norm() > 1e-10) {
            uniq.push(p);
        }
    }
    let c = uniq.iter().sum::<Vector3<f64>>() / uniq.len() as f64;
    let a = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = n.cross(&a).normalize();
    let e2 = n.cross(&e1);
    uniq.sort_by(|p, q| {
        let ang = |x: &Point| (x - c).dot(&e2).atan2((x - c).dot(&e1));
        ang(p).partial_cmp(&ang(q)).unwrap()
    });
    uniq
}

/// Voronoi cell of a seed near the cube center among random neighbours,
/// clipped to the unit cube. Cells with short edges are redrawn.
pub fn voronoi_cell(seed: u64) -> PolyMesh {
    let mut rng = StdRng::seed_from_u64(seed);
    loop {
        let s = Point::repeat(0.5) + Point::from_fn(|_, _| rng.gen_range(-0.05..0.05));
        let corners = |i: usize| Point::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64);
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let mut polys: Vec<Vec<Point>> = quads.iter().map(|q| q.iter().map(|&i| corners(i)).collect()).collect();
        for _ in 0..rng.gen_range(6..=10) {
            let dir = loop {
                let v = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                if v.norm() > 0.2 && v.norm() < 1.0 {
                    break v.normalize();
                }
            };
            let r = rng.gen_range(0.55..0.9);
            let d = dir.dot(&s) + 0.5 * r;
            let mut cut = Vec::new();
            polys = polys
                .iter()
                .map(|p| clip_polygon(p, &dir, d, &mut cut))
                .filter(|p| p.len() >= 3)
                .collect();
            if cut.len() >= 3 {
                let cap = sort_cap(cut, &dir);
                if cap.len() >= 3 {
                    polys.push(cap);
                }
            }
        }
        let mut verts: Vec<Point> = Vec::new();
        let mut loops = Vec::new();
        for p in &polys {
            let mut l: Vec<usize> = Vec::new();
            for x in p {
                let id = match verts.iter().position(|q| (q - x).norm() < 1e-9) {
                    Some(i) => i,
                    None => {
                        verts.push(*x);
                        verts.len() - 1
                    }
                };
                if l.last() != Some(&id) && l.first() != Some(&id) {
                    l.push(id);
                }
            }
            if l.len() >= 3 {
                loops.push(l);
            }
        }
        let short = loops.iter().any(|l| {
            (0..l.len()).any(|i| (verts[l[i]] - verts[l[(i + 1) % l.len()]]).norm() < 0.08)
        });
        if short || loops.len() < 7 {
            continue;
        }
        if let Ok(m) = PolyMesh::from_cell_polygons(verts, &[loops]) {
            if m.closure_residual(0) < 1e-12 {
                return m;
            }
        }
    }
}

/// The three cell kinds used by the property tests.
pub fn sample_cell(kind: usize, seed: u64) -> PolyMesh {
    let mut rng = StdRng::seed_from_u64(seed);
    match kind % 3 {
        0 => random_cube(&mut rng),
        1 => random_prism(&mut rng),
        _ => voronoi_cell(seed),
    }
}

fn exponents(degree: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=degree {
        for b in 0..=degree - a {
            for c in 0..=degree - a - b {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn powi(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

/// Vector polynomial of a given degree in `x - origin`, optionally plus
/// `amp sin(k·x + phase)`.
#[derive(Clone, Debug)]
pub struct RandomField {
    origin: Point,
    exps: Vec<[u32; 3]>,
    coeffs: Vec<Vector3<f64>>,
    wave: Option<(Vector3<f64>, Vector3<f64>, f64)>,
}

impl RandomField {
    pub fn polynomial(rng: &mut StdRng, degree: u32, origin: Point, scale: f64) -> Self {
        let exps = exponents(degree);
        let coeffs = exps
            .iter()
            .map(|e| {
                let k = (e[0] + e[1] + e[2]) as i32;
                Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) / scale.powi(k)
            })
            .collect();
        Self {
            origin,
            exps,
            coeffs,
            wave: None,
        }
    }

    /// Cubic plus a low-frequency sine.
    pub fn smooth(rng: &mut StdRng, origin: Point, scale: f64) -> Self {
        let mut f = Self::polynomial(rng, 3, origin, scale);
        let amp = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let k = Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0)) / scale;
        f.wave = Some((amp, k, rng.gen_range(0.0..6.3)));
        f
    }

    pub fn value(&self, x: &Point) -> Vector3<f64> {
        let y = x - self.origin;
        let mut v = Vector3::zeros();
        for (e, c) in self.exps.iter().zip(&self.coeffs) {
            v += c * (powi(y.x, e[0]) * powi(y.y, e[1]) * powi(y.z, e[2]));
        }
        if let Some((amp, k, ph)) = &self.wave {
            v += amp * (k.dot(x) + ph).sin();
        }
        v
    }

    pub fn divergence(&self, x: &Point) -> f64 {
        let y = x - self.origin;
        let mut d = 0.0;
        for (e, c) in self.exps.iter().zip(&self.coeffs) {
            for i in 0..3 {
                if e[i] == 0 {
                    continue;
                }
                let mut t = e[i] as f64;
                for j in 0..3 {
                    t *= powi(y[j], if j == i { e[j] - 1 } else { e[j] });
                }
                d += c[i] * t;
            }
        }
        if let Some((amp, k, ph)) = &self.wave {
            d += amp.dot(k) * (k.dot(x) + ph).cos();
        }
        d
    }
}

// Triquadratic Lagrange factors on [0, 1] with nodes 0, 1/2, 1.
fn lag(i: usize, t: f64) -> (f64, f64) {
    match i {
        0 => (2.0 * t * t - 3.0 * t + 1.0, 4.0 * t - 3.0),
        1 => (4.0 * t - 4.0 * t * t, 4.0 - 8.0 * t),
        _ => (2.0 * t * t - t, 4.0 * t - 1.0),
    }
}

/// Value and gradient of the 27 triquadratic nodal functions on the unit
/// cube, node `i + 3j + 9k`.
fn q2(x: &Point) -> Vec<(f64, Vector3<f64>)> {
    let mut out = Vec::with_capacity(27);
    for k in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                let (a, da) = lag(i, x.x);
                let (b, db) = lag(j, x.y);
                let (c, dc) = lag(k, x.z);
                out.push((a * b * c, Vector3::new(da * b * c, a * db * c, a * b * dc)));
            }
        }
    }
    out
}

/// `T⁻ᵀ A T⁻¹` on the unit cube for the triquadratic vector field with the
/// displacement DoFs of the single cell of `mesh`, where
/// `A = ∫ ε(φ_a):ε(φ_b)`.
pub fn q2_energy_gram(mesh: &PolyMesh) -> DMatrix<f64> {
    let cell = &mesh.cells[0];
    let (nv, ne, nf) = (cell.vertices.len(), cell.edges.len(), cell.faces.len());
    let n = 3 * (nv + ne + nf) + 3;
    assert_eq!(n, 81);
    let mut t = DMatrix::zeros(n, n);
    let set_point = |t: &mut DMatrix<f64>, row: usize, x: &Point| {
        for (a, (v, _)) in q2(x).into_iter().enumerate() {
            for c in 0..3 {
                t[(row + c, 3 * a + c)] = v;
            }
        }
    };
    for (i, &v) in cell.vertices.iter().enumerate() {
        set_point(&mut t, 3 * i, &mesh.vertices[v]);
    }
    for (j, &e) in cell.edges.iter().enumerate() {
        let [a, b] = mesh.edges[e];
        set_point(&mut t, 3 * (nv + j), &((mesh.vertices[a] + mesh.vertices[b]) * 0.5));
    }
    for (k, &f) in cell.faces.iter().enumerate() {
        let rule = axis_face_rule(mesh, f, 4);
        let area = rule.total();
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            for (a, (v, _)) in q2(p).into_iter().enumerate() {
                for c in 0..3 {
                    t[(3 * (nv + ne + k) + c, 3 * a + c)] += w * v / area;
                }
            }
        }
    }
    let center = Point::repeat(0.5);
    let rule = box_rule(&Point::zeros(), &Point::repeat(1.0), 4);
    let mut energy = DMatrix::zeros(n, n);
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let b = q2(p);
        for (a, (_, g)) in b.iter().enumerate() {
            for c in 0..3 {
                for d in 0..3 {
                    // Volume is 1, so (h/|P|) x̂_d = x_d - x_c,d.
                    t[(3 * (nv + ne + nf) + d, 3 * a + c)] += w * g[c] * (p[d] - center[d]);
                }
            }
        }
        for (a, (_, ga)) in b.iter().enumerate() {
            for (bb, (_, gb)) in b.iter().enumerate() {
                let dot = ga.dot(gb);
                for c in 0..3 {
                    for e in 0..3 {
                        let v = 0.5 * (if c == e { dot } else { 0.0 } + ga[e] * gb[c]);
                        energy[(3 * a + c, 3 * bb + e)] += w * v;
                    }
                }
            }
        }
    }
    let tinv = t.try_inverse().expect("triquadratic DoFs are unisolvent");
    tinv.transpose() * energy * tinv
}

/// `(T M⁻¹ Tᵀ)⁻¹`: the squared `L²` norm of the smallest `(P3)³` field with
/// given flux DoFs, on the single cell of an axis-aligned box mesh. Cubics
/// are needed: on `(P2)³` the rotational moments follow from the faces.
pub fn flux_min_norm_gram(mesh: &PolyMesh) -> DMatrix<f64> {
    let cell = &mesh.cells[0];
    let geo = mesh.cell(0);
    let (xc, h) = (geo.barycenter, geo.diameter);
    let exps = exponents(3);
    let nm = exps.len();
    let mono = |x: &Point| -> Vec<f64> {
        let y = (x - xc) / h;
        exps.iter().map(|e| powi(y.x, e[0]) * powi(y.y, e[1]) * powi(y.z, e[2])).collect()
    };
    let np = 3 * exps.len();
    let nf = cell.faces.len();
    let nd = 3 * nf + 3;
    let lo = mesh.vertices.iter().fold(Point::repeat(f64::INFINITY), |m, p| m.inf(p));
    let hi = mesh.vertices.iter().fold(Point::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
    let rule = box_rule(&lo, &hi, 4);
    let vol = rule.total();
    let mut mass = DMatrix::<f64>::zeros(np, np);
    let mut t = DMatrix::<f64>::zeros(nd, np);
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let m = mono(p);
        let y = (p - xc) / h;
        for c in 0..3 {
            for i in 0..m.len() {
                for j in 0..m.len() {
                    mass[(nm * c + i, nm * c + j)] += w * m[i] * m[j];
                }
                for d in 0..3 {
                    let e = Vector3::from_fn(|r, _| if r == d { 1.0 } else { 0.0 });
                    t[(3 * nf + d, nm * c + i)] += w * m[i] * y.cross(&e)[c] / vol;
                }
            }
        }
    }
    for (k, &f) in cell.faces.iter().enumerate() {
        let g = mesh.face(f);
        let rule = axis_face_rule(mesh, f, 4);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let (s, tt) = g.frame.local(p);
            let m = mono(p);
            for (j, fm) in [1.0, s, tt].into_iter().enumerate() {
                for c in 0..3 {
                    for i in 0..m.len() {
                        t[(3 * k + j, nm * c + i)] += w * m[i] * g.normal[c] * fm / g.area;
                    }
                }
            }
        }
    }
    let minv = mass.try_inverse().unwrap();
    (&t * minv * t.transpose()).try_inverse().expect("flux DoFs independent on (P3)³")
}

/// Columns spanning the null space of `a` (relative threshold `tol`).
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let top = eig.eigenvalues.amax();
    let cols: Vec<_> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] <= tol * top)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Orthonormal columns spanning the range of a symmetric matrix.
pub fn range_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.amax();
    let cols: Vec<_> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > tol * top)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Extreme eigenvalues of the pencil `(a, b)` with `b` SPD.
pub fn pencil_range(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (f64, f64) {
    let l = b.clone().cholesky().expect("reference Gram is SPD").l();
    let li = l.try_inverse().unwrap();
    let c = &li * a * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let ev = SymmetricEigen::new(c).eigenvalues;
    (ev.min(), ev.max())
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Sixth-order central first derivative.
pub fn d6(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x - 3.0 * h) + 9.0 * f(x - 2.0 * h) - 45.0 * f(x - h) + 45.0 * f(x + h) - 9.0 * f(x + 2.0 * h)
        + f(x + 3.0 * h))
        / (60.0 * h)
}

/// Partial derivative `∂_i f` of a scalar field by [`d6`].
pub fn partial(f: &dyn Fn(&Point) -> f64, x: &Point, i: usize, h: f64) -> f64 {
    d6(
        |s| {
            let mut y = *x;
            y[i] = s;
            f(&y)
        },
        x[i],
        h,
    )
}
