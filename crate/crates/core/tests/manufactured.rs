mod common;

use std::f64::consts::PI;

use common::*;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use vemsad::assembly::SolutionState;
use vemsad::coupling::StressReading;
use vemsad::harness::{compute_errors, example1_case, prepare_mesh, solve_case, ExactSolution, PhiReference};
use vemsad::mesh::{build_structured_mesh, StructuredKind};
use vemsad::quadrature::Point;
use vemsad::solver::FixedPointConfig;

const MU: f64 = 1e2;
const LAMBDA: f64 = 1e3;
const THETA: f64 = 1e-3;
const M: f64 = 20.0;
const H: f64 = 1e-2;

/// Example 1 written out directly, with every derivative taken by finite
/// differences.
fn u(x: &Point) -> Vector3<f64> {
    let (a, b, c) = (x[0], x[1], x[2]);
    Vector3::new(
        a * a + a * a.cos() * b.sin(),
        b * b + a * b.cos() * a.sin(),
        c * c + a * a.cos() * b.cos(),
    ) * 0.2
}

fn phi(x: &Point) -> f64 {
    (PI * x[1]).cos() + (PI * x[0]).sin() + x.norm_squared()
}

fn ell(s: f64) -> f64 {
    1.0 + s * s / (1.0 + s * s)
}

fn grad_u(x: &Point) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| partial(&|y| u(y)[i], x, j, H))
}

fn strain(x: &Point) -> Matrix3<f64> {
    let g = grad_u(x);
    (g + g.transpose()) * 0.5
}

fn pressure(x: &Point) -> f64 {
    -LAMBDA * grad_u(x).trace() + ell(phi(x))
}

fn stress(x: &Point) -> Matrix3<f64> {
    strain(x) * (2.0 * MU) - Matrix3::identity() * pressure(x)
}

fn mobility(x: &Point) -> f64 {
    1e-3 * (-1e-4 * stress(x).trace()).exp()
}

fn flux(x: &Point) -> Vector3<f64> {
    Vector3::from_fn(|i, _| partial(&phi, x, i, H)) * mobility(x)
}

fn body_force(x: &Point) -> Vector3<f64> {
    Vector3::from_fn(|i, _| -(0..3).map(|j| partial(&|y| stress(y)[(i, j)], x, j, H)).sum::<f64>())
}

fn flux_div(x: &Point) -> f64 {
    (0..3).map(|i| partial(&|y| flux(y)[i], x, i, H)).sum()
}

fn source(x: &Point) -> f64 {
    THETA * phi(x) - flux_div(x)
}

#[test]
fn data_match_finite_difference_oracle() {
    let case = example1_case(StressReading::Matrix);
    let mut r = rng(3);
    for _ in 0..100 {
        let x = Point::from_fn(|_, _| r.gen_range(0.0..1.0));
        let f = body_force(&x);
        let df = (case.body_force(&x) - f).amax();
        assert!(df <= 1e-8 * f.amax().max(1.0), "f at {x:?}: {df:e}");
        let g = source(&x);
        let dg = (case.source(&x) - g).abs();
        assert!(dg <= 1e-8 * g.abs().max(1e-2), "g at {x:?}: {dg:e}");
        let dp = (case.pressure(&x) - pressure(&x)).abs();
        assert!(dp <= 1e-9 * pressure(&x).abs().max(1.0));
        let dz = (case.flux(&x) - flux(&x)).amax();
        assert!(dz <= 1e-9 * flux(&x).amax().max(1e-3));
    }
}

#[test]
fn zero_state_error_is_the_weighted_norm() {
    let case = example1_case(StressReading::Matrix);
    let mesh = prepare_mesh(build_structured_mesh(StructuredKind::Hex, 2, [0.0; 3], [1.0; 3]), &case).unwrap();
    let disc = vemsad::assembly::Discretization::new(&mesh).unwrap();
    let zero = SolutionState::zeros(&disc.map);
    let e = compute_errors(
        &mesh,
        &disc.map,
        &disc.elasticity,
        &disc.flux,
        case.params(),
        &zero,
        &case,
        6,
        PhiReference::Pointwise,
    );
    let mut s = [0.0; 4];
    for k in 0..mesh.num_cells() {
        let rule = convex_cell_rule(&mesh, k, 5);
        s[0] += rule.integrate(|x| strain(x).norm_squared());
        s[1] += rule.integrate(|x| pressure(x).powi(2));
        s[2] += rule.integrate(|x| {
            let z = flux(x);
            z.norm_squared() / mobility(x) + M * flux_div(x).powi(2)
        });
        s[3] += rule.integrate(|x| phi(x).powi(2));
    }
    let want = [
        (2.0 * MU * s[0]).sqrt(),
        ((0.5 / MU + 1.0 / LAMBDA) * s[1]).sqrt(),
        s[2].sqrt(),
        ((1.0 / M + THETA) * s[3]).sqrt(),
    ];
    for (got, want) in [e.u, e.p, e.zeta, e.phi].into_iter().zip(want) {
        assert!((got - want).abs() <= 1e-7 * want, "{got} vs {want}");
    }
    let total = want.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((e.total - total).abs() <= 1e-7 * total);

    // e_u carries sqrt(2μ).
    let mut prm = *case.params();
    prm.mu *= 4.0;
    let e4 = compute_errors(
        &mesh,
        &disc.map,
        &disc.elasticity,
        &disc.flux,
        &prm,
        &zero,
        &case,
        6,
        PhiReference::Pointwise,
    );
    assert!((e4.u / e.u - 2.0).abs() < 1e-12);
}

#[test]
fn error_quadrature_is_resolved() {
    let case = example1_case(StressReading::Matrix);
    let mesh = prepare_mesh(build_structured_mesh(StructuredKind::Hex, 2, [0.0; 3], [1.0; 3]), &case).unwrap();
    let res = solve_case(&mesh, &case, &FixedPointConfig::default()).unwrap();
    let a = res.errors(&mesh, &case, 6, PhiReference::Pointwise);
    let b = res.errors(&mesh, &case, 12, PhiReference::Pointwise);
    for (x, y) in [(a.u, b.u), (a.p, b.p), (a.zeta, b.zeta), (a.phi, b.phi), (a.total, b.total)] {
        assert!((x - y).abs() < 0.01 * y, "{x} vs {y}");
    }
}

#[test]
fn errors_decrease_under_refinement() {
    let case = example1_case(StressReading::Matrix);
    let mut last = f64::INFINITY;
    for n in [1, 2, 4] {
        let mesh = prepare_mesh(build_structured_mesh(StructuredKind::Prism, n, [0.0; 3], [1.0; 3]), &case).unwrap();
        let res = solve_case(&mesh, &case, &FixedPointConfig::default()).unwrap();
        let e = res.errors(&mesh, &case, 6, PhiReference::Pointwise).total;
        assert!(e < 0.6 * last, "n={n}: {e} after {last}");
        last = e;
    }
}
