mod common;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use vemsad::mesh::PolyMesh;
use vemsad::poly::vec_poly_eval;
use vemsad::space_elasticity::ElasticityLocal;
use vemsad::space_hdiv::{eval_p1_vector, FluxLocal};

fn scale_of(mesh: &PolyMesh) -> (nalgebra::Vector3<f64>, f64) {
    let g = mesh.cell(0);
    (g.barycenter, g.diameter)
}

/// `(div Π ξ - mean div ξ, mean div ξ)` with the mean taken by the
/// reference cell rule.
fn commutator(mesh: &PolyMesh, local: &FluxLocal, field: &RandomField) -> (f64, f64) {
    let dofs = local.interpolate(mesh, &|x| field.value(x));
    let lhs = (&local.div * &dofs)[0];
    let rule = convex_cell_rule(mesh, 0, 8);
    let mean = rule.integrate(|x| field.divergence(x)) / rule.total();
    (lhs - mean, mean)
}

#[test]
fn divergence_commutes_with_interpolation() {
    let mut worst = 0.0f64;
    for kind in 0..3 {
        for i in 0..20 {
            let seed = 1000 * kind as u64 + i;
            let mesh = sample_cell(kind, seed);
            let local = FluxLocal::new(&mesh, 0).unwrap();
            let (xc, h) = scale_of(&mesh);
            let field = RandomField::smooth(&mut rng(seed), xc, h);
            let (d, mean) = commutator(&mesh, &local, &field);
            // Relative to the size of the divergence on the cell.
            let size = mean.abs().max(field.divergence(&xc).abs()).max(1.0 / h);
            worst = worst.max(d.abs() / size);
        }
    }
    assert!(worst < 1e-9, "worst relative commutator {worst:e}");
}

#[test]
fn voronoi_cells_are_closed_and_measured() {
    for seed in 0..10 {
        let m = voronoi_cell(seed);
        assert!(m.closure_residual(0) < 1e-12);
        let rule = convex_cell_rule(&m, 0, 3);
        let vol = rule.total();
        assert!((m.cell(0).volume - vol).abs() < 1e-12 * vol.max(1.0), "seed {seed}");
        let lib = m.cell_quadrature(0, 2);
        assert!((lib.total_weight() - vol).abs() < 1e-12);
        let bary = rule.integrate(|x| *x) / vol;
        assert!((m.cell(0).barycenter - bary).norm() < 1e-12);
    }
}

fn max_on_cell(mesh: &PolyMesh, f: impl Fn(&nalgebra::Vector3<f64>) -> f64) -> f64 {
    convex_cell_rule(mesh, 0, 3).points.iter().map(f).fold(0.0, f64::max)
}

fn elasticity_reproduction(kind: usize, seed: u64) -> f64 {
    let mesh = sample_cell(kind, seed);
    let local = ElasticityLocal::new(&mesh, 0).unwrap();
    let (xc, h) = scale_of(&mesh);
    let field = RandomField::polynomial(&mut rng(seed ^ 0x5eed), 2, xc, h);
    let dofs = local.interpolate(&mesh, &|x| field.value(x), &|x| field.divergence(x));
    let proj = local.project(&dofs);
    let frame = mesh.cell(0).frame();
    let size = max_on_cell(&mesh, |x| field.value(x).amax());
    max_on_cell(&mesh, |x| (vec_poly_eval(&proj, &frame.local(x)) - field.value(x)).amax()) / size
}

fn flux_reproduction(kind: usize, seed: u64) -> f64 {
    let mesh = sample_cell(kind, seed);
    let local = FluxLocal::new(&mesh, 0).unwrap();
    let (xc, h) = scale_of(&mesh);
    let field = RandomField::polynomial(&mut rng(seed ^ 0xf1f1), 1, xc, h);
    let dofs = local.interpolate(&mesh, &|x| field.value(x));
    let coeffs = local.project(&dofs);
    let frame = mesh.cell(0).frame();
    let size = max_on_cell(&mesh, |x| field.value(x).amax());
    max_on_cell(&mesh, |x| (eval_p1_vector(&coeffs, &frame, x) - field.value(x)).amax()) / size
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_projection_reproduces_quadratics(kind in 0usize..3, seed in any::<u64>()) {
        let e = elasticity_reproduction(kind, seed);
        prop_assert!(e < 1e-11, "relative error {e:e}");
    }

    #[test]
    fn flux_projection_reproduces_linears(kind in 0usize..3, seed in any::<u64>()) {
        let e = flux_reproduction(kind, seed);
        prop_assert!(e < 1e-11, "relative error {e:e}");
    }

    #[test]
    fn stabilisations_vanish_on_polynomials(kind in 0usize..3, seed in any::<u64>()) {
        let mesh = sample_cell(kind, seed);
        let (xc, h) = scale_of(&mesh);
        let mut r = rng(seed);
        let el = ElasticityLocal::new(&mesh, 0).unwrap();
        let u = RandomField::polynomial(&mut r, 2, xc, h);
        let dofs = el.interpolate(&mesh, &|x| u.value(x), &|x| u.divergence(x));
        let s = el.stab();
        let rel = (&s * &dofs).amax() / (s.amax() * dofs.amax());
        prop_assert!(rel < 1e-11, "elasticity {rel:e}");

        let fl = FluxLocal::new(&mesh, 0).unwrap();
        let z = RandomField::polynomial(&mut r, 1, xc, h);
        let dofs = fl.interpolate(&mesh, &|x| z.value(x));
        let rel = (&fl.stab * &dofs).amax() / (fl.stab.amax() * dofs.amax());
        prop_assert!(rel < 1e-11, "flux {rel:e}");
    }
}

fn min_relative_eigenvalue(s: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
    let k = z.transpose() * s * z;
    let ev = SymmetricEigen::new((&k + k.transpose()) * 0.5).eigenvalues;
    ev.min() / s.amax()
}

#[test]
fn stabilisations_are_definite_on_projection_kernels() {
    for kind in 0..3 {
        for seed in 0..4 {
            let mesh = sample_cell(kind, seed);
            let el = ElasticityLocal::new(&mesh, 0).unwrap();
            let z = null_space(&el.pi, 1e-14);
            assert_eq!(z.ncols(), el.ndof() - el.pi.nrows());
            let lo = min_relative_eigenvalue(&el.stab(), &z);
            assert!(lo > 1e-8, "elasticity kind {kind} seed {seed}: {lo:e}");

            let fl = FluxLocal::new(&mesh, 0).unwrap();
            let z = null_space(&fl.pi, 1e-14);
            assert_eq!(z.ncols(), fl.ndof() - fl.pi.nrows());
            let lo = min_relative_eigenvalue(&fl.stab, &z);
            assert!(lo > 1e-8, "flux kind {kind} seed {seed}: {lo:e}");
        }
    }
}

#[test]
fn elasticity_form_is_spectrally_equivalent_to_triquadratic_energy() {
    let mesh = unit_cube();
    let el = ElasticityLocal::new(&mesh, 0).unwrap();
    let g = q2_energy_gram(&mesh);
    let k = el.consistency() + el.stab();

    // Both forms vanish exactly on rigid motions.
    let range = range_space(&g, 1e-10);
    assert_eq!(range.ncols(), 81 - 6);
    let rigid = null_space(&range.transpose(), 1e-12);
    assert!((&k * &rigid).amax() < 1e-10 * k.amax());

    let (lo, hi) = pencil_range(&(range.transpose() * &k * &range), &(range.transpose() * &g * &range));
    assert!(lo >= 1e-2 && hi <= 1e2, "full form: [{lo}, {hi}]");

    let z = null_space(&el.pi, 1e-14);
    let (lo, hi) = pencil_range(&(z.transpose() * el.stab() * &z), &(z.transpose() * &g * &z));
    assert!(lo >= 1e-2 && hi <= 1e2, "stabilisation on ker Π: [{lo}, {hi}]");
}

#[test]
fn flux_form_is_spectrally_equivalent_to_minimal_extension() {
    let mesh = unit_cube();
    let fl = FluxLocal::new(&mesh, 0).unwrap();
    let g = flux_min_norm_gram(&mesh);
    let a = &fl.mass + &fl.stab;
    let (lo, hi) = pencil_range(&a, &g);
    assert!(lo >= 1e-2 && hi <= 1e2, "full form: [{lo}, {hi}]");

    let z = null_space(&fl.pi, 1e-14);
    let (lo, hi) = pencil_range(&(z.transpose() * &fl.stab * &z), &(z.transpose() * &g * &z));
    assert!(lo >= 1e-2 && hi <= 1e2, "stabilisation on ker Π: [{lo}, {hi}]");
}

#[test]
fn mass_agrees_with_reference_on_polynomials() {
    // On interpolants of linear fields the discrete form is exact and the
    // minimal extension can only be smaller.
    let mesh = unit_cube();
    let fl = FluxLocal::new(&mesh, 0).unwrap();
    let g = flux_min_norm_gram(&mesh);
    let (xc, h) = scale_of(&mesh);
    let mut r = rng(7);
    let rule = box_rule(&nalgebra::Vector3::zeros(), &nalgebra::Vector3::repeat(1.0), 3);
    for _ in 0..5 {
        let z = RandomField::polynomial(&mut r, 1, xc, h);
        let d: DVector<f64> = fl.interpolate(&mesh, &|x| z.value(x));
        let exact = rule.integrate(|x| z.value(x).norm_squared());
        let vem = d.dot(&((&fl.mass + &fl.stab) * &d));
        let refv = d.dot(&(&g * &d));
        assert!((vem - exact).abs() < 1e-11 * exact);
        assert!(refv <= exact * (1.0 + 1e-10) && refv > 0.1 * exact);
    }
}

