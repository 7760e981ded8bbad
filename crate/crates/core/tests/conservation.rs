mod common;

use common::*;
use nalgebra::{DVector, Vector3};
use vemsad::coupling::StressReading;
use vemsad::harness::{example1_case, prepare_mesh, solve_case, ManufacturedCase};
use vemsad::mesh::{build_structured_mesh, PolyMesh, StructuredKind};
use vemsad::solver::FixedPointConfig;

fn solved(case: &ManufacturedCase, kind: StructuredKind, n: usize) -> (PolyMesh, vemsad::harness::CaseResult) {
    let mesh = prepare_mesh(build_structured_mesh(kind, n, [0.0; 3], [1.0; 3]), case).unwrap();
    let res = solve_case(&mesh, case, &FixedPointConfig::default()).unwrap();
    (mesh, res)
}

/// `|P| div ζ_h - θ |P| φ_P + ∫_P g` for every cell, with the load
/// integrated by `load`.
fn balance(
    mesh: &PolyMesh,
    case: &ManufacturedCase,
    res: &vemsad::harness::CaseResult,
    load: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let d = &res.discretization;
    let theta = case.params().theta;
    (0..mesh.num_cells())
        .map(|k| {
            let idx = d.map.flux_map(mesh, k);
            let z = DVector::from_iterator(idx.len(), idx.iter().map(|&g| res.state.zeta[g]));
            let vol = mesh.cell(k).volume;
            vol * (&d.flux[k].div * z)[0] - theta * vol * res.state.phi[k] + load(k)
        })
        .collect()
}

#[test]
fn discrete_mass_balance_holds_per_cell() {
    let case = example1_case(StressReading::Matrix);
    for (kind, n) in [(StructuredKind::Hex, 4), (StructuredKind::Prism, 2)] {
        let (mesh, res) = solved(&case, kind, n);
        // The load as the discrete problem sees it.
        let r = balance(&mesh, &case, &res, |k| mesh.cell_quadrature(k, 6).integrate(|x| case.source(x)));
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-9, "{kind:?}: {worst:e}");
        // Against an independent rule the quadrature error is all that is left.
        let r = balance(&mesh, &case, &res, |k| {
            convex_cell_rule(&mesh, k, 6).integrate(|x| case.source(x))
        });
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-7, "{kind:?} reference load: {worst:e}");
    }
}

#[test]
fn normal_flux_is_single_valued() {
    let mut r = rng(11);
    for (kind, n) in [(StructuredKind::Hex, 2), (StructuredKind::Prism, 2)] {
        let mesh = build_structured_mesh(kind, n, [0.0; 3], [1.0; 3]);
        let disc = vemsad::assembly::flux_locals(&mesh).unwrap();
        let map = vemsad::assembly::DofMap::new(
            &mesh.clone().classify_boundary(|_| vemsad::mesh::BoundaryTag::Dirichlet).unwrap(),
        )
        .unwrap();
        let field = RandomField::smooth(&mut r, Vector3::repeat(0.5), 1.0);
        let interp: Vec<DVector<f64>> = disc.iter().map(|l| l.interpolate(&mesh, &|x| field.value(x))).collect();
        let mut shared = 0;
        for f in 0..mesh.num_faces() {
            let (a, Some(b)) = mesh.face_cells[f] else { continue };
            let slot = |c: usize| mesh.cells[c].faces.iter().position(|&g| g == f).unwrap();
            let (sa, sb) = (slot(a), slot(b));
            let (ma, mb) = (map.flux_map(&mesh, a), map.flux_map(&mesh, b));
            let la = &disc[a].layout;
            let lb = &disc[b].layout;
            for j in 0..3 {
                assert_eq!(ma[la.face(sa, j)], mb[lb.face(sb, j)]);
                assert_eq!(interp[a][la.face(sa, j)], interp[b][lb.face(sb, j)]);
            }
            let dofs = |c: usize, s: usize, l: &vemsad::space_hdiv::FluxLayout| {
                std::array::from_fn(|j| interp[c][l.face(s, j)])
            };
            let ta = disc[a].normal_trace(&mesh, sa, &dofs(a, sa, la));
            let tb = disc[b].normal_trace(&mesh, sb, &dofs(b, sb, lb));
            assert!((ta - tb).amax() <= 1e-13 * ta.amax().max(1.0));
            // Orientation signs are opposite across a shared face.
            let oa = mesh.cells[a].orientation[sa];
            let ob = mesh.cells[b].orientation[sb];
            assert_eq!(oa, -ob);
            shared += 1;
        }
        assert!(shared > 0);
    }
}
