use nalgebra::{DVector, Vector3};
use vemsad::assembly::ProblemData;
use vemsad::coupling::{ConstantLaw, PhysicalParameters, StressReading};
use vemsad::harness::{example1_case, prepare_mesh, solve_case};
use vemsad::mesh::{build_structured_mesh, BoundaryTag, PolyMesh, StructuredKind};
use vemsad::solver::{solve_coupled, FixedPointConfig};
use vemsad::Error;

fn cube(n: usize) -> PolyMesh {
    build_structured_mesh(StructuredKind::Hex, n, [0.0; 3], [1.0; 3])
        .classify_boundary(|x| if x[0] > 0.999 { BoundaryTag::Neumann } else { BoundaryTag::Dirichlet })
        .unwrap()
}

fn solve_simple(law: &ConstantLaw, config: &FixedPointConfig) -> vemsad::Result<usize> {
    let mesh = cube(2);
    let f = |x: &vemsad::quadrature::Point| Vector3::new(x[1], -x[0], 1.0);
    let g = |x: &vemsad::quadrature::Point| 1.0 + x[2];
    let phi_d = |_: &vemsad::quadrature::Point| 0.5;
    let data = ProblemData {
        body_force: Some(&f),
        source: Some(&g),
        concentration_bc: Some(&phi_d),
        ..Default::default()
    };
    let (_, trace) = solve_coupled(&mesh, law, &data, config)?;
    Ok(trace.iterations())
}

#[test]
fn example1_fixed_point_on_4x4x4() {
    let case = example1_case(StressReading::Matrix);
    let mesh = prepare_mesh(build_structured_mesh(StructuredKind::Hex, 4, [0.0; 3], [1.0; 3]), &case).unwrap();
    let res = solve_case(&mesh, &case, &FixedPointConfig::default()).unwrap();
    let inc = res.trace.increments();
    assert!(res.trace.converged);
    assert!(inc.len() <= 50);
    assert!(inc.windows(2).skip(1).all(|w| w[1] < w[0]), "{inc:?}");
    assert_eq!(res.trace.elasticity_assemblies, 1);
    assert_eq!(res.trace.diffusion_assemblies, inc.len());
}

#[test]
fn decoupled_law_converges_in_two_sweeps() {
    // ℓ ≡ 0 and a constant mobility: the second sweep reproduces the first.
    let mut law = ConstantLaw::identity(PhysicalParameters::example1());
    law.ell_offset = 0.0;
    law.ell_slope = 0.0;
    assert_eq!(solve_simple(&law, &FixedPointConfig::default()).unwrap(), 2);
}

#[test]
fn loose_tolerance_stops_after_one_sweep() {
    let law = ConstantLaw::identity(PhysicalParameters::example1());
    let config = FixedPointConfig {
        tolerance: 1e6,
        ..Default::default()
    };
    assert_eq!(solve_simple(&law, &config).unwrap(), 1);
}

#[test]
fn iteration_cap_reports_the_trace() {
    let law = ConstantLaw::identity(PhysicalParameters::example1());
    let config = FixedPointConfig {
        tolerance: 1e-14,
        max_iterations: 1,
        abs_tol: true,
        ..Default::default()
    };
    match solve_simple(&law, &config) {
        Err(Error::NonConvergence { iterations, trace }) => {
            assert_eq!(iterations, 1);
            assert_eq!(trace.records.len(), 1);
            assert!(!trace.converged);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn damping_still_converges() {
    let law = ConstantLaw::identity(PhysicalParameters::example1());
    let plain = solve_simple(&law, &FixedPointConfig::default()).unwrap();
    let damped = solve_simple(
        &law,
        &FixedPointConfig {
            damping: 0.5,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(damped > plain);
}

#[test]
fn bad_configurations_are_rejected() {
    let law = ConstantLaw::identity(PhysicalParameters::example1());
    for config in [
        FixedPointConfig {
            tolerance: 0.0,
            ..Default::default()
        },
        FixedPointConfig {
            damping: 1.5,
            ..Default::default()
        },
        FixedPointConfig {
            norm_floor: -1.0,
            ..Default::default()
        },
        FixedPointConfig {
            initial_phi: Some(DVector::zeros(3)),
            ..Default::default()
        },
    ] {
        assert!(matches!(solve_simple(&law, &config), Err(Error::Input(_) | Error::Dimension(_))));
    }
}
