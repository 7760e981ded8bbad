use std::path::Path;

use vemsad::harness::{run_lithiation, LithiationConfig, LithiationResult};
use vemsad::mesh::{load_mesh, BoundaryTag, Field};

fn run(clamped: bool) -> LithiationResult {
    let mesh = load_mesh(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/perforated_cylinder.json").as_path(), None)
        .unwrap();
    let config = LithiationConfig {
        clamped,
        ..Default::default()
    };
    run_lithiation(mesh, &config).unwrap()
}

fn check(res: &LithiationResult) {
    assert!(res.trace.converged);
    assert!(res.trace.iterations() >= 2);
    let s = &res.state;
    for v in [&s.u, &s.p, &s.zeta, &s.phi] {
        assert!(v.iter().all(|x| x.is_finite()));
    }
    let map = &res.discretization.map;
    let mut neumann = 0;
    for f in res.mesh.boundary_faces() {
        if res.mesh.tag(Field::Transport, f) == Some(BoundaryTag::Neumann) {
            for j in 0..3 {
                let g = map.flux_face(f, j);
                assert!(map.flux_fixed[g]);
                assert_eq!(s.zeta[g], 0.0);
            }
            neumann += 1;
        }
    }
    assert!(neumann > 0);
    // Lithium enters through the outer surface only.
    assert!(s.phi.iter().all(|&p| p > 0.0));
}

#[test]
fn clamped_and_free_runs() {
    let clamped = run(true);
    let free = run(false);
    check(&clamped);
    check(&free);
    assert!(clamped.max_displacement > 0.0);
    assert!(clamped.max_displacement <= free.max_displacement);

    let dir = std::env::temp_dir().join(format!("vemsad-lith-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("free.vtu");
    free.export(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    for name in ["displacement", "pressure", "concentration", "flux_magnitude"] {
        assert!(text.contains(&format!("Name=\"{name}\"")));
    }
    assert!(!text.contains("NaN") && !text.contains("inf"));
}
