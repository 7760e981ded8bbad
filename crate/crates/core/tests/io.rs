use std::path::PathBuf;

use vemsad::harness::{export_vtk, patch_transport_case, prepare_mesh, solve_case};
use vemsad::mesh::{build_structured_mesh, load_mesh, save_mesh_json, BoundaryTag, Field, MeshFormat, StructuredKind};
use vemsad::solver::FixedPointConfig;
use vemsad::Error;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vemsad-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Float arrays of a VTU file by name.
fn arrays(path: &PathBuf) -> Vec<(String, usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("DataArray") && n.attribute("type") == Some("Float64"))
        .filter_map(|n| {
            let name = n.attribute("Name")?.to_string();
            let comps = n.attribute("NumberOfComponents").map_or(1, |c| c.parse().unwrap());
            let vals = n.text().unwrap_or("").split_whitespace().map(|t| t.parse().unwrap()).collect();
            Some((name, comps, vals))
        })
        .collect()
}

#[test]
fn off_cube_is_one_cell() {
    let path = scratch("cube.off");
    std::fs::write(
        &path,
        "OFF\n8 6 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
         4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 1 2 6 5\n4 2 3 7 6\n4 3 0 4 7\n",
    )
    .unwrap();
    let m = load_mesh(&path, None).unwrap();
    assert_eq!((m.num_vertices(), m.num_edges(), m.num_faces(), m.num_cells()), (8, 12, 6, 1));
    assert!((m.cell(0).volume - 1.0).abs() < 1e-14);
}

#[test]
fn json_round_trip_keeps_tags() {
    let m = build_structured_mesh(StructuredKind::Prism, 2, [0.0; 3], [1.0; 3])
        .classify_boundary_field(Field::Mechanics, |x| {
            if x[2] < 1e-9 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann
            }
        })
        .unwrap()
        .classify_boundary_field(Field::Transport, |x| {
            if x[0] > 1.0 - 1e-9 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann
            }
        })
        .unwrap();
    let path = scratch("prism.json");
    save_mesh_json(&m, &path).unwrap();
    let back = load_mesh(&path, Some(MeshFormat::Json)).unwrap();
    assert_eq!(back.num_cells(), m.num_cells());
    assert_eq!(back.tags.mechanics, m.tags.mechanics);
    assert_eq!(back.tags.transport, m.tags.transport);
    assert!((back.total_volume() - 1.0).abs() < 1e-13);
}

#[test]
fn exported_fields_read_back() {
    let case = patch_transport_case();
    let mesh = prepare_mesh(build_structured_mesh(StructuredKind::Hex, 2, [0.0; 3], [1.0; 3]), &case).unwrap();
    let res = solve_case(&mesh, &case, &FixedPointConfig::default()).unwrap();
    let path = scratch("patch.vtu");
    export_vtk(&mesh, &res.discretization, &res.state, &path).unwrap();
    let found = arrays(&path);
    let nc = mesh.num_cells();
    let nv = mesh.num_vertices();
    for (name, comps, count) in [
        ("displacement", 3, nv),
        ("pressure", 1, nc),
        ("concentration", 1, nc),
        ("flux", 3, nc),
        ("flux_magnitude", 1, nc),
        ("flux_divergence", 1, nc),
    ] {
        let (_, c, v) = found.iter().find(|a| a.0 == name).unwrap_or_else(|| panic!("{name} missing"));
        assert_eq!(*c, comps);
        assert_eq!(v.len(), comps * count, "{name}");
        assert!(v.iter().all(|x| x.is_finite()), "{name}");
    }
    // The patch flux is ∇φ with constant divergence 0.8 + 0.4.
    let (_, _, div) = found.iter().find(|a| a.0 == "flux_divergence").unwrap();
    assert!(div.iter().all(|d| (d - 1.2).abs() < 1e-9));

    let back = load_mesh(&path, None).unwrap();
    assert_eq!(back.num_cells(), nc);
    assert!((back.total_volume() - 1.0).abs() < 1e-13);
}

#[test]
fn malformed_files_are_parse_errors() {
    let path = scratch("bad.json");
    std::fs::write(&path, "{\"vertices\": [[0,0,0]], \"faces\": [[0, 7, 3]], \"cells\": [[0]]}").unwrap();
    assert!(load_mesh(&path, None).is_err());
    let path = scratch("bad.off");
    std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n").unwrap();
    assert!(matches!(load_mesh(&path, None), Err(Error::Parse(_))));
    let path = scratch("bad.vtu");
    std::fs::write(&path, "<VTKFile><UnstructuredGrid></UnstructuredGrid>").unwrap();
    assert!(matches!(load_mesh(&path, None), Err(Error::Parse(_))));
}
