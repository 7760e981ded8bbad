use super::PolyMesh;
use crate::quadrature::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuredKind {
    Hex,
    /// Each hexahedron split into two triangular prisms by the vertical
    /// diagonal plane through `(x0, y0)` and `(x1, y1)`.
    Prism,
}

/// Uniform `n × n × n` box mesh of hexahedra or prisms.
pub fn build_structured_mesh(kind: StructuredKind, n: usize, lo: [f64; 3], hi: [f64; 3]) -> PolyMesh {
    build_box_mesh(kind, [n, n, n], lo, hi)
}

pub fn build_box_mesh(kind: StructuredKind, n: [usize; 3], lo: [f64; 3], hi: [f64; 3]) -> PolyMesh {
    assert!(n.iter().all(|&k| k > 0));
    let id = |i: usize, j: usize, k: usize| i + (n[0] + 1) * (j + (n[1] + 1) * k);
    let mut vertices = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let c = |d: usize, t: usize| lo[d] + (hi[d] - lo[d]) * t as f64 / n[d] as f64;
                vertices.push(Point::new(c(0, i), c(1, j), c(2, k)));
            }
        }
    }
    let mut cells = Vec::new();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let v = |a: usize, b: usize, c: usize| id(i + a, j + b, k + c);
                match kind {
                    StructuredKind::Hex => cells.push(vec![
                        vec![v(0, 0, 0), v(0, 1, 0), v(1, 1, 0), v(1, 0, 0)],
                        vec![v(0, 0, 1), v(1, 0, 1), v(1, 1, 1), v(0, 1, 1)],
                        vec![v(0, 0, 0), v(1, 0, 0), v(1, 0, 1), v(0, 0, 1)],
                        vec![v(0, 1, 0), v(0, 1, 1), v(1, 1, 1), v(1, 1, 0)],
                        vec![v(0, 0, 0), v(0, 0, 1), v(0, 1, 1), v(0, 1, 0)],
                        vec![v(1, 0, 0), v(1, 1, 0), v(1, 1, 1), v(1, 0, 1)],
                    ]),
                    StructuredKind::Prism => {
                        let diag = vec![v(0, 0, 0), v(1, 1, 0), v(1, 1, 1), v(0, 0, 1)];
                        cells.push(vec![
                            vec![v(0, 0, 0), v(1, 1, 0), v(1, 0, 0)],
                            vec![v(0, 0, 1), v(1, 0, 1), v(1, 1, 1)],
                            vec![v(0, 0, 0), v(1, 0, 0), v(1, 0, 1), v(0, 0, 1)],
                            vec![v(1, 0, 0), v(1, 1, 0), v(1, 1, 1), v(1, 0, 1)],
                            diag.clone(),
                        ]);
                        cells.push(vec![
                            vec![v(0, 0, 0), v(0, 1, 0), v(1, 1, 0)],
                            vec![v(0, 0, 1), v(1, 1, 1), v(0, 1, 1)],
                            vec![v(0, 1, 0), v(0, 1, 1), v(1, 1, 1), v(1, 1, 0)],
                            vec![v(0, 0, 0), v(0, 0, 1), v(0, 1, 1), v(0, 1, 0)],
                            diag,
                        ]);
                    }
                }
            }
        }
    }
    PolyMesh::from_cell_polygons(vertices, &cells).expect("structured mesh is valid")
}
