//! Mesh files: a JSON schema, OFF with a cell section, and ASCII VTU.
//!
//! JSON layout:
//!
//! ```json
//! {
//!   "vertices": [[x, y, z], ...],
//!   "faces": [[v0, v1, v2, ...], ...],
//!   "cells": [[f0, f1, ...], ...],
//!   "tags": { "dirichlet": [f, ...], "neumann": [f, ...] },
//!   "mechanics_tags": { ... },
//!   "transport_tags": { ... }
//! }
//! ```
//!
//! `tags` applies to both fields; the per-field maps override it. All tag
//! maps are optional.
//!
//! OFF files carry the usual vertex and face blocks followed by an optional
//! `CELLS n` line and `n` lines `k f0 ... f(k-1)`. Without it the faces are
//! taken to bound a single cell.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundaryTag, Field, PolyMesh};
use crate::error::{Error, Result};
use crate::quadrature::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Vtu,
    Off,
    Json,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "vtu" => Some(Self::Vtu),
            "off" => Some(Self::Off),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct TagMap {
    #[serde(default)]
    dirichlet: Vec<usize>,
    #[serde(default)]
    neumann: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshJson {
    vertices: Vec<[f64; 3]>,
    faces: Vec<Vec<usize>>,
    cells: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tags: Option<TagMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mechanics_tags: Option<TagMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transport_tags: Option<TagMap>,
}

/// Reads a mesh. The format is inferred from the extension when `format` is
/// `None`.
pub fn load_mesh(path: &Path, format: Option<MeshFormat>) -> Result<PolyMesh> {
    let format = format
        .or_else(|| MeshFormat::from_path(path))
        .ok_or_else(|| Error::Parse(format!("cannot infer mesh format of {}", path.display())))?;
    let text = std::fs::read_to_string(path)?;
    match format {
        MeshFormat::Json => parse_json(&text),
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Vtu => parse_vtu(&text),
    }
}

pub fn parse_json(text: &str) -> Result<PolyMesh> {
    let raw: MeshJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let vertices = raw.vertices.iter().map(|v| Point::new(v[0], v[1], v[2])).collect();
    let faces = raw.faces;
    // Face indices survive construction, so tag lists apply directly.
    let mut mesh = PolyMesh::new(vertices, faces, raw.cells)?;
    for (field, specific) in [
        (Field::Mechanics, &raw.mechanics_tags),
        (Field::Transport, &raw.transport_tags),
    ] {
        if let Some(t) = specific.as_ref().or(raw.tags.as_ref()) {
            mesh.set_tags(field, &t.dirichlet, &t.neumann)?;
        }
    }
    Ok(mesh)
}

pub fn save_mesh_json(mesh: &PolyMesh, path: &Path) -> Result<()> {
    let tag_map = |field| {
        let mut t = TagMap::default();
        for (f, tag) in mesh.tags.field(field).iter().enumerate() {
            match tag {
                Some(BoundaryTag::Dirichlet) => t.dirichlet.push(f),
                Some(BoundaryTag::Neumann) => t.neumann.push(f),
                None => {}
            }
        }
        t
    };
    let raw = MeshJson {
        vertices: mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
        faces: mesh.faces.iter().map(|f| f.vertices.clone()).collect(),
        cells: mesh.cells.iter().map(|c| c.faces.clone()).collect(),
        tags: None,
        mechanics_tags: Some(tag_map(Field::Mechanics)),
        transport_tags: Some(tag_map(Field::Transport)),
    };
    let text = serde_json::to_string(&raw).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn parse_off(text: &str) -> Result<PolyMesh> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    let perr = |m: &str| Error::Parse(format!("OFF: {m}"));
    let header = lines.next().ok_or_else(|| perr("empty file"))?;
    let counts_line = if header == "OFF" {
        lines.next().ok_or_else(|| perr("missing counts"))?
    } else if let Some(rest) = header.strip_prefix("OFF") {
        rest
    } else {
        return Err(perr("missing OFF header"));
    };
    let counts = parse_usizes(counts_line)?;
    if counts.len() < 2 {
        return Err(perr("bad counts line"));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let l = lines.next().ok_or_else(|| perr("truncated vertex block"))?;
        let x: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| perr("bad coordinate")))
            .collect::<Result<_>>()?;
        if x.len() < 3 {
            return Err(perr("vertex needs three coordinates"));
        }
        vertices.push(Point::new(x[0], x[1], x[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let l = parse_usizes(lines.next().ok_or_else(|| perr("truncated face block"))?)?;
        let k = *l.first().ok_or_else(|| perr("empty face line"))?;
        if l.len() < k + 1 {
            return Err(perr("face line shorter than its count"));
        }
        faces.push(l[1..=k].to_vec());
    }
    let cells = match lines.next() {
        None => vec![(0..nf).collect()],
        Some(l) => {
            let nc: usize = l
                .strip_prefix("CELLS")
                .ok_or_else(|| perr("expected CELLS section"))?
                .trim()
                .parse()
                .map_err(|_| perr("bad cell count"))?;
            let mut cells = Vec::with_capacity(nc);
            for _ in 0..nc {
                let l = parse_usizes(lines.next().ok_or_else(|| perr("truncated cell block"))?)?;
                let k = *l.first().ok_or_else(|| perr("empty cell line"))?;
                if l.len() < k + 1 {
                    return Err(perr("cell line shorter than its count"));
                }
                cells.push(l[1..=k].to_vec());
            }
            cells
        }
    };
    PolyMesh::new(vertices, faces, cells)
}

fn parse_usizes(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("bad integer '{t}'"))))
        .collect()
}

const VTK_TETRA: u8 = 10;
const VTK_HEXAHEDRON: u8 = 12;
const VTK_WEDGE: u8 = 13;
const VTK_POLYHEDRON: u8 = 42;

pub fn parse_vtu(text: &str) -> Result<PolyMesh> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Parse(e.to_string()))?;
    let perr = |m: &str| Error::Parse(format!("VTU: {m}"));
    let piece = doc
        .descendants()
        .find(|n| n.has_tag_name("Piece"))
        .ok_or_else(|| perr("missing Piece"))?;
    let array = |parent: &str, name: Option<&str>| -> Option<&str> {
        let p = piece.children().find(|n| n.has_tag_name(parent))?;
        p.children()
            .filter(|n| n.has_tag_name("DataArray"))
            .find(|n| name.map_or(true, |nm| n.attribute("Name") == Some(nm)))
            .map(|n| n.text().unwrap_or(""))
    };
    let check_ascii = |parent: &str| -> Result<()> {
        let p = piece.children().find(|n| n.has_tag_name(parent));
        if let Some(p) = p {
            for a in p.children().filter(|n| n.has_tag_name("DataArray")) {
                if a.attribute("format").is_some_and(|f| f != "ascii") {
                    return Err(perr("only ascii data arrays are supported"));
                }
            }
        }
        Ok(())
    };
    check_ascii("Points")?;
    check_ascii("Cells")?;
    let coords: Vec<f64> = array("Points", None)
        .ok_or_else(|| perr("missing Points"))?
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| perr("bad coordinate")))
        .collect::<Result<_>>()?;
    if coords.len() % 3 != 0 {
        return Err(perr("point array length is not a multiple of 3"));
    }
    let vertices: Vec<Point> = coords.chunks(3).map(|c| Point::new(c[0], c[1], c[2])).collect();
    let ints = |name: &str| -> Result<Vec<i64>> {
        array("Cells", Some(name))
            .ok_or_else(|| perr(&format!("missing {name}")))?
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|_| perr(&format!("bad integer in {name}"))))
            .collect()
    };
    let connectivity = ints("connectivity")?;
    let offsets = ints("offsets")?;
    let types = ints("types")?;
    let (faces_stream, face_offsets) = match (ints("faces"), ints("faceoffsets")) {
        (Ok(a), Ok(b)) => (a, b),
        _ => (Vec::new(), Vec::new()),
    };
    if types.len() != offsets.len() {
        return Err(perr("types and offsets differ in length"));
    }
    let idx = |v: i64| -> Result<usize> {
        usize::try_from(v)
            .ok()
            .filter(|&v| v < vertices.len())
            .ok_or_else(|| perr("vertex index out of range"))
    };
    let mut cells = Vec::with_capacity(types.len());
    let mut start = 0usize;
    for (c, (&t, &end)) in types.iter().zip(&offsets).enumerate() {
        let end = end as usize;
        let conn = connectivity.get(start..end).ok_or_else(|| perr("bad offsets"))?;
        let v: Vec<usize> = conn.iter().map(|&x| idx(x)).collect::<Result<_>>()?;
        start = end;
        let polys: Vec<Vec<usize>> = match t as u8 {
            VTK_TETRA if v.len() == 4 => vec![
                vec![v[0], v[2], v[1]],
                vec![v[0], v[1], v[3]],
                vec![v[1], v[2], v[3]],
                vec![v[0], v[3], v[2]],
            ],
            VTK_HEXAHEDRON if v.len() == 8 => vec![
                vec![v[0], v[3], v[2], v[1]],
                vec![v[4], v[5], v[6], v[7]],
                vec![v[0], v[1], v[5], v[4]],
                vec![v[1], v[2], v[6], v[5]],
                vec![v[2], v[3], v[7], v[6]],
                vec![v[3], v[0], v[4], v[7]],
            ],
            VTK_WEDGE if v.len() == 6 => vec![
                vec![v[0], v[1], v[2]],
                vec![v[3], v[5], v[4]],
                vec![v[0], v[3], v[4], v[1]],
                vec![v[1], v[4], v[5], v[2]],
                vec![v[2], v[5], v[3], v[0]],
            ],
            VTK_POLYHEDRON => {
                let fend = *face_offsets.get(c).ok_or_else(|| perr("missing faceoffsets"))? as usize;
                let fstart = if c == 0 { 0 } else { face_offsets[c - 1] as usize };
                let s = faces_stream.get(fstart..fend).ok_or_else(|| perr("bad faceoffsets"))?;
                let mut polys = Vec::new();
                let nfaces = *s.first().ok_or_else(|| perr("empty face stream"))? as usize;
                let mut k = 1;
                for _ in 0..nfaces {
                    let n = *s.get(k).ok_or_else(|| perr("truncated face stream"))? as usize;
                    let ids = s.get(k + 1..k + 1 + n).ok_or_else(|| perr("truncated face stream"))?;
                    polys.push(ids.iter().map(|&x| idx(x)).collect::<Result<_>>()?);
                    k += n + 1;
                }
                polys
            }
            other => return Err(perr(&format!("unsupported cell type {other} on cell {c}"))),
        };
        cells.push(polys);
    }
    PolyMesh::from_cell_polygons(vertices, &cells)
}

pub enum VtuFieldData {
    Cell(Vec<f64>),
    Point(Vec<f64>),
}

/// Named array with `components` values per entry.
pub struct VtuField {
    pub name: String,
    pub components: usize,
    pub data: VtuFieldData,
}

/// Writes the mesh as ASCII VTU polyhedra with the given fields.
pub fn write_vtu(mesh: &PolyMesh, fields: &[VtuField], path: &Path) -> Result<()> {
    let mut s = String::new();
    let nc = mesh.num_cells();
    let _ = writeln!(s, "<?xml version=\"1.0\"?>");
    let _ = writeln!(
        s,
        "<VTKFile type=\"UnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\">"
    );
    let _ = writeln!(s, "<UnstructuredGrid>");
    let _ = writeln!(s, "<Piece NumberOfPoints=\"{}\" NumberOfCells=\"{nc}\">", mesh.num_vertices());
    let _ = writeln!(s, "<Points><DataArray type=\"Float64\" NumberOfComponents=\"3\" format=\"ascii\">");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:e} {:e} {:e}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "</DataArray></Points>");

    let mut conn = String::new();
    let mut offs = String::new();
    let mut faces = String::new();
    let mut face_offs = String::new();
    let (mut off, mut foff) = (0usize, 0usize);
    for cell in &mesh.cells {
        for v in &cell.vertices {
            let _ = write!(conn, "{v} ");
        }
        off += cell.vertices.len();
        let _ = write!(offs, "{off} ");
        let _ = write!(faces, "{} ", cell.faces.len());
        foff += 1;
        for (k, &f) in cell.faces.iter().enumerate() {
            let l = &mesh.faces[f].vertices;
            let _ = write!(faces, "{} ", l.len());
            let mut ids: Vec<usize> = l.clone();
            if cell.orientation[k] < 0.0 {
                ids.reverse();
            }
            for v in ids {
                let _ = write!(faces, "{v} ");
            }
            foff += l.len() + 1;
        }
        let _ = write!(face_offs, "{foff} ");
    }
    let _ = writeln!(s, "<Cells>");
    for (name, body) in [("connectivity", &conn), ("offsets", &offs)] {
        let _ = writeln!(s, "<DataArray type=\"Int64\" Name=\"{name}\" format=\"ascii\">{body}</DataArray>");
    }
    let types = format!("{VTK_POLYHEDRON} ").repeat(nc);
    let _ = writeln!(s, "<DataArray type=\"UInt8\" Name=\"types\" format=\"ascii\">{types}</DataArray>");
    for (name, body) in [("faces", &faces), ("faceoffsets", &face_offs)] {
        let _ = writeln!(s, "<DataArray type=\"Int64\" Name=\"{name}\" format=\"ascii\">{body}</DataArray>");
    }
    let _ = writeln!(s, "</Cells>");

    for (tag, want_cell) in [("PointData", false), ("CellData", true)] {
        let _ = writeln!(s, "<{tag}>");
        for f in fields {
            let (is_cell, data) = match &f.data {
                VtuFieldData::Cell(d) => (true, d),
                VtuFieldData::Point(d) => (false, d),
            };
            if is_cell != want_cell {
                continue;
            }
            let expect = f.components * if is_cell { nc } else { mesh.num_vertices() };
            if data.len() != expect {
                return Err(Error::Dimension(format!(
                    "field {} has {} values, expected {expect}",
                    f.name,
                    data.len()
                )));
            }
            let _ = write!(
                s,
                "<DataArray type=\"Float64\" Name=\"{}\" NumberOfComponents=\"{}\" format=\"ascii\">",
                f.name, f.components
            );
            for v in data {
                let _ = write!(s, "{v:e} ");
            }
            let _ = writeln!(s, "</DataArray>");
        }
        let _ = writeln!(s, "</{tag}>");
    }
    let _ = writeln!(s, "</Piece>\n</UnstructuredGrid>\n</VTKFile>");
    std::fs::write(path, s)?;
    Ok(())
}
