//! Shape file formats: polyline CSV, polyline JSON, Wavefront OBJ.
//!
//! All writers print floats with Rust's shortest-roundtrip formatting, so a
//! write/read cycle reproduces every coordinate bit for bit.
//!
//! Polyline CSV layout:
//! ```text
//! # closed=true
//! x,y,signal
//! 1.0,0.0,0.25
//! ...
//! ```
//! The signal column is optional and holds one value per edge; for open
//! curves the last row leaves it empty (n vertices bound n-1 edges).
//!
//! Polyline JSON is an object with `vertices`, `closed` and optional
//! `signal`. OBJ honours `v` and `f` records only (texture and normal data
//! are ignored); an optional per-face signal roundtrips through trailing
//! `# signal <value>` comment lines.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Polyline, TriMesh, Vec2, Vec3};
use crate::error::{Error, Result};

/// Supported on-disk formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFormat {
    PolylineCsv,
    PolylineJson,
    Obj,
}

impl ShapeFormat {
    /// Picks the format from a file extension (`csv`, `json`, `obj`).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("csv") => Ok(Self::PolylineCsv),
            Some("json") => Ok(Self::PolylineJson),
            Some("obj") => Ok(Self::Obj),
            other => Err(Error::UnsupportedFormat(format!(
                "cannot infer shape format from extension {:?} of {}",
                other.unwrap_or(""),
                path.display()
            ))),
        }
    }
}

/// A parsed shape: planar curve or triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Curve(Polyline),
    Mesh(TriMesh),
}

impl Shape {
    pub fn into_curve(self) -> Result<Polyline> {
        match self {
            Shape::Curve(p) => Ok(p),
            Shape::Mesh(_) => Err(Error::UnsupportedShape(
                "expected a planar curve but found a triangle mesh".into(),
            )),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Shape::Curve(_) => 2,
            Shape::Mesh(_) => 3,
        }
    }
}

/// Reads a shape file in the given format.
pub fn read_shape(path: &Path, format: ShapeFormat) -> Result<Shape> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ParseError {
            path: path.display().to_string(),
            line: 0,
            message: "file not found".into(),
        },
        _ => Error::Io(e),
    })?;
    let name = path.display().to_string();
    match format {
        ShapeFormat::PolylineCsv => parse_polyline_csv(&name, &text).map(Shape::Curve),
        ShapeFormat::PolylineJson => parse_polyline_json(&name, &text).map(Shape::Curve),
        ShapeFormat::Obj => parse_obj(&name, &text).map(Shape::Mesh),
    }
}

/// Writes a shape in the given format. Curves go to CSV/JSON, meshes to OBJ.
pub fn write_shape(shape: &Shape, path: &Path, format: ShapeFormat) -> Result<()> {
    let text = match (shape, format) {
        (Shape::Curve(p), ShapeFormat::PolylineCsv) => polyline_to_csv(p),
        (Shape::Curve(p), ShapeFormat::PolylineJson) => polyline_to_json(p),
        (Shape::Mesh(m), ShapeFormat::Obj) => trimesh_to_obj(m),
        (Shape::Curve(_), ShapeFormat::Obj) => {
            return Err(Error::UnsupportedFormat(
                "OBJ stores triangle meshes, not polylines".into(),
            ))
        }
        (Shape::Mesh(_), _) => {
            return Err(Error::UnsupportedFormat(
                "polyline formats cannot store a triangle mesh".into(),
            ))
        }
    };
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::ParseError {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &str, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid number {s:?}")))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn parse_polyline_csv(path: &str, text: &str) -> Result<Polyline> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let closed = match first.trim().replace(' ', "").as_str() {
        "#closed=true" => true,
        "#closed=false" => false,
        other => {
            return Err(parse_err(
                path,
                1,
                format!("expected `# closed=true|false`, got {other:?}"),
            ))
        }
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing header row"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_signal = match cols.as_slice() {
        ["x", "y"] => false,
        ["x", "y", "signal"] => true,
        ["x", "y", "z", ..] => {
            return Err(Error::UnsupportedShape(
                "space curves are not supported; polylines are planar".into(),
            ))
        }
        _ => {
            return Err(parse_err(
                path,
                2,
                format!("expected header `x,y[,signal]`, got {header:?}"),
            ))
        }
    };

    let mut vertices = Vec::new();
    let mut signal = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 || fields.len() > 3 || (!with_signal && fields.len() == 3) {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, got {}", if with_signal { 3 } else { 2 }, fields.len()),
            ));
        }
        vertices.push(Vec2::new(
            parse_f64(path, lineno, fields[0])?,
            parse_f64(path, lineno, fields[1])?,
        ));
        if with_signal {
            match fields.get(2).map(|s| s.trim()) {
                Some("") | None => {}
                Some(s) => signal.push(parse_f64(path, lineno, s)?),
            }
        }
    }
    let signal = if with_signal { Some(signal) } else { None };
    Polyline::new(vertices, closed, signal)
}

fn polyline_to_csv(p: &Polyline) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# closed={}", p.closed());
    let signal = crate::shape::DiscreteShape::signal(p);
    let _ = writeln!(out, "{}", if signal.is_some() { "x,y,signal" } else { "x,y" });
    for (i, v) in p.vertices().iter().enumerate() {
        match signal {
            Some(sig) if i < sig.len() => {
                let _ = writeln!(out, "{},{},{}", v.x, v.y, sig[i]);
            }
            Some(_) => {
                // last vertex of an open curve bounds no edge
                let _ = writeln!(out, "{},{},", v.x, v.y);
            }
            None => {
                let _ = writeln!(out, "{},{}", v.x, v.y);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PolylineJson {
    vertices: Vec<Vec<f64>>,
    closed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    signal: Option<Vec<f64>>,
}

fn parse_polyline_json(path: &str, text: &str) -> Result<Polyline> {
    let raw: PolylineJson = serde_json::from_str(text)
        .map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    let mut vertices = Vec::with_capacity(raw.vertices.len());
    for (i, v) in raw.vertices.iter().enumerate() {
        match v.as_slice() {
            [x, y] => vertices.push(Vec2::new(*x, *y)),
            [_, _, _] => {
                return Err(Error::UnsupportedShape(
                    "space curves are not supported; polylines are planar".into(),
                ))
            }
            _ => {
                return Err(parse_err(
                    path,
                    0,
                    format!("vertex {i} must have exactly 2 coordinates"),
                ))
            }
        }
    }
    Polyline::new(vertices, raw.closed, raw.signal)
}

fn polyline_to_json(p: &Polyline) -> String {
    let raw = PolylineJson {
        vertices: p.vertices().iter().map(|v| vec![v.x, v.y]).collect(),
        closed: p.closed(),
        signal: crate::shape::DiscreteShape::signal(p).map(|s| s.to_vec()),
    };
    let mut text = serde_json::to_string_pretty(&raw).expect("polyline serializes");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------------

fn parse_obj(path: &str, text: &str) -> Result<TriMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut face_lines: Vec<usize> = Vec::new();
    let mut signal: Vec<f64> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# signal") {
            signal.push(parse_f64(path, lineno, rest)?);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<&str> = fields.collect();
                if coords.len() < 3 {
                    return Err(parse_err(path, lineno, "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(
                    parse_f64(path, lineno, coords[0])?,
                    parse_f64(path, lineno, coords[1])?,
                    parse_f64(path, lineno, coords[2])?,
                ));
            }
            Some("f") => {
                let idxs: Vec<&str> = fields.collect();
                if idxs.len() != 3 {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("only triangular faces are supported, got {} indices", idxs.len()),
                    ));
                }
                let mut face = [0usize; 3];
                for (k, raw) in idxs.iter().enumerate() {
                    // `a/b/c` forms: texture/normal references are ignored
                    let first = raw.split('/').next().unwrap_or("");
                    let value: i64 = first.parse().map_err(|_| {
                        parse_err(path, lineno, format!("invalid face index {raw:?}"))
                    })?;
                    if value < 1 {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("face index {value} must be positive (1-based)"),
                        ));
                    }
                    face[k] = (value - 1) as usize;
                }
                faces.push(face);
                face_lines.push(lineno);
            }
            // texture, normal, group and material records are ignored
            _ => {}
        }
    }
    for (f, &lineno) in faces.iter().zip(&face_lines) {
        for &idx in f {
            if idx >= vertices.len() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!(
                        "face index {} out of range: file has {} vertices",
                        idx + 1,
                        vertices.len()
                    ),
                ));
            }
        }
    }
    let signal = if signal.is_empty() {
        None
    } else {
        if signal.len() != faces.len() {
            return Err(parse_err(
                path,
                0,
                format!(
                    "found {} `# signal` lines for {} faces",
                    signal.len(),
                    faces.len()
                ),
            ));
        }
        Some(signal)
    };
    TriMesh::new(vertices, faces, signal)
}

fn trimesh_to_obj(m: &TriMesh) -> String {
    let mut out = String::new();
    for v in m.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in m.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    if let Some(sig) = crate::shape::DiscreteShape::signal(m) {
        for s in sig {
            let _ = writeln!(out, "# signal {s}");
        }
    }
    out
}
