//! Discrete curve and mesh representations and their cell geometry.
//!
//! A [`Polyline`] is a piecewise linear planar curve (open or closed) and a
//! [`TriMesh`] is an oriented triangle mesh in R^3. Both may carry one scalar
//! signal value per cell (edge or face). Everything is immutable after
//! construction; geometric quantities are computed on demand by
//! [`DiscreteShape::cell_geometry`].

pub mod io;

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Relative degeneracy threshold: a cell measure must exceed this fraction of
/// the shape's bounding-box diagonal to count as nondegenerate.
pub const DEGENERACY_REL: f64 = 1e-12;

/// Rotation by +90 degrees: (x, y) -> (-y, x).
#[inline]
pub fn rot90(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Rotation by -90 degrees, the inverse (and transpose) of [`rot90`].
#[inline]
pub fn rot90_inv(v: Vec2) -> Vec2 {
    Vec2::new(v.y, -v.x)
}

/// Per-cell geometric quantities of a discrete shape.
///
/// For curves the cells are edges (normal = tangent rotated by +90 degrees,
/// measure = edge length, center = midpoint); for meshes they are faces
/// (normal from the oriented cross product, measure = area, center =
/// centroid). `tangents` is present for curves only.
#[derive(Debug, Clone)]
pub struct CellGeometry<const D: usize> {
    pub normals: Vec<SVector<f64, D>>,
    pub measures: Vec<f64>,
    pub centers: Vec<SVector<f64, D>>,
    pub tangents: Option<Vec<SVector<f64, D>>>,
}

impl<const D: usize> CellGeometry<D> {
    pub fn cell_count(&self) -> usize {
        self.measures.len()
    }

    pub fn total_measure(&self) -> f64 {
        crate::accum::compensated_sum(self.measures.iter().copied())
    }
}

/// Common interface of [`Polyline`] (D = 2) and [`TriMesh`] (D = 3).
///
/// The matching driver optimizes over flattened vertex coordinates, so shapes
/// know how to rebuild themselves from a coordinate slice and how to push a
/// per-cell adjoint (derivatives with respect to cell center, unit normal and
/// measure) back onto their vertices.
pub trait DiscreteShape<const D: usize>: Clone + Send + Sync {
    fn vertex_count(&self) -> usize;
    fn cell_count(&self) -> usize;

    /// Per-cell scalar signal, if the shape carries one.
    fn signal(&self) -> Option<&[f64]>;

    /// Vertex coordinates flattened to `[x0, y0, (z0,) x1, ...]`.
    fn flat_vertices(&self) -> Vec<f64>;

    /// Same connectivity and signal, new vertex positions.
    ///
    /// Only the coordinate count is checked; degenerate intermediate
    /// configurations surface later as [`Error::DegenerateCell`] from
    /// geometry computations.
    fn with_flat_vertices(&self, coords: &[f64]) -> Self;

    /// Tangents/normals, measures, centers for every cell.
    fn cell_geometry(&self) -> Result<CellGeometry<D>>;

    /// True when both shapes are immersions of the same parameter mesh:
    /// identical cell structure and connectivity.
    fn same_structure(&self, other: &Self) -> bool;

    fn bounding_box(&self) -> (SVector<f64, D>, SVector<f64, D>);

    fn bounding_box_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Accumulates the vertex gradient of a functional whose dependence on
    /// this shape factors through cell centers, unit normals and measures.
    ///
    /// `d_center`, `d_normal`, `d_measure` are the partial derivatives with
    /// respect to the quantities of `cell`; the method applies the chain rule
    /// through the cell construction and adds the result into `grad` (one
    /// ambient vector per vertex).
    fn accumulate_cell_adjoint(
        &self,
        geom: &CellGeometry<D>,
        cell: usize,
        d_center: SVector<f64, D>,
        d_normal: SVector<f64, D>,
        d_measure: f64,
        grad: &mut [SVector<f64, D>],
    );
}

fn bbox_of<const D: usize>(points: &[SVector<f64, D>]) -> (SVector<f64, D>, SVector<f64, D>) {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for k in 0..D {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

// ---------------------------------------------------------------------------
// Polyline
// ---------------------------------------------------------------------------

/// Piecewise linear planar curve, open or closed, with an optional per-edge
/// scalar signal.
///
/// A closed polyline with `n` vertices has `n` edges (the last one wraps back
/// to the first vertex); an open one has `n - 1`. Space curves are not
/// supported: the curve SRNF needs the planar 90-degree rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    vertices: Vec<Vec2>,
    closed: bool,
    signal: Option<Vec<f64>>,
}

impl Polyline {
    pub fn new(vertices: Vec<Vec2>, closed: bool, signal: Option<Vec<f64>>) -> Result<Self> {
        let min_vertices = if closed { 3 } else { 2 };
        if vertices.len() < min_vertices {
            return Err(Error::InvalidShape(format!(
                "{} polyline needs at least {} vertices, got {}",
                if closed { "closed" } else { "open" },
                min_vertices,
                vertices.len()
            )));
        }
        if let Some(bad) = vertices
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite()))
        {
            return Err(Error::InvalidShape(format!(
                "vertex {bad} has non-finite coordinates"
            )));
        }
        let shape = Self {
            vertices,
            closed,
            signal: None,
        };
        let threshold = DEGENERACY_REL * shape.bounding_box_diagonal();
        for (i, e) in shape.edge_vectors().enumerate() {
            if e.norm() <= threshold {
                return Err(Error::DegenerateCell {
                    cell: i,
                    measure: e.norm(),
                    threshold,
                });
            }
        }
        let shape = Self { signal, ..shape };
        if let Some(sig) = &shape.signal {
            if sig.len() != shape.cell_count() {
                return Err(Error::InvalidShape(format!(
                    "signal has {} values for {} edges",
                    sig.len(),
                    shape.cell_count()
                )));
            }
        }
        Ok(shape)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    /// Edge vectors `v[i+1] - v[i]`, wrapping for closed curves.
    pub fn edge_vectors(&self) -> impl Iterator<Item = Vec2> + '_ {
        let n = self.vertices.len();
        (0..self.cell_count()).map(move |i| self.vertices[(i + 1) % n] - self.vertices[i])
    }

    fn edge_endpoints(&self, cell: usize) -> (usize, usize) {
        (cell, (cell + 1) % self.vertices.len())
    }

    /// Mean of the vertices. Used to pin translations when interpolating.
    pub fn vertex_centroid(&self) -> Vec2 {
        let mut c = Vec2::zeros();
        for v in &self.vertices {
            c += v;
        }
        c / self.vertices.len() as f64
    }

    /// Translates every vertex by `t`.
    pub fn translated(&self, t: Vec2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + t).collect(),
            closed: self.closed,
            signal: self.signal.clone(),
        }
    }

    /// Midpoint subdivision: each edge is split in two, `levels` times.
    /// The curve as a point set is unchanged; signals copy to both children.
    pub fn subdivide(&self, levels: u32) -> Self {
        let mut cur = self.clone();
        for _ in 0..levels {
            let n = cur.vertices.len();
            let cells = cur.cell_count();
            let mut vertices = Vec::with_capacity(n + cells);
            for i in 0..cells {
                let a = cur.vertices[i];
                let b = cur.vertices[(i + 1) % n];
                vertices.push(a);
                vertices.push((a + b) * 0.5);
            }
            if !cur.closed {
                vertices.push(cur.vertices[n - 1]);
            }
            let signal = cur
                .signal
                .as_ref()
                .map(|s| s.iter().flat_map(|&v| [v, v]).collect());
            cur = Self {
                vertices,
                closed: cur.closed,
                signal,
            };
        }
        cur
    }
}

impl DiscreteShape<2> for Polyline {
    fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    fn cell_count(&self) -> usize {
        if self.closed {
            self.vertices.len()
        } else {
            self.vertices.len() - 1
        }
    }

    fn signal(&self) -> Option<&[f64]> {
        self.signal.as_deref()
    }

    fn flat_vertices(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|v| [v.x, v.y]).collect()
    }

    fn with_flat_vertices(&self, coords: &[f64]) -> Self {
        assert_eq!(coords.len(), 2 * self.vertices.len());
        Self {
            vertices: coords
                .chunks_exact(2)
                .map(|c| Vec2::new(c[0], c[1]))
                .collect(),
            closed: self.closed,
            signal: self.signal.clone(),
        }
    }

    fn cell_geometry(&self) -> Result<CellGeometry<2>> {
        let threshold = DEGENERACY_REL * self.bounding_box_diagonal();
        let cells = self.cell_count();
        let mut normals = Vec::with_capacity(cells);
        let mut tangents = Vec::with_capacity(cells);
        let mut measures = Vec::with_capacity(cells);
        let mut centers = Vec::with_capacity(cells);
        let n = self.vertices.len();
        for i in 0..cells {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let e = b - a;
            let len = e.norm();
            if len <= threshold {
                return Err(Error::DegenerateCell {
                    cell: i,
                    measure: len,
                    threshold,
                });
            }
            let t = e / len;
            tangents.push(t);
            normals.push(rot90(t));
            measures.push(len);
            centers.push((a + b) * 0.5);
        }
        Ok(CellGeometry {
            normals,
            measures,
            centers,
            tangents: Some(tangents),
        })
    }

    fn same_structure(&self, other: &Self) -> bool {
        self.vertices.len() == other.vertices.len() && self.closed == other.closed
    }

    fn bounding_box(&self) -> (Vec2, Vec2) {
        bbox_of(&self.vertices)
    }

    fn accumulate_cell_adjoint(
        &self,
        geom: &CellGeometry<2>,
        cell: usize,
        d_center: Vec2,
        d_normal: Vec2,
        d_measure: f64,
        grad: &mut [Vec2],
    ) {
        let t = geom.tangents.as_ref().expect("curve geometry")[cell];
        let m = geom.measures[cell];
        // n = rot90(e/|e|), m = |e|:
        //   dE/de = (I - t t^T) rot90^T dE/dn / m  +  t dE/dm
        let rn = rot90_inv(d_normal);
        let edge_grad = (rn - t * t.dot(&rn)) / m + t * d_measure;
        let (tail, head) = self.edge_endpoints(cell);
        grad[head] += edge_grad;
        grad[tail] -= edge_grad;
        // center = (v_tail + v_head)/2
        let half = d_center * 0.5;
        grad[head] += half;
        grad[tail] += half;
    }
}

// ---------------------------------------------------------------------------
// TriMesh
// ---------------------------------------------------------------------------

/// Oriented triangle mesh in R^3 with an optional per-face scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    signal: Option<Vec<f64>>,
}

impl TriMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        signal: Option<Vec<f64>>,
    ) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::InvalidShape(
                "mesh needs at least one vertex and one face".into(),
            ));
        }
        if let Some(bad) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidShape(format!(
                "vertex {bad} has non-finite coordinates"
            )));
        }
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx >= vertices.len() {
                    return Err(Error::InvalidShape(format!(
                        "face {fi} references vertex {idx} but there are only {}",
                        vertices.len()
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidShape(format!(
                    "face {fi} repeats a vertex index"
                )));
            }
        }
        if let Some(sig) = &signal {
            if sig.len() != faces.len() {
                return Err(Error::InvalidShape(format!(
                    "signal has {} values for {} faces",
                    sig.len(),
                    faces.len()
                )));
            }
        }
        let mesh = Self {
            vertices,
            faces,
            signal,
        };
        // Validates face areas against the degeneracy threshold.
        mesh.cell_geometry()?;
        mesh.warn_on_inconsistent_orientation();
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Directed-edge check: on a manifold mesh with consistent orientation
    /// every directed edge appears at most once. Varifold atoms only need
    /// per-face orientation, so violations warn instead of failing.
    fn warn_on_inconsistent_orientation(&self) {
        use std::collections::HashMap;
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
        for (&(a, b), &c) in &directed {
            *undirected.entry((a.min(b), a.max(b))).or_insert(0) += c;
        }
        for (&(a, b), &count) in &directed {
            let total = undirected[&(a.min(b), a.max(b))];
            if count > 1 && total <= 2 {
                log::warn!(
                    "mesh orientation inconsistent: directed edge ({a},{b}) appears {count} times"
                );
                return;
            }
        }
    }

    /// 1-to-4 midpoint refinement, `levels` times. The surface as a point set
    /// is unchanged; signals copy to the four children.
    pub fn subdivide(&self, levels: u32) -> Self {
        use std::collections::HashMap;
        let mut cur = self.clone();
        for _ in 0..levels {
            let mut vertices = cur.vertices.clone();
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    vertices.push((vertices[a] + vertices[b]) * 0.5);
                    vertices.len() - 1
                })
            };
            let mut faces = Vec::with_capacity(cur.faces.len() * 4);
            let mut signal = cur.signal.as_ref().map(|_| Vec::with_capacity(faces.capacity()));
            for (fi, &[a, b, c]) in cur.faces.iter().enumerate() {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                faces.push([a, ab, ca]);
                faces.push([ab, b, bc]);
                faces.push([ca, bc, c]);
                faces.push([ab, bc, ca]);
                if let (Some(out), Some(sig)) = (signal.as_mut(), cur.signal.as_ref()) {
                    out.extend(std::iter::repeat_n(sig[fi], 4));
                }
            }
            cur = Self {
                vertices,
                faces,
                signal,
            };
        }
        cur
    }
}

impl DiscreteShape<3> for TriMesh {
    fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    fn cell_count(&self) -> usize {
        self.faces.len()
    }

    fn signal(&self) -> Option<&[f64]> {
        self.signal.as_deref()
    }

    fn flat_vertices(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    fn with_flat_vertices(&self, coords: &[f64]) -> Self {
        assert_eq!(coords.len(), 3 * self.vertices.len());
        Self {
            vertices: coords
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
            faces: self.faces.clone(),
            signal: self.signal.clone(),
        }
    }

    fn cell_geometry(&self) -> Result<CellGeometry<3>> {
        let diag = self.bounding_box_diagonal();
        let threshold = DEGENERACY_REL * diag * diag;
        let mut normals = Vec::with_capacity(self.faces.len());
        let mut measures = Vec::with_capacity(self.faces.len());
        let mut centers = Vec::with_capacity(self.faces.len());
        for (fi, &[a, b, c]) in self.faces.iter().enumerate() {
            let (va, vb, vc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let cross = (vb - va).cross(&(vc - va));
            let norm = cross.norm();
            let area = 0.5 * norm;
            if area <= threshold {
                return Err(Error::DegenerateCell {
                    cell: fi,
                    measure: area,
                    threshold,
                });
            }
            normals.push(cross / norm);
            measures.push(area);
            centers.push((va + vb + vc) / 3.0);
        }
        Ok(CellGeometry {
            normals,
            measures,
            centers,
            tangents: None,
        })
    }

    fn same_structure(&self, other: &Self) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    fn bounding_box(&self) -> (Vec3, Vec3) {
        bbox_of(&self.vertices)
    }

    fn accumulate_cell_adjoint(
        &self,
        geom: &CellGeometry<3>,
        cell: usize,
        d_center: Vec3,
        d_normal: Vec3,
        d_measure: f64,
        grad: &mut [Vec3],
    ) {
        let [i0, i1, i2] = self.faces[cell];
        let u = self.vertices[i1] - self.vertices[i0];
        let w = self.vertices[i2] - self.vertices[i0];
        let n = geom.normals[cell];
        let s = 2.0 * geom.measures[cell]; // |u x w|
        // n = cr/|cr|, m = |cr|/2 with cr = u x w:
        //   dE/dcr = (I - n n^T) dE/dn / |cr| + n dE/dm / 2
        let g = (d_normal - n * n.dot(&d_normal)) / s + n * (0.5 * d_measure);
        let gu = w.cross(&g);
        let gw = g.cross(&u);
        grad[i1] += gu;
        grad[i2] += gw;
        grad[i0] -= gu + gw;
        let third = d_center / 3.0;
        grad[i0] += third;
        grad[i1] += third;
        grad[i2] += third;
    }
}
