//! Canonical test shapes: circles, ellipses, rounded squares, sphere octants.

use crate::shape::{Polyline, TriMesh, Vec2, Vec3};

/// Closed circle polyline with `n` edges, counterclockwise.
pub fn circle(center: Vec2, radius: f64, n: usize) -> Polyline {
    Polyline::new(
        (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                center + Vec2::new(radius * t.cos(), radius * t.sin())
            })
            .collect(),
        true,
        None,
    )
    .expect("circle is nondegenerate")
}

/// Closed axis-aligned ellipse with semi-axes `a`, `b`.
pub fn ellipse(center: Vec2, a: f64, b: f64, n: usize) -> Polyline {
    Polyline::new(
        (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                center + Vec2::new(a * t.cos(), b * t.sin())
            })
            .collect(),
        true,
        None,
    )
    .expect("ellipse is nondegenerate")
}

/// Rounded square: the superellipse `|x/h|^p + |y/h|^p = 1` sampled at `n`
/// equal parameter steps. Larger `p` sharpens the corners.
pub fn rounded_square(center: Vec2, half_side: f64, p: f64, n: usize) -> Polyline {
    let e = 2.0 / p;
    Polyline::new(
        (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let (s, c) = t.sin_cos();
                center
                    + Vec2::new(
                        half_side * c.signum() * c.abs().powf(e),
                        half_side * s.signum() * s.abs().powf(e),
                    )
            })
            .collect(),
        true,
        None,
    )
    .expect("rounded square is nondegenerate")
}

/// Triangulated octant of the unit sphere (x, y, z >= 0), outward normals,
/// `divisions^2` faces.
pub fn sphere_octant(divisions: usize) -> TriMesh {
    let k = divisions.max(1);
    let corner_a = Vec3::x();
    let corner_b = Vec3::y();
    let corner_c = Vec3::z();
    let mut vertices = Vec::new();
    let mut index = vec![vec![usize::MAX; k + 1]; k + 1];
    for i in 0..=k {
        for j in 0..=(k - i) {
            let u = i as f64 / k as f64;
            let v = j as f64 / k as f64;
            let p = corner_a * u + corner_b * v + corner_c * (1.0 - u - v);
            index[i][j] = vertices.len();
            vertices.push(p.normalize());
        }
    }
    let mut faces = Vec::new();
    for i in 0..k {
        for j in 0..(k - i) {
            faces.push([index[i][j], index[i + 1][j], index[i][j + 1]]);
            if i + j < k - 1 {
                faces.push([index[i + 1][j], index[i + 1][j + 1], index[i][j + 1]]);
            }
        }
    }
    TriMesh::new(vertices, faces, None).expect("octant is nondegenerate")
}
