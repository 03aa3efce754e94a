#![allow(dead_code)]

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use wound3d::mesh::TriangleMesh;

/// Rectangle [-3, 3] x [-2, 2] split into `n` x `n` quads, z = f(x, y).
pub fn grid(n: usize, f: impl Fn(f64, f64) -> f64) -> TriangleMesh<f64> {
    let mut v = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (-3.0 + 6.0 * i as f64 / n as f64, -2.0 + 4.0 * j as f64 / n as f64);
            v.push(Point3::new(x, y, f(x, y)));
        }
    }
    let mut faces = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let a = j * (n + 1) + i;
            faces.push([a, a + 1, a + n + 2]);
            faces.push([a, a + n + 2, a + n + 1]);
        }
    }
    TriangleMesh::new(v, faces).expect("grid mesh")
}

/// Closed UV sphere with outward-facing triangles.
pub fn sphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh<f64> {
    let mut v = vec![Point3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let th = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let ph = std::f64::consts::TAU * s as f64 / segments as f64;
            v.push(Point3::new(radius * th.sin() * ph.cos(), radius * th.sin() * ph.sin(), radius * th.cos()));
        }
    }
    let south = v.len();
    v.push(Point3::new(0.0, 0.0, -radius));
    let at = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut f = Vec::new();
    for s in 0..segments {
        f.push([0, at(1, s), at(1, s + 1)]);
        f.push([south, at(rings - 1, s + 1), at(rings - 1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            f.push([at(r, s), at(r + 1, s), at(r + 1, s + 1)]);
            f.push([at(r, s), at(r + 1, s + 1), at(r, s + 1)]);
        }
    }
    TriangleMesh::new(v, f).expect("sphere mesh")
}

pub fn rotation(ax: f64, ay: f64, az: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(ax, ay, az).into_inner()
}

pub fn transform_point(r: &Matrix3<f64>, t: &Vector3<f64>, p: &Point3<f64>) -> Point3<f64> {
    Point3::from(r * p.coords + t)
}

/// 640x480 pinhole camera at `center` looking at `target`.
pub fn look_at(center: Point3<f64>, target: Point3<f64>, id: &str) -> wound3d::Camera {
    let fwd = (target - center).normalize();
    let up = if fwd.z.abs() > 0.99 { Vector3::y() } else { Vector3::z() };
    let right = fwd.cross(&up).normalize();
    let down = fwd.cross(&right);
    let r = Matrix3::from_columns(&[right, down, fwd]);
    wound3d::Camera::new(id, format!("{id}.png"), 640, 480, 600.0, 600.0, 320.0, 240.0, r, center).expect("valid camera")
}
