//! Indexed triangle mesh with derived per-face geometry and edge adjacency.

mod morphology;
mod topology;

pub use morphology::{label_morphology, morph_mask, MorphOp};
pub use topology::{boundary_loops, connected_components, face_set_area, loop_length};
#[cfg(test)]
pub(crate) use topology::tests::grid as test_grid;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Immutable triangle mesh. Faces wind counter-clockwise around their
/// outward normal.
#[derive(Clone, Debug)]
pub struct TriangleMesh<T: Real> {
    vertices: Vec<Point3<T>>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Vector3<T>>,
    areas: Vec<T>,
    /// `neighbors[f][k]` is the face across edge `(faces[f][k], faces[f][(k+1)%3])`.
    neighbors: Vec<[Option<usize>; 3]>,
    colors: Option<Vec<[u8; 3]>>,
    dropped_degenerate: usize,
}

impl<T: Real> TriangleMesh<T> {
    /// Validates and builds a mesh. Degenerate faces (repeated indices or
    /// vanishing area) are dropped and counted; out-of-range indices,
    /// non-manifold edges, and empty results are errors.
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx >= n {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index: idx,
                        count: n,
                    });
                }
            }
        }

        let diag2 = bbox_diagonal_sq(&vertices);
        let area_eps = T::default_epsilon() * diag2;
        let half: T = lit(0.5);

        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut areas = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for f in faces {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                dropped += 1;
                continue;
            }
            let cross = face_cross(&vertices, &f);
            let area = cross.norm() * half;
            if !(area > area_eps) {
                dropped += 1;
                continue;
            }
            normals.push(cross.normalize());
            areas.push(area);
            kept.push(f);
        }
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }

        let neighbors = build_neighbors(&kept)?;
        Ok(TriangleMesh {
            vertices,
            faces: kept,
            normals,
            areas,
            neighbors,
            colors: None,
            dropped_degenerate: dropped,
        })
    }

    /// Attaches per-vertex colors carried through from the input file.
    pub fn with_colors(mut self, colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} colors for {} vertices",
                colors.len(),
                self.vertices.len()
            )));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Number of faces dropped as degenerate during validation.
    pub fn dropped_degenerate(&self) -> usize {
        self.dropped_degenerate
    }

    #[inline]
    pub fn face_normal(&self, face: usize) -> Vector3<T> {
        self.normals[face]
    }

    #[inline]
    pub fn face_area(&self, face: usize) -> T {
        self.areas[face]
    }

    #[inline]
    pub fn face_barycenter(&self, face: usize) -> Point3<T> {
        let [a, b, c] = self.faces[face];
        let third: T = lit(1.0 / 3.0);
        Point3::from(
            (self.vertices[a].coords + self.vertices[b].coords + self.vertices[c].coords) * third,
        )
    }

    /// Unit normal, area and barycenter of one face.
    pub fn face_normal_area_barycenter(&self, face: usize) -> (Vector3<T>, T, Point3<T>) {
        (
            self.face_normal(face),
            self.face_area(face),
            self.face_barycenter(face),
        )
    }

    pub fn face_vertices(&self, face: usize) -> [Point3<T>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_neighbors(&self, face: usize) -> &[Option<usize>; 3] {
        &self.neighbors[face]
    }

    pub fn total_area(&self) -> T {
        self.areas.iter().fold(T::zero(), |acc, &a| acc + a)
    }

    /// Mean length over all undirected edges.
    pub fn mean_edge_length(&self) -> T {
        let mut sum = T::zero();
        let mut count = 0usize;
        for (f, tri) in self.faces.iter().enumerate() {
            for k in 0..3 {
                // Count interior edges once, from the lower face id.
                if let Some(nb) = self.neighbors[f][k] {
                    if nb < f {
                        continue;
                    }
                }
                let a = self.vertices[tri[k]];
                let b = self.vertices[tri[(k + 1) % 3]];
                sum += (b - a).norm();
                count += 1;
            }
        }
        sum / from_usize(count.max(1))
    }

    /// Applies `p -> rotation * p + translation` to every vertex.
    pub fn transformed(&self, rotation: &Matrix3<T>, translation: &Vector3<T>) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|p| Point3::from(rotation * p.coords + translation))
            .collect();
        self.with_vertices(vertices)
    }

    /// Uniformly scales vertex coordinates.
    pub fn scaled(&self, scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::NonPositiveScale(crate::scalar::to_f64(scale)));
        }
        let vertices = self.vertices.iter().map(|p| p * scale).collect();
        Ok(self.with_vertices(vertices))
    }

    /// Same connectivity with new vertex positions; derived quantities are
    /// recomputed. Faces that became degenerate keep a zero normal.
    pub fn with_vertices(&self, vertices: Vec<Point3<T>>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len());
        let half: T = lit(0.5);
        let mut normals = Vec::with_capacity(self.faces.len());
        let mut areas = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let cross = face_cross(&vertices, f);
            let norm = cross.norm();
            areas.push(norm * half);
            normals.push(if norm > T::zero() {
                cross / norm
            } else {
                Vector3::zeros()
            });
        }
        TriangleMesh {
            vertices,
            faces: self.faces.clone(),
            normals,
            areas,
            neighbors: self.neighbors.clone(),
            colors: self.colors.clone(),
            dropped_degenerate: self.dropped_degenerate,
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> TriangleMesh<U> {
        let vertices = self
            .vertices
            .iter()
            .map(|p| {
                Point3::new(
                    lit::<U>(crate::scalar::to_f64(p.x)),
                    lit::<U>(crate::scalar::to_f64(p.y)),
                    lit::<U>(crate::scalar::to_f64(p.z)),
                )
            })
            .collect::<Vec<_>>();
        let half: U = lit(0.5);
        let mut normals = Vec::with_capacity(self.faces.len());
        let mut areas = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let cross = face_cross(&vertices, f);
            areas.push(cross.norm() * half);
            normals.push(cross.normalize());
        }
        TriangleMesh {
            vertices,
            faces: self.faces.clone(),
            normals,
            areas,
            neighbors: self.neighbors.clone(),
            colors: self.colors.clone(),
            dropped_degenerate: self.dropped_degenerate,
        }
    }
}

fn face_cross<T: Real>(vertices: &[Point3<T>], f: &[usize; 3]) -> Vector3<T> {
    let a = vertices[f[0]];
    let b = vertices[f[1]];
    let c = vertices[f[2]];
    (b - a).cross(&(c - a))
}

fn bbox_diagonal_sq<T: Real>(vertices: &[Point3<T>]) -> T {
    let Some(first) = vertices.first() else {
        return T::zero();
    };
    let (mut lo, mut hi) = (first.coords, first.coords);
    for p in vertices {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    (hi - lo).norm_squared()
}

fn build_neighbors(faces: &[[usize; 3]]) -> Result<Vec<[Option<usize>; 3]>> {
    // (lo, hi, face, local edge)
    let mut edges: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(faces.len() * 3);
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let a = f[k];
            let b = f[(k + 1) % 3];
            edges.push((a.min(b), a.max(b), fi, k));
        }
    }
    edges.sort_unstable();

    let mut neighbors = vec![[None; 3]; faces.len()];
    let mut i = 0;
    while i < edges.len() {
        let mut j = i + 1;
        while j < edges.len() && edges[j].0 == edges[i].0 && edges[j].1 == edges[i].1 {
            j += 1;
        }
        match j - i {
            1 => {}
            2 => {
                let (_, _, fa, ka) = edges[i];
                let (_, _, fb, kb) = edges[i + 1];
                neighbors[fa][ka] = Some(fb);
                neighbors[fb][kb] = Some(fa);
            }
            _ => return Err(Error::NonManifoldEdge(edges[i].0, edges[i].1)),
        }
        i = j;
    }
    Ok(neighbors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tri(points: [[f64; 3]; 3]) -> TriangleMesh<f64> {
        let v = points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect();
        TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn unit_triangle_geometry() {
        let m = tri([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]]);
        let (n, a, b) = m.face_normal_area_barycenter(0);
        assert_relative_eq!(n, Vector3::new(0., 0., 1.), epsilon = 1e-15);
        assert_relative_eq!(a, 0.5);
        assert_relative_eq!(b, Point3::new(1. / 3., 1. / 3., 0.), epsilon = 1e-15);
    }

    #[test]
    fn reversed_winding_flips_normal() {
        let m = tri([[0., 0., 0.], [0., 1., 0.], [1., 0., 0.]]);
        assert_relative_eq!(m.face_normal(0), Vector3::new(0., 0., -1.), epsilon = 1e-15);
    }

    #[test]
    fn doubling_quadruples_area() {
        let m = tri([[0., 0., 0.], [2., 0., 0.], [0., 2., 0.]]);
        assert_relative_eq!(m.face_area(0), 2.0);
    }

    #[test]
    fn drops_zero_area_face() {
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
            Point3::new(2., 0., 0.),
        ];
        // Second face is collinear.
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.face_count(), 1);
        assert_eq!(m.dropped_degenerate(), 1);
    }

    #[test]
    fn rejects_out_of_range_index() {
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
        ];
        let err = TriangleMesh::new(v, vec![[0, 1, 10]]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 10, .. }));
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn rejects_non_manifold_edge() {
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
            Point3::new(0., -1., 0.),
            Point3::new(0., 0., 1.),
        ];
        let err = TriangleMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap_err();
        assert!(matches!(err, Error::NonManifoldEdge(0, 1)));
    }

    #[test]
    fn rejects_empty() {
        let err = TriangleMesh::<f64>::new(vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::EmptyMesh));
    }

    #[test]
    fn neighbors_are_symmetric() {
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(1., 1., 0.),
            Point3::new(0., 1., 0.),
        ];
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        assert_eq!(m.face_neighbors(0)[2], Some(1));
        assert_eq!(m.face_neighbors(1)[0], Some(0));
    }
}
