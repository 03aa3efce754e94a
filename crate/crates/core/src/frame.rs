//! Wound-centric reference frame: centroid at the origin, principal axes on
//! x/y, cavity normal on +z.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::scalar::{lit, Real};

/// Rigid map `p -> rotation * p + translation` from model to measurement
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceFrame<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
    /// Set when two principal variances are nearly equal, so the in-plane
    /// axes are not well determined.
    pub near_isotropic: bool,
}

impl<T: Real> ReferenceFrame<T> {
    pub fn identity() -> Self {
        ReferenceFrame {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            near_isotropic: false,
        }
    }

    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    pub fn apply_mesh(&self, mesh: &TriangleMesh<T>) -> TriangleMesh<T> {
        mesh.transformed(&self.rotation, &self.translation)
    }

    pub fn inverse_apply(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }
}

/// Area-weighted centroid of a face set.
pub fn area_centroid<T: Real>(mesh: &TriangleMesh<T>, faces: &[usize]) -> Result<Point3<T>> {
    if faces.is_empty() {
        return Err(Error::EmptyFaceSet);
    }
    let mut acc = Vector3::zeros();
    let mut area = T::zero();
    for &f in faces {
        let a = mesh.face_area(f);
        acc += mesh.face_barycenter(f).coords * a;
        area += a;
    }
    if !(area > T::zero()) {
        return Err(Error::ZeroWoundArea);
    }
    Ok(Point3::from(acc / area))
}

/// Frame of a wound given its faces. The smallest-variance principal axis
/// of the wound vertices becomes z, oriented along the area-weighted mean
/// normal; x follows the positive third moment along the largest axis, or
/// the farthest vertex when the in-plane spread is isotropic.
pub fn compute_frame<T: Real>(mesh: &TriangleMesh<T>, faces: &[usize]) -> Result<ReferenceFrame<T>> {
    let c = area_centroid(mesh, faces)?;
    let mut verts: Vec<usize> = faces.iter().flat_map(|&f| mesh.faces()[f]).collect();
    verts.sort_unstable();
    verts.dedup();

    let mut cov = Matrix3::zeros();
    for &v in &verts {
        let d = mesh.vertices()[v] - c;
        cov += d * d.transpose();
    }
    cov /= crate::scalar::from_usize::<T>(verts.len());
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let ev = order.map(|i| eig.eigenvalues[i]);
    if !(ev[0] > T::zero()) || ev[1] <= ev[0] * lit(1e-12) {
        return Err(Error::Degenerate("wound vertices are collinear".into()));
    }
    let gap: T = lit(1e-6);
    let near_isotropic = (ev[0] - ev[1]) <= gap * ev[0] || (ev[1] - ev[2]) <= gap * ev[0];

    let mut x: Vector3<T> = eig.eigenvectors.column(order[0]).into_owned();
    let mut z: Vector3<T> = eig.eigenvectors.column(order[2]).into_owned();

    let mut mean_n = Vector3::zeros();
    for &f in faces {
        mean_n += mesh.face_normal(f) * mesh.face_area(f);
    }
    if mean_n.dot(&z) < T::zero() {
        z = -z;
    }
    if (ev[0] - ev[1]) <= gap * ev[0] {
        // No preferred in-plane axis: point x at the farthest wound vertex,
        // lowest index among near-ties, so the choice follows the mesh.
        let planar = |v: usize| {
            let d = mesh.vertices()[v] - c;
            d - z * d.dot(&z)
        };
        let far = verts.iter().map(|&v| planar(v).norm()).fold(T::zero(), |a, b| a.max(b));
        let tol = far * (T::one() - lit(1e-9));
        if let Some(&v) = verts.iter().find(|&&v| planar(v).norm() >= tol) {
            x = planar(v).normalize();
        }
    } else {
        let skew = verts.iter().fold(T::zero(), |acc, &v| {
            let s = (mesh.vertices()[v] - c).dot(&x);
            acc + s * s * s
        });
        if skew < T::zero() {
            x = -x;
        }
    }
    let y = z.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let translation = -(rotation * c.coords);
    Ok(ReferenceFrame {
        rotation,
        translation,
        near_isotropic,
    })
}
