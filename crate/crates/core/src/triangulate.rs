//! Multi-view linear triangulation (DLT).

use nalgebra::{DMatrix, Matrix3, Matrix4, Point2, Point3, Vector3};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangulation<T: Real> {
    pub point: Point3<T>,
    /// RMS reprojection error in pixels.
    pub rms_px: T,
}

/// Triangulates one point from its pixel observations in several views.
///
/// Pixels are normalized by a common similarity (zero mean, RMS distance
/// √2) and world coordinates by the camera-center centroid and spread
/// before stacking the `2N × 4` homogeneous system, whose smallest right
/// singular vector is the solution.
pub fn dlt_triangulate<T: Real>(observations: &[(&CameraView<T>, Point2<T>)]) -> Result<Triangulation<T>> {
    let n = observations.len();
    if n < 2 {
        return Err(Error::InsufficientObservations(n));
    }
    let nf: T = from_usize(n);

    // Pixel normalization.
    let mean_px = observations
        .iter()
        .fold(Vector3::<T>::zeros(), |acc, (_, p)| acc + Vector3::new(p.x, p.y, T::zero()))
        / nf;
    let rms_px = (observations
        .iter()
        .map(|(_, p)| (p.x - mean_px.x).powi(2) + (p.y - mean_px.y).powi(2))
        .fold(T::zero(), |a, b| a + b)
        / nf)
        .sqrt();
    let s_px = if rms_px > T::zero() {
        T::sqrt(lit(2.0)) / rms_px
    } else {
        T::one()
    };
    let t_px = Matrix3::new(
        s_px,
        T::zero(),
        -s_px * mean_px.x,
        T::zero(),
        s_px,
        -s_px * mean_px.y,
        T::zero(),
        T::zero(),
        T::one(),
    );

    // World normalization from camera centers.
    let c_mean = observations
        .iter()
        .fold(Vector3::<T>::zeros(), |acc, (v, _)| acc + v.center.coords)
        / nf;
    let rms_c = (observations
        .iter()
        .map(|(v, _)| (v.center.coords - c_mean).norm_squared())
        .fold(T::zero(), |a, b| a + b)
        / nf)
        .sqrt();
    if !(rms_c > T::zero()) {
        return Err(Error::RankDeficient);
    }
    let inv_s_w = rms_c;
    let mut denorm = Matrix4::<T>::identity() * inv_s_w;
    denorm[(3, 3)] = T::one();
    denorm[(0, 3)] = c_mean.x;
    denorm[(1, 3)] = c_mean.y;
    denorm[(2, 3)] = c_mean.z;

    let mut a = DMatrix::<T>::zeros(2 * n, 4);
    for (i, (view, px)) in observations.iter().enumerate() {
        let p = t_px * view.projection_matrix() * denorm;
        let u = s_px * (px.x - mean_px.x);
        let v = s_px * (px.y - mean_px.y);
        for (r, coord, row) in [(2 * i, u, 0usize), (2 * i + 1, v, 1usize)] {
            let mut norm2 = T::zero();
            for c in 0..4 {
                let val = coord * p[(2, c)] - p[(row, c)];
                a[(r, c)] = val;
                norm2 += val * val;
            }
            let norm = norm2.sqrt();
            if norm > T::zero() {
                for c in 0..4 {
                    a[(r, c)] /= norm;
                }
            }
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::RankDeficient)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.len() < 4 {
        return Err(Error::RankDeficient);
    }
    let smax = svd.singular_values[order[3]];
    let second = svd.singular_values[order[1]];
    if !(second > smax * lit(1e-9)) {
        return Err(Error::RankDeficient);
    }
    let h = v_t.row(order[0]);
    let w = h[3];
    let hn = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2] + w * w).sqrt();
    if !(w.abs() > hn * lit(1e-12)) {
        return Err(Error::Degenerate("triangulated point at infinity".into()));
    }
    let xn = Vector3::new(h[0] / w, h[1] / w, h[2] / w);
    let point = Point3::from(xn * inv_s_w + c_mean);

    let mut sq = T::zero();
    for (view, px) in observations {
        let proj = view
            .project_unbounded(&point)
            .ok_or_else(|| Error::Degenerate("triangulated point behind a camera".into()))?;
        sq += (proj - px).norm_squared();
    }
    Ok(Triangulation {
        point,
        rms_px: (sq / nf).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    pub(crate) fn look_at(center: Point3<f64>, target: Point3<f64>, id: &str) -> CameraView<f64> {
        let fwd = (target - center).normalize();
        let up = if fwd.z.abs() > 0.99 { Vector3::y() } else { Vector3::z() };
        let right = fwd.cross(&up).normalize();
        let down = fwd.cross(&right);
        let r = Matrix3::from_columns(&[right, down, fwd]);
        CameraView::new(id, format!("{id}.png"), 640, 480, 600.0, 600.0, 320.0, 240.0, r, center).unwrap()
    }

    #[test]
    fn noiseless_two_views() {
        let x = Point3::new(0.3, -0.2, 0.1);
        let c1 = look_at(Point3::new(3.0, 0.0, 2.0), Point3::origin(), "a");
        let c2 = look_at(Point3::new(0.0, 3.0, 2.0), Point3::origin(), "b");
        let obs = [(&c1, c1.project(&x).unwrap()), (&c2, c2.project(&x).unwrap())];
        let t = dlt_triangulate(&obs).unwrap();
        assert_relative_eq!(t.point, x, epsilon = 1e-8);
        assert!(t.rms_px < 1e-6);
    }

    #[test]
    fn identical_views_are_rank_deficient() {
        let x = Point3::new(0.3, -0.2, 0.1);
        let c1 = look_at(Point3::new(3.0, 0.0, 2.0), Point3::origin(), "a");
        let px = c1.project(&x).unwrap();
        let err = dlt_triangulate(&[(&c1, px), (&c1, px)]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient));
    }

    #[test]
    fn single_observation_rejected() {
        let c1 = look_at(Point3::new(3.0, 0.0, 2.0), Point3::origin(), "a");
        let err = dlt_triangulate(&[(&c1, Point2::new(1.0, 1.0))]).unwrap_err();
        assert!(matches!(err, Error::InsufficientObservations(1)));
    }

    #[test]
    fn invariant_under_rigid_motion() {
        let x = Point3::new(0.3, -0.2, 0.1);
        let cams: Vec<_> = (0..5)
            .map(|k| {
                let a = k as f64 * 1.2;
                look_at(Point3::new(3.0 * a.cos(), 3.0 * a.sin(), 2.0), Point3::origin(), "c")
            })
            .collect();
        let r = Rotation3::from_euler_angles(0.7, -0.4, 2.0).into_inner();
        let t = Vector3::new(10.0, -5.0, 3.0);
        // Slightly perturbed pixels so the solve is not trivially exact.
        let obs: Vec<_> = cams
            .iter()
            .enumerate()
            .map(|(k, c)| (c, c.project(&x).unwrap() + nalgebra::Vector2::new(0.3 * k as f64, -0.2)))
            .collect();
        let moved: Vec<_> = cams.iter().map(|c| c.transformed(&r, &t)).collect();
        let obs_m: Vec<_> = moved.iter().zip(&obs).map(|(c, (_, p))| (c, *p)).collect();
        let a = dlt_triangulate(&obs).unwrap();
        let b = dlt_triangulate(&obs_m).unwrap();
        assert_relative_eq!(Point3::from(r * a.point.coords + t), b.point, epsilon = 1e-9);
        assert_relative_eq!(a.rms_px, b.rms_px, epsilon = 1e-9);
    }
}
