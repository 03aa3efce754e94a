//! Thin-plate-spline surface cover `z = f(x, y)` fitted to rim points.
//!
//! `f(x, y) = Σ w_i φ(|(x, y) − c_i|) + a0 + ax·x + ay·y` with
//! `φ(r) = r² ln r`. The ridge `λ` is added to the kernel diagonal.

use nalgebra::{DMatrix, DVector, Point2, Point3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Real};

#[inline]
fn phi<T: Real>(r2: T) -> T {
    if r2 > T::zero() {
        // r² ln r = r² · ln(r²) / 2
        r2 * r2.ln() * lit(0.5)
    } else {
        T::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverOptions {
    /// Ridge on the kernel diagonal; `None` picks `1e-6 · R²` with `R` the
    /// largest site distance from the site centroid.
    pub lambda: Option<f64>,
    /// Kernel-only fit without the affine term.
    pub strict: bool,
    /// Sites are decimated to at most this many before fitting.
    pub max_sites: usize,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions {
            lambda: None,
            strict: false,
            max_sites: 400,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceCover<T: Real> {
    centers: Vec<Point2<T>>,
    heights: Vec<T>,
    weights: Vec<T>,
    /// Affine part in coordinates relative to `origin`.
    affine: [T; 3],
    origin: Point2<T>,
    lambda: T,
    strict: bool,
}

impl<T: Real> SurfaceCover<T> {
    pub fn centers(&self) -> &[Point2<T>] {
        &self.centers
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    /// `(a0, ax, ay)` in the caller's coordinates.
    pub fn affine(&self) -> [T; 3] {
        let [a0, ax, ay] = self.affine;
        [a0 - ax * self.origin.x - ay * self.origin.y, ax, ay]
    }

    pub fn eval(&self, x: T, y: T) -> T {
        let p = Vector2::new(x - self.origin.x, y - self.origin.y);
        let mut s = self.affine[0] + self.affine[1] * p.x + self.affine[2] * p.y;
        for (c, &w) in self.centers.iter().zip(&self.weights) {
            s += w * phi((p - c.coords).norm_squared());
        }
        s
    }

    /// Analytic gradient `(∂f/∂x, ∂f/∂y)`.
    pub fn grad(&self, x: T, y: T) -> Vector2<T> {
        let p = Vector2::new(x - self.origin.x, y - self.origin.y);
        let mut g = Vector2::new(self.affine[1], self.affine[2]);
        for (c, &w) in self.centers.iter().zip(&self.weights) {
            let d = p - c.coords;
            let r2 = d.norm_squared();
            if r2 > T::zero() {
                // d/dx r² ln r = (2 ln r + 1)(x − x_i) = (ln r² + 1)(x − x_i)
                g += d * (w * (r2.ln() + T::one()));
            }
        }
        g
    }

    pub fn lift(&self, x: T, y: T) -> Point3<T> {
        Point3::new(x, y, self.eval(x, y))
    }

    /// RMS of `f(site) − z` over the fitted sites.
    pub fn residual_rms(&self) -> T {
        let n = self.centers.len();
        let ss = self.centers.iter().zip(&self.heights).fold(T::zero(), |acc, (c, &z)| {
            let r = self.eval(c.x + self.origin.x, c.y + self.origin.y) - z;
            acc + r * r
        });
        (ss / from_usize(n)).sqrt()
    }

    /// Fitted sites in the caller's coordinates.
    pub fn sites(&self) -> Vec<Point3<T>> {
        self.centers
            .iter()
            .zip(&self.heights)
            .map(|(c, &z)| Point3::new(c.x + self.origin.x, c.y + self.origin.y, z))
            .collect()
    }
}

/// Indices of at most `max` loop points spread uniformly in arc length.
/// Index 0 is always kept; loops within the bound are returned whole.
pub fn decimate_loop<T: Real>(points: &[Point3<T>], max: usize) -> Vec<usize> {
    let n = points.len();
    if n <= max || max == 0 {
        return (0..n).collect();
    }
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(T::zero());
    for i in 0..n {
        let d = (points[(i + 1) % n] - points[i]).norm();
        cum.push(cum[i] + d);
    }
    let total = cum[n];
    let mut out = Vec::with_capacity(max);
    let mut j = 0;
    for k in 0..max {
        let target = total * from_usize(k) / from_usize(max);
        while j + 1 < n && cum[j + 1] <= target {
            j += 1;
        }
        let pick = if j + 1 < n && (cum[j + 1] - target) < (target - cum[j]) { j + 1 } else { j };
        if out.last() != Some(&pick) {
            out.push(pick);
        }
    }
    out
}

/// Fits the cover to 3D sites (x, y are the domain, z the height).
pub fn fit_cover<T: Real>(points: &[Point3<T>], opts: &CoverOptions) -> Result<SurfaceCover<T>> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    let n0 = from_usize::<T>(points.len());
    let origin = points.iter().fold(Vector2::zeros(), |a, p| a + p.xy().coords) / n0;
    let radius2 = points
        .iter()
        .map(|p| (p.xy().coords - origin).norm_squared())
        .fold(T::zero(), |a, b| a.max(b));
    if !(radius2 > T::zero()) {
        return Err(Error::Degenerate("all cover sites coincide".into()));
    }
    let lambda: T = match opts.lambda {
        Some(l) if l >= 0.0 => lit(l),
        Some(l) => return Err(Error::InvalidArgument(format!("negative smoothing parameter {l}"))),
        None => radius2 * lit(1e-6),
    };

    // Merge exact-height duplicates; conflicting duplicates need a ridge.
    let tol2 = radius2 * lit(1e-18);
    let ztol = radius2.sqrt() * lit(1e-9);
    let mut centers: Vec<Point2<T>> = Vec::with_capacity(points.len());
    let mut heights: Vec<T> = Vec::with_capacity(points.len());
    'outer: for p in points {
        let c = Point2::from(p.xy().coords - origin);
        for (q, &z) in centers.iter().zip(&heights) {
            if (c - q).norm_squared() <= tol2 {
                if (p.z - z).abs() <= ztol {
                    continue 'outer;
                }
                if lambda == T::zero() {
                    return Err(Error::DuplicateSite {
                        x: to_f64(p.x),
                        y: to_f64(p.y),
                    });
                }
            }
        }
        centers.push(c);
        heights.push(p.z);
    }
    let n = centers.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }

    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    let mean: Vector2<T> = centers.iter().fold(Vector2::zeros(), |a, c| a + c.coords) / from_usize::<T>(n);
    for c in &centers {
        let d = c.coords - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    // Smaller eigenvalue of the 2x2 scatter relative to the larger.
    let disc = ((sxx - syy) * (sxx - syy) + lit::<T>(4.0) * sxy * sxy).sqrt();
    let lmin = det / ((tr + disc) * lit(0.5));
    let lmax = (tr + disc) * lit(0.5);
    if !(lmin > lmax * lit(1e-12)) {
        return Err(Error::Degenerate("cover sites are collinear".into()));
    }

    let m = if opts.strict { n } else { n + 3 };
    let mut a = DMatrix::<T>::zeros(m, m);
    let mut b = DVector::<T>::zeros(m);
    for i in 0..n {
        for j in 0..i {
            let k = phi((centers[i] - centers[j]).norm_squared());
            a[(i, j)] = k;
            a[(j, i)] = k;
        }
        a[(i, i)] = lambda;
        b[i] = heights[i];
        if !opts.strict {
            a[(i, n)] = T::one();
            a[(i, n + 1)] = centers[i].x;
            a[(i, n + 2)] = centers[i].y;
            a[(n, i)] = T::one();
            a[(n + 1, i)] = centers[i].x;
            a[(n + 2, i)] = centers[i].y;
        }
    }
    let sol: DVector<T> = a
        .full_piv_lu()
        .solve(&b)
        .ok_or_else(|| Error::Degenerate("singular cover system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("singular cover system".into()));
    }
    let weights = sol.rows(0, n).iter().copied().collect();
    let affine = if opts.strict {
        [T::zero(); 3]
    } else {
        [sol[n], sol[n + 1], sol[n + 2]]
    };
    Ok(SurfaceCover {
        centers,
        heights,
        weights,
        affine,
        origin: Point2::from(origin),
        lambda,
        strict: opts.strict,
    })
}

/// Decimates a closed rim loop and fits the cover to it.
pub fn fit_cover_to_loop<T: Real>(rim: &[Point3<T>], opts: &CoverOptions) -> Result<SurfaceCover<T>> {
    let keep = decimate_loop(rim, opts.max_sites);
    let pts: Vec<Point3<T>> = keep.iter().map(|&i| rim[i]).collect();
    fit_cover(&pts, opts)
}
