//! Spline curves used for perimeter and surface-path lengths.
//!
//! Closed loops are fitted with a periodic uniform cubic smoothing B-spline.
//! With uniform knots the normal equations are circulant, so the fit is
//! diagonal in the discrete Fourier basis. Open paths use a natural cubic
//! interpolating spline. Lengths come from adaptive Gauss–Legendre
//! quadrature. Numerics run in `f64`.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type V3 = Vector3<f64>;

const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn gl5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    GL_X.iter().zip(GL_W).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl5(f, a, m);
    let right = gl5(f, m, b);
    let halves = left + right;
    if depth == 0 || (halves - whole).abs() <= tol * halves.abs().max(f64::MIN_POSITIVE) {
        return halves;
    }
    adaptive(f, a, m, left, tol, depth - 1) + adaptive(f, m, b, right, tol, depth - 1)
}

/// Adaptive Gauss–Legendre integral of `f` over `[a, b]` to relative
/// tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let whole = gl5(&f, a, b);
    adaptive(&f, a, b, whole, tol, 30)
}

pub const ARC_TOL: f64 = 1e-8;

/// How the smoothing budget of a closed-loop fit is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum SmoothingRule {
    /// Pass through every resampled point.
    Interpolate,
    /// Explicit residual budget: sum of squared residuals equals `α`.
    Budget(f64),
    /// Budget estimated from the loop's second differences.
    #[default]
    Deviation,
    /// `α = (0.5 · mean edge length)² · loop size`.
    EdgeHeuristic,
}

/// Resamples a closed polyline to `m` points spaced uniformly in arc
/// length, starting at the first point.
pub fn resample_closed(points: &[V3], m: usize) -> Vec<V3> {
    let n = points.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        cum.push(cum[i] + (points[(i + 1) % n] - points[i]).norm());
    }
    let total = cum[n];
    let mut out = Vec::with_capacity(m);
    let mut j = 0;
    for k in 0..m {
        let s = total * k as f64 / m as f64;
        while j + 1 < n && cum[j + 1] <= s {
            j += 1;
        }
        let seg = cum[j + 1] - cum[j];
        let t = if seg > 0.0 { (s - cum[j]) / seg } else { 0.0 };
        out.push(points[j] + (points[(j + 1) % n] - points[j]) * t);
    }
    out
}

/// Sum of squared second-difference deviations divided by 1.5: for i.i.d.
/// noise of variance σ² per coordinate this estimates the noise energy.
pub fn deviation_budget(points: &[V3]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| (points[i] - (points[(i + n - 1) % n] + points[(i + 1) % n]) * 0.5).norm_squared())
        .sum::<f64>()
        / 1.5
}

pub fn edge_heuristic_budget(points: &[V3]) -> f64 {
    let n = points.len();
    let mean_edge = (0..n).map(|i| (points[(i + 1) % n] - points[i]).norm()).sum::<f64>() / n as f64;
    (0.5 * mean_edge).powi(2) * n as f64
}

/// Periodic uniform cubic B-spline over `u ∈ [0, M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedCurve {
    pub control: Vec<V3>,
    /// Residual budget actually used.
    pub alpha: f64,
    /// Roughness weight that meets the budget.
    pub mu: f64,
}

struct Dft {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Dft {
    fn new(m: usize) -> Self {
        let (sin, cos) = (0..m).map(|k| (TAU * k as f64 / m as f64).sin_cos()).unzip();
        Dft { cos, sin }
    }

    /// Forward transform `X_k = Σ x_j e^{-2πi jk/M}` as (re, im).
    fn forward(&self, x: &[V3]) -> Vec<(V3, V3)> {
        let m = x.len();
        (0..m)
            .map(|k| {
                let mut re = V3::zeros();
                let mut im = V3::zeros();
                for (j, xj) in x.iter().enumerate() {
                    let i = (j * k) % m;
                    re += xj * self.cos[i];
                    im -= xj * self.sin[i];
                }
                (re, im)
            })
            .collect()
    }

    fn inverse_real(&self, xh: &[(V3, V3)]) -> Vec<V3> {
        let m = xh.len();
        (0..m)
            .map(|j| {
                let mut s = V3::zeros();
                for (k, (re, im)) in xh.iter().enumerate() {
                    let i = (j * k) % m;
                    s += re * self.cos[i] - im * self.sin[i];
                }
                s / m as f64
            })
            .collect()
    }
}

impl ClosedCurve {
    /// Smoothing fit to points taken as samples at `u = 0, 1, …, M−1`.
    pub fn fit(points: &[V3], alpha: f64) -> Result<ClosedCurve> {
        let m = points.len();
        if m < 4 {
            return Err(Error::TooFewPoints { needed: 4, got: m });
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("smoothing budget {alpha} must be >= 0")));
        }
        let dft = Dft::new(m);
        let ph = dft.forward(points);
        let h = 1.0 / m as f64;
        let b: Vec<f64> = dft.cos.iter().map(|c| (4.0 + 2.0 * c) / 6.0).collect();
        let r: Vec<f64> = (0..m)
            .map(|k| {
                let w = TAU * k as f64 / m as f64;
                ((8.0 / 3.0 - 3.0 * w.cos() + (3.0 * w).cos() / 3.0) / h.powi(3)).max(0.0)
            })
            .collect();
        let power: Vec<f64> = ph.iter().map(|(re, im)| re.norm_squared() + im.norm_squared()).collect();
        let rss = |mu: f64| -> f64 {
            (0..m)
                .map(|k| {
                    let g = mu * r[k] / (b[k] * b[k] + mu * r[k]);
                    power[k] * g * g
                })
                .sum::<f64>()
                / m as f64
        };
        let limit = power.iter().skip(1).sum::<f64>() / m as f64;
        if alpha > 0.0 && alpha >= limit {
            return Err(Error::SmoothingTooLarge { alpha, limit });
        }
        let mu = if alpha == 0.0 {
            0.0
        } else {
            let (mut lo, mut hi) = (-80.0f64, 80.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if rss(mid.exp()) < alpha {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (0.5 * (lo + hi)).exp()
        };
        let ch: Vec<(V3, V3)> = (0..m)
            .map(|k| {
                let g = b[k] / (b[k] * b[k] + mu * r[k]);
                (ph[k].0 * g, ph[k].1 * g)
            })
            .collect();
        Ok(ClosedCurve {
            control: dft.inverse_real(&ch),
            alpha,
            mu,
        })
    }

    /// Fits a closed vertex loop: arc-length resampling to
    /// `clamp(n, 64, 400)` points, then the smoothing fit under `rule`.
    pub fn fit_loop(points: &[V3], rule: SmoothingRule) -> Result<ClosedCurve> {
        if points.len() < 4 {
            return Err(Error::TooFewPoints { needed: 4, got: points.len() });
        }
        let m = points.len().clamp(64, 400);
        let res = resample_closed(points, m);
        let alpha = match rule {
            SmoothingRule::Interpolate => 0.0,
            SmoothingRule::Budget(a) => a,
            SmoothingRule::Deviation => deviation_budget(&res),
            SmoothingRule::EdgeHeuristic => edge_heuristic_budget(&res),
        };
        ClosedCurve::fit(&res, alpha)
    }

    pub fn spans(&self) -> usize {
        self.control.len()
    }

    fn cp(&self, i: isize) -> &V3 {
        let m = self.control.len() as isize;
        &self.control[i.rem_euclid(m) as usize]
    }

    /// Point at `u ∈ [0, M)`; periodic.
    pub fn point(&self, u: f64) -> V3 {
        let m = self.control.len() as f64;
        let u = u.rem_euclid(m);
        let i = u.floor();
        let f = u - i;
        let i = i as isize;
        let g = 1.0 - f;
        (self.cp(i - 1) * (g * g * g)
            + self.cp(i) * (3.0 * f * f * f - 6.0 * f * f + 4.0)
            + self.cp(i + 1) * (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0)
            + self.cp(i + 2) * (f * f * f))
            / 6.0
    }

    pub fn derivative(&self, u: f64) -> V3 {
        let m = self.control.len() as f64;
        let u = u.rem_euclid(m);
        let i = u.floor();
        let f = u - i;
        let i = i as isize;
        self.cp(i - 1) * (-(1.0 - f) * (1.0 - f) / 2.0)
            + self.cp(i) * ((3.0 * f * f - 4.0 * f) / 2.0)
            + self.cp(i + 1) * ((-3.0 * f * f + 2.0 * f + 1.0) / 2.0)
            + self.cp(i + 2) * (f * f / 2.0)
    }

    pub fn arc_length(&self) -> f64 {
        (0..self.spans())
            .map(|i| {
                let i = i as f64;
                integrate(|t| self.derivative(i + t).norm(), 0.0, 1.0, ARC_TOL)
            })
            .sum()
    }

    /// `n` points evenly spaced in parameter.
    pub fn sample(&self, n: usize) -> Vec<V3> {
        let m = self.spans() as f64;
        (0..n).map(|k| self.point(m * k as f64 / n as f64)).collect()
    }
}

/// Natural cubic spline through points at parameters `0, 1, …, n−1`.
#[derive(Clone, Debug)]
pub struct OpenSpline {
    points: Vec<V3>,
    /// Second derivatives at the knots.
    m2: Vec<V3>,
}

impl OpenSpline {
    pub fn interpolate(points: Vec<V3>) -> Result<OpenSpline> {
        let n = points.len();
        if n < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: n });
        }
        let mut m2 = vec![V3::zeros(); n];
        if n > 2 {
            // Thomas algorithm for M_{i-1} + 4 M_i + M_{i+1} = 6 Δ²q_i.
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![V3::zeros(); k];
            for i in 0..k {
                let rhs = (points[i + 2] - points[i + 1] * 2.0 + points[i]) * 6.0;
                if i == 0 {
                    c[0] = 1.0 / 4.0;
                    d[0] = rhs / 4.0;
                } else {
                    let den = 4.0 - c[i - 1];
                    c[i] = 1.0 / den;
                    d[i] = (rhs - d[i - 1]) / den;
                }
            }
            m2[k] = d[k - 1];
            for i in (0..k - 1).rev() {
                m2[i + 1] = d[i] - m2[i + 2] * c[i];
            }
        }
        Ok(OpenSpline { points, m2 })
    }

    pub fn derivative(&self, seg: usize, s: f64) -> V3 {
        let (q0, q1) = (&self.points[seg], &self.points[seg + 1]);
        let (a, b) = (&self.m2[seg], &self.m2[seg + 1]);
        (q1 - q0) + a * ((1.0 - 3.0 * (1.0 - s) * (1.0 - s)) / 6.0) + b * ((3.0 * s * s - 1.0) / 6.0)
    }

    pub fn arc_length(&self) -> f64 {
        (0..self.points.len() - 1)
            .map(|i| integrate(|s| self.derivative(i, s).norm(), 0.0, 1.0, ARC_TOL))
            .sum()
    }
}
