//! Clinical wound metrics in the wound's reference frame.

use std::collections::VecDeque;

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cover::{decimate_loop, fit_cover, CoverOptions, SurfaceCover};
use crate::curve::{ClosedCurve, OpenSpline, SmoothingRule};
use crate::error::{Error, Result};
use crate::frame::{compute_frame, ReferenceFrame};
use crate::labels::{Label, LabelField};
use crate::mesh::{boundary_loops, face_set_area, loop_length, TriangleMesh};
use crate::scalar::{from_usize, lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureConfig {
    pub smoothing: SmoothingRule,
    /// Width pairs need `|cos θ| <= eps_angle` against the length chord.
    pub eps_angle: f64,
    pub geodesic_steps: usize,
    pub geodesic_rel_tol: f64,
    pub geodesic_max_steps: usize,
    /// Rim sites used for the cover and the pair search.
    pub max_sites: usize,
    pub cover: CoverOptions,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            smoothing: SmoothingRule::Deviation,
            eps_angle: 0.0872,
            geodesic_steps: 200,
            geodesic_rel_tol: 1e-4,
            geodesic_max_steps: 6400,
            max_sites: 400,
            cover: CoverOptions::default(),
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_angle > 0.0 && self.eps_angle <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps_angle {} outside (0, 1]", self.eps_angle)));
        }
        if self.geodesic_steps < 2 || self.geodesic_max_steps < self.geodesic_steps {
            return Err(Error::InvalidArgument("geodesic steps must satisfy 2 <= steps <= max".into()));
        }
        if self.max_sites < 4 {
            return Err(Error::InvalidArgument("max_sites must be >= 4".into()));
        }
        if let SmoothingRule::Budget(a) = self.smoothing {
            if !(a >= 0.0) {
                return Err(Error::InvalidArgument(format!("alpha {a} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Perimeter of a closed rim loop and the fitted curve.
pub fn perimeter<T: Real>(rim: &[Point3<T>], rule: SmoothingRule) -> Result<(T, ClosedCurve)> {
    let pts: Vec<Vector3<f64>> = rim.iter().map(|p| to_v64(p)).collect();
    let curve = ClosedCurve::fit_loop(&pts, rule)?;
    Ok((lit(curve.arc_length()), curve))
}

fn to_v64<T: Real>(p: &Point3<T>) -> Vector3<f64> {
    Vector3::new(to_f64(p.x), to_f64(p.y), to_f64(p.z))
}

/// Length of the cover-lifted straight segment from `a` to `b`: `steps`
/// samples are lifted onto the cover and interpolated by a cubic spline.
pub fn geodesic_distance<T: Real>(cover: &SurfaceCover<T>, a: Point2<T>, b: Point2<T>, steps: usize) -> T {
    if a == b {
        return T::zero();
    }
    let steps = steps.max(2);
    let pts: Vec<Vector3<f64>> = (0..steps)
        .map(|k| {
            let t: T = from_usize::<T>(k) / from_usize::<T>(steps - 1);
            let p = a + (b - a) * t;
            to_v64(&cover.lift(p.x, p.y))
        })
        .collect();
    lit(OpenSpline::interpolate(pts).map_or(0.0, |s| s.arc_length()))
}

/// Geodesic distance with the step count doubled until the relative change
/// drops below the configured tolerance. Returns the length and the steps
/// used.
pub fn geodesic_refined<T: Real>(cover: &SurfaceCover<T>, a: Point2<T>, b: Point2<T>, cfg: &MeasureConfig) -> (T, usize) {
    let mut steps = cfg.geodesic_steps;
    let mut d = geodesic_distance(cover, a, b, steps);
    while steps * 2 <= cfg.geodesic_max_steps {
        let next = geodesic_distance(cover, a, b, steps * 2);
        steps *= 2;
        let done = (next - d).abs() <= lit::<T>(cfg.geodesic_rel_tol) * next.abs();
        d = next;
        if done {
            break;
        }
    }
    (d, steps)
}

/// Polyline length of the lifted segment; a cheap screen for pair search.
fn lifted_polyline<T: Real>(cover: &SurfaceCover<T>, a: Point2<T>, b: Point2<T>, steps: usize) -> T {
    let mut prev = cover.lift(a.x, a.y);
    let mut s = T::zero();
    for k in 1..=steps {
        let t: T = from_usize::<T>(k) / from_usize::<T>(steps);
        let p = a + (b - a) * t;
        let q = cover.lift(p.x, p.y);
        s += (q - prev).norm();
        prev = q;
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extent<T: Real> {
    pub value: T,
    /// Indices into the site list.
    pub ends: (usize, usize),
    pub steps: usize,
}

const SCREEN_STEPS: usize = 16;
const SCREEN_MARGIN: f64 = 1e-3;

/// Maximizes the geodesic over `pairs`. Pairs are screened by the lifted
/// polyline; those within a small margin of the best are evaluated with
/// the spline at base steps and the winner is refined.
fn best_pair<T: Real>(
    cover: &SurfaceCover<T>,
    sites: &[Point2<T>],
    pairs: &[(usize, usize)],
    cfg: &MeasureConfig,
) -> Option<Extent<T>> {
    let screened: Vec<T> = pairs
        .iter()
        .map(|&(i, j)| lifted_polyline(cover, sites[i], sites[j], SCREEN_STEPS))
        .collect();
    let top = screened.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let cut = top * (T::one() - lit(SCREEN_MARGIN));
    let mut best: Option<(T, usize, usize)> = None;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if screened[k] < cut {
            continue;
        }
        let d = geodesic_distance(cover, sites[i], sites[j], cfg.geodesic_steps);
        // Near-ties keep the earlier pair so rounding cannot flip the choice.
        if best.is_none_or(|(b, _, _)| d > b * lit(1.0 + 1e-9)) {
            best = Some((d, i, j));
        }
    }
    best.map(|(_, i, j)| {
        let (value, steps) = geodesic_refined(cover, sites[i], sites[j], cfg);
        Extent {
            value,
            ends: (i, j),
            steps,
        }
    })
}

/// Length (largest geodesic between rim sites) and width (largest geodesic
/// among pairs nearly orthogonal to the length chord).
pub fn length_width<T: Real>(
    sites: &[Point2<T>],
    cover: &SurfaceCover<T>,
    cfg: &MeasureConfig,
) -> Result<(Extent<T>, Extent<T>)> {
    let n = sites.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let lifted: Vec<Point3<T>> = sites.iter().map(|p| cover.lift(p.x, p.y)).collect();
    let mut lower = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            lower = lower.max((lifted[i] - lifted[j]).norm());
        }
    }
    // Upper bound of each pair's geodesic from the steepest cover slope on
    // a grid over the site bounding box, with a safety factor.
    let (mut lo, mut hi) = (sites[0], sites[0]);
    for p in sites {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let g = 32;
    let mut gmax = T::zero();
    for a in 0..=g {
        for b in 0..=g {
            let x = lo.x + (hi.x - lo.x) * from_usize::<T>(a) / from_usize::<T>(g);
            let y = lo.y + (hi.y - lo.y) * from_usize::<T>(b) / from_usize::<T>(g);
            gmax = gmax.max(cover.grad(x, y).norm());
        }
    }
    let slope = gmax * lit(1.25);
    let factor = (T::one() + slope * slope).sqrt() * lit(1.0 + 1e-3);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (sites[i] - sites[j]).norm() * factor >= lower {
                pairs.push((i, j));
            }
        }
    }
    let length = best_pair(cover, sites, &pairs, cfg).ok_or(Error::Degenerate("no rim pairs".into()))?;

    let dir = (sites[length.ends.1] - sites[length.ends.0]).normalize();
    let eps: T = lit(cfg.eps_angle);
    let mut wpairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = sites[j] - sites[i];
            let norm = d.norm();
            if norm > T::zero() && (d.dot(&dir) / norm).abs() <= eps {
                wpairs.push((i, j));
            }
        }
    }
    let width = best_pair(cover, sites, &wpairs, cfg).ok_or(Error::NoWidthPair(cfg.eps_angle))?;
    Ok((length, width))
}

/// Wound-bed and periwound areas times `scale²`.
pub fn surface_areas<T: Real>(mesh: &TriangleMesh<T>, labels: &LabelField, scale: T) -> Result<(T, T)> {
    labels.check_len(mesh.face_count())?;
    let s2 = scale * scale;
    let wound = face_set_area(mesh, &labels.faces_of(Label::WoundBed));
    let peri = face_set_area(mesh, &labels.faces_of(Label::Periwound));
    Ok((wound * s2, peri * s2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Deepest point below the cover, as a non-negative number.
    pub max_depression: f64,
    pub max_protrusion: f64,
}

/// Signed depth `z − f(x, y)` of each vertex of `faces`; positive values
/// protrude above the cover.
#[derive(Clone, Debug)]
pub struct DepthField<T: Real> {
    pub vertices: Vec<usize>,
    pub depths: Vec<T>,
}

impl<T: Real> DepthField<T> {
    pub fn stats(&self) -> DepthStats {
        let d: Vec<f64> = self.depths.iter().map(|&x| to_f64(x)).collect();
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        DepthStats {
            min,
            max,
            mean,
            max_depression: (-min).max(0.0),
            max_protrusion: max.max(0.0),
        }
    }

    /// Depth per mesh vertex; vertices outside the field get `None`.
    pub fn per_vertex(&self, vertex_count: usize) -> Vec<Option<T>> {
        let mut out = vec![None; vertex_count];
        for (&v, &d) in self.vertices.iter().zip(&self.depths) {
            out[v] = Some(d);
        }
        out
    }
}

pub fn depth_field<T: Real>(mesh: &TriangleMesh<T>, faces: &[usize], cover: &SurfaceCover<T>) -> Result<DepthField<T>> {
    if faces.is_empty() {
        return Err(Error::NoWoundFaces);
    }
    let mut vertices: Vec<usize> = faces.iter().flat_map(|&f| mesh.faces()[f]).collect();
    vertices.sort_unstable();
    vertices.dedup();
    let depths = vertices
        .iter()
        .map(|&v| {
            let p = mesh.vertices()[v];
            p.z - cover.eval(p.x, p.y)
        })
        .collect();
    Ok(DepthField { vertices, depths })
}

/// Area fractions of tissue classes within a wound bed; the remainder
/// labeled plain wound bed is `unclassified`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TissueComposition {
    pub granulation: f64,
    pub slough: f64,
    pub necrotic: f64,
    pub epithelial: f64,
    pub unclassified: f64,
}

impl TissueComposition {
    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Granulation => self.granulation,
            Label::Slough => self.slough,
            Label::Necrotic => self.necrotic,
            Label::Epithelial => self.epithelial,
            Label::WoundBed => self.unclassified,
            _ => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.granulation + self.slough + self.necrotic + self.epithelial + self.unclassified
    }
}

pub fn tissue_composition<T: Real>(mesh: &TriangleMesh<T>, labels: &LabelField, faces: &[usize]) -> Result<TissueComposition> {
    labels.check_len(mesh.face_count())?;
    let mut area = [0.0f64; Label::COUNT];
    for &f in faces {
        let l = labels.get(f);
        if l.belongs_to(Label::WoundBed) {
            area[l.index()] += to_f64(mesh.face_area(f));
        }
    }
    let total: f64 = area.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWoundArea);
    }
    let frac = |l: Label| area[l.index()] / total;
    Ok(TissueComposition {
        granulation: frac(Label::Granulation),
        slough: frac(Label::Slough),
        necrotic: frac(Label::Necrotic),
        epithelial: frac(Label::Epithelial),
        unclassified: frac(Label::WoundBed),
    })
}

/// Periwound faces reachable from `component` through periwound faces.
pub fn adjacent_periwound<T: Real>(mesh: &TriangleMesh<T>, labels: &LabelField, component: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; mesh.face_count()];
    let mut queue = VecDeque::new();
    for &f in component {
        seen[f] = true;
        queue.push_back(f);
    }
    let mut out = Vec::new();
    while let Some(f) = queue.pop_front() {
        for &nb in mesh.face_neighbors(f).iter().flatten() {
            if !seen[nb] && labels.get(nb) == Label::Periwound {
                seen[nb] = true;
                out.push(nb);
                queue.push_back(nb);
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub vertices: [usize; 2],
    /// Endpoint positions in the reference frame, in output units.
    pub points: [[f64; 3]; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WoundMetrics {
    pub face_count: usize,
    pub wound_bed_area: f64,
    pub periwound_area: f64,
    pub perimeter: f64,
    pub length: f64,
    pub length_endpoints: Endpoints,
    pub width: f64,
    pub width_endpoints: Endpoints,
    pub depth: DepthStats,
    pub tissue: TissueComposition,
    pub rim_vertices: usize,
    pub cover_sites: usize,
    pub smoothing_alpha: f64,
    pub geodesic_steps: usize,
    pub flags: Vec<String>,
}

impl WoundMetrics {
    /// Converts lengths by `s` and areas by `s²`.
    pub fn scaled(&self, s: f64) -> WoundMetrics {
        let mut m = self.clone();
        m.wound_bed_area *= s * s;
        m.periwound_area *= s * s;
        m.perimeter *= s;
        m.length *= s;
        m.width *= s;
        m.smoothing_alpha *= s * s;
        for e in [&mut m.length_endpoints, &mut m.width_endpoints] {
            for p in &mut e.points {
                for c in p.iter_mut() {
                    *c *= s;
                }
            }
        }
        m.depth = DepthStats {
            min: m.depth.min * s,
            max: m.depth.max * s,
            mean: m.depth.mean * s,
            max_depression: m.depth.max_depression * s,
            max_protrusion: m.depth.max_protrusion * s,
        };
        m
    }
}

/// Intermediate geometry of one measured wound, kept for renderings.
#[derive(Clone, Debug)]
pub struct WoundGeometry<T: Real> {
    pub frame: ReferenceFrame<T>,
    /// Mesh in the reference frame.
    pub mesh: TriangleMesh<T>,
    pub faces: Vec<usize>,
    pub rim: Vec<usize>,
    pub cover: SurfaceCover<T>,
    pub curve: ClosedCurve,
    pub depth: DepthField<T>,
}

/// Measures one wound component of `mesh` (model units).
pub fn measure_component<T: Real>(
    mesh: &TriangleMesh<T>,
    labels: &LabelField,
    faces: &[usize],
    cfg: &MeasureConfig,
) -> Result<(WoundMetrics, WoundGeometry<T>)> {
    cfg.validate()?;
    if faces.is_empty() {
        return Err(Error::NoWoundFaces);
    }
    let mut flags = Vec::new();
    let frame = compute_frame(mesh, faces)?;
    if frame.near_isotropic {
        flags.push("near_isotropic_frame".to_string());
    }
    let m = frame.apply_mesh(mesh);
    let loops = boundary_loops(&m, faces)?;
    if loops.is_empty() {
        return Err(Error::Degenerate("wound region has no boundary".into()));
    }
    if loops.len() > 1 {
        flags.push("holes_ignored".to_string());
    }
    let rim = loops
        .into_iter()
        .map(|l| (loop_length(&m, &l), l))
        .fold(None::<(T, Vec<usize>)>, |best, (len, l)| match best {
            Some((b, bl)) if b >= len => Some((b, bl)),
            _ => Some((len, l)),
        })
        .map(|(_, l)| l)
        .unwrap_or_default();
    let rim_pts: Vec<Point3<T>> = rim.iter().map(|&v| m.vertices()[v]).collect();

    let keep = decimate_loop(&rim_pts, cfg.max_sites);
    let site_pts: Vec<Point3<T>> = keep.iter().map(|&k| rim_pts[k]).collect();
    let cover = fit_cover(&site_pts, &cfg.cover)?;
    let (perim, curve) = perimeter(&rim_pts, cfg.smoothing)?;

    let sites: Vec<Point2<T>> = site_pts.iter().map(|p| p.xy()).collect();
    let (len, wid) = length_width(&sites, &cover, cfg)?;
    let endpoints = |e: &Extent<T>| {
        let (a, b) = (keep[e.ends.0], keep[e.ends.1]);
        let (pa, pb) = (cover.lift(sites[e.ends.0].x, sites[e.ends.0].y), cover.lift(sites[e.ends.1].x, sites[e.ends.1].y));
        let arr = |p: Point3<T>| [to_f64(p.x), to_f64(p.y), to_f64(p.z)];
        Endpoints {
            vertices: [rim[a], rim[b]],
            points: [arr(pa), arr(pb)],
        }
    };

    let depth = depth_field(&m, faces, &cover)?;
    let stats = depth.stats();
    if stats.mean > 0.0 {
        flags.push("predominantly_protruding".to_string());
    }
    let tissue = tissue_composition(&m, labels, faces)?;
    let peri = adjacent_periwound(&m, labels, faces);

    let metrics = WoundMetrics {
        face_count: faces.len(),
        wound_bed_area: to_f64(face_set_area(&m, faces)),
        periwound_area: to_f64(face_set_area(&m, &peri)),
        perimeter: to_f64(perim),
        length: to_f64(len.value),
        length_endpoints: endpoints(&len),
        width: to_f64(wid.value),
        width_endpoints: endpoints(&wid),
        depth: stats,
        tissue,
        rim_vertices: rim.len(),
        cover_sites: cover.centers().len(),
        smoothing_alpha: curve.alpha,
        geodesic_steps: len.steps.max(wid.steps),
        flags,
    };
    Ok((
        metrics,
        WoundGeometry {
            frame,
            mesh: m,
            faces: faces.to_vec(),
            rim,
            cover,
            curve,
            depth,
        },
    ))
}
