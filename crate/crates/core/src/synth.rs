//! Synthetic wound scenes with exact ground truth.
//!
//! A crater is cut into a plane or cylinder patch tessellated as a polar
//! ring mesh whose rings land exactly on the crater rim and the outer
//! periwound edge. Ground-truth quantities come from closed forms or from
//! brute-force quadrature on the analytic surface; none of them go through
//! the measurement code.
//!
//! Geometry is specified in millimetres; the emitted mesh and cameras are
//! in model units (`mm / mm_per_unit`).

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Point2, Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::eval::reproject_labels;
use crate::io::{self, DetectionFile, MarkerSpec};
use crate::labels::{Label, LabelField};
use crate::mesh::TriangleMesh;
use crate::raster::SegmentationMask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSurface {
    Plane,
    /// Cylinder with its axis along y and its top line at z = 0.
    Cylinder { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CraterShape {
    SphericalCap,
    /// Gaussian with σ = radius / 3, shifted to reach zero at the rim.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSpec {
    pub count: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        OrbitSpec {
            count: 8,
            radius: 80.0,
            elevation_deg: 55.0,
            width: 640,
            height: 480,
            fov_deg: 55.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerPlacement {
    pub marker_id: u32,
    pub side: f64,
    /// Marker center in the base parameter plane.
    pub center: [f64; 2],
}

impl Default for MarkerPlacement {
    fn default() -> Self {
        MarkerPlacement {
            marker_id: 7,
            side: 8.0,
            center: [0.0, 22.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub base: BaseSurface,
    pub crater: CraterShape,
    pub crater_radius: f64,
    pub depth: f64,
    pub periwound_width: f64,
    /// Outer radius of the tessellated patch.
    pub domain_radius: f64,
    /// Angular segments per ring; a multiple of 8 so tissue sectors align
    /// with faces.
    pub resolution: usize,
    pub cameras: OrbitSpec,
    pub marker: Option<MarkerPlacement>,
    pub mm_per_unit: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            base: BaseSurface::Plane,
            crater: CraterShape::SphericalCap,
            crater_radius: 10.0,
            depth: 5.0,
            periwound_width: 5.0,
            domain_radius: 30.0,
            resolution: 64,
            cameras: OrbitSpec::default(),
            marker: Some(MarkerPlacement::default()),
            mm_per_unit: 0.5,
            seed: 1,
        }
    }
}

/// Tissue sectors of the crater, counter-clockwise from +x, as
/// `(upper angle fraction, label)`.
pub const TISSUE_SECTORS: [(f64, Label); 4] = [
    (0.5, Label::Granulation),
    (0.75, Label::Slough),
    (0.875, Label::Necrotic),
    (1.0, Label::Epithelial),
];

/// Reference values in millimetres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub perimeter: f64,
    pub length: f64,
    pub width: f64,
    pub wound_bed_area: f64,
    pub periwound_area: f64,
    /// Deepest point below the skin surface interpolating the rim.
    pub max_depth: f64,
    /// Granulation, slough, necrotic, epithelial.
    pub tissue: [f64; 4],
    pub mm_per_unit: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    /// Mesh in model units.
    pub mesh: TriangleMesh<f64>,
    pub labels: LabelField,
    pub views: Vec<CameraView<f64>>,
    pub masks: Vec<SegmentationMask>,
    pub detections: DetectionFile,
    pub truth: GroundTruth,
}

struct Surface {
    base: BaseSurface,
    crater: CraterShape,
    rc: f64,
    d: f64,
}

impl Surface {
    fn of(spec: &SceneSpec) -> Surface {
        Surface {
            base: spec.base,
            crater: spec.crater,
            rc: spec.crater_radius,
            d: spec.depth,
        }
    }

    fn base(&self, x: f64) -> f64 {
        match self.base {
            BaseSurface::Plane => 0.0,
            BaseSurface::Cylinder { radius } => (radius * radius - x * x).sqrt() - radius,
        }
    }

    fn base_dx(&self, x: f64) -> f64 {
        match self.base {
            BaseSurface::Plane => 0.0,
            BaseSurface::Cylinder { radius } => -x / (radius * radius - x * x).sqrt(),
        }
    }

    /// Crater depression (≥ 0) at radius `rho`, and its radial derivative.
    fn profile(&self, rho: f64) -> (f64, f64) {
        if rho >= self.rc || self.d == 0.0 {
            return (0.0, 0.0);
        }
        match self.crater {
            CraterShape::SphericalCap => {
                let r = (self.rc * self.rc + self.d * self.d) / (2.0 * self.d);
                let s = (r * r - rho * rho).sqrt();
                (s - (r - self.d), -rho / s)
            }
            CraterShape::Gaussian => {
                let sig = self.rc / 3.0;
                let g = |p: f64| (-p * p / (2.0 * sig * sig)).exp();
                let g0 = g(self.rc);
                let k = self.d / (1.0 - g0);
                (k * (g(rho) - g0), -k * g(rho) * rho / (sig * sig))
            }
        }
    }

    fn z(&self, x: f64, y: f64) -> f64 {
        self.base(x) - self.profile(x.hypot(y)).0
    }

    /// Area element `sqrt(1 + z_x² + z_y²)`.
    fn area_element(&self, x: f64, y: f64) -> f64 {
        let rho = x.hypot(y);
        let (_, dp) = self.profile(rho);
        let (ux, uy) = if rho > 0.0 { (x / rho, y / rho) } else { (0.0, 0.0) };
        let zx = self.base_dx(x) - dp * ux;
        let zy = -dp * uy;
        (1.0 + zx * zx + zy * zy).sqrt()
    }

    /// Rim point at angle `t`.
    fn rim(&self, t: f64) -> Point3<f64> {
        let (x, y) = (self.rc * t.cos(), self.rc * t.sin());
        Point3::new(x, y, self.base(x))
    }

    /// Shortest path length on the base surface between two of its points.
    fn base_geodesic(&self, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
        match self.base {
            BaseSurface::Plane => (a - b).norm(),
            BaseSurface::Cylinder { radius } => {
                let u = |x: f64| radius * (x / radius).asin();
                (u(a.x) - u(b.x)).hypot(a.y - b.y)
            }
        }
    }
}

fn check_spec(spec: &SceneSpec) -> Result<()> {
    let fail = |m: &str| Err(Error::InfeasibleSpec(m.into()));
    let (rc, d, wp, dom) = (spec.crater_radius, spec.depth, spec.periwound_width, spec.domain_radius);
    if !(rc > 0.0 && d >= 0.0 && wp > 0.0 && dom.is_finite()) {
        return fail("crater radius and periwound width must be positive, depth non-negative");
    }
    if spec.crater == CraterShape::SphericalCap && d > rc {
        return fail("spherical cap deeper than its radius is not a height field");
    }
    if rc + wp >= dom {
        return fail("crater and periwound do not fit in the domain");
    }
    if let BaseSurface::Cylinder { radius } = spec.base {
        if !(dom < 0.9 * radius) {
            return fail("domain radius must stay below 0.9 of the cylinder radius");
        }
    }
    if spec.resolution < 8 || spec.resolution % 8 != 0 {
        return fail("resolution must be a positive multiple of 8");
    }
    if spec.resolution > 1024 {
        return fail("resolution above 1024");
    }
    if !(spec.mm_per_unit > 0.0 && spec.mm_per_unit.is_finite()) {
        return fail("mm_per_unit must be positive");
    }
    let c = &spec.cameras;
    if c.count == 0 || c.width == 0 || c.height == 0 {
        return fail("camera orbit needs at least one view with a non-empty image");
    }
    if !(c.elevation_deg > 0.0 && c.elevation_deg < 90.0 && c.fov_deg > 0.0 && c.fov_deg < 170.0) {
        return fail("camera elevation must lie in (0, 90) degrees and fov in (0, 170)");
    }
    if !(c.radius > dom) {
        return fail("camera orbit radius must exceed the domain radius");
    }
    if let Some(m) = &spec.marker {
        let half_diag = m.side / 2.0 * 2f64.sqrt();
        let r = m.center[0].hypot(m.center[1]);
        if !(m.side > 0.0) || r - half_diag <= rc + wp || r + half_diag > dom {
            return fail("marker must lie between the periwound and the domain edge");
        }
    }
    Ok(())
}

/// Ring radii: uniform spacing `h` up to the periwound edge (hitting the rim
/// and the periwound edge exactly), then spacing `2h` to the domain edge.
fn ring_radii(spec: &SceneSpec) -> Vec<f64> {
    let n = spec.resolution;
    let rc = spec.crater_radius;
    let m_in = (n / 4).max(2);
    let h = rc / m_in as f64;
    let mut r: Vec<f64> = (1..=m_in).map(|k| rc * k as f64 / m_in as f64).collect();
    let outer = rc + spec.periwound_width;
    let m_p = ((spec.periwound_width / h).round() as usize).max(1);
    r.extend((1..=m_p).map(|k| rc + spec.periwound_width * k as f64 / m_p as f64));
    let m_o = (((spec.domain_radius - outer) / (2.0 * h)).round() as usize).max(1);
    r.extend((1..=m_o).map(|k| outer + (spec.domain_radius - outer) * k as f64 / m_o as f64));
    r
}

fn sector_label(theta: f64) -> Label {
    let f = theta.rem_euclid(TAU) / TAU;
    TISSUE_SECTORS.iter().find(|(hi, _)| f < *hi).map_or(Label::Epithelial, |s| s.1)
}

/// Mesh (in mm) and ground-truth labels of a scene.
fn build_mesh(spec: &SceneSpec, surf: &Surface) -> Result<(TriangleMesh<f64>, LabelField)> {
    let n = spec.resolution;
    let radii = ring_radii(spec);
    let mut verts = vec![Point3::new(0.0, 0.0, surf.z(0.0, 0.0))];
    let mut param = vec![Point2::new(0.0, 0.0)];
    for &r in &radii {
        for j in 0..n {
            let t = TAU * j as f64 / n as f64;
            let (x, y) = (r * t.cos(), r * t.sin());
            verts.push(Point3::new(x, y, surf.z(x, y)));
            param.push(Point2::new(x, y));
        }
    }
    let v = |k: usize, j: usize| 1 + k * n + j % n;
    let mut faces = Vec::with_capacity(n * (2 * radii.len() - 1));
    for j in 0..n {
        faces.push([0, v(0, j), v(0, j + 1)]);
    }
    for k in 0..radii.len() - 1 {
        for j in 0..n {
            let (a, b, c, d) = (v(k, j), v(k, j + 1), v(k + 1, j + 1), v(k + 1, j));
            faces.push([a, d, c]);
            faces.push([a, c, b]);
        }
    }
    let rc = spec.crater_radius;
    let rp = rc + spec.periwound_width;
    let labels = faces
        .iter()
        .map(|f| {
            let c = Point2::from((param[f[0]].coords + param[f[1]].coords + param[f[2]].coords) / 3.0);
            let rho = c.coords.norm();
            if rho < rc {
                sector_label(c.y.atan2(c.x))
            } else if rho < rp {
                Label::Periwound
            } else {
                Label::Background
            }
        })
        .collect();
    let mesh = TriangleMesh::new(verts, faces)?;
    if mesh.dropped_degenerate() > 0 {
        return Err(Error::InfeasibleSpec("tessellation produced degenerate faces".into()));
    }
    Ok((mesh, LabelField::new(labels)))
}

fn look_at(id: &str, center: Point3<f64>, target: Point3<f64>, cam: &OrbitSpec) -> Result<CameraView<f64>> {
    let f = (target - center).normalize();
    let r = f.cross(&Vector3::z()).normalize();
    let d = f.cross(&r);
    let focal = 0.5 * cam.width as f64 / (0.5 * cam.fov_deg.to_radians()).tan();
    CameraView::new(
        id,
        format!("{id}.png"),
        cam.width,
        cam.height,
        focal,
        focal,
        0.5 * cam.width as f64,
        0.5 * cam.height as f64,
        Matrix3::from_columns(&[r, d, f]),
        center,
    )
}

/// Orbit cameras (in mm) around the crater; the seed sets the orbit phase.
fn orbit(spec: &SceneSpec, surf: &Surface, rng: &mut ChaCha8Rng) -> Result<Vec<CameraView<f64>>> {
    let c = &spec.cameras;
    let phase = rng.random::<f64>() * TAU / c.count as f64;
    let el = c.elevation_deg.to_radians();
    let target = Point3::new(0.0, 0.0, surf.z(0.0, 0.0) * 0.5);
    (0..c.count)
        .map(|k| {
            let az = phase + TAU * k as f64 / c.count as f64;
            let pos = target + c.radius * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            look_at(&format!("view_{k:02}"), pos, target, c)
        })
        .collect()
}

/// Marker corners in mm, ordered top-left, top-right, bottom-right,
/// bottom-left in the base parameter plane.
fn marker_corners(m: &MarkerPlacement, surf: &Surface) -> [Point3<f64>; 4] {
    let h = m.side / 2.0;
    let [cx, cy] = m.center;
    [(-h, h), (h, h), (h, -h), (-h, -h)].map(|(dx, dy)| {
        let (x, y) = (cx + dx, cy + dy);
        Point3::new(x, y, surf.base(x))
    })
}

/// Marker corners of a scene in model units.
pub fn marker_points(scene: &SyntheticScene) -> Option<[Point3<f64>; 4]> {
    let surf = Surface::of(&scene.spec);
    let s = scene.spec.mm_per_unit;
    scene
        .spec
        .marker
        .as_ref()
        .map(|m| marker_corners(m, &surf).map(|p| Point3::from(p.coords / s)))
}

fn detections_for(spec: &SceneSpec, corners: Option<[Point3<f64>; 4]>, views: &[CameraView<f64>]) -> DetectionFile {
    let mut out = DetectionFile::default();
    let (Some(m), Some(c)) = (&spec.marker, corners) else {
        return out;
    };
    out.markers.push(MarkerSpec {
        marker_id: m.marker_id,
        side_mm: m.side,
    });
    for v in views {
        let px: Option<Vec<Point2<f64>>> = c.iter().map(|p| v.project(p)).collect();
        if let Some(px) = px {
            let mut per = BTreeMap::new();
            per.insert(m.marker_id.to_string(), [0, 1, 2, 3].map(|i| [px[i].x, px[i].y]));
            out.detections.insert(v.view_id.clone(), per);
        }
    }
    out
}

/// Thin-plate interpolant used only by the ground-truth oracle.
struct OracleTps {
    sites: Vec<Point2<f64>>,
    w: DVector<f64>,
}

impl OracleTps {
    fn kernel(r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else {
            r * r * r.ln()
        }
    }

    fn fit(pts: &[Point3<f64>]) -> Result<OracleTps> {
        let n = pts.len();
        let mut a = DMatrix::zeros(n + 3, n + 3);
        let mut b = DVector::zeros(n + 3);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = Self::kernel((pts[i].xy() - pts[j].xy()).norm());
            }
            a[(i, n)] = 1.0;
            a[(i, n + 1)] = pts[i].x;
            a[(i, n + 2)] = pts[i].y;
            a[(n, i)] = 1.0;
            a[(n + 1, i)] = pts[i].x;
            a[(n + 2, i)] = pts[i].y;
            b[i] = pts[i].z;
        }
        let w = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::InfeasibleSpec("oracle interpolant is singular".into()))?;
        Ok(OracleTps {
            sites: pts.iter().map(|p| p.xy()).collect(),
            w,
        })
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.sites.len();
        let q = Point2::new(x, y);
        let mut z = self.w[n] + self.w[n + 1] * x + self.w[n + 2] * y;
        for (s, w) in self.sites.iter().zip(self.w.iter()) {
            z += w * Self::kernel((q - s).norm());
        }
        z
    }
}

/// Midpoint-rule area over the annulus `r0 ≤ ρ < r1`.
fn quad_area(surf: &Surface, r0: f64, r1: f64, nr: usize, nt: usize) -> f64 {
    let (dr, dt) = ((r1 - r0) / nr as f64, TAU / nt as f64);
    let mut sum = 0.0;
    for i in 0..nr {
        let rho = r0 + (i as f64 + 0.5) * dr;
        for j in 0..nt {
            let t = (j as f64 + 0.5) * dt;
            sum += surf.area_element(rho * t.cos(), rho * t.sin()) * rho;
        }
    }
    sum * dr * dt
}

/// Rim diameter on the base surface and the widest extent perpendicular to
/// it (within `eps_angle` in |cos|), by exhaustive search over `k` rim points.
pub fn rim_extents(spec: &SceneSpec, k: usize, eps_angle: f64) -> (f64, f64) {
    let surf = Surface::of(spec);
    let pts: Vec<Point3<f64>> = (0..k).map(|i| surf.rim(TAU * i as f64 / k as f64)).collect();
    let mut best = (0.0, 0, 0);
    for i in 0..k {
        for j in i + 1..k {
            let g = surf.base_geodesic(&pts[i], &pts[j]);
            if g > best.0 {
                best = (g, i, j);
            }
        }
    }
    let dir = (pts[best.2].xy() - pts[best.1].xy()).normalize();
    let mut width: f64 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let c = (pts[j].xy() - pts[i].xy()).normalize();
            if c.dot(&dir).abs() <= eps_angle {
                width = width.max(surf.base_geodesic(&pts[i], &pts[j]));
            }
        }
    }
    (best.0, width)
}

/// Ground truth in mm.
pub fn ground_truth(spec: &SceneSpec) -> Result<GroundTruth> {
    check_spec(spec)?;
    let surf = Surface::of(spec);
    let (rc, d, wp) = (spec.crater_radius, spec.depth, spec.periwound_width);
    let tissue = [0.5, 0.25, 0.125, 0.125];
    let truth = match (spec.base, spec.crater) {
        (BaseSurface::Plane, CraterShape::SphericalCap) => GroundTruth {
            perimeter: TAU * rc,
            length: 2.0 * rc,
            width: 2.0 * rc,
            wound_bed_area: PI * (rc * rc + d * d),
            periwound_area: PI * ((rc + wp).powi(2) - rc * rc),
            max_depth: d,
            tissue,
            mm_per_unit: spec.mm_per_unit,
        },
        _ => {
            let m = 100_000;
            let perimeter = (0..m)
                .map(|i| (surf.rim(TAU * (i + 1) as f64 / m as f64) - surf.rim(TAU * i as f64 / m as f64)).norm())
                .sum();
            let (length, width) = rim_extents(spec, 720, 0.0872);
            let rim: Vec<Point3<f64>> = (0..256).map(|i| surf.rim(TAU * i as f64 / 256.0)).collect();
            let cover = OracleTps::fit(&rim)?;
            let mut max_depth: f64 = 0.0;
            let (nr, nt) = (200, 360);
            for i in 0..=nr {
                let rho = rc * i as f64 / nr as f64;
                for j in 0..nt {
                    let t = TAU * j as f64 / nt as f64;
                    let (x, y) = (rho * t.cos(), rho * t.sin());
                    max_depth = max_depth.max(cover.eval(x, y) - surf.z(x, y));
                }
            }
            GroundTruth {
                perimeter,
                length,
                width,
                wound_bed_area: quad_area(&surf, 0.0, rc, 1000, 1440),
                periwound_area: quad_area(&surf, rc, rc + wp, 400, 1440),
                max_depth,
                tissue,
                mm_per_unit: spec.mm_per_unit,
            }
        }
    };
    Ok(truth)
}

/// Builds a scene. Identical specs give identical scenes.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    check_spec(spec)?;
    let surf = Surface::of(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mesh_mm, labels) = build_mesh(spec, &surf)?;
    let views_mm = orbit(spec, &surf, &mut rng)?;
    let target = Point3::new(0.0, 0.0, surf.z(0.0, 0.0));
    for v in &views_mm {
        if v.project(&target).is_none() {
            return Err(Error::InfeasibleSpec(format!("view '{}' does not see the wound", v.view_id)));
        }
    }
    let s = 1.0 / spec.mm_per_unit;
    let mesh = mesh_mm.scaled(s)?;
    let views: Vec<CameraView<f64>> = views_mm.iter().map(|v| v.scaled(s)).collect();
    let masks = views
        .iter()
        .map(|v| reproject_labels(&mesh, &labels, v))
        .collect::<Result<Vec<_>>>()?;
    let corners = spec
        .marker
        .as_ref()
        .map(|m| marker_corners(m, &surf).map(|p| Point3::from(p.coords * s)));
    let detections = detections_for(spec, corners, &views);
    Ok(SyntheticScene {
        spec: spec.clone(),
        mesh,
        labels,
        views,
        masks,
        detections,
        truth: ground_truth(spec)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Gaussian blur of every mask; magnitude is σ in pixels.
    GaussianBlurMasks,
    /// Replaces the masks of `magnitude` views (rounded) with all-background
    /// masks.
    MaskDropout,
    /// Isotropic Gaussian vertex noise; magnitude is σ in mm.
    VertexNoise,
}

/// Blurs each class indicator and takes the per-pixel argmax (ties go to
/// the lower class id).
pub fn blur_mask(mask: &SegmentationMask, sigma: f64) -> SegmentationMask {
    if sigma <= 0.0 {
        return mask.clone();
    }
    let rad = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-rad..=rad).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ksum: f64 = kernel.iter().sum();
    let (w, h) = (mask.width as i64, mask.height as i64);
    let ids = mask.ids();
    let present: Vec<u8> = {
        let mut p: Vec<u8> = ids.clone();
        p.sort_unstable();
        p.dedup();
        p
    };
    let mut best = vec![(f64::NEG_INFINITY, 0u8); ids.len()];
    for &class in &present {
        let src: Vec<f64> = ids.iter().map(|&i| if i == class { 1.0 } else { 0.0 }).collect();
        let mut tmp = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let xx = (x + k as i64 - rad).clamp(0, w - 1);
                    acc += kv * src[(y * w + xx) as usize];
                }
                tmp[(y * w + x) as usize] = acc / ksum;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let yy = (y + k as i64 - rad).clamp(0, h - 1);
                    acc += kv * tmp[(yy * w + x) as usize];
                }
                let i = (y * w + x) as usize;
                if acc / ksum > best[i].0 {
                    best[i] = (acc / ksum, class);
                }
            }
        }
    }
    let out: Vec<u8> = best.iter().map(|b| b.1).collect();
    SegmentationMask::from_ids(mask.width, mask.height, &out).expect("ids come from a valid mask")
}

/// Seeded degradation of a scene. Magnitude 0 returns the scene unchanged.
pub fn perturb(scene: &SyntheticScene, kind: Perturbation, magnitude: f64, seed: u64) -> Result<SyntheticScene> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidArgument(format!("perturbation magnitude must be >= 0, got {magnitude}")));
    }
    let mut out = scene.clone();
    if magnitude == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        Perturbation::GaussianBlurMasks => {
            out.masks = scene.masks.iter().map(|m| blur_mask(m, magnitude)).collect();
        }
        Perturbation::MaskDropout => {
            let k = (magnitude.round() as usize).min(scene.masks.len());
            let mut idx: Vec<usize> = (0..scene.masks.len()).collect();
            idx.shuffle(&mut rng);
            for &i in &idx[..k] {
                let m = &scene.masks[i];
                out.masks[i] = SegmentationMask::filled(m.width, m.height, Label::Background);
            }
        }
        Perturbation::VertexNoise => {
            let sigma = magnitude / scene.spec.mm_per_unit;
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let v = scene
                .mesh
                .vertices()
                .iter()
                .map(|p| p + Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
                .collect();
            out.mesh = scene.mesh.with_vertices(v);
        }
    }
    Ok(out)
}

/// Adds Gaussian pixel noise to every detected marker corner.
pub fn noisy_detections(det: &DetectionFile, sigma_px: f64, seed: u64) -> Result<DetectionFile> {
    let normal = Normal::new(0.0, sigma_px).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = det.clone();
    for per in out.detections.values_mut() {
        for c in per.values_mut() {
            for p in c.iter_mut() {
                p[0] += normal.sample(&mut rng);
                p[1] += normal.sample(&mut rng);
            }
        }
    }
    Ok(out)
}

/// Writes a scene in the formats the CLI reads:
///
/// ```text
/// spec.json  truth.json  mesh.ply  labels_gt.ply  poses.json
/// detections.json  masks/<view image stem>.png
/// ```
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let masks_dir = dir.join("masks");
    std::fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
    let mut files: Vec<(std::path::PathBuf, Vec<u8>)> = vec![
        (dir.join("spec.json"), json_bytes(&scene.spec)),
        (dir.join("truth.json"), json_bytes(&scene.truth)),
        (dir.join("poses.json"), io::pose_file_json(&scene.views).into_bytes()),
        (dir.join("detections.json"), json_bytes(&scene.detections)),
    ];
    let mut buf = Vec::new();
    io::ply::write_ply_to(&mut buf, &scene.mesh, None, None)?;
    files.push((dir.join("mesh.ply"), buf));
    let mut buf = Vec::new();
    let colors: Vec<[u8; 3]> = scene.labels.as_slice().iter().map(|l| l.color()).collect();
    io::ply::write_ply_to(&mut buf, &scene.mesh, Some(&face_to_vertex_colors(&scene.mesh, &colors)), Some(&scene.labels))?;
    files.push((dir.join("labels_gt.ply"), buf));
    for (v, m) in scene.views.iter().zip(&scene.masks) {
        files.push((io::mask_path(&masks_dir, v), io::encode_mask(m)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (p, bytes) in files {
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

pub(crate) fn json_bytes<S: Serialize>(v: &S) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Vertex colors from face colors: each vertex takes the color of the
/// lowest-index face using it.
pub fn face_to_vertex_colors(mesh: &TriangleMesh<f64>, face_colors: &[[u8; 3]]) -> Vec<[u8; 3]> {
    let mut out = vec![None; mesh.vertex_count()];
    for (f, tri) in mesh.faces().iter().enumerate() {
        for &v in tri {
            out[v].get_or_insert(face_colors[f]);
        }
    }
    out.into_iter().map(|c| c.unwrap_or([128, 128, 128])).collect()
}
