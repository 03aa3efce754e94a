//! Evaluation protocol: ICP alignment, surface sampling, surface distance
//! metrics and segmentation overlap.

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rstar::primitives::GeomWithData;
use rstar::{PointDistance, RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::labels::{Label, LabelField};
use crate::mesh::TriangleMesh;
use crate::raster::{rasterize, RasterOptions, SegmentationMask};
use crate::scalar::{from_usize, lit, to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSample<T: Real> {
    pub point: Point3<T>,
    pub normal: Vector3<T>,
    /// Source face; `usize::MAX` for samples taken from a point cloud.
    pub face: usize,
}

/// `n` area-weighted uniform samples of the surface, reproducible under
/// `seed`.
pub fn sample_surface<T: Real>(mesh: &TriangleMesh<T>, n: usize, seed: u64) -> Result<Vec<PointSample<T>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let mut cum = Vec::with_capacity(mesh.face_count());
    let mut acc = 0.0;
    for f in 0..mesh.face_count() {
        acc += to_f64(mesh.face_area(f));
        cum.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * acc;
        let f = cum.partition_point(|&c| c <= r).min(cum.len() - 1);
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.face_vertices(f);
        let point = a + (b - a) * lit::<T>(u) + (c - a) * lit::<T>(v);
        out.push(PointSample {
            point,
            normal: mesh.face_normal(f),
            face: f,
        });
    }
    Ok(out)
}

type Indexed<T> = GeomWithData<[T; 3], usize>;

fn arr<T: Real>(p: &Point3<T>) -> [T; 3] {
    [p.x, p.y, p.z]
}

/// Exact nearest-neighbor index over points.
pub struct PointIndex<T: Real> {
    tree: RTree<Indexed<T>>,
}

impl<T: Real> PointIndex<T> {
    pub fn new(points: &[Point3<T>]) -> Self {
        let items = points.iter().enumerate().map(|(i, p)| GeomWithData::new(arr(p), i)).collect();
        PointIndex {
            tree: RTree::bulk_load(items),
        }
    }

    /// Index and distance of the nearest point.
    pub fn nearest(&self, q: &Point3<T>) -> Option<(usize, T)> {
        self.tree
            .nearest_neighbor_iter_with_distance_2(&arr(q))
            .next()
            .map(|(g, d2)| (g.data, d2.sqrt()))
    }
}

#[derive(Clone, Debug)]
struct Tri<T: Real> {
    v: [Point3<T>; 3],
    face: usize,
}

/// Closest point to `p` on triangle `abc`.
pub fn closest_on_triangle<T: Real>(p: &Point3<T>, a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> Point3<T> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= T::zero() && d2 <= T::zero() {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= T::zero() && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= T::zero() && d1 >= T::zero() && d3 <= T::zero() {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= T::zero() && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= T::zero() && d2 >= T::zero() && d6 <= T::zero() {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= T::zero() && (d4 - d3) >= T::zero() && (d5 - d6) >= T::zero() {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = T::one() / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

impl<T: Real> RTreeObject for Tri<T> {
    type Envelope = AABB<[T; 3]>;

    fn envelope(&self) -> Self::Envelope {
        let mut lo = arr(&self.v[0]);
        let mut hi = lo;
        for p in &self.v[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        AABB::from_corners(lo, hi)
    }
}

impl<T: Real> PointDistance for Tri<T> {
    fn distance_2(&self, point: &[T; 3]) -> T {
        let p = Point3::new(point[0], point[1], point[2]);
        (closest_on_triangle(&p, &self.v[0], &self.v[1], &self.v[2]) - p).norm_squared()
    }
}

/// Exact closest-point queries against a triangle mesh.
pub struct MeshIndex<T: Real> {
    tree: RTree<Tri<T>>,
    normals: Vec<Vector3<T>>,
}

impl<T: Real> MeshIndex<T> {
    pub fn new(mesh: &TriangleMesh<T>) -> Self {
        let tris = (0..mesh.face_count())
            .map(|f| Tri {
                v: mesh.face_vertices(f),
                face: f,
            })
            .collect();
        MeshIndex {
            tree: RTree::bulk_load(tris),
            normals: (0..mesh.face_count()).map(|f| mesh.face_normal(f)).collect(),
        }
    }

    /// Distance to the surface and the normal of the closest face.
    pub fn closest(&self, q: &Point3<T>) -> Option<(T, Vector3<T>)> {
        self.tree
            .nearest_neighbor_iter_with_distance_2(&arr(q))
            .next()
            .map(|(t, d2)| (d2.sqrt(), self.normals[t.face]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl DistanceStats {
    pub fn of(d: &[f64]) -> DistanceStats {
        if d.is_empty() {
            return DistanceStats {
                mean: 0.0,
                median: 0.0,
                p95: 0.0,
                max: 0.0,
            };
        }
        let mut s = d.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let x = p * (s.len() - 1) as f64;
            let i = x.floor() as usize;
            let j = (i + 1).min(s.len() - 1);
            s[i] + (s[j] - s[i]) * (x - i as f64)
        };
        DistanceStats {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: q(0.5),
            p95: q(0.95),
            max: s[s.len() - 1],
        }
    }
}

/// Surface comparison of A against B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetrics {
    /// Mean A→B plus mean B→A.
    pub chamfer: f64,
    /// Largest distance in either direction.
    pub hausdorff: f64,
    /// Mean absolute normal cosine over nearest pairs, both directions.
    pub normal_consistency: f64,
    /// Absolute distance statistics, A→B.
    pub ad_a_to_b: DistanceStats,
    pub ad_b_to_a: DistanceStats,
    #[serde(skip)]
    pub distances_a_to_b: Vec<f64>,
    #[serde(skip)]
    pub distances_b_to_a: Vec<f64>,
}

fn directed<T: Real>(from: &[PointSample<T>], to: &[PointSample<T>], index: &PointIndex<T>) -> (Vec<f64>, f64) {
    let mut d = Vec::with_capacity(from.len());
    let mut nc = 0.0;
    for s in from {
        let (j, dist) = index.nearest(&s.point).expect("non-empty index");
        d.push(to_f64(dist));
        nc += to_f64(s.normal.dot(&to[j].normal).abs());
    }
    (d, nc / from.len() as f64)
}

fn assemble(ab: Vec<f64>, ba: Vec<f64>, nc_ab: f64, nc_ba: f64) -> SurfaceMetrics {
    let sa = DistanceStats::of(&ab);
    let sb = DistanceStats::of(&ba);
    SurfaceMetrics {
        chamfer: sa.mean + sb.mean,
        hausdorff: sa.max.max(sb.max),
        normal_consistency: 0.5 * (nc_ab + nc_ba),
        ad_a_to_b: sa,
        ad_b_to_a: sb,
        distances_a_to_b: ab,
        distances_b_to_a: ba,
    }
}

/// Sample-to-sample metrics with exact nearest neighbors.
pub fn surface_metrics<T: Real>(a: &[PointSample<T>], b: &[PointSample<T>]) -> Result<SurfaceMetrics> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("surface metrics need non-empty sample sets".into()));
    }
    let ia = PointIndex::new(&a.iter().map(|s| s.point).collect::<Vec<_>>());
    let ib = PointIndex::new(&b.iter().map(|s| s.point).collect::<Vec<_>>());
    let (ab, nab) = directed(a, b, &ib);
    let (ba, nba) = directed(b, a, &ia);
    Ok(assemble(ab, ba, nab, nba))
}

/// Sample-to-surface metrics: each sample's distance is to the other
/// mesh itself, so offsets are measured exactly.
pub fn mesh_metrics<T: Real>(
    a: &TriangleMesh<T>,
    a_samples: &[PointSample<T>],
    b: &TriangleMesh<T>,
    b_samples: &[PointSample<T>],
) -> Result<SurfaceMetrics> {
    if a_samples.is_empty() || b_samples.is_empty() {
        return Err(Error::InvalidArgument("surface metrics need non-empty sample sets".into()));
    }
    let ia = MeshIndex::new(a);
    let ib = MeshIndex::new(b);
    let run = |from: &[PointSample<T>], idx: &MeshIndex<T>| {
        let mut d = Vec::with_capacity(from.len());
        let mut nc = 0.0;
        for s in from {
            let (dist, n) = idx.closest(&s.point).expect("non-empty mesh");
            d.push(to_f64(dist));
            nc += to_f64(s.normal.dot(&n).abs());
        }
        (d, nc / from.len() as f64)
    };
    let (ab, nab) = run(a_samples, &ib);
    let (ba, nba) = run(b_samples, &ia);
    Ok(assemble(ab, ba, nab, nba))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult<T: Real> {
    /// Maps source points onto the target: `p -> rotation * p + translation`.
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
    pub rms: T,
    pub iterations: usize,
    /// RMS after each iteration.
    pub history: Vec<T>,
}

/// Best rigid map of `src` onto `dst` in the least-squares sense (Kabsch).
pub fn kabsch<T: Real>(src: &[Point3<T>], dst: &[Point3<T>]) -> Result<(Matrix3<T>, Vector3<T>)> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(Error::TooFewPoints { needed: 3, got: n.min(dst.len()) });
    }
    let nf: T = from_usize(n);
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / nf;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / nf;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.ok_or(Error::RankDeficient)?, svd.v_t.ok_or(Error::RankDeficient)?);
    let v = vt.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < T::zero() {
        fix[(2, 2)] = -T::one();
    }
    let r = v * fix * u.transpose();
    Ok((r, cd - r * cs))
}

fn check_spread<T: Real>(pts: &[Point3<T>], what: &str) -> Result<()> {
    if pts.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: pts.len() });
    }
    let nf: T = from_usize(pts.len());
    let c = pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / nf;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let ev = cov.symmetric_eigenvalues();
    let max = ev.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let mid = ev.iter().copied().fold(T::zero(), |a, b| a + b) - max - ev.iter().copied().fold(max, |a, b| a.min(b));
    if !(max > T::zero()) || mid <= max * lit(1e-12) {
        return Err(Error::Degenerate(format!("{what} points are collinear")));
    }
    Ok(())
}

/// Point-to-point ICP. Stops after `max_iter` iterations or when the RMS
/// changes by less than `tol`.
pub fn icp_align<T: Real>(source: &[Point3<T>], target: &[Point3<T>], max_iter: usize, tol: T) -> Result<IcpResult<T>> {
    check_spread(source, "source")?;
    check_spread(target, "target")?;
    let index = PointIndex::new(target);
    let mut r = Matrix3::identity();
    let mut t = Vector3::zeros();
    let mut history = Vec::new();
    let mut prev: Option<T> = None;
    let mut matched = vec![Point3::origin(); source.len()];
    let nf: T = from_usize(source.len());
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        for (i, p) in source.iter().enumerate() {
            let q = Point3::from(r * p.coords + t);
            let (j, _) = index.nearest(&q).expect("non-empty target");
            matched[i] = target[j];
        }
        let (nr, nt) = kabsch(source, &matched)?;
        r = nr;
        t = nt;
        let sq = source
            .iter()
            .zip(&matched)
            .fold(T::zero(), |a, (p, m)| a + (r * p.coords + t - m.coords).norm_squared());
        let rms = (sq / nf).sqrt();
        history.push(rms);
        if let Some(p) = prev {
            if (p - rms).abs() < tol {
                break;
            }
        }
        prev = Some(rms);
    }
    Ok(IcpResult {
        rotation: r,
        translation: t,
        rms: *history.last().unwrap_or(&T::zero()),
        iterations,
        history,
    })
}

/// Dice coefficient of the pixels belonging to `class`. Both empty gives 1.
pub fn dice(a: &SegmentationMask, b: &SegmentationMask, class: Label) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "masks {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(dice_iter(a.labels().iter().zip(b.labels()).map(|(x, y)| (*x, *y)), class))
}

/// Dice coefficient over faces.
pub fn dice_labels(a: &LabelField, b: &LabelField, class: Label) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} labels", a.len(), b.len())));
    }
    Ok(dice_iter(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (*x, *y)), class))
}

fn dice_iter(pairs: impl Iterator<Item = (Label, Label)>, class: Label) -> f64 {
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (x, y) in pairs {
        let (ia, ib) = (x.belongs_to(class), y.belongs_to(class));
        na += ia as usize;
        nb += ib as usize;
        inter += (ia && ib) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// Renders a label field into a view: each pixel takes the label of the
/// visible face, empty pixels are background.
pub fn reproject_labels<T: Real>(mesh: &TriangleMesh<T>, labels: &LabelField, view: &CameraView<T>) -> Result<SegmentationMask> {
    labels.check_len(mesh.face_count())?;
    let buf = rasterize(mesh, view, RasterOptions::default());
    let mut m = SegmentationMask::filled(view.width, view.height, Label::Background);
    for y in 0..view.height {
        for x in 0..view.width {
            if let Some(f) = buf.face_at(x, y) {
                m.set(x, y, labels.get(f));
            }
        }
    }
    Ok(m)
}

/// Even-odd point-in-polygon test.
pub fn in_polygon(p: Point2<f64>, poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Keeps samples whose x/y fall inside `poly`.
pub fn crop_samples<T: Real>(samples: &[PointSample<T>], poly: &[[f64; 2]]) -> Vec<PointSample<T>> {
    samples
        .iter()
        .filter(|s| in_polygon(Point2::new(to_f64(s.point.x), to_f64(s.point.y)), poly))
        .copied()
        .collect()
}

/// Per-vertex distance from `mesh` to `reference` colored over `[0, max]`.
pub fn error_colors<T: Real>(mesh: &TriangleMesh<T>, reference: &MeshIndex<T>, max: f64) -> (Vec<f64>, Vec<[u8; 3]>) {
    let d: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|p| reference.closest(p).map_or(0.0, |(d, _)| to_f64(d)))
        .collect();
    let c = d.iter().map(|&x| crate::depthmap::sequential(x, max)).collect();
    (d, c)
}

/// Per-vertex nearest distance to a point set, colored over `[0, max]`.
pub fn error_colors_cloud<T: Real>(mesh: &TriangleMesh<T>, reference: &PointIndex<T>, max: f64) -> (Vec<f64>, Vec<[u8; 3]>) {
    let d: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|p| reference.nearest(p).map_or(0.0, |(_, d)| to_f64(d)))
        .collect();
    let c = d.iter().map(|&x| crate::depthmap::sequential(x, max)).collect();
    (d, c)
}

/// Reference geometry for an evaluation run.
#[derive(Clone, Debug)]
pub enum Reference {
    Mesh(TriangleMesh<f64>),
    Cloud { points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>> },
}

/// Unit normals of a point cloud from the smallest principal axis of each
/// point's `k` nearest neighbors. Orientation is arbitrary.
pub fn estimate_normals(points: &[Point3<f64>], k: usize) -> Vec<Vector3<f64>> {
    let tree: RTree<Indexed<f64>> = RTree::bulk_load(points.iter().enumerate().map(|(i, p)| GeomWithData::new(arr(p), i)).collect());
    points
        .iter()
        .map(|p| {
            let nb: Vec<Point3<f64>> = tree
                .nearest_neighbor_iter(&arr(p))
                .take(k.max(3))
                .map(|g| points[g.data])
                .collect();
            let c = nb.iter().fold(Vector3::zeros(), |a, q| a + q.coords) / nb.len() as f64;
            let cov = nb.iter().fold(Matrix3::zeros(), |a, q| {
                let d = q.coords - c;
                a + d * d.transpose()
            });
            let e = cov.symmetric_eigen();
            let i = e.eigenvalues.imin();
            let n = e.eigenvectors.column(i).into_owned();
            if n.norm() > 0.0 {
                n.normalize()
            } else {
                Vector3::z()
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub samples: usize,
    pub seed: u64,
    pub icp: bool,
    pub icp_max_iter: usize,
    pub icp_tol: f64,
    /// Upper end of the error colormap, in input units.
    pub error_max: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            samples: 20_000,
            seed: 0,
            icp: true,
            icp_max_iter: 50,
            icp_tol: 1e-9,
            error_max: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rigid map applied to the reconstruction, row-major rotation.
    pub icp_rotation: [f64; 9],
    pub icp_translation: [f64; 3],
    pub icp_rms: f64,
    pub icp_iterations: usize,
    pub recon_samples: usize,
    pub reference_samples: usize,
    pub metrics: SurfaceMetrics,
}

pub struct EvalOutput {
    pub report: EvalReport,
    /// Aligned reconstruction with per-vertex error colors.
    pub error_mesh: TriangleMesh<f64>,
    pub error_colors: Vec<[u8; 3]>,
    /// Per-vertex distance of the aligned reconstruction to the reference.
    pub vertex_errors: Vec<f64>,
}

/// Aligns `recon` to `reference` with ICP, samples both and compares them.
/// Distances to a mesh are point-to-surface; distances to a cloud are
/// nearest-point.
pub fn evaluate(recon: &TriangleMesh<f64>, reference: &Reference, crop: Option<&[[f64; 2]]>, opts: &EvalOptions) -> Result<EvalOutput> {
    let ref_points: Vec<Point3<f64>> = match reference {
        Reference::Mesh(m) => m.vertices().to_vec(),
        Reference::Cloud { points, .. } => points.clone(),
    };
    if ref_points.is_empty() {
        return Err(Error::InvalidArgument("reference is empty".into()));
    }
    let (rot, trans, rms, iters) = if opts.icp {
        let r = icp_align(recon.vertices(), &ref_points, opts.icp_max_iter, opts.icp_tol)?;
        (r.rotation, r.translation, r.rms, r.iterations)
    } else {
        (Matrix3::identity(), Vector3::zeros(), 0.0, 0)
    };
    let aligned = recon.transformed(&rot, &trans);
    let recon_idx = MeshIndex::new(&aligned);
    let mut a = sample_surface(&aligned, opts.samples, opts.seed)?;
    let mut b = match reference {
        Reference::Mesh(m) => sample_surface(m, opts.samples, opts.seed.wrapping_add(1))?,
        Reference::Cloud { points, normals } => points
            .iter()
            .zip(normals)
            .map(|(p, n)| PointSample {
                point: *p,
                normal: *n,
                face: usize::MAX,
            })
            .collect(),
    };
    if let Some(poly) = crop {
        a = crop_samples(&a, poly);
        b = crop_samples(&b, poly);
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("no samples left after cropping".into()));
    }
    let to_recon = |from: &[PointSample<f64>]| {
        let mut d = Vec::with_capacity(from.len());
        let mut nc = 0.0;
        for s in from {
            let (dist, n) = recon_idx.closest(&s.point).expect("non-empty mesh");
            d.push(dist);
            nc += s.normal.dot(&n).abs();
        }
        (d, nc / from.len() as f64)
    };
    let (metrics, (dist, colors)) = match reference {
        Reference::Mesh(m) => {
            let idx = MeshIndex::new(m);
            let mut d = Vec::with_capacity(a.len());
            let mut nc = 0.0;
            for s in &a {
                let (dist, n) = idx.closest(&s.point).expect("non-empty mesh");
                d.push(dist);
                nc += s.normal.dot(&n).abs();
            }
            let (ba, nba) = to_recon(&b);
            let len = a.len() as f64;
            (assemble(d, ba, nc / len, nba), error_colors(&aligned, &idx, opts.error_max))
        }
        Reference::Cloud { .. } => {
            let idx = PointIndex::new(&b.iter().map(|s| s.point).collect::<Vec<_>>());
            let (ab, nab) = directed(&a, &b, &idx);
            let (ba, nba) = to_recon(&b);
            (assemble(ab, ba, nab, nba), error_colors_cloud(&aligned, &idx, opts.error_max))
        }
    };
    let r = &rot;
    Ok(EvalOutput {
        report: EvalReport {
            icp_rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            icp_translation: [trans.x, trans.y, trans.z],
            icp_rms: rms,
            icp_iterations: iters,
            recon_samples: a.len(),
            reference_samples: b.len(),
            metrics,
        },
        error_mesh: aligned,
        error_colors: colors,
        vertex_errors: dist,
    })
}

/// One distance per line.
pub fn distance_text(d: &[f64]) -> String {
    let mut s = String::with_capacity(d.len() * 24);
    for x in d {
        s.push_str(&format!("{x:.9e}\n"));
    }
    s
}
