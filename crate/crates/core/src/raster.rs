//! Face-id rasterization with a z-buffer and per-face mask sampling.
//!
//! Pixel centers sit at half-integer coordinates and edges follow the
//! top-left fill rule, so buffers are bit-reproducible. Depth is the camera
//! z of the visible surface, interpolated as `1/z` in screen space.

use std::collections::BTreeMap;

use nalgebra::{Point2, Vector3};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::mesh::TriangleMesh;
use crate::scalar::{lit, Real};

pub const EMPTY: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct FaceIdBuffer<T: Real> {
    pub width: u32,
    pub height: u32,
    ids: Vec<u32>,
    depth: Vec<T>,
}

impl<T: Real> FaceIdBuffer<T> {
    fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        FaceIdBuffer {
            width,
            height,
            ids: vec![EMPTY; n],
            depth: vec![crate::scalar::max_value(); n],
        }
    }

    #[inline]
    pub fn face_at(&self, x: u32, y: u32) -> Option<usize> {
        let id = self.ids[y as usize * self.width as usize + x as usize];
        (id != EMPTY).then_some(id as usize)
    }

    #[inline]
    pub fn depth_at(&self, x: u32, y: u32) -> Option<T> {
        let i = y as usize * self.width as usize + x as usize;
        (self.ids[i] != EMPTY).then_some(self.depth[i])
    }

    /// Raw face ids, row-major; `EMPTY` marks uncovered pixels.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn covered_pixels(&self) -> usize {
        self.ids.iter().filter(|&&i| i != EMPTY).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RasterOptions {
    pub cull_backfaces: bool,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions {
            cull_backfaces: true,
        }
    }
}

/// Renders the mesh into `view` as a face-id buffer with nearest-depth wins.
/// Faces are clipped against a near plane in front of the camera.
pub fn rasterize<T: Real>(mesh: &TriangleMesh<T>, view: &CameraView<T>, opts: RasterOptions) -> FaceIdBuffer<T> {
    let mut buf = FaceIdBuffer::new(view.width, view.height);
    let cam: Vec<Vector3<T>> = mesh.vertices().iter().map(|p| view.to_camera(p)).collect();
    let near_rel: T = lit(1e-6);

    for (f, tri) in mesh.faces().iter().enumerate() {
        if opts.cull_backfaces {
            let to_cam = view.center - mesh.face_barycenter(f);
            if !(mesh.face_normal(f).dot(&to_cam) > T::zero()) {
                continue;
            }
        }
        let pts = [cam[tri[0]], cam[tri[1]], cam[tri[2]]];
        let zmax = pts.iter().map(|p| p.z).fold(crate::scalar::min_value::<T>(), |a, b| a.max(b));
        if !(zmax > T::zero()) {
            continue;
        }
        let near = zmax * near_rel;
        let poly = clip_near(&pts, near);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<(Point2<T>, T)> = poly
            .iter()
            .map(|p| (view.pixel_of_camera_point(p), T::one() / p.z))
            .collect();
        for k in 1..screen.len() - 1 {
            fill_triangle(&mut buf, f as u32, [screen[0], screen[k], screen[k + 1]]);
        }
    }
    buf
}

/// Sutherland–Hodgman clip of a triangle against `z >= near`.
fn clip_near<T: Real>(tri: &[Vector3<T>; 3], near: T) -> Vec<Vector3<T>> {
    if tri.iter().all(|p| p.z >= near) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= near;
        let b_in = b.z >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = near;
            out.push(p);
        }
    }
    out
}

#[inline]
fn edge<T: Real>(a: &Point2<T>, b: &Point2<T>, p: &Point2<T>) -> T {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

#[inline]
fn is_top_left<T: Real>(a: &Point2<T>, b: &Point2<T>) -> bool {
    (a.y == b.y && b.x > a.x) || b.y < a.y
}

fn fill_triangle<T: Real>(buf: &mut FaceIdBuffer<T>, id: u32, mut v: [(Point2<T>, T); 3]) {
    let mut area = edge(&v[0].0, &v[1].0, &v[2].0);
    if area == T::zero() || !area.is_finite() {
        return;
    }
    if area < T::zero() {
        v.swap(1, 2);
        area = -area;
    }
    let (p0, p1, p2) = (v[0].0, v[1].0, v[2].0);
    let w: T = lit(buf.width as f64);
    let h: T = lit(buf.height as f64);
    let half: T = lit(0.5);
    let min_x = p0.x.min(p1.x).min(p2.x);
    let max_x = p0.x.max(p1.x).max(p2.x);
    let min_y = p0.y.min(p1.y).min(p2.y);
    let max_y = p0.y.max(p1.y).max(p2.y);
    if max_x < T::zero() || max_y < T::zero() || min_x >= w || min_y >= h {
        return;
    }
    // Pixel x covers center x + 0.5.
    let x0 = (min_x - half).ceil().max(T::zero());
    let x1 = (max_x - half).floor().min(w - T::one());
    let y0 = (min_y - half).ceil().max(T::zero());
    let y1 = (max_y - half).floor().min(h - T::one());
    if x0 > x1 || y0 > y1 {
        return;
    }
    let (x0, x1) = (to_u32(x0), to_u32(x1));
    let (y0, y1) = (to_u32(y0), to_u32(y1));

    let tl12 = is_top_left(&p1, &p2);
    let tl20 = is_top_left(&p2, &p0);
    let tl01 = is_top_left(&p0, &p1);
    let inside = |e: T, tl: bool| e > T::zero() || (e == T::zero() && tl);

    for y in y0..=y1 {
        let py: T = lit(y as f64 + 0.5);
        for x in x0..=x1 {
            let p = Point2::new(lit::<T>(x as f64 + 0.5), py);
            let e0 = edge(&p1, &p2, &p);
            let e1 = edge(&p2, &p0, &p);
            let e2 = edge(&p0, &p1, &p);
            if !(inside(e0, tl12) && inside(e1, tl20) && inside(e2, tl01)) {
                continue;
            }
            let inv_z = (e0 * v[0].1 + e1 * v[1].1 + e2 * v[2].1) / area;
            if !(inv_z > T::zero()) {
                continue;
            }
            let z = T::one() / inv_z;
            let idx = y as usize * buf.width as usize + x as usize;
            if z < buf.depth[idx] {
                buf.depth[idx] = z;
                buf.ids[idx] = id;
            }
        }
    }
}

fn to_u32<T: Real>(x: T) -> u32 {
    crate::scalar::to_f64(x) as u32
}

/// Single-channel label image; pixel values are taxonomy ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMask {
    pub width: u32,
    pub height: u32,
    data: Vec<Label>,
}

impl SegmentationMask {
    pub fn filled(width: u32, height: u32, label: Label) -> Self {
        SegmentationMask {
            width,
            height,
            data: vec![label; width as usize * height as usize],
        }
    }

    pub fn from_ids(width: u32, height: u32, ids: &[u8]) -> Result<Self> {
        if ids.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for {}x{} image",
                ids.len(),
                width,
                height
            )));
        }
        let data = ids.iter().map(|&i| Label::from_id(i)).collect::<Result<_>>()?;
        Ok(SegmentationMask { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Label {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, label: Label) {
        self.data[y as usize * self.width as usize + x as usize] = label;
    }

    pub fn labels(&self) -> &[Label] {
        &self.data
    }

    pub fn ids(&self) -> Vec<u8> {
        self.data.iter().map(|l| l.id()).collect()
    }
}

/// Per-face histogram of mask classes over the face's pixel footprint.
pub type FaceHistogram = [u32; Label::COUNT];

pub fn face_histograms<T: Real>(
    buffer: &FaceIdBuffer<T>,
    mask: &SegmentationMask,
) -> Result<BTreeMap<usize, FaceHistogram>> {
    if buffer.width != mask.width || buffer.height != mask.height {
        return Err(Error::DimensionMismatch(format!(
            "buffer {}x{} vs mask {}x{}",
            buffer.width, buffer.height, mask.width, mask.height
        )));
    }
    let mut hist: BTreeMap<usize, FaceHistogram> = BTreeMap::new();
    for (i, &id) in buffer.ids.iter().enumerate() {
        if id != EMPTY {
            hist.entry(id as usize).or_insert([0; Label::COUNT])[mask.data[i].index()] += 1;
        }
    }
    Ok(hist)
}

/// Majority class of a histogram; ties go to the lowest class id.
pub fn majority(hist: &FaceHistogram) -> Label {
    let mut best = 0;
    for c in 1..Label::COUNT {
        if hist[c] > hist[best] {
            best = c;
        }
    }
    Label::ALL[best]
}

/// Vote of every face covered by at least `min_pixels` pixels: the majority
/// mask class over its footprint.
pub fn face_visibility_label<T: Real>(
    buffer: &FaceIdBuffer<T>,
    mask: &SegmentationMask,
    min_pixels: u32,
) -> Result<BTreeMap<usize, Label>> {
    Ok(face_histograms(buffer, mask)?
        .into_iter()
        .filter(|(_, h)| h.iter().sum::<u32>() >= min_pixels)
        .map(|(f, h)| (f, majority(&h)))
        .collect())
}
