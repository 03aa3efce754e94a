//! Depth renderings: diverging per-vertex colors, a top-down topographic
//! image and a sampled cover height grid.
//!
//! Colormap: blue (59, 76, 192) at the deepest depression, light gray
//! (221, 221, 221) at zero, red (180, 4, 38) at the highest protrusion,
//! linear in between. The range is symmetric about zero.

use nalgebra::Point3;

use crate::cover::SurfaceCover;
use crate::error::{Error, Result};
use crate::io::{encode_gray_png, encode_rgb_png};
use crate::measure::DepthField;
use crate::mesh::TriangleMesh;
use crate::scalar::{to_f64, Real};

const COOL: [f64; 3] = [59.0, 76.0, 192.0];
const MID: [f64; 3] = [221.0, 221.0, 221.0];
const WARM: [f64; 3] = [180.0, 4.0, 38.0];

/// Color of `t ∈ [-1, 1]`; values outside are clamped.
pub fn diverging(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let (end, s) = if t < 0.0 { (COOL, -t) } else { (WARM, t) };
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = (MID[k] + (end[k] - MID[k]) * s).round() as u8;
    }
    c
}

/// Maps `v ∈ [0, max]` onto the full colormap from cool to warm.
pub fn sequential(v: f64, max: f64) -> [u8; 3] {
    let t = if max > 0.0 { v / max } else { 0.0 };
    diverging(2.0 * t.clamp(0.0, 1.0) - 1.0)
}

/// Half-width of the symmetric color range.
pub fn depth_range(depths: &[f64]) -> f64 {
    depths.iter().fold(0.0f64, |a, d| a.max(d.abs()))
}

pub fn depth_colors(depths: &[f64]) -> Vec<[u8; 3]> {
    let r = depth_range(depths);
    depths
        .iter()
        .map(|&d| if r > 0.0 { diverging(d / r) } else { diverging(0.0) })
        .collect()
}

/// Wound faces as a compact mesh with depth colors. `scale` converts model
/// units to output units.
pub fn colored_wound_mesh<T: Real>(
    mesh: &TriangleMesh<T>,
    faces: &[usize],
    depth: &DepthField<T>,
    scale: f64,
) -> Result<(TriangleMesh<f64>, Vec<[u8; 3]>)> {
    if faces.is_empty() {
        return Err(Error::NoWoundFaces);
    }
    let mut remap = vec![usize::MAX; mesh.vertex_count()];
    for (k, &v) in depth.vertices.iter().enumerate() {
        remap[v] = k;
    }
    let vertices: Vec<Point3<f64>> = depth
        .vertices
        .iter()
        .map(|&v| {
            let p = mesh.vertices()[v];
            Point3::new(to_f64(p.x) * scale, to_f64(p.y) * scale, to_f64(p.z) * scale)
        })
        .collect();
    let tris: Vec<[usize; 3]> = faces.iter().map(|&f| mesh.faces()[f].map(|v| remap[v])).collect();
    if tris.iter().flatten().any(|&v| v == usize::MAX) {
        return Err(Error::DimensionMismatch("depth field does not cover the wound faces".into()));
    }
    let depths: Vec<f64> = depth.depths.iter().map(|&d| to_f64(d) * scale).collect();
    let colors = depth_colors(&depths);
    let out = TriangleMesh::new(vertices, tris)?;
    Ok((out, colors))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopoMap {
    pub png: Vec<u8>,
    pub width: u32,
    pub height: u32,
    /// Output units per map pixel.
    pub pixel_size: f64,
    /// Spacing of contour lines, output units.
    pub contour_step: f64,
    /// Length of the drawn scale bar, output units.
    pub scale_bar: f64,
    /// Half-width of the symmetric color range, output units.
    pub range: f64,
}

/// Rounds up to 1, 2 or 5 times a power of ten.
pub fn nice_step(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    let p = 10f64.powf(x.log10().floor());
    let m = x / p;
    let n = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    n * p
}

/// Largest 1, 2 or 5 times a power of ten not exceeding `x`.
pub fn nice_floor(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    let p = 10f64.powf(x.log10().floor());
    let m = x / p;
    let n = if m >= 5.0 {
        5.0
    } else if m >= 2.0 {
        2.0
    } else {
        1.0
    };
    n * p
}

const PAD: u32 = 16;
const BAR_W: u32 = 16;
const SCALE_ZONE: u32 = 14;

/// Orthographic top-down (+z) rendering of the wound depth with contour
/// lines, a vertical color bar on the right and a scale bar below.
pub fn topographic_map<T: Real>(
    mesh: &TriangleMesh<T>,
    faces: &[usize],
    depth: &DepthField<T>,
    scale: f64,
    max_dim: u32,
) -> Result<TopoMap> {
    if faces.is_empty() {
        return Err(Error::NoWoundFaces);
    }
    let per_vertex = depth.per_vertex(mesh.vertex_count());
    let pos = |v: usize| {
        let p = mesh.vertices()[v];
        (to_f64(p.x) * scale, to_f64(p.y) * scale, to_f64(p.z) * scale)
    };
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in &depth.vertices {
        let (x, y, _) = pos(v);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let extent = (x1 - x0).max(y1 - y0);
    if !(extent > 0.0) {
        return Err(Error::Degenerate("wound has no planar extent".into()));
    }
    let px = extent / max_dim.max(8) as f64;
    let mw = (((x1 - x0) / px).ceil() as u32).max(1);
    let mh = (((y1 - y0) / px).ceil() as u32).max(1);
    let depths: Vec<f64> = depth.depths.iter().map(|&d| to_f64(d) * scale).collect();
    let range = depth_range(&depths);

    // Top-down z-buffer of depth values over the map area; image rows go
    // from +y (top) to -y (bottom).
    let mut zbuf = vec![f64::NEG_INFINITY; (mw * mh) as usize];
    let mut dbuf = vec![f64::NAN; (mw * mh) as usize];
    for &f in faces {
        let tri = mesh.faces()[f];
        let p = tri.map(|v| {
            let (x, y, z) = pos(v);
            ((x - x0) / px, (y1 - y) / px, z, to_f64(per_vertex[v].unwrap_or(T::zero())) * scale)
        });
        let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
        if area == 0.0 {
            continue;
        }
        let bx0 = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let bx1 = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let by0 = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let by1 = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        let cx0 = ((bx0 - 0.5).ceil().max(0.0)) as u32;
        let cy0 = ((by0 - 0.5).ceil().max(0.0)) as u32;
        let cx1 = ((bx1 - 0.5).floor().min(mw as f64 - 1.0)).max(-1.0);
        let cy1 = ((by1 - 0.5).floor().min(mh as f64 - 1.0)).max(-1.0);
        if cx1 < 0.0 || cy1 < 0.0 {
            continue;
        }
        for yy in cy0..=cy1 as u32 {
            for xx in cx0..=cx1 as u32 {
                let (sx, sy) = (xx as f64 + 0.5, yy as f64 + 0.5);
                let e = |a: usize, b: usize| (p[b].0 - p[a].0) * (sy - p[a].1) - (p[b].1 - p[a].1) * (sx - p[a].0);
                let w0 = e(1, 2) / area;
                let w1 = e(2, 0) / area;
                let w2 = e(0, 1) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * p[0].2 + w1 * p[1].2 + w2 * p[2].2;
                let i = (yy * mw + xx) as usize;
                if z > zbuf[i] {
                    zbuf[i] = z;
                    dbuf[i] = w0 * p[0].3 + w1 * p[1].3 + w2 * p[2].3;
                }
            }
        }
    }

    let contour_step = nice_step(range / 5.0);
    let level = |d: f64| (d / contour_step).floor() as i64;
    let width = PAD + mw + PAD + BAR_W + PAD;
    let height = PAD + mh + SCALE_ZONE + PAD;
    let mut img = vec![255u8; (width * height * 3) as usize];
    let mut put = |x: u32, y: u32, c: [u8; 3]| {
        let i = ((y * width + x) * 3) as usize;
        img[i..i + 3].copy_from_slice(&c);
    };
    for yy in 0..mh {
        for xx in 0..mw {
            let d = dbuf[(yy * mw + xx) as usize];
            if d.is_nan() {
                continue;
            }
            let mut c = if range > 0.0 { diverging(d / range) } else { diverging(0.0) };
            if contour_step > 0.0 {
                let here = level(d);
                let edge = [(1i64, 0i64), (0, 1)].iter().any(|&(dx, dy)| {
                    let (nx, ny) = (xx as i64 + dx, yy as i64 + dy);
                    if nx >= mw as i64 || ny >= mh as i64 {
                        return false;
                    }
                    let nd = dbuf[(ny as u32 * mw + nx as u32) as usize];
                    !nd.is_nan() && level(nd) != here
                });
                if edge {
                    c = [60, 60, 60];
                }
            }
            put(PAD + xx, PAD + yy, c);
        }
    }
    // Color bar: top = +range, bottom = -range.
    let bx = PAD + mw + PAD;
    for yy in 0..mh {
        let t = if mh > 1 { 1.0 - 2.0 * yy as f64 / (mh - 1) as f64 } else { 0.0 };
        for xx in 0..BAR_W {
            put(bx + xx, PAD + yy, diverging(t));
        }
    }
    let mid = PAD + (mh - 1) / 2;
    for xx in 0..BAR_W {
        put(bx + xx, mid, [0, 0, 0]);
    }
    // Scale bar: the largest nice length not exceeding half the map width.
    let scale_bar = nice_floor(mw as f64 * px / 2.0);
    let bar_px = ((scale_bar / px).round() as u32).clamp(1, mw);
    let sy = PAD + mh + SCALE_ZONE / 2;
    for yy in sy - 2..=sy + 1 {
        for xx in 0..bar_px {
            put(PAD + xx, yy, [0, 0, 0]);
        }
    }
    for yy in sy - 4..=sy + 3 {
        put(PAD, yy, [0, 0, 0]);
        put(PAD + bar_px - 1, yy, [0, 0, 0]);
    }
    Ok(TopoMap {
        png: encode_rgb_png(width, height, &img),
        width,
        height,
        pixel_size: px,
        contour_step,
        scale_bar,
        range,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeightGrid {
    pub png: Vec<u8>,
    pub size: u32,
    pub min: f64,
    pub max: f64,
}

/// Samples the cover on a `size × size` grid over the bounding box of its
/// sites; gray levels span the sampled height range.
pub fn cover_height_grid<T: Real>(cover: &SurfaceCover<T>, scale: f64, size: u32) -> HeightGrid {
    let sites = cover.sites();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in &sites {
        x0 = x0.min(to_f64(s.x));
        y0 = y0.min(to_f64(s.y));
        x1 = x1.max(to_f64(s.x));
        y1 = y1.max(to_f64(s.y));
    }
    let size = size.max(2);
    let mut h = Vec::with_capacity((size * size) as usize);
    for r in 0..size {
        let y = y1 - (y1 - y0) * r as f64 / (size - 1) as f64;
        for c in 0..size {
            let x = x0 + (x1 - x0) * c as f64 / (size - 1) as f64;
            h.push(to_f64(cover.eval(crate::scalar::lit(x), crate::scalar::lit(y))) * scale);
        }
    }
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let g: Vec<u8> = h
        .iter()
        .map(|&v| if span > 0.0 { ((v - min) / span * 255.0).round() as u8 } else { 128 })
        .collect();
    HeightGrid {
        png: encode_gray_png(size, size, &g),
        size,
        min,
        max,
    }
}
