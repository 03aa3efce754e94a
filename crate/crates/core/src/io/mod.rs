//! On-disk interchange formats.

mod obj;
pub mod ply;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Point2, Point3};
use serde::{Deserialize, Serialize};

pub use obj::{parse_obj, read_obj};
pub use ply::{read_ply, read_ply_from, write_ply, write_ply_to, PlyMesh};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::raster::SegmentationMask;

/// Loads a `.ply` or `.obj` mesh by extension.
pub fn load_mesh(path: &Path) -> Result<PlyMesh> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => read_obj(path),
        _ => read_ply(path),
    }
}

pub const POSE_CONVENTION: &str = "world_from_camera";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub view_id: String,
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-from-camera rotation, row-major.
    pub rotation: [f64; 9],
    pub center: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub convention: String,
    pub views: Vec<PoseEntry>,
}

impl PoseEntry {
    pub fn from_view(v: &CameraView<f64>) -> Self {
        let r = &v.rotation;
        PoseEntry {
            view_id: v.view_id.clone(),
            image: v.image.clone(),
            width: v.width,
            height: v.height,
            fx: v.fx,
            fy: v.fy,
            cx: v.cx,
            cy: v.cy,
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            center: [v.center.x, v.center.y, v.center.z],
        }
    }

    pub fn to_view(&self) -> Result<CameraView<f64>> {
        CameraView::new(
            self.view_id.clone(),
            self.image.clone(),
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            Matrix3::from_row_slice(&self.rotation),
            Point3::new(self.center[0], self.center[1], self.center[2]),
        )
    }
}

pub fn read_poses(path: &Path) -> Result<Vec<CameraView<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text, path)
}

pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<CameraView<f64>>> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse(path, e.to_string()))?;
    let conv = raw.get("convention").and_then(|c| c.as_str());
    if conv != Some(POSE_CONVENTION) {
        return Err(Error::parse(path, format!("convention must be \"{POSE_CONVENTION}\"")));
    }
    let views = raw
        .get("views")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::parse(path, "missing 'views' array"))?;
    let mut out = Vec::with_capacity(views.len());
    let mut seen = std::collections::BTreeSet::new();
    for (i, v) in views.iter().enumerate() {
        let name = v
            .get("view_id")
            .and_then(|x| x.as_str())
            .map_or_else(|| format!("#{i}"), str::to_owned);
        let entry: PoseEntry =
            serde_json::from_value(v.clone()).map_err(|e| Error::parse(path, format!("view '{name}': {e}")))?;
        if !seen.insert(entry.view_id.clone()) {
            return Err(Error::parse(path, format!("view '{name}': duplicate view_id")));
        }
        out.push(entry.to_view()?);
    }
    Ok(out)
}

pub fn pose_file_json(views: &[CameraView<f64>]) -> String {
    let f = PoseFile {
        convention: POSE_CONVENTION.into(),
        views: views.iter().map(PoseEntry::from_view).collect(),
    };
    serde_json::to_string_pretty(&f).expect("serializable") + "\n"
}

pub fn read_mask(path: &Path) -> Result<SegmentationMask> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let g = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Image {
                path: path.into(),
                reason: format!("expected 8-bit grayscale label mask, got {:?}", other.color()),
            })
        }
    };
    SegmentationMask::from_ids(g.width(), g.height(), g.as_raw()).map_err(|e| Error::Image {
        path: path.into(),
        reason: e.to_string(),
    })
}

fn encode_png(width: u32, height: u32, data: &[u8], ty: image::ExtendedColorType) -> Vec<u8> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(data, width, height, ty)
        .expect("in-memory PNG encoding");
    out
}

pub fn encode_gray_png(width: u32, height: u32, data: &[u8]) -> Vec<u8> {
    encode_png(width, height, data, image::ExtendedColorType::L8)
}

pub fn encode_rgb_png(width: u32, height: u32, data: &[u8]) -> Vec<u8> {
    encode_png(width, height, data, image::ExtendedColorType::Rgb8)
}

pub fn encode_mask(mask: &SegmentationMask) -> Vec<u8> {
    encode_gray_png(mask.width, mask.height, &mask.ids())
}

/// Mask file for a view: `<dir>/<image stem>.png`.
pub fn mask_path(dir: &Path, view: &CameraView<f64>) -> std::path::PathBuf {
    let stem = Path::new(&view.image).file_stem().and_then(|s| s.to_str()).unwrap_or(&view.view_id);
    dir.join(format!("{stem}.png"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    pub marker_id: u32,
    pub side_mm: f64,
}

/// Marker corner detections: corners ordered top-left, top-right,
/// bottom-right, bottom-left.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFile {
    pub markers: Vec<MarkerSpec>,
    /// view_id → marker_id → four `[x, y]` pixel corners.
    pub detections: BTreeMap<String, BTreeMap<String, [[f64; 2]; 4]>>,
}

impl DetectionFile {
    pub fn corners(&self, view_id: &str, marker: u32) -> Option<[Point2<f64>; 4]> {
        self.detections
            .get(view_id)?
            .get(&marker.to_string())
            .map(|c| c.map(|p| Point2::new(p[0], p[1])))
    }
}

pub fn read_detections(path: &Path) -> Result<DetectionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: DetectionFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    for (view, m) in &d.detections {
        for id in m.keys() {
            if id.parse::<u32>().is_err() {
                return Err(Error::parse(path, format!("view '{view}': marker id '{id}' is not an integer")));
            }
        }
    }
    Ok(d)
}

/// Crop polygon for evaluation, in the reference mesh's x/y coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropPolygon {
    pub polygon: Vec<[f64; 2]>,
}

pub fn read_crop(path: &Path) -> Result<CropPolygon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let c: CropPolygon = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    if c.polygon.len() < 3 {
        return Err(Error::parse(path, "crop polygon needs at least 3 vertices"));
    }
    Ok(c)
}
