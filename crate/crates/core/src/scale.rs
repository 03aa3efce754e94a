//! Metric scale from square fiducial markers of known side length.

use std::collections::BTreeMap;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::io::DetectionFile;
use crate::measure::WoundMetrics;
use crate::mesh::TriangleMesh;
use crate::scalar::{to_f64, Real};
use crate::triangulate::dlt_triangulate;

/// Largest tolerated relative side-length spread `(max − min) / mean`.
pub const MAX_SIDE_SPREAD: f64 = 0.10;

/// Corner detections of one marker: per view, corners ordered top-left,
/// top-right, bottom-right, bottom-left.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerObservations<T: Real> {
    pub marker_id: u32,
    pub side_mm: f64,
    pub views: Vec<(usize, [Point2<T>; 4])>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerScale {
    pub marker_id: u32,
    pub side_mm: f64,
    pub views_used: usize,
    /// Triangulated corners, model units.
    pub corners: [[f64; 3]; 4],
    pub corner_rms_px: [f64; 4],
    /// Adjacent-corner distances TL-TR, TR-BR, BR-BL, BL-TL, model units.
    pub sides: [f64; 4],
    pub model_side: f64,
    pub spread: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    /// Millimetres per model unit.
    pub scale: f64,
    pub markers: Vec<MarkerScale>,
    pub warnings: Vec<String>,
}

/// Triangulates the four corners of one marker and derives its scale.
pub fn marker_scale<T: Real>(obs: &MarkerObservations<T>, views: &[CameraView<T>]) -> Result<MarkerScale> {
    let err = |reason: String| Error::Marker {
        marker: obs.marker_id,
        reason,
    };
    if !(obs.side_mm > 0.0) {
        return Err(err(format!("side length {} must be positive", obs.side_mm)));
    }
    if obs.views.len() < 2 {
        return Err(err(format!("needs detections in at least 2 views, got {}", obs.views.len())));
    }
    let mut corners = [[0.0; 3]; 4];
    let mut pts = Vec::with_capacity(4);
    let mut rms = [0.0; 4];
    for k in 0..4 {
        let o: Vec<(&CameraView<T>, Point2<T>)> = obs.views.iter().map(|(v, c)| (&views[*v], c[k])).collect();
        let t = dlt_triangulate(&o).map_err(|e| err(format!("corner {k}: {e}")))?;
        corners[k] = [to_f64(t.point.x), to_f64(t.point.y), to_f64(t.point.z)];
        rms[k] = to_f64(t.rms_px);
        pts.push(t.point);
    }
    let sides: [f64; 4] = std::array::from_fn(|k| to_f64((pts[(k + 1) % 4] - pts[k]).norm()));
    let model_side = sides.iter().sum::<f64>() / 4.0;
    if !(model_side > 0.0) {
        return Err(err("corners triangulate to a single point".into()));
    }
    let max = sides.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sides.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (max - min) / model_side;
    if spread > MAX_SIDE_SPREAD {
        return Err(err(format!(
            "side lengths spread {:.1}% exceeds {:.0}%; detections are unreliable",
            spread * 100.0,
            MAX_SIDE_SPREAD * 100.0
        )));
    }
    Ok(MarkerScale {
        marker_id: obs.marker_id,
        side_mm: obs.side_mm,
        views_used: obs.views.len(),
        corners,
        corner_rms_px: rms,
        sides,
        model_side,
        spread,
        scale: obs.side_mm / model_side,
    })
}

/// Scale from one or more markers; several markers are combined with
/// weights `1 / (spread + 1e-6)`.
pub fn recover_scale<T: Real>(markers: &[MarkerObservations<T>], views: &[CameraView<T>]) -> Result<ScaleEstimate> {
    if markers.is_empty() {
        return Err(Error::InvalidArgument("no marker detections".into()));
    }
    let per: Vec<MarkerScale> = markers.iter().map(|m| marker_scale(m, views)).collect::<Result<_>>()?;
    let (mut num, mut den) = (0.0, 0.0);
    for m in &per {
        let w = 1.0 / (m.spread + 1e-6);
        num += w * m.scale;
        den += w;
    }
    Ok(ScaleEstimate {
        scale: num / den,
        markers: per,
        warnings: Vec::new(),
    })
}

/// Matches detections to views by `view_id`. Detections for unknown views
/// are skipped and reported as warnings.
pub fn observations_from_file(file: &DetectionFile, views: &[CameraView<f64>]) -> (Vec<MarkerObservations<f64>>, Vec<String>) {
    let index: BTreeMap<&str, usize> = views.iter().enumerate().map(|(i, v)| (v.view_id.as_str(), i)).collect();
    let mut warnings = Vec::new();
    for view_id in file.detections.keys() {
        if !index.contains_key(view_id.as_str()) {
            warnings.push(format!("detections for unknown view '{view_id}' skipped"));
        }
    }
    let obs = file
        .markers
        .iter()
        .map(|m| {
            let views = views
                .iter()
                .enumerate()
                .filter_map(|(i, v)| file.corners(&v.view_id, m.marker_id).map(|c| (i, c)))
                .collect();
            MarkerObservations {
                marker_id: m.marker_id,
                side_mm: m.side_mm,
                views,
            }
        })
        .collect();
    (obs, warnings)
}

pub fn recover_scale_from_file(file: &DetectionFile, views: &[CameraView<f64>]) -> Result<ScaleEstimate> {
    let (obs, warnings) = observations_from_file(file, views);
    let mut est = recover_scale(&obs, views)?;
    est.warnings = warnings;
    Ok(est)
}

pub fn apply_scale_mesh<T: Real>(mesh: &TriangleMesh<T>, scale: T) -> Result<TriangleMesh<T>> {
    mesh.scaled(scale)
}

pub fn apply_scale_metrics(metrics: &WoundMetrics, scale: f64) -> Result<WoundMetrics> {
    if !(scale > 0.0) {
        return Err(Error::NonPositiveScale(scale));
    }
    Ok(metrics.scaled(scale))
}
