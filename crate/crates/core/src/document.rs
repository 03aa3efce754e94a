//! End-to-end wound documentation: fuse, split into wounds, measure,
//! scale, render and report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::CameraView;
use crate::config::Config;
use crate::curve::SmoothingRule;
use crate::depthmap::{colored_wound_mesh, cover_height_grid, topographic_map};
use crate::error::{Error, Result};
use crate::eval::{dice, reproject_labels};
use crate::fusion::{fuse_pipeline, vote_table};
use crate::io::{self, DetectionFile};
use crate::labels::{Label, LabelField};
use crate::measure::{measure_component, WoundMetrics};
use crate::mesh::{connected_components, TriangleMesh};
use crate::raster::SegmentationMask;
use crate::scale::{apply_scale_mesh, recover_scale_from_file, ScaleEstimate};
use crate::synth::{face_to_vertex_colors, json_bytes};

pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL_NAME: &str = "wound3d";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Fuse,
    Components,
    Measure,
    Scale,
    Render,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Fuse => "fuse",
            Stage::Components => "components",
            Stage::Measure => "measure",
            Stage::Scale => "scale",
            Stage::Render => "render",
            Stage::Report => "report",
        }
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage.name(), self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl StageError {
    /// `{"stage": ..., "kind": ..., "message": ...}`
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "stage": self.stage.name(),
            "kind": self.error.kind(),
            "message": self.error.to_string(),
        })
        .to_string()
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionSummary {
    pub unobserved_fraction: f64,
    pub views_used: Vec<String>,
    /// Views without a mask.
    pub views_skipped: Vec<String>,
}

/// Output of the fusion stage, enough to resume the pipeline from labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedLabels {
    pub labels: LabelField,
    pub summary: FusionSummary,
    pub vote_table: String,
}

/// Fuses the available masks; views whose mask is `None` are skipped.
pub fn fuse_stage(
    mesh: &TriangleMesh<f64>,
    views: &[CameraView<f64>],
    masks: &[Option<SegmentationMask>],
    config: &Config,
) -> Result<FusedLabels> {
    if views.len() != masks.len() {
        return Err(Error::DimensionMismatch(format!("{} views but {} mask slots", views.len(), masks.len())));
    }
    let mut used_views = Vec::new();
    let mut used_masks = Vec::new();
    let mut skipped = Vec::new();
    for (v, m) in views.iter().zip(masks) {
        match m {
            Some(m) => {
                used_views.push(v.clone());
                used_masks.push(m.clone());
            }
            None => skipped.push(v.view_id.clone()),
        }
    }
    if used_views.is_empty() {
        return Err(Error::InvalidArgument("no view has a mask".into()));
    }
    let out = fuse_pipeline(mesh, &used_views, &used_masks, &config.fusion)?;
    Ok(FusedLabels {
        labels: out.labels,
        summary: FusionSummary {
            unobserved_fraction: out.unobserved_fraction,
            views_used: used_views.iter().map(|v| v.view_id.clone()).collect(),
            views_skipped: skipped,
        },
        vote_table: vote_table(&out.votes, &used_views),
    })
}

pub const FUSED_LABELS: &str = "fused_labels.ply";
pub const FUSION_SUMMARY: &str = "fusion.json";
pub const VOTE_TABLE: &str = "votes.tsv";

/// Files written by the fusion stage.
pub fn fused_artifacts(mesh: &TriangleMesh<f64>, fused: &FusedLabels) -> Result<Vec<Artifact>> {
    Ok(vec![
        Artifact {
            path: FUSED_LABELS.into(),
            bytes: labeled_mesh_ply(mesh, &fused.labels)?,
        },
        Artifact {
            path: FUSION_SUMMARY.into(),
            bytes: json_bytes(&fused.summary),
        },
        Artifact {
            path: VOTE_TABLE.into(),
            bytes: fused.vote_table.clone().into_bytes(),
        },
    ])
}

/// Reads the output of an earlier fusion run from `dir`.
pub fn read_fused(dir: &Path, face_count: usize) -> Result<FusedLabels> {
    let lp = dir.join(FUSED_LABELS);
    let labels = io::ply::read_ply(&lp)?
        .labels
        .ok_or_else(|| Error::parse(&lp, "no face label property"))?;
    labels.check_len(face_count)?;
    let sp = dir.join(FUSION_SUMMARY);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let summary = serde_json::from_str(&text).map_err(|e| Error::parse(&sp, e.to_string()))?;
    let vp = dir.join(VOTE_TABLE);
    let vote_table = std::fs::read_to_string(&vp).map_err(|e| Error::io(&vp, e))?;
    Ok(FusedLabels {
        labels,
        summary,
        vote_table,
    })
}

pub struct DocumentInputs {
    pub mesh: TriangleMesh<f64>,
    pub views: Vec<CameraView<f64>>,
    /// One slot per view, `None` for a missing mask. Masks are fused unless
    /// `fused` is given; they are always used to score reprojections.
    pub masks: Vec<Option<SegmentationMask>>,
    /// Result of an earlier fusion run to resume from.
    pub fused: Option<FusedLabels>,
    pub detections: Option<DetectionFile>,
    /// Input name → sha256, echoed in the report.
    pub input_hashes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Report fields in clinical units: lengths in mm, areas in cm²,
/// composition in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanSummary {
    pub wound_bed_area_cm2: f64,
    pub perimeter_mm: f64,
    pub length_mm: f64,
    pub width_mm: f64,
    pub max_depth_mm: f64,
    pub periwound_area_cm2: f64,
    pub tissue_percent: BTreeMap<String, f64>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl HumanSummary {
    pub fn of(m: &WoundMetrics) -> HumanSummary {
        let t = &m.tissue;
        let tissue_percent = [
            ("granulation", t.granulation),
            ("slough", t.slough),
            ("necrotic", t.necrotic),
            ("epithelial", t.epithelial),
            ("unclassified", t.unclassified),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), round2(v * 100.0)))
        .collect();
        HumanSummary {
            wound_bed_area_cm2: round2(m.wound_bed_area / 100.0),
            perimeter_mm: round2(m.perimeter),
            length_mm: round2(m.length),
            width_mm: round2(m.width),
            max_depth_mm: round2(m.depth.max_depression),
            periwound_area_cm2: round2(m.periwound_area / 100.0),
            tissue_percent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WoundEntry {
    pub id: usize,
    /// Raw metrics in output units (mm and mm² when scaled).
    pub metrics: WoundMetrics,
    /// Present only for scaled output.
    pub summary: Option<HumanSummary>,
    /// Artifact paths for this wound.
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionScore {
    pub view_id: String,
    pub dice_wound_bed: f64,
    pub dice_periwound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WoundDocument {
    pub schema_version: String,
    pub tool: ToolInfo,
    /// `"mm"` or `"model"`.
    pub units: String,
    pub unscaled: bool,
    pub scale: Option<ScaleEstimate>,
    pub fusion: FusionSummary,
    pub wounds: Vec<WoundEntry>,
    pub reprojection: Vec<ReprojectionScore>,
    pub config: Config,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<ArtifactEntry>,
    pub warnings: Vec<String>,
}

impl WoundDocument {
    pub fn to_json(&self) -> Vec<u8> {
        json_bytes(self)
    }

    /// Parses a report, rejecting unknown major schema versions.
    pub fn from_json(text: &str) -> Result<WoundDocument> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::parse(Path::new("<document>"), e.to_string()))?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::parse(Path::new("<document>"), "missing schema_version"))?;
        let major = SCHEMA_VERSION.split('.').next();
        if version.split('.').next() != major {
            return Err(Error::SchemaVersion(version.to_string()));
        }
        serde_json::from_value(raw).map_err(|e| Error::parse(Path::new("<document>"), e.to_string()))
    }
}

/// A file produced by the pipeline, path relative to the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Report file name inside the output directory.
pub const REPORT_NAME: &str = "document.json";

pub struct DocumentOutput {
    pub document: WoundDocument,
    pub artifacts: Vec<Artifact>,
}

impl DocumentOutput {
    /// Writes the artifacts and the report under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let p = dir.join(&a.path);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&p, &a.bytes).map_err(|e| Error::io(&p, e))?;
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(REPORT_NAME);
        std::fs::write(&p, self.document.to_json()).map_err(|e| Error::io(&p, e))
    }
}

pub fn labeled_mesh_ply(mesh: &TriangleMesh<f64>, labels: &LabelField) -> Result<Vec<u8>> {
    let colors: Vec<[u8; 3]> = labels.as_slice().iter().map(|l| l.color()).collect();
    let mut buf = Vec::new();
    io::ply::write_ply_to(&mut buf, mesh, Some(&face_to_vertex_colors(mesh, &colors)), Some(labels))?;
    Ok(buf)
}

/// Runs the full pipeline. Metrics are computed in model units and scaled
/// once at the end; with `unscaled` or without detections the report stays
/// in model units.
pub fn run_document(inputs: DocumentInputs, config: &Config, unscaled: bool) -> StageResult<DocumentOutput> {
    config.validate().at(Stage::Load)?;
    let DocumentInputs {
        mesh,
        views,
        masks,
        fused,
        detections,
        input_hashes,
    } = inputs;
    let mut warnings = Vec::new();

    if masks.len() != views.len() {
        return Err(Error::DimensionMismatch(format!("{} views but {} mask slots", views.len(), masks.len()))).at(Stage::Load);
    }
    let fused = match fused {
        Some(f) => f,
        None => fuse_stage(&mesh, &views, &masks, config).at(Stage::Fuse)?,
    };
    fused.labels.check_len(mesh.face_count()).at(Stage::Fuse)?;
    for v in &fused.summary.views_skipped {
        warnings.push(format!("view '{v}': mask missing, skipped"));
    }

    let scale = match (&detections, unscaled) {
        (Some(d), false) => Some(recover_scale_from_file(d, &views).at(Stage::Scale)?),
        _ => None,
    };
    let s = scale.as_ref().map_or(1.0, |e| e.scale);
    if let Some(e) = &scale {
        warnings.extend(e.warnings.iter().cloned());
    }

    let mut measure = config.measure.clone();
    if let Some(a) = config.alpha {
        measure.smoothing = SmoothingRule::Budget(a / (s * s));
    }

    let comps = connected_components(&mesh, &fused.labels, Label::WoundBed).at(Stage::Components)?;
    let (comps, small): (Vec<_>, Vec<_>) = comps.into_iter().partition(|c| c.len() >= config.min_component_faces);
    for c in &small {
        warnings.push(format!("wound component with {} faces below min_component_faces, not measured", c.len()));
    }
    if comps.is_empty() {
        return Err(Error::NoWoundFaces).at(Stage::Components);
    }

    let mut artifacts = vec![Artifact {
        path: "labels.ply".into(),
        bytes: labeled_mesh_ply(&apply_scale_mesh(&mesh, s).at(Stage::Render)?, &fused.labels).at(Stage::Render)?,
    }];
    if !fused.vote_table.is_empty() {
        artifacts.push(Artifact {
            path: VOTE_TABLE.into(),
            bytes: fused.vote_table.clone().into_bytes(),
        });
    }

    let mut wounds = Vec::with_capacity(comps.len());
    for (i, faces) in comps.iter().enumerate() {
        let id = i + 1;
        let (m, geo) = measure_component(&mesh, &fused.labels, faces, &measure).at(Stage::Measure)?;
        let metrics = m.scaled(s);
        let dir = format!("wound_{id:02}");
        let (dm, colors) = colored_wound_mesh(&geo.mesh, &geo.faces, &geo.depth, s).at(Stage::Render)?;
        let mut ply = Vec::new();
        io::ply::write_ply_to(&mut ply, &dm, Some(&colors), None).at(Stage::Render)?;
        let topo = topographic_map(&geo.mesh, &geo.faces, &geo.depth, s, config.topo_max_dim).at(Stage::Render)?;
        let grid = cover_height_grid(&geo.cover, s, config.height_grid_size);
        let mut paths = Vec::new();
        for (name, bytes) in [("depth_mesh.ply", ply), ("topography.png", topo.png), ("cover_height.png", grid.png)] {
            let path = format!("{dir}/{name}");
            paths.push(path.clone());
            artifacts.push(Artifact { path, bytes });
        }
        wounds.push(WoundEntry {
            id,
            summary: scale.is_some().then(|| HumanSummary::of(&metrics)),
            metrics,
            artifacts: paths,
        });
    }

    let mut reprojection = Vec::new();
    for (v, mask) in views.iter().zip(&masks) {
        let r = reproject_labels(&mesh, &fused.labels, v).at(Stage::Render)?;
        let stem = io::mask_path(Path::new("reprojections"), v);
        artifacts.push(Artifact {
            path: stem.to_string_lossy().replace('\\', "/"),
            bytes: io::encode_mask(&r),
        });
        if let Some(m) = mask {
            reprojection.push(ReprojectionScore {
                view_id: v.view_id.clone(),
                dice_wound_bed: dice(&r, m, Label::WoundBed).at(Stage::Render)?,
                dice_periwound: dice(&r, m, Label::Periwound).at(Stage::Render)?,
            });
        }
    }

    let manifest = artifacts
        .iter()
        .map(|a| ArtifactEntry {
            path: a.path.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len(),
        })
        .collect();
    let document = WoundDocument {
        schema_version: SCHEMA_VERSION.into(),
        tool: ToolInfo {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        },
        units: if scale.is_some() { "mm" } else { "model" }.into(),
        unscaled: scale.is_none(),
        scale,
        fusion: fused.summary,
        wounds,
        reprojection,
        config: config.clone(),
        inputs: input_hashes,
        artifacts: manifest,
        warnings,
    };
    Ok(DocumentOutput { document, artifacts })
}

/// Input files of a document run.
#[derive(Clone, Debug, Default)]
pub struct InputPaths {
    pub mesh: PathBuf,
    pub poses: PathBuf,
    /// Directory of masks named after each view's image stem.
    pub masks: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    /// Output directory of an earlier fusion run.
    pub fused: Option<PathBuf>,
    /// Config file, hashed into the report when given.
    pub config: Option<PathBuf>,
}

fn hash_file(hashes: &mut BTreeMap<String, String>, key: String, p: &Path) -> Result<()> {
    let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
    hashes.insert(key, sha256_hex(&bytes));
    Ok(())
}

/// One slot per view; views without a mask file get `None`.
pub fn load_masks(dir: &Path, views: &[CameraView<f64>], hashes: &mut BTreeMap<String, String>) -> Result<Vec<Option<SegmentationMask>>> {
    views
        .iter()
        .map(|v| {
            let p = io::mask_path(dir, v);
            if !p.exists() {
                return Ok(None);
            }
            let name = p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            hash_file(hashes, format!("masks/{name}"), &p)?;
            io::read_mask(&p).map(Some)
        })
        .collect()
}

/// Reads and hashes every input of a document run.
pub fn load_inputs(paths: &InputPaths) -> Result<DocumentInputs> {
    let mut hashes = BTreeMap::new();
    hash_file(&mut hashes, "mesh".into(), &paths.mesh)?;
    hash_file(&mut hashes, "poses".into(), &paths.poses)?;
    if let Some(c) = &paths.config {
        hash_file(&mut hashes, "config".into(), c)?;
    }
    let mesh = io::load_mesh(&paths.mesh)?.mesh;
    let views = io::read_poses(&paths.poses)?;
    let masks = match &paths.masks {
        Some(d) => load_masks(d, &views, &mut hashes)?,
        None => vec![None; views.len()],
    };
    let fused = match &paths.fused {
        Some(d) => {
            for name in [FUSED_LABELS, FUSION_SUMMARY, VOTE_TABLE] {
                hash_file(&mut hashes, format!("fused/{name}"), &d.join(name))?;
            }
            Some(read_fused(d, mesh.face_count())?)
        }
        None if paths.masks.is_none() => {
            return Err(Error::InvalidArgument("either masks or a fused labels directory is required".into()));
        }
        None => None,
    };
    let detections = match &paths.detections {
        Some(p) => {
            hash_file(&mut hashes, "detections".into(), p)?;
            Some(io::read_detections(p)?)
        }
        None => None,
    };
    Ok(DocumentInputs {
        mesh,
        views,
        masks,
        fused,
        detections,
        input_hashes: hashes,
    })
}

/// Loads the inputs, runs the pipeline and writes everything to `out`.
pub fn cmd_document(paths: &InputPaths, config: &Config, unscaled: bool, out: &Path) -> StageResult<WoundDocument> {
    let inputs = load_inputs(paths).at(Stage::Load)?;
    let result = run_document(inputs, config, unscaled)?;
    result.write(out).at(Stage::Report)?;
    Ok(result.document)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, OrbitSpec, SceneSpec};

    fn scene() -> crate::synth::SyntheticScene {
        generate_scene(&SceneSpec {
            resolution: 32,
            cameras: OrbitSpec {
                width: 320,
                height: 240,
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap()
    }

    fn inputs(sc: &crate::synth::SyntheticScene) -> DocumentInputs {
        DocumentInputs {
            mesh: sc.mesh.clone(),
            views: sc.views.clone(),
            masks: sc.masks.iter().cloned().map(Some).collect(),
            fused: None,
            detections: Some(sc.detections.clone()),
            input_hashes: BTreeMap::new(),
        }
    }

    #[test]
    fn end_to_end_scaled() {
        let sc = scene();
        let out = run_document(inputs(&sc), &Config::default(), false).unwrap();
        let d = &out.document;
        assert_eq!(d.units, "mm");
        assert!(!d.unscaled);
        assert!((d.scale.as_ref().unwrap().scale / 0.5 - 1.0).abs() < 1e-6);
        assert_eq!(d.wounds.len(), 1);
        let m = &d.wounds[0].metrics;
        assert!((m.perimeter / sc.truth.perimeter - 1.0).abs() < 0.05);
        assert!((m.depth.max_depression / sc.truth.max_depth - 1.0).abs() < 0.05);
        assert_eq!(d.artifacts.len(), out.artifacts.len());
        let back = WoundDocument::from_json(std::str::from_utf8(&d.to_json()).unwrap()).unwrap();
        assert_eq!(&back, d);
    }

    #[test]
    fn unscaled_without_detections_and_missing_mask() {
        let sc = scene();
        let mut inp = inputs(&sc);
        inp.detections = None;
        inp.masks[3] = None;
        let out = run_document(inp, &Config::default(), false).unwrap();
        assert!(out.document.unscaled);
        assert_eq!(out.document.units, "model");
        assert!(out.document.wounds[0].summary.is_none());
        assert_eq!(out.document.warnings.len(), 1);
        assert!(out.document.warnings[0].contains(&sc.views[3].view_id));
        assert_eq!(out.document.reprojection.len(), sc.views.len() - 1);
    }

    #[test]
    fn resuming_from_fused_labels_matches() {
        let sc = scene();
        let cfg = Config::default();
        let full = run_document(inputs(&sc), &cfg, false).unwrap();
        let masks: Vec<_> = sc.masks.iter().cloned().map(Some).collect();
        let fused = fuse_stage(&sc.mesh, &sc.views, &masks, &cfg).unwrap();
        let mut inp = inputs(&sc);
        inp.fused = Some(fused);
        let resumed = run_document(inp, &cfg, false).unwrap();
        assert_eq!(full.document.to_json(), resumed.document.to_json());
        assert_eq!(full.artifacts, resumed.artifacts);
    }

    #[test]
    fn schema_major_is_checked() {
        let sc = scene();
        let out = run_document(inputs(&sc), &Config::default(), true).unwrap();
        let text = String::from_utf8(out.document.to_json()).unwrap();
        let bumped = text.replacen("\"schema_version\": \"1.0\"", "\"schema_version\": \"2.0\"", 1);
        assert!(matches!(WoundDocument::from_json(&bumped), Err(Error::SchemaVersion(_))));
        let minor = text.replacen("\"schema_version\": \"1.0\"", "\"schema_version\": \"1.7\"", 1);
        assert!(WoundDocument::from_json(&minor).is_ok());
    }

    #[test]
    fn stage_errors_are_tagged() {
        let sc = scene();
        let mut inp = inputs(&sc);
        inp.masks = vec![None; sc.views.len()];
        let e = run_document(inp, &Config::default(), false).err().unwrap();
        assert_eq!(e.stage, Stage::Fuse);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["stage"], "fuse");
        assert_eq!(v["kind"], e.error.kind());
    }
}
