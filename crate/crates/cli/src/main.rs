use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wound3d::config::Config;
use wound3d::document::{fuse_stage, fused_artifacts, AtStage, InputPaths, Stage, StageResult};
use wound3d::eval::{distance_text, estimate_normals, evaluate, EvalOptions, Reference};
use wound3d::fusion::MorphologyConfig;
use wound3d::io::{self, read_crop, read_detections, read_poses};
use wound3d::raster::SegmentationMask;
use wound3d::scale::{apply_scale_mesh, recover_scale_from_file};
use wound3d::synth::{generate_scene, write_scene, SceneSpec};
use wound3d::{Camera, Error, Label, Mesh};

#[derive(Parser)]
#[command(name = "wound3d", version, about = "3D wound documentation from a mesh, camera poses and segmentation masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: fuse, measure, scale and write the wound document.
    Document(DocumentArgs),
    /// Compare a reconstruction with a reference mesh or point cloud.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic wound scene.
    Synth(SynthArgs),
    /// Fuse per-view masks into face labels.
    Fuse(FuseArgs),
    /// Recover the metric scale from marker detections.
    Scale(ScaleArgs),
    /// Render face labels into every view.
    Reproject(ReprojectArgs),
}

#[derive(Args)]
struct Tuning {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Perimeter smoothing budget in output units squared (mm² when scaled).
    #[arg(long)]
    alpha: Option<f64>,
    /// Width angle tolerance, |cos| against the length chord.
    #[arg(long)]
    eps_angle: Option<f64>,
    /// Open/close radius (face hops) for wound bed and periwound cleanup.
    #[arg(long)]
    morph_radius: Option<usize>,
    /// Fit the surface cover with the kernel terms only (no affine part).
    #[arg(long)]
    strict_cover: bool,
}

impl Tuning {
    fn config(&self) -> StageResult<Config> {
        let mut c = match &self.config {
            Some(p) => Config::read(p).at(Stage::Load)?,
            None => Config::default(),
        };
        if let Some(a) = self.alpha {
            c.alpha = Some(a);
        }
        if let Some(e) = self.eps_angle {
            c.measure.eps_angle = e;
        }
        if let Some(r) = self.morph_radius {
            c.fusion.morphology = MorphologyConfig::with_radius(r);
        }
        if self.strict_cover {
            c.measure.cover.strict = true;
        }
        c.validate().at(Stage::Load)?;
        Ok(c)
    }
}

#[derive(Args)]
struct DocumentArgs {
    /// Mesh file (PLY or OBJ), model units.
    #[arg(long)]
    mesh: PathBuf,
    /// Camera poses (JSON, world_from_camera).
    #[arg(long)]
    poses: PathBuf,
    /// Directory of 8-bit label masks named after each view's image.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Marker corner detections (JSON).
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Output directory of an earlier `fuse` run to start from.
    #[arg(long)]
    fused: Option<PathBuf>,
    /// Keep model units even when detections are given.
    #[arg(long)]
    unscaled: bool,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reconstructed mesh.
    #[arg(long)]
    recon: PathBuf,
    /// Reference mesh, or PLY point cloud (normals estimated when absent).
    #[arg(long)]
    reference: PathBuf,
    /// Crop polygon (JSON) in reference x/y coordinates.
    #[arg(long)]
    crop: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip ICP alignment.
    #[arg(long)]
    no_icp: bool,
    /// Upper end of the error colormap.
    #[arg(long, default_value_t = 5.0)]
    error_max: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec (JSON); defaults are used for missing fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Mesh to rescale into millimetres.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReprojectArgs {
    /// PLY mesh with a face `label` property.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    /// Masks to score the reprojections against.
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_bytes(p: &Path) -> StageResult<Vec<u8>> {
    std::fs::read(p)
        .map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })
        .at(Stage::Load)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> StageResult<()> {
    let p = dir.join(name);
    let res = p
        .parent()
        .map_or(Ok(()), std::fs::create_dir_all)
        .and_then(|_| std::fs::write(&p, bytes));
    res.map_err(|e| Error::Io { path: p, source: e }).at(Stage::Report)
}

fn json(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn load_mesh(p: &Path) -> StageResult<Mesh> {
    let m = io::load_mesh(p).at(Stage::Load)?;
    if m.mesh.dropped_degenerate() > 0 {
        eprintln!("warning: {}: dropped {} degenerate faces", p.display(), m.mesh.dropped_degenerate());
    }
    Ok(m.mesh)
}

fn load_masks(dir: &Path, views: &[Camera]) -> StageResult<Vec<Option<SegmentationMask>>> {
    wound3d::document::load_masks(dir, views, &mut BTreeMap::new()).at(Stage::Load)
}

fn cmd_document(a: &DocumentArgs) -> StageResult<()> {
    let config = a.tuning.config()?;
    let paths = InputPaths {
        mesh: a.mesh.clone(),
        poses: a.poses.clone(),
        masks: a.masks.clone(),
        detections: a.detections.clone(),
        fused: a.fused.clone(),
        config: a.tuning.config.clone(),
    };
    let doc = wound3d::document::cmd_document(&paths, &config, a.unscaled, &a.out)?;
    for w in &doc.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", a.out.join(wound3d::document::REPORT_NAME).display());
    Ok(())
}

fn load_reference(p: &Path) -> StageResult<Reference> {
    let is_ply = p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        let c = io::ply::read_ply_cloud(p).at(Stage::Load)?;
        if c.points.is_empty() {
            return Err(Error::InvalidArgument(format!("reference {} has no points", p.display()))).at(Stage::Load);
        }
        if c.faces.is_empty() {
            let normals = c.normals.unwrap_or_else(|| estimate_normals(&c.points, 12));
            let normals = normals.iter().map(|n| n.try_normalize(0.0).unwrap_or(*n)).collect();
            return Ok(Reference::Cloud {
                points: c.points,
                normals,
            });
        }
    }
    Ok(Reference::Mesh(load_mesh(p)?))
}

fn cmd_evaluate(a: &EvaluateArgs) -> StageResult<()> {
    let recon = load_mesh(&a.recon)?;
    let reference = load_reference(&a.reference)?;
    let crop = a.crop.as_deref().map(read_crop).transpose().at(Stage::Load)?;
    let opts = EvalOptions {
        samples: a.samples,
        seed: a.seed,
        icp: !a.no_icp,
        error_max: a.error_max,
        ..Default::default()
    };
    let out = evaluate(&recon, &reference, crop.as_ref().map(|c| c.polygon.as_slice()), &opts).at(Stage::Measure)?;
    let m = &out.report.metrics;
    let mut ply = Vec::new();
    io::ply::write_ply_to(&mut ply, &out.error_mesh, Some(&out.error_colors), None).at(Stage::Render)?;
    write(&a.out, "eval.json", &json(&out.report))?;
    write(&a.out, "distances_recon_to_reference.txt", distance_text(&m.distances_a_to_b).as_bytes())?;
    write(&a.out, "distances_reference_to_recon.txt", distance_text(&m.distances_b_to_a).as_bytes())?;
    write(&a.out, "error_mesh.ply", &ply)?;
    println!(
        "CD {:.6}  HD {:.6}  NC {:.6}  AD mean {:.6}",
        m.chamfer, m.hausdorff, m.normal_consistency, m.ad_a_to_b.mean
    );
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> StageResult<()> {
    let mut spec: SceneSpec = match &a.spec {
        Some(p) => {
            let bytes = read_bytes(p)?;
            serde_json::from_slice(&bytes)
                .map_err(|e| Error::Parse {
                    path: p.clone(),
                    reason: e.to_string(),
                })
                .at(Stage::Load)?
        }
        None => SceneSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let scene = generate_scene(&spec).at(Stage::Load)?;
    write_scene(&scene, &a.out).at(Stage::Report)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_fuse(a: &FuseArgs) -> StageResult<()> {
    let config = a.tuning.config()?;
    let mesh = load_mesh(&a.mesh)?;
    let views = read_poses(&a.poses).at(Stage::Load)?;
    let masks = load_masks(&a.masks, &views)?;
    let fused = fuse_stage(&mesh, &views, &masks, &config).at(Stage::Fuse)?;
    for v in &fused.summary.views_skipped {
        eprintln!("warning: view '{v}': mask missing, skipped");
    }
    for art in fused_artifacts(&mesh, &fused).at(Stage::Report)? {
        write(&a.out, &art.path, &art.bytes)?;
    }
    Ok(())
}

fn cmd_scale(a: &ScaleArgs) -> StageResult<()> {
    let views = read_poses(&a.poses).at(Stage::Load)?;
    let det = read_detections(&a.detections).at(Stage::Load)?;
    let est = recover_scale_from_file(&det, &views).at(Stage::Scale)?;
    write(&a.out, "scale.json", &json(&est))?;
    if let Some(p) = &a.mesh {
        let m = apply_scale_mesh(&load_mesh(p)?, est.scale).at(Stage::Scale)?;
        let mut buf = Vec::new();
        io::ply::write_ply_to(&mut buf, &m, None, None).at(Stage::Report)?;
        write(&a.out, "mesh_mm.ply", &buf)?;
    }
    println!("{}", est.scale);
    Ok(())
}

fn cmd_reproject(a: &ReprojectArgs) -> StageResult<()> {
    let ply = io::ply::read_ply(&a.labels).at(Stage::Load)?;
    let labels = ply
        .labels
        .ok_or_else(|| Error::Parse {
            path: a.labels.clone(),
            reason: "no face label property".into(),
        })
        .at(Stage::Load)?;
    let views = read_poses(&a.poses).at(Stage::Load)?;
    if views.is_empty() {
        return Err(Error::InvalidArgument("pose file has no views".into())).at(Stage::Load);
    }
    let masks = match &a.masks {
        Some(d) => load_masks(d, &views)?,
        None => vec![None; views.len()],
    };
    let mut scores = Vec::new();
    for (v, m) in views.iter().zip(&masks) {
        let r = wound3d::eval::reproject_labels(&ply.mesh, &labels, v).at(Stage::Render)?;
        let p = io::mask_path(Path::new(""), v);
        write(&a.out, &p.to_string_lossy(), &io::encode_mask(&r))?;
        if let Some(m) = m {
            let d = |c| wound3d::eval::dice(&r, m, c).at(Stage::Render);
            scores.push(serde_json::json!({
                "view_id": v.view_id,
                "dice_wound_bed": d(Label::WoundBed)?,
                "dice_periwound": d(Label::Periwound)?,
            }));
        }
    }
    if a.masks.is_some() {
        write(&a.out, "dice.json", &json(&scores))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Document(a) => cmd_document(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Reproject(a) => cmd_reproject(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
