use std::path::Path;

use wound3d::config::Config;
use wound3d::document::{
    cmd_document, fuse_stage, fused_artifacts, load_inputs, sha256_hex, InputPaths, Stage, WoundDocument, REPORT_NAME,
};
use wound3d::synth::{generate_scene, write_scene, SceneSpec};

fn scene_dir() -> (tempfile::TempDir, InputPaths) {
    let dir = tempfile::tempdir().unwrap();
    write_scene(&generate_scene(&SceneSpec::default()).unwrap(), dir.path()).unwrap();
    let p = dir.path();
    let paths = InputPaths {
        mesh: p.join("mesh.ply"),
        poses: p.join("poses.json"),
        masks: Some(p.join("masks")),
        detections: Some(p.join("detections.json")),
        ..Default::default()
    };
    (dir, paths)
}

fn read_doc(out: &Path) -> WoundDocument {
    WoundDocument::from_json(&std::fs::read_to_string(out.join(REPORT_NAME)).unwrap()).unwrap()
}

#[test]
fn report_describes_the_scene() {
    let (dir, paths) = scene_dir();
    let out = dir.path().join("out");
    let doc = cmd_document(&paths, &Config::default(), false, &out).unwrap();
    assert_eq!(read_doc(&out), doc);
    assert_eq!(doc.units, "mm");
    assert_eq!(doc.wounds.len(), 1);
    let truth = generate_scene(&SceneSpec::default()).unwrap().truth;
    let s = doc.wounds[0].summary.as_ref().unwrap();
    assert!((s.perimeter_mm / truth.perimeter - 1.0).abs() < 0.02);
    assert!((s.wound_bed_area_cm2 * 100.0 / truth.wound_bed_area - 1.0).abs() < 0.02);
    assert!((s.max_depth_mm / truth.max_depth - 1.0).abs() < 0.02);
    let pct: f64 = s.tissue_percent.values().sum();
    assert!((pct - 100.0).abs() < 0.05, "{pct}");
    for r in &doc.reprojection {
        assert!(r.dice_wound_bed > 0.98, "{}: {}", r.view_id, r.dice_wound_bed);
    }
    for k in ["mesh", "poses", "detections", "masks/view_00.png"] {
        assert!(doc.inputs.contains_key(k), "no hash for {k}");
    }
}

#[test]
fn manifest_matches_files_on_disk() {
    let (dir, paths) = scene_dir();
    let out = dir.path().join("out");
    let doc = cmd_document(&paths, &Config::default(), false, &out).unwrap();
    assert!(!doc.artifacts.is_empty());
    for a in &doc.artifacts {
        let bytes = std::fs::read(out.join(&a.path)).unwrap();
        assert_eq!(bytes.len(), a.bytes, "{}", a.path);
        assert_eq!(sha256_hex(&bytes), a.sha256, "{}", a.path);
    }
}

#[test]
fn resuming_from_a_fused_directory_gives_the_same_report() {
    let (dir, paths) = scene_dir();
    let config = Config::default();
    let full = cmd_document(&paths, &config, false, &dir.path().join("full")).unwrap();

    let inputs = load_inputs(&paths).unwrap();
    let fused = fuse_stage(&inputs.mesh, &inputs.views, &inputs.masks, &config).unwrap();
    let fdir = dir.path().join("fused");
    std::fs::create_dir_all(&fdir).unwrap();
    for a in fused_artifacts(&inputs.mesh, &fused).unwrap() {
        std::fs::write(fdir.join(&a.path), &a.bytes).unwrap();
    }
    let resumed_paths = InputPaths {
        fused: Some(fdir),
        ..paths.clone()
    };
    let resumed = cmd_document(&resumed_paths, &config, false, &dir.path().join("resumed")).unwrap();
    assert_ne!(full.inputs, resumed.inputs);
    let strip = |mut d: WoundDocument| {
        d.inputs.clear();
        d
    };
    assert_eq!(strip(full), strip(resumed));
}

#[test]
fn missing_mask_is_skipped_with_a_warning() {
    let (dir, paths) = scene_dir();
    std::fs::remove_file(dir.path().join("masks/view_03.png")).unwrap();
    let doc = cmd_document(&paths, &Config::default(), false, &dir.path().join("out")).unwrap();
    assert_eq!(doc.fusion.views_skipped, vec!["view_03".to_string()]);
    assert!(doc.warnings.iter().any(|w| w.contains("view_03") && w.contains("mask missing")));
    assert_eq!(doc.reprojection.len(), 7);
}

#[test]
fn unscaled_report_stays_in_model_units() {
    let (dir, paths) = scene_dir();
    let scaled = cmd_document(&paths, &Config::default(), false, &dir.path().join("a")).unwrap();
    let unscaled = cmd_document(&paths, &Config::default(), true, &dir.path().join("b")).unwrap();
    assert_eq!(unscaled.units, "model");
    assert!(unscaled.scale.is_none() && unscaled.wounds[0].summary.is_none());
    let s = scaled.scale.as_ref().unwrap().scale;
    let (a, b) = (&scaled.wounds[0].metrics, &unscaled.wounds[0].metrics);
    assert!((a.perimeter - b.perimeter * s).abs() < 1e-9 * a.perimeter);
    assert!((a.wound_bed_area - b.wound_bed_area * s * s).abs() < 1e-9 * a.wound_bed_area);
}

#[test]
fn alpha_is_given_in_output_units() {
    let (dir, paths) = scene_dir();
    let scaled = |alpha| {
        let config = Config {
            alpha: Some(alpha),
            ..Default::default()
        };
        cmd_document(&paths, &config, false, &dir.path().join(format!("a{alpha}"))).unwrap().wounds[0].metrics.clone()
    };
    let (loose, tight) = (scaled(50.0), scaled(0.01));
    assert!((loose.smoothing_alpha - 50.0).abs() < 1e-9);
    assert!(loose.perimeter < tight.perimeter);
}

#[test]
fn config_file_is_hashed() {
    let (dir, mut paths) = scene_dir();
    let cp = dir.path().join("config.json");
    std::fs::write(&cp, "{\"min_component_faces\": 2}").unwrap();
    paths.config = Some(cp.clone());
    let config = Config::read(&cp).unwrap();
    let doc = cmd_document(&paths, &config, false, &dir.path().join("out")).unwrap();
    assert_eq!(doc.config.min_component_faces, 2);
    assert_eq!(doc.inputs["config"], sha256_hex(&std::fs::read(&cp).unwrap()));
}

#[test]
fn errors_name_their_stage() {
    let (dir, paths) = scene_dir();
    std::fs::write(&paths.poses, "{\"views\": [{\"view_id\": \"a\"}]}").unwrap();
    let err = cmd_document(&paths, &Config::default(), false, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.stage, Stage::Load);
    let json: serde_json::Value = serde_json::from_str(&err.to_json()).unwrap();
    assert_eq!(json["stage"], "load");
    assert_eq!(json["kind"], "parse");

    let (dir, paths) = scene_dir();
    for e in std::fs::read_dir(dir.path().join("masks")).unwrap() {
        let p = e.unwrap().path();
        let m = wound3d::io::read_mask(&p).unwrap();
        let blank = wound3d::raster::SegmentationMask::filled(m.width, m.height, wound3d::Label::Background);
        std::fs::write(&p, wound3d::io::encode_mask(&blank)).unwrap();
    }
    let err = cmd_document(&paths, &Config::default(), false, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.stage, Stage::Components);
    assert_eq!(err.error.kind(), "no_wound_faces");
}

#[test]
fn fused_directory_or_masks_required() {
    let (_dir, paths) = scene_dir();
    let none = InputPaths { masks: None, ..paths };
    assert!(load_inputs(&none).is_err());
}
