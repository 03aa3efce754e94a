use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wound3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wound3d")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wound3d(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

fn document_args<'a>(g: &'a Path, out: &'a Path) -> Vec<String> {
    vec![
        "document".into(),
        "--mesh".into(),
        s(&g.join("mesh.ply")).into(),
        "--poses".into(),
        s(&g.join("poses.json")).into(),
        "--masks".into(),
        s(&g.join("masks")).into(),
        "--detections".into(),
        s(&g.join("detections.json")).into(),
        "--out".into(),
        s(out).into(),
    ]
}

fn run_strings(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs)
}

#[test]
fn help_lists_the_subcommands() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["document", "evaluate", "synth", "fuse", "scale", "reproject"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn synth_default_matches_the_golden_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(tmp.path())]);
    assert_eq!(files(tmp.path()), files(&golden()));
}

#[test]
fn document_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let g = golden();
    run_strings(&document_args(&g, &a));
    run_strings(&document_args(&g, &b));
    let fa = files(&a);
    assert!(fa.contains_key(Path::new("document.json")));
    assert_eq!(fa, files(&b));
}

#[test]
fn fuse_then_document_matches_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let g = golden();
    let full = tmp.path().join("full");
    run_strings(&document_args(&g, &full));
    let fused = tmp.path().join("fused");
    ok(&[
        "fuse",
        "--mesh",
        s(&g.join("mesh.ply")),
        "--poses",
        s(&g.join("poses.json")),
        "--masks",
        s(&g.join("masks")),
        "--out",
        s(&fused),
    ]);
    let resumed = tmp.path().join("resumed");
    let mut args = document_args(&g, &resumed);
    args.extend(["--fused".to_string(), s(&fused).to_string()]);
    run_strings(&args);
    let load = |d: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("document.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("inputs");
        v
    };
    assert_eq!(load(&full), load(&resumed));
}

#[test]
fn corrupt_poses_give_a_structured_error() {
    let tmp = tempfile::tempdir().unwrap();
    let poses = tmp.path().join("poses.json");
    std::fs::write(&poses, "{\"views\": [{\"view_id\": \"a\"}]}").unwrap();
    let g = golden();
    let out = wound3d(&[
        "document",
        "--mesh",
        s(&g.join("mesh.ply")),
        "--poses",
        s(&poses),
        "--masks",
        s(&g.join("masks")),
        "--out",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["stage"], "load");
    assert_eq!(err["kind"], "parse");
}

#[test]
fn evaluate_identical_meshes_reports_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = golden().join("mesh.ply");
    ok(&["evaluate", "--recon", s(&mesh), "--reference", s(&mesh), "--samples", "2000", "--out", s(tmp.path())]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("eval.json")).unwrap()).unwrap();
    assert!(v["metrics"]["chamfer"].as_f64().unwrap() < 1e-9);
    assert!(tmp.path().join("error_mesh.ply").exists());
    assert!(tmp.path().join("distances_recon_to_reference.txt").exists());
}

#[test]
fn evaluate_rejects_an_empty_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.ply");
    std::fs::write(&empty, "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n").unwrap();
    let out = wound3d(&["evaluate", "--recon", s(&golden().join("mesh.ply")), "--reference", s(&empty), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert!(err["kind"].is_string());
}

#[test]
fn scale_prints_the_recovered_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let g = golden();
    let out = ok(&[
        "scale",
        "--poses",
        s(&g.join("poses.json")),
        "--detections",
        s(&g.join("detections.json")),
        "--out",
        s(tmp.path()),
    ]);
    let printed: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((printed - 0.5).abs() < 1e-9);
    assert!(tmp.path().join("scale.json").exists());
}

#[test]
fn reproject_scores_ground_truth_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let g = golden();
    ok(&[
        "reproject",
        "--labels",
        s(&g.join("labels_gt.ply")),
        "--poses",
        s(&g.join("poses.json")),
        "--masks",
        s(&g.join("masks")),
        "--out",
        s(tmp.path()),
    ]);
    let d: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("dice.json")).unwrap()).unwrap();
    let scores = d.as_array().unwrap();
    assert_eq!(scores.len(), 8);
    for v in scores {
        assert_eq!(v["dice_wound_bed"], 1.0);
        assert_eq!(v["dice_periwound"], 1.0);
    }
    assert_eq!(files(tmp.path()).keys().filter(|p| p.extension().is_some_and(|e| e == "png")).count(), 8);
}
