use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use wound3d::eval::{dice, mesh_metrics, sample_surface};
use wound3d::labels::Label;
use wound3d::synth::{generate_scene, perturb, write_scene, Perturbation, SceneSpec};

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn default_scene_matches_golden_fixture() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let tmp = tempfile::tempdir().unwrap();
    write_scene(&generate_scene(&SceneSpec::default()).unwrap(), tmp.path()).unwrap();
    let (want, got) = (files(&golden), files(tmp.path()));
    assert_eq!(want.keys().collect::<Vec<_>>(), got.keys().collect::<Vec<_>>());
    for (p, bytes) in &want {
        assert!(&got[p] == bytes, "{} differs from the fixture", p.display());
    }
}

#[test]
fn same_spec_same_bytes() {
    let spec = SceneSpec {
        seed: 9,
        resolution: 48,
        ..Default::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_scene(&generate_scene(&spec).unwrap(), a.path()).unwrap();
    write_scene(&generate_scene(&spec).unwrap(), b.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn scene_agrees_with_itself() {
    let sc = generate_scene(&SceneSpec::default()).unwrap();
    let (a, b) = (sample_surface(&sc.mesh, 3000, 1).unwrap(), sample_surface(&sc.mesh, 3000, 2).unwrap());
    let m = mesh_metrics(&sc.mesh, &a, &sc.mesh, &b).unwrap();
    assert!(m.chamfer < 1e-12 && m.hausdorff < 1e-12);
    for mask in &sc.masks {
        for c in Label::ALL {
            assert_eq!(dice(mask, mask, c).unwrap(), 1.0);
        }
    }
}

#[test]
fn every_view_sees_the_wound() {
    let sc = generate_scene(&SceneSpec::default()).unwrap();
    for (v, m) in sc.views.iter().zip(&sc.masks) {
        let n = m.labels().iter().filter(|l| l.belongs_to(Label::WoundBed)).count();
        assert!(n > 100, "view {} sees {n} wound pixels", v.view_id);
    }
}

#[test]
fn perturbations_are_seeded() {
    let sc = generate_scene(&SceneSpec::default()).unwrap();
    for kind in [Perturbation::GaussianBlurMasks, Perturbation::MaskDropout, Perturbation::VertexNoise] {
        let a = perturb(&sc, kind, 1.0, 4).unwrap();
        let b = perturb(&sc, kind, 1.0, 4).unwrap();
        assert_eq!(a.masks, b.masks);
        assert_eq!(a.mesh.vertices(), b.mesh.vertices());
        let zero = perturb(&sc, kind, 0.0, 4).unwrap();
        assert_eq!(zero.masks, sc.masks);
        assert_eq!(zero.mesh.vertices(), sc.mesh.vertices());
    }
    assert!(perturb(&sc, Perturbation::VertexNoise, -1.0, 0).is_err());
}

#[test]
fn infeasible_specs_are_rejected() {
    for spec in [
        SceneSpec { resolution: 30, ..Default::default() },
        SceneSpec { depth: 20.0, ..Default::default() },
        SceneSpec {
            base: wound3d::synth::BaseSurface::Cylinder { radius: 20.0 },
            ..Default::default()
        },
    ] {
        let err = generate_scene(&spec).unwrap_err();
        assert_eq!(err.kind(), "infeasible_spec", "{err}");
    }
}
