mod common;

use nalgebra::Vector3;

use common::rotation;
use wound3d::scale::recover_scale_from_file;
use wound3d::synth::{generate_scene, noisy_detections, OrbitSpec, SceneSpec};

#[test]
fn similarity_divides_the_scale() {
    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let base = recover_scale_from_file(&scene.detections, &scene.views).unwrap().scale;
    let r = rotation(0.3, -1.1, 2.0);
    for s in [0.1, 2.0, 40.0] {
        let views: Vec<_> = scene
            .views
            .iter()
            .map(|v| v.scaled(s).transformed(&r, &Vector3::new(5.0, -3.0, 8.0)))
            .collect();
        let est = recover_scale_from_file(&scene.detections, &views).unwrap();
        assert!((est.scale * s / base - 1.0).abs() < 1e-6, "s = {s}: {}", est.scale);
        assert!((est.markers[0].model_side / s - scene.spec.marker.as_ref().unwrap().side / scene.spec.mm_per_unit).abs() < 1e-6 * est.markers[0].model_side / s);
    }
}

#[test]
fn more_views_reduce_the_spread_of_noisy_estimates() {
    let spread = |count| {
        let spec = SceneSpec {
            cameras: OrbitSpec { count, ..Default::default() },
            ..Default::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let errs: Vec<f64> = (0..40)
            .map(|seed| {
                let det = noisy_detections(&scene.detections, 1.0, seed).unwrap();
                recover_scale_from_file(&det, &scene.views).unwrap().scale / spec.mm_per_unit - 1.0
            })
            .collect();
        (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt()
    };
    assert!(spread(12) < spread(3));
}

#[test]
fn unknown_views_are_warned_about() {
    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let mut det = scene.detections.clone();
    let corners = det.detections.values().next().unwrap().clone();
    det.detections.insert("ghost".into(), corners);
    let est = recover_scale_from_file(&det, &scene.views).unwrap();
    assert!(est.warnings.iter().any(|w| w.contains("ghost")));
}

#[test]
fn a_single_view_is_not_enough() {
    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let mut det = scene.detections.clone();
    let first = det.detections.keys().next().unwrap().clone();
    det.detections.retain(|k, _| *k == first);
    let err = recover_scale_from_file(&det, &scene.views).unwrap_err();
    assert_eq!(err.kind(), "marker");
}
