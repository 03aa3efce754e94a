use wound3d::eval::dice_labels;
use wound3d::fusion::{fuse_pipeline, FusionConfig, MorphologyConfig};
use wound3d::labels::Label;
use wound3d::synth::{generate_scene, perturb, OrbitSpec, Perturbation, SceneSpec};

#[test]
fn perfect_masks_reproduce_the_labels() {
    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let out = fuse_pipeline(&scene.mesh, &scene.views, &scene.masks, &FusionConfig::default()).unwrap();
    assert_eq!(out.unobserved_fraction, 0.0);
    for c in Label::ALL {
        assert!(dice_labels(&out.labels, &scene.labels, c).unwrap() >= 0.99, "{}", c.name());
    }
}

#[test]
fn grazing_views_leave_faces_unobserved_except_periwound() {
    let spec = SceneSpec {
        cameras: OrbitSpec {
            elevation_deg: 15.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let base = FusionConfig {
        morphology: MorphologyConfig::none(),
        ..Default::default()
    };
    let with = fuse_pipeline(&scene.mesh, &scene.views, &scene.masks, &base).unwrap();
    assert!(with.unobserved_fraction > 0.0);
    let without = FusionConfig {
        periwound_ignore_cutoff: false,
        ..base.clone()
    };
    let strict = fuse_pipeline(&scene.mesh, &scene.views, &scene.masks, &without).unwrap();
    let count = |l: &wound3d::LabelField| l.faces_of(Label::Periwound).len();
    assert!(count(&with.labels) >= count(&strict.labels));
    let a = dice_labels(&with.labels, &scene.labels, Label::Periwound).unwrap();
    let b = dice_labels(&strict.labels, &scene.labels, Label::Periwound).unwrap();
    assert!(a >= b, "bypass {a} vs strict {b}");
}

#[test]
fn blurred_masks_still_fuse_well() {
    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let blurred = perturb(&scene, Perturbation::GaussianBlurMasks, 2.0, 1).unwrap();
    let out = fuse_pipeline(&scene.mesh, &scene.views, &blurred.masks, &FusionConfig::default()).unwrap();
    assert!(dice_labels(&out.labels, &scene.labels, Label::WoundBed).unwrap() > 0.95);
    assert!(dice_labels(&out.labels, &scene.labels, Label::Periwound).unwrap() > 0.9);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let r = fuse_pipeline(&scene.mesh, &scene.views, &scene.masks[..3], &FusionConfig::default());
    assert!(r.is_err());
    let bad = FusionConfig {
        obliqueness_cutoff: 1.5,
        ..Default::default()
    };
    assert!(fuse_pipeline(&scene.mesh, &scene.views, &scene.masks, &bad).is_err());
}
