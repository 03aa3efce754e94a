mod common;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::{grid, rotation};
use wound3d::eval::{evaluate, mesh_metrics, sample_surface, EvalOptions, Reference};
use wound3d::synth::{generate_scene, perturb, Perturbation, SceneSpec};

/// Chamfer distance between a flat surface and the same surface with iid
/// N(0, σ²) vertex noise: each direction averages the normal offset of a
/// linearly interpolated triangle, `|Σ b_i z_i|` over uniform barycentrics.
fn chamfer_oracle(sigma: f64, draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = Normal::new(0.0, sigma).unwrap();
    let mut acc = 0.0;
    for _ in 0..draws {
        let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
        if u + v > 1.0 {
            (u, v) = (1.0 - u, 1.0 - v);
        }
        let z = [n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)];
        acc += (u * z[0] + v * z[1] + (1.0 - u - v) * z[2]).abs();
    }
    2.0 * acc / draws as f64
}

#[test]
fn vertex_noise_chamfer_band() {
    let sigma = 0.1;
    let oracle = chamfer_oracle(sigma, 200_000);
    assert!((0.07..=0.13).contains(&oracle), "oracle {oracle}");

    let scene = generate_scene(&SceneSpec::default()).unwrap();
    let noisy = perturb(&scene, Perturbation::VertexNoise, sigma, 3).unwrap();
    let a = sample_surface(&noisy.mesh, 20_000, 1).unwrap();
    let b = sample_surface(&scene.mesh, 20_000, 2).unwrap();
    let m = mesh_metrics(&noisy.mesh, &a, &scene.mesh, &b).unwrap();
    let cd_mm = m.chamfer * scene.spec.mm_per_unit;
    assert!((0.07..=0.13).contains(&cd_mm), "chamfer {cd_mm} mm");
    assert!((cd_mm / oracle - 1.0).abs() < 0.15, "chamfer {cd_mm} vs oracle {oracle}");
}

#[test]
fn evaluation_undoes_a_rigid_misalignment() {
    let reference = grid(24, |x, y| 0.15 * x * x - 0.1 * x * y + 0.3 * (1.7 * y).sin());
    let r = rotation(0.04, -0.03, 0.06);
    let recon = reference.transformed(&r, &Vector3::new(0.05, -0.08, 0.1));
    let out = evaluate(&recon, &Reference::Mesh(reference.clone()), None, &EvalOptions { samples: 4000, ..Default::default() }).unwrap();
    assert!(out.report.metrics.chamfer < 1e-6, "{:?}", out.report.metrics.chamfer);
    assert!(out.report.metrics.normal_consistency > 1.0 - 1e-9);
    assert_eq!(out.vertex_errors.len(), recon.vertex_count());
    assert!(out.vertex_errors.iter().all(|&e| e < 1e-6));

    let raw = evaluate(&recon, &Reference::Mesh(reference), None, &EvalOptions { samples: 4000, icp: false, ..Default::default() }).unwrap();
    assert!(raw.report.metrics.chamfer > 0.05);
}

#[test]
fn cloud_reference_uses_nearest_points() {
    let reference = grid(40, |x, _| 0.1 * x);
    let points: Vec<Point3<f64>> = reference.vertices().to_vec();
    let normals = vec![Vector3::z(); points.len()];
    let cloud = Reference::Cloud { points, normals };
    let opts = EvalOptions {
        samples: 2000,
        icp: false,
        ..Default::default()
    };
    let out = evaluate(&reference, &cloud, None, &opts).unwrap();
    // Samples sit inside faces, so their nearest cloud point is a vertex at
    // most half a cell diagonal away.
    let half_diag = 0.5 * ((6.0f64 / 40.0).powi(2) + (4.0f64 / 40.0).powi(2)).sqrt();
    assert!(out.report.metrics.hausdorff <= half_diag * 1.05 + 1e-9);
    assert!(out.report.metrics.ad_b_to_a.max < 1e-12);
}

#[test]
fn crop_restricts_the_compared_region() {
    let reference = grid(20, |_, _| 0.0);
    // Only the left half is bent away from the reference.
    let recon = grid(20, |x, _| if x < 0.0 { 0.5 * x * x } else { 0.0 });
    let opts = EvalOptions {
        samples: 3000,
        icp: false,
        ..Default::default()
    };
    let right = [[0.5, -2.0], [3.0, -2.0], [3.0, 2.0], [0.5, 2.0]];
    let full = evaluate(&recon, &Reference::Mesh(reference.clone()), None, &opts).unwrap();
    let cropped = evaluate(&recon, &Reference::Mesh(reference), Some(&right), &opts).unwrap();
    assert!(full.report.metrics.chamfer > 0.1);
    assert!(cropped.report.metrics.chamfer < 1e-12);
    assert!(cropped.report.recon_samples < full.report.recon_samples);
}

#[test]
fn empty_reference_is_an_error() {
    let recon = grid(4, |_, _| 0.0);
    let r = evaluate(&recon, &Reference::Cloud { points: vec![], normals: vec![] }, None, &EvalOptions::default());
    assert!(r.is_err());
}
