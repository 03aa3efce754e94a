//! Multi-view fusion of 2D segmentation masks onto mesh faces.
//!
//! Every view that sees a face casts one vote per task, weighted by how
//! head-on the view ray meets the face. Votes are combined as summed
//! log-odds `log(w / (1 - w))` over views with `w >= floor`.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{face_ray, CameraView};
use crate::error::{Error, Result};
use crate::labels::{Label, LabelField};
use crate::mesh::{label_morphology, MorphOp, TriangleMesh};
use crate::raster::{face_histograms, rasterize, FaceHistogram, RasterOptions, SegmentationMask};
use crate::scalar::{lit, to_f64, Real};

/// Obliqueness weight `|n · r|` of a view ray against a face normal.
pub fn weighting_factor<T: Real>(normal: &Vector3<T>, ray: &Vector3<T>) -> Result<T> {
    let tol: T = lit(1e-6);
    for v in [normal, ray] {
        let n = v.norm();
        if !((n - T::one()).abs() <= tol) {
            return Err(Error::NotUnit(to_f64(n)));
        }
    }
    Ok(normal.dot(ray).abs().min(T::one()))
}

/// One view's vote on one face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewSample<T: Real> {
    pub face: usize,
    pub view: usize,
    pub weight: T,
    pub vote: Label,
}

/// Admission rule for samples voting a given class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassRule {
    /// Samples with `w` below the cutoff are discarded.
    pub cutoff: f64,
    /// Whether the `1[w >= floor]` indicator applies.
    pub indicator: bool,
}

/// Parameters of the weighted vote.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteRule {
    pub floor: f64,
    pub clamp_eps: f64,
    pub rules: [ClassRule; Label::COUNT],
}

impl VoteRule {
    pub fn uniform(cutoff: f64, floor: f64) -> Self {
        VoteRule {
            floor,
            clamp_eps: 1e-6,
            rules: [ClassRule { cutoff, indicator: true }; Label::COUNT],
        }
    }

    fn admits(&self, w: f64, class: Label) -> bool {
        let r = self.rules[class.index()];
        w >= r.cutoff && (!r.indicator || w >= self.floor)
    }

    fn log_odds(&self, w: f64) -> f64 {
        let w = w.clamp(self.clamp_eps, 1.0 - self.clamp_eps);
        (w / (1.0 - w)).ln()
    }
}

/// Per-class scores of one face. `None` entries had no admissible sample.
///
/// Each class sums `count · log_odds(w)` over its distinct weights in
/// ascending order, so the result does not depend on sample order and
/// duplicating every sample exactly doubles every score.
pub fn class_scores(samples: &[(f64, Label)], rule: &VoteRule) -> [Option<f64>; Label::COUNT] {
    let mut per_class: [Vec<f64>; Label::COUNT] = Default::default();
    for &(w, c) in samples {
        if rule.admits(w, c) {
            per_class[c.index()].push(w);
        }
    }
    let mut out = [None; Label::COUNT];
    for (c, ws) in per_class.iter_mut().enumerate() {
        if ws.is_empty() {
            continue;
        }
        ws.sort_by(f64::total_cmp);
        let mut s = 0.0;
        let mut i = 0;
        while i < ws.len() {
            let mut j = i;
            while j < ws.len() && ws[j] == ws[i] {
                j += 1;
            }
            s += (j - i) as f64 * rule.log_odds(ws[i]);
            i = j;
        }
        out[c] = Some(s);
    }
    out
}

/// Weighted majority vote; ties go to the lowest class id and a face with
/// no admissible sample is background.
pub fn fuse_face(samples: &[(f64, Label)], rule: &VoteRule) -> Label {
    let scores = class_scores(samples, rule);
    let mut best: Option<(usize, f64)> = None;
    for (c, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
    }
    best.map_or(Label::Background, |(c, _)| Label::ALL[c])
}

/// Fuses per-face sample lists into a label field.
pub fn fuse_labels<T: Real>(face_count: usize, samples: &[ViewSample<T>], rule: &VoteRule) -> LabelField {
    let mut per_face: Vec<Vec<(f64, Label)>> = vec![Vec::new(); face_count];
    for s in samples {
        if s.face < face_count {
            per_face[s.face].push((to_f64(s.weight), s.vote));
        }
    }
    LabelField::new(per_face.iter().map(|v| fuse_face(v, rule)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphStep {
    pub op: MorphOp,
    pub radius: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MorphologyConfig {
    pub wound_bed: Vec<MorphStep>,
    pub periwound: Vec<MorphStep>,
    pub tissue: Vec<MorphStep>,
}

impl MorphologyConfig {
    pub fn open_close(radius: usize) -> Vec<MorphStep> {
        if radius == 0 {
            return Vec::new();
        }
        vec![
            MorphStep { op: MorphOp::Open, radius },
            MorphStep { op: MorphOp::Close, radius },
        ]
    }

    pub fn none() -> Self {
        MorphologyConfig {
            wound_bed: Vec::new(),
            periwound: Vec::new(),
            tissue: Vec::new(),
        }
    }

    /// Replaces the radius of every wound-bed and periwound step.
    pub fn with_radius(radius: usize) -> Self {
        MorphologyConfig {
            wound_bed: Self::open_close(radius),
            periwound: Self::open_close(radius),
            tissue: Vec::new(),
        }
    }
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        Self::with_radius(2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub obliqueness_cutoff: f64,
    pub weight_floor: f64,
    pub clamp_eps: f64,
    /// Admit periwound votes from every view regardless of obliqueness.
    pub periwound_ignore_cutoff: bool,
    /// Keep the `w >= floor` indicator for periwound votes when the cutoff
    /// is bypassed.
    pub periwound_keep_indicator: bool,
    /// Minimum footprint in pixels for a face to receive a vote from a view.
    pub min_pixels: u32,
    pub cull_backfaces: bool,
    pub morphology: MorphologyConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            obliqueness_cutoff: 0.5,
            weight_floor: 0.5,
            clamp_eps: 1e-6,
            periwound_ignore_cutoff: true,
            periwound_keep_indicator: true,
            min_pixels: 1,
            cull_backfaces: true,
            morphology: MorphologyConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.obliqueness_cutoff) {
            return Err(Error::InvalidArgument(format!(
                "obliqueness cutoff {} outside [0, 1)",
                self.obliqueness_cutoff
            )));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0) {
            return Err(Error::InvalidArgument(format!("weight floor {} outside (0, 1)", self.weight_floor)));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::InvalidArgument(format!("clamp eps {} outside (0, 0.5)", self.clamp_eps)));
        }
        for s in self.morphology.wound_bed.iter().chain(&self.morphology.periwound).chain(&self.morphology.tissue) {
            if s.radius == 0 {
                return Err(Error::InvalidArgument("morphology radius must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Rule for the binary tasks and the tissue task.
    pub fn rule(&self) -> VoteRule {
        let mut r = VoteRule::uniform(self.obliqueness_cutoff, self.weight_floor);
        r.clamp_eps = self.clamp_eps;
        r
    }

    /// Rule for the periwound-vs-rest task.
    pub fn periwound_rule(&self) -> VoteRule {
        let mut r = self.rule();
        if self.periwound_ignore_cutoff {
            r.rules[Label::Periwound.index()] = ClassRule {
                cutoff: 0.0,
                indicator: self.periwound_keep_indicator,
            };
        }
        r
    }
}

/// Votes of one view on one face, one per fusion task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceVotes<T: Real> {
    pub face: usize,
    pub view: usize,
    pub weight: T,
    pub pixels: u32,
    /// Wound bed (any wound-group class) versus rest.
    pub wound: Label,
    /// Periwound versus rest.
    pub periwound: Label,
    /// Majority tissue class among wound-group pixels, if any.
    pub tissue: Option<Label>,
}

fn task_votes(h: &FaceHistogram) -> (Label, Label, Option<Label>) {
    let total: u32 = h.iter().sum();
    let wound_px: u32 = Label::ALL.iter().filter(|l| l.belongs_to(Label::WoundBed)).map(|l| h[l.index()]).sum();
    let wound = if wound_px > total - wound_px { Label::WoundBed } else { Label::Background };
    let peri_px = h[Label::Periwound.index()];
    let periwound = if peri_px > total - peri_px { Label::Periwound } else { Label::Background };
    let tissue = (wound_px > 0).then(|| {
        let mut best = Label::WoundBed;
        for l in Label::ALL {
            if l.belongs_to(Label::WoundBed) && h[l.index()] > h[best.index()] {
                best = l;
            }
        }
        best
    });
    (wound, periwound, tissue)
}

/// Rasterizes every view and collects per-face votes, ordered by view then
/// face.
pub fn collect_votes<T: Real>(
    mesh: &TriangleMesh<T>,
    views: &[CameraView<T>],
    masks: &[SegmentationMask],
    config: &FusionConfig,
) -> Result<Vec<FaceVotes<T>>> {
    if views.len() != masks.len() {
        return Err(Error::DimensionMismatch(format!("{} views but {} masks", views.len(), masks.len())));
    }
    let opts = RasterOptions {
        cull_backfaces: config.cull_backfaces,
    };
    let mut out = Vec::new();
    for (vi, (view, mask)) in views.iter().zip(masks).enumerate() {
        if view.width != mask.width || view.height != mask.height {
            return Err(Error::DimensionMismatch(format!(
                "view '{}' is {}x{} but its mask is {}x{}",
                view.view_id, view.width, view.height, mask.width, mask.height
            )));
        }
        let buf = rasterize(mesh, view, opts);
        for (face, h) in face_histograms(&buf, mask)? {
            let pixels: u32 = h.iter().sum();
            if pixels < config.min_pixels {
                continue;
            }
            let ray = face_ray(view, vi, mesh, face)?;
            let weight = weighting_factor(&mesh.face_normal(face), &ray.direction)?;
            let (wound, periwound, tissue) = task_votes(&h);
            out.push(FaceVotes {
                face,
                view: vi,
                weight,
                pixels,
                wound,
                periwound,
                tissue,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FusionOutput<T: Real> {
    pub labels: LabelField,
    /// Share of faces without an admissible wound-task sample.
    pub unobserved_fraction: f64,
    pub votes: Vec<FaceVotes<T>>,
}

fn apply_steps<T: Real>(mesh: &TriangleMesh<T>, labels: LabelField, class: Label, steps: &[MorphStep]) -> Result<LabelField> {
    steps
        .iter()
        .try_fold(labels, |acc, s| label_morphology(mesh, &acc, class, s.op, s.radius))
}

/// Full 2D-to-3D mapping: rasterize, vote, fuse the three tasks, clean up
/// and compose. Wound bed takes precedence over periwound; tissue classes
/// are only assigned inside the wound bed.
pub fn fuse_pipeline<T: Real>(
    mesh: &TriangleMesh<T>,
    views: &[CameraView<T>],
    masks: &[SegmentationMask],
    config: &FusionConfig,
) -> Result<FusionOutput<T>> {
    config.validate()?;
    let votes = collect_votes(mesh, views, masks, config)?;
    let n = mesh.face_count();
    let rule = config.rule();
    let peri_rule = config.periwound_rule();

    let mut wound_s: Vec<Vec<(f64, Label)>> = vec![Vec::new(); n];
    let mut peri_s = wound_s.clone();
    let mut tissue_s = wound_s.clone();
    for v in &votes {
        let w = to_f64(v.weight);
        wound_s[v.face].push((w, v.wound));
        peri_s[v.face].push((w, v.periwound));
        if let Some(t) = v.tissue {
            tissue_s[v.face].push((w, t));
        }
    }
    let observed = wound_s
        .iter()
        .filter(|s| s.iter().any(|&(w, c)| rule.admits(w, c)))
        .count();

    let fuse = |s: &Vec<Vec<(f64, Label)>>, r: &VoteRule| LabelField::new(s.iter().map(|v| fuse_face(v, r)).collect());
    let wound = apply_steps(mesh, fuse(&wound_s, &rule), Label::WoundBed, &config.morphology.wound_bed)?;
    let peri = apply_steps(mesh, fuse(&peri_s, &peri_rule), Label::Periwound, &config.morphology.periwound)?;
    let tissue = fuse(&tissue_s, &rule);

    let mut labels = LabelField::uniform(n, Label::Background);
    for f in 0..n {
        if wound.get(f) == Label::WoundBed {
            let t = tissue.get(f);
            labels.set(f, if t.is_tissue() { t } else { Label::WoundBed });
        } else if peri.get(f) == Label::Periwound {
            labels.set(f, Label::Periwound);
        }
    }
    for class in Label::TISSUES {
        let steps = &config.morphology.tissue;
        if steps.is_empty() {
            break;
        }
        let cleaned = apply_steps(mesh, labels.clone(), class, steps)?;
        // Tissue cleanup never leaves the wound bed: faces dropped from a
        // class fall back to unclassified wound bed.
        for f in 0..n {
            let before = labels.get(f);
            let after = cleaned.get(f);
            if before == class && after != class {
                labels.set(f, Label::WoundBed);
            } else if after == class && before != class && before.belongs_to(Label::WoundBed) {
                labels.set(f, class);
            }
        }
    }
    Ok(FusionOutput {
        labels,
        unobserved_fraction: if n == 0 { 0.0 } else { (n - observed) as f64 / n as f64 },
        votes,
    })
}

/// Tab-separated per-face vote table for inspection.
pub fn vote_table<T: Real>(votes: &[FaceVotes<T>], views: &[CameraView<T>]) -> String {
    let mut rows: Vec<&FaceVotes<T>> = votes.iter().collect();
    rows.sort_by_key(|v| (v.face, v.view));
    let mut s = String::from("face\tview\tweight\tpixels\twound\tperiwound\ttissue\n");
    for v in rows {
        let view = views.get(v.view).map_or("?", |c| c.view_id.as_str());
        let _ = writeln!(
            s,
            "{}\t{}\t{:.9}\t{}\t{}\t{}\t{}",
            v.face,
            view,
            to_f64(v.weight),
            v.pixels,
            v.wound.name(),
            v.periwound.name(),
            v.tissue.map_or("-", Label::name)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rule() -> VoteRule {
        FusionConfig::default().rule()
    }

    #[test]
    fn weighting_examples() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(weighting_factor(&n, &Vector3::new(0.0, 0.0, -1.0)).unwrap(), 1.0);
        let a = std::f64::consts::FRAC_PI_3;
        let r = Vector3::new(a.sin(), 0.0, -a.cos());
        assert!((weighting_factor(&n, &r).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(weighting_factor(&n, &Vector3::new(1.0, 0.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(
            weighting_factor(&n, &Vector3::new(0.0, 0.0, 2.0)),
            Err(Error::NotUnit(_))
        ));
    }

    #[test]
    fn vote_examples() {
        assert_eq!(fuse_face(&[(0.9, Label::Granulation)], &rule()), Label::Granulation);
        assert_eq!(
            fuse_face(&[(0.9, Label::Granulation), (0.6, Label::Slough)], &rule()),
            Label::Granulation
        );
        assert_eq!(fuse_face(&[(0.4, Label::Granulation)], &rule()), Label::Background);
        assert_eq!(fuse_face(&[], &rule()), Label::Background);
    }

    #[test]
    fn exact_tie_goes_to_lower_id() {
        let s = [(0.8, Label::Slough), (0.8, Label::Granulation)];
        assert_eq!(fuse_face(&s, &rule()), Label::Granulation);
    }

    #[test]
    fn weight_at_cutoff_is_admitted_with_zero_score() {
        let s = class_scores(&[(0.5, Label::Slough)], &rule());
        assert_eq!(s[Label::Slough.index()], Some(0.0));
        assert_eq!(fuse_face(&[(0.5, Label::Slough)], &rule()), Label::Slough);
    }

    #[test]
    fn periwound_switch_drops_indicator() {
        let mut cfg = FusionConfig::default();
        let s = [(0.3, Label::Periwound)];
        assert_eq!(fuse_face(&s, &cfg.periwound_rule()), Label::Background);
        cfg.periwound_keep_indicator = false;
        let scores = class_scores(&s, &cfg.periwound_rule());
        assert!((scores[Label::Periwound.index()].unwrap() - (0.3f64 / 0.7).ln()).abs() < 1e-15);
        assert_eq!(fuse_face(&s, &cfg.periwound_rule()), Label::Periwound);
    }

    #[test]
    fn clamped_head_on_sample_wins() {
        let s = [
            (1.0, Label::Necrotic),
            (0.99, Label::Granulation),
            (0.99, Label::Granulation),
        ];
        assert_eq!(fuse_face(&s, &rule()), Label::Necrotic);
        assert!(class_scores(&s, &rule()).iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn task_votes_split() {
        let mut h = [0u32; Label::COUNT];
        h[Label::Slough.index()] = 3;
        h[Label::Granulation.index()] = 2;
        h[Label::Periwound.index()] = 4;
        let (w, p, t) = task_votes(&h);
        assert_eq!(w, Label::WoundBed);
        assert_eq!(p, Label::Background);
        assert_eq!(t, Some(Label::Slough));
        let mut h = [0u32; Label::COUNT];
        h[Label::Periwound.index()] = 1;
        let (w, p, t) = task_votes(&h);
        assert_eq!((w, p, t), (Label::Background, Label::Periwound, None));
    }

    #[test]
    fn zero_views_is_all_background() {
        let m = crate::mesh::test_grid(3);
        let out = fuse_pipeline(&m, &[], &[], &FusionConfig::default()).unwrap();
        assert!(out.labels.as_slice().iter().all(|&l| l == Label::Background));
        assert_eq!(out.unobserved_fraction, 1.0);
    }

    fn sample() -> impl Strategy<Value = (f64, Label)> {
        (0.0f64..=1.0, 0usize..Label::COUNT).prop_map(|(w, c)| (w, Label::ALL[c]))
    }

    proptest! {
        #[test]
        fn order_and_duplication_invariant(mut s in prop::collection::vec(sample(), 0..12), seed in any::<u64>()) {
            let base = fuse_face(&s, &rule());
            let dup: Vec<_> = s.iter().chain(s.iter()).copied().collect();
            prop_assert_eq!(fuse_face(&dup, &rule()), base);
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            s.shuffle(&mut rng);
            prop_assert_eq!(fuse_face(&s, &rule()), base);
        }

        #[test]
        fn unanimous_vote_wins(ws in prop::collection::vec(0.5f64..=1.0, 1..8), c in 0usize..Label::COUNT) {
            let s: Vec<_> = ws.iter().map(|&w| (w, Label::ALL[c])).collect();
            prop_assert_eq!(fuse_face(&s, &rule()), Label::ALL[c]);
        }

        #[test]
        fn raising_weight_keeps_winner(w1 in 0.5f64..1.0, w2 in 0.5f64..1.0, bump in 0.0f64..1.0) {
            let a = Label::Granulation;
            let b = Label::Slough;
            let before = fuse_face(&[(w1, a), (w2, b)], &rule());
            if before == a {
                let raised = w1 + (1.0 - w1) * bump;
                prop_assert_eq!(fuse_face(&[(raised, a), (w2, b)], &rule()), a);
            }
        }
    }
}
