use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::labels::{Label, LabelField};
use crate::scalar::Real;

/// Binary morphology on the face adjacency graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOp {
    Open,
    Close,
}

fn erode_step<T: Real>(mesh: &TriangleMesh<T>, mask: &[bool]) -> Vec<bool> {
    (0..mask.len())
        .map(|f| mask[f] && mesh.face_neighbors(f).iter().flatten().all(|&n| mask[n]))
        .collect()
}

fn dilate_step<T: Real>(mesh: &TriangleMesh<T>, mask: &[bool]) -> Vec<bool> {
    (0..mask.len())
        .map(|f| mask[f] || mesh.face_neighbors(f).iter().flatten().any(|&n| mask[n]))
        .collect()
}

/// Opening or closing of a face mask with a graph ball of `radius` hops.
/// Faces are adjacent iff they share an edge; missing neighbors at the mesh
/// border are ignored rather than treated as outside.
pub fn morph_mask<T: Real>(
    mesh: &TriangleMesh<T>,
    mask: &[bool],
    op: MorphOp,
    radius: usize,
) -> Vec<bool> {
    let mut m = mask.to_vec();
    let (first, second): (fn(&TriangleMesh<T>, &[bool]) -> Vec<bool>, fn(&TriangleMesh<T>, &[bool]) -> Vec<bool>) =
        match op {
            MorphOp::Open => (erode_step, dilate_step),
            MorphOp::Close => (dilate_step, erode_step),
        };
    for _ in 0..radius {
        m = first(mesh, &m);
    }
    for _ in 0..radius {
        m = second(mesh, &m);
    }
    m
}

/// Applies opening or closing to the region of `class`. Faces removed from
/// the region become background; faces added take `class`.
pub fn label_morphology<T: Real>(
    mesh: &TriangleMesh<T>,
    labels: &LabelField,
    class: Label,
    op: MorphOp,
    radius: usize,
) -> Result<LabelField> {
    labels.check_len(mesh.face_count())?;
    if radius == 0 {
        return Err(Error::InvalidArgument("morphology radius must be >= 1".into()));
    }
    let before = labels.mask_of(class);
    let after = morph_mask(mesh, &before, op, radius);
    let mut out = labels.clone();
    for f in 0..before.len() {
        match (before[f], after[f]) {
            (true, false) => out.set(f, Label::Background),
            (false, true) => out.set(f, class),
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::topology::tests::grid;
    use proptest::prelude::*;

    #[test]
    fn opening_removes_singleton() {
        let m = grid(5);
        let mut labels = LabelField::uniform(m.face_count(), Label::Background);
        labels.set(24, Label::Slough);
        let out = label_morphology(&m, &labels, Label::Slough, MorphOp::Open, 1).unwrap();
        assert_eq!(out.get(24), Label::Background);
    }

    #[test]
    fn closing_fills_single_hole() {
        let m = grid(5);
        let mut labels = LabelField::uniform(m.face_count(), Label::WoundBed);
        labels.set(24, Label::Background);
        let out = label_morphology(&m, &labels, Label::WoundBed, MorphOp::Close, 1).unwrap();
        assert_eq!(out.get(24), Label::WoundBed);
    }

    #[test]
    fn uniform_field_is_fixed_point() {
        let m = grid(4);
        for label in [Label::Background, Label::WoundBed] {
            let labels = LabelField::uniform(m.face_count(), label);
            for op in [MorphOp::Open, MorphOp::Close] {
                for r in 1..4 {
                    let out = label_morphology(&m, &labels, Label::WoundBed, op, r).unwrap();
                    assert_eq!(out, labels);
                }
            }
        }
    }

    #[test]
    fn zero_radius_rejected() {
        let m = grid(2);
        let labels = LabelField::uniform(m.face_count(), Label::Background);
        assert!(label_morphology(&m, &labels, Label::WoundBed, MorphOp::Open, 0).is_err());
    }

    proptest! {
        #[test]
        fn opening_is_idempotent(bits in proptest::collection::vec(any::<bool>(), 72), radius in 1usize..3) {
            let m = grid(6);
            let once = morph_mask(&m, &bits, MorphOp::Open, radius);
            let twice = morph_mask(&m, &once, MorphOp::Open, radius);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn closing_is_idempotent(bits in proptest::collection::vec(any::<bool>(), 72), radius in 1usize..3) {
            let m = grid(6);
            let once = morph_mask(&m, &bits, MorphOp::Close, radius);
            let twice = morph_mask(&m, &once, MorphOp::Close, radius);
            prop_assert_eq!(once, twice);
        }
    }
}
