use std::collections::BTreeMap;

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::labels::{Label, LabelField};
use crate::scalar::Real;

/// Sum of face areas over `faces`.
pub fn face_set_area<T: Real>(mesh: &TriangleMesh<T>, faces: &[usize]) -> T {
    faces
        .iter()
        .fold(T::zero(), |acc, &f| acc + mesh.face_area(f))
}

/// Maximal edge-connected sets of faces whose label belongs to `class`,
/// sorted by descending total area (ties: smaller first face id). Face ids
/// within a component are ascending.
pub fn connected_components<T: Real>(
    mesh: &TriangleMesh<T>,
    labels: &LabelField,
    class: Label,
) -> Result<Vec<Vec<usize>>> {
    labels.check_len(mesh.face_count())?;
    let member = labels.mask_of(class);
    let mut seen = vec![false; mesh.face_count()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..mesh.face_count() {
        if !member[seed] || seen[seed] {
            continue;
        }
        seen[seed] = true;
        stack.push(seed);
        let mut comp = Vec::new();
        while let Some(f) = stack.pop() {
            comp.push(f);
            for nb in mesh.face_neighbors(f).iter().flatten() {
                if member[*nb] && !seen[*nb] {
                    seen[*nb] = true;
                    stack.push(*nb);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    let mut keyed: Vec<(T, Vec<usize>)> = components
        .into_iter()
        .map(|c| (face_set_area(mesh, &c), c))
        .collect();
    keyed.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1[0].cmp(&b.1[0]))
    });
    Ok(keyed.into_iter().map(|(_, c)| c).collect())
}

/// Closed boundary loops of a face set.
///
/// Boundary edges are the edges of `faces` with no neighbor inside the set.
/// They are walked in face winding order, so the set lies to the left of
/// each loop when viewed from the outward side. Each loop starts at its
/// lowest vertex index; loops are sorted by that starting vertex.
pub fn boundary_loops<T: Real>(mesh: &TriangleMesh<T>, faces: &[usize]) -> Result<Vec<Vec<usize>>> {
    if faces.is_empty() {
        return Err(Error::EmptyFaceSet);
    }
    let mut in_set = vec![false; mesh.face_count()];
    for &f in faces {
        in_set[f] = true;
    }

    let mut outgoing: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &f in faces {
        let tri = mesh.faces()[f];
        for (k, nb) in mesh.face_neighbors(f).iter().enumerate() {
            let interior = nb.map(|n| in_set[n]).unwrap_or(false);
            if !interior {
                outgoing.entry(tri[k]).or_default().push(tri[(k + 1) % 3]);
            }
        }
    }
    for targets in outgoing.values_mut() {
        // Pop from the back yields the smallest target first.
        targets.sort_unstable_by(|a, b| b.cmp(a));
    }

    let mut loops = Vec::new();
    loop {
        let start = match outgoing.iter().find(|(_, t)| !t.is_empty()) {
            Some((&v, _)) => v,
            None => break,
        };
        let mut chain = vec![start];
        let mut current = start;
        loop {
            let next = match outgoing.get_mut(&current).and_then(|t| t.pop()) {
                Some(n) => n,
                None => return Err(Error::OpenBoundary { vertex: current }),
            };
            if next == start {
                break;
            }
            chain.push(next);
            current = next;
        }
        let min_pos = chain
            .iter()
            .enumerate()
            .min_by_key(|(_, v)| **v)
            .map(|(i, _)| i)
            .unwrap_or(0);
        chain.rotate_left(min_pos);
        loops.push(chain);
    }
    loops.sort_by_key(|l| l[0]);
    Ok(loops)
}

/// Polyline length of a closed vertex loop.
pub fn loop_length<T: Real>(mesh: &TriangleMesh<T>, lp: &[usize]) -> T {
    let v = mesh.vertices();
    let n = lp.len();
    (0..n).fold(T::zero(), |acc, i| {
        acc + (v[lp[(i + 1) % n]] - v[lp[i]]).norm()
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::Point3;

    /// Hexagonal fan: center vertex 0, rim vertices 1..=6.
    fn fan() -> TriangleMesh<f64> {
        let mut v = vec![Point3::new(0.0, 0.0, 0.0)];
        for k in 0..6 {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            v.push(Point3::new(a.cos(), a.sin(), 0.0));
        }
        let faces = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        TriangleMesh::new(v, faces).unwrap()
    }

    /// Square grid of n x n cells split into triangles.
    pub(crate) fn grid(n: usize) -> TriangleMesh<f64> {
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push(Point3::new(i as f64, j as f64, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut f = Vec::new();
        for j in 0..n {
            for i in 0..n {
                f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriangleMesh::new(v, f).unwrap()
    }

    #[test]
    fn single_triangle_loop() {
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
        ];
        let m = TriangleMesh::new(v, vec![[2, 0, 1]]).unwrap();
        assert_eq!(boundary_loops(&m, &[0]).unwrap(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn fan_rim_loop_matches_brute_force() {
        let m = fan();
        let faces: Vec<usize> = (0..6).collect();
        let loops = boundary_loops(&m, &faces).unwrap();

        // Brute force: an undirected edge is on the boundary iff exactly one
        // face of the set uses it.
        let mut count = std::collections::BTreeMap::new();
        for &f in &faces {
            let t = m.faces()[f];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut brute: Vec<(usize, usize)> = count
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .map(|(e, _)| e)
            .collect();
        brute.sort();

        assert_eq!(loops.len(), 1);
        let lp = &loops[0];
        let mut walked: Vec<(usize, usize)> = (0..lp.len())
            .map(|i| {
                let (a, b) = (lp[i], lp[(i + 1) % lp.len()]);
                (a.min(b), a.max(b))
            })
            .collect();
        walked.sort();
        assert_eq!(walked, brute);
        assert_eq!(lp, &vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn annulus_has_two_loops() {
        let m = grid(4);
        // Drop the 2x2 center block (cells (1..3, 1..3)).
        let faces: Vec<usize> = (0..m.face_count())
            .filter(|f| {
                let cell = f / 2;
                let (i, j) = (cell % 4, cell / 4);
                !((1..3).contains(&i) && (1..3).contains(&j))
            })
            .collect();
        let loops = boundary_loops(&m, &faces).unwrap();
        assert_eq!(loops.len(), 2);
        let lens: Vec<usize> = loops.iter().map(|l| l.len()).collect();
        assert!(lens.contains(&16) && lens.contains(&8));
    }

    #[test]
    fn closed_mesh_has_no_boundary() {
        // Tetrahedron with outward winding.
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
            Point3::new(0., 0., 1.),
        ];
        let f = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        let m = TriangleMesh::new(v, f).unwrap();
        assert!(boundary_loops(&m, &[0, 1, 2, 3]).unwrap().is_empty());
    }

    #[test]
    fn inconsistent_winding_reports_dangling_vertex() {
        let v = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(1., 1., 0.),
            Point3::new(0., 1., 0.),
        ];
        // Second triangle flipped: shared edge runs 0->2 in both faces.
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        assert!(boundary_loops(&m, &[0, 1]).is_ok());
        let v2 = m.vertices().to_vec();
        let flipped = TriangleMesh::new(v2, vec![[0, 1, 2], [3, 2, 0]]).unwrap();
        let err = boundary_loops(&flipped, &[0, 1]).unwrap_err();
        assert!(matches!(err, Error::OpenBoundary { .. }));
    }

    #[test]
    fn components_split_and_sorted_by_area() {
        let m = grid(6);
        let mut labels = LabelField::uniform(m.face_count(), Label::Background);
        // Small patch: cell (0,0). Large patch: cells (3..6, 3..6).
        labels.set(0, Label::Granulation);
        labels.set(1, Label::WoundBed);
        for j in 3..6 {
            for i in 3..6 {
                let c = j * 6 + i;
                labels.set(2 * c, Label::WoundBed);
                labels.set(2 * c + 1, Label::WoundBed);
            }
        }
        let comps = connected_components(&m, &labels, Label::WoundBed).unwrap();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].len(), 18);
        assert_eq!(comps[1], vec![0, 1]);
        assert!(connected_components(&m, &labels, Label::Necrotic)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn all_labeled_is_one_component() {
        let m = grid(3);
        let labels = LabelField::uniform(m.face_count(), Label::WoundBed);
        let comps = connected_components(&m, &labels, Label::WoundBed).unwrap();
        assert_eq!(comps, vec![(0..m.face_count()).collect::<Vec<_>>()]);
    }
}
