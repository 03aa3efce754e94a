//! Minimal Wavefront OBJ reader: `v x y z [r g b]` and `f` records.
//! Face entries may use the `v/vt/vn` forms and negative indices; polygons
//! are fan-triangulated. Everything else is ignored.

use std::path::Path;

use nalgebra::Point3;

use super::ply::{build, PlyMesh};
use crate::error::{Error, Result};

pub fn read_obj(path: &Path) -> Result<PlyMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<PlyMesh> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut all_colored = true;
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let bad = |what: &str| Error::parse(path, format!("line {}: {what}", ln + 1));
        match it.next() {
            Some("v") => {
                let vals: Vec<f64> = it
                    .map(|t| t.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                    .collect::<Result<_>>()?;
                if vals.len() < 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(vals[0], vals[1], vals[2]));
                if vals.len() >= 6 {
                    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
                    colors.push([c(vals[3]), c(vals[4]), c(vals[5])]);
                } else {
                    all_colored = false;
                }
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let idx: Vec<usize> = it
                    .map(|t| {
                        let v: i64 = t.split('/').next().unwrap_or("").parse().map_err(|_| bad("bad face index"))?;
                        let i = if v < 0 { n + v } else { v - 1 };
                        if i < 0 {
                            return Err(bad("face index before first vertex"));
                        }
                        Ok(i as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let colors = (all_colored && !vertices.is_empty()).then_some(colors);
    build(vertices, faces, colors, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_with_slashes_and_negative_indices() {
        let s = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n";
        let m = parse_obj(s, Path::new("q.obj")).unwrap().mesh;
        assert_eq!(m.face_count(), 2);
        assert_eq!(m.total_area(), 1.0);
        assert!(m.colors().is_none());
    }

    #[test]
    fn bad_index_errors() {
        assert!(parse_obj("v 0 0 0\nf 1 2 x\n", Path::new("b.obj")).is_err());
    }
}
