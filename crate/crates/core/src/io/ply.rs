//! PLY reading and writing.
//!
//! Reads `ascii 1.0`, `binary_little_endian 1.0` and `binary_big_endian 1.0`.
//! Vertices need `x y z`; `red green blue` are kept as colors. Faces use a
//! `vertex_indices` (or `vertex_index`) list; polygons are fan-triangulated.
//! An optional face property `label` carries class ids. Other elements and
//! properties are skipped.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::labels::LabelField;
use crate::mesh::TriangleMesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(n, _) | Property::List(n, _, _) => n,
        }
    }
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Mesh plus optional per-face labels read from a PLY file.
#[derive(Clone, Debug)]
pub struct PlyMesh {
    pub mesh: TriangleMesh<f64>,
    pub labels: Option<LabelField>,
}

struct Source<'a, R: BufRead> {
    r: &'a mut R,
    format: Format,
    tokens: std::vec::IntoIter<String>,
    path: &'a Path,
}

impl<R: BufRead> Source<'_, R> {
    fn token(&mut self) -> Result<String> {
        loop {
            if let Some(t) = self.tokens.next() {
                return Ok(t);
            }
            let mut line = String::new();
            let n = self.r.read_line(&mut line).map_err(|e| Error::io(self.path, e))?;
            if n == 0 {
                return Err(Error::parse(self.path, "unexpected end of file"));
            }
            self.tokens = line.split_whitespace().map(str::to_owned).collect::<Vec<_>>().into_iter();
        }
    }

    /// Drops any remaining tokens of the current ascii line.
    fn end_record(&mut self) {
        self.tokens = Vec::new().into_iter();
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        if self.format == Format::Ascii {
            let t = self.token()?;
            return t
                .parse::<f64>()
                .map_err(|_| Error::parse(self.path, format!("bad number '{t}'")));
        }
        let mut buf = [0u8; 8];
        let n = ty.size();
        self.r
            .read_exact(&mut buf[..n])
            .map_err(|_| Error::parse(self.path, "unexpected end of binary data"))?;
        let le = self.format == Format::BinaryLe;
        macro_rules! conv {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&buf[..$n]);
                (if le { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        Ok(match ty {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => conv!(i16, 2),
            Scalar::U16 => conv!(u16, 2),
            Scalar::I32 => conv!(i32, 4),
            Scalar::U32 => conv!(u32, 4),
            Scalar::F32 => conv!(f32, 4),
            Scalar::F64 => conv!(f64, 8),
        })
    }
}

fn parse_header<R: BufRead>(r: &mut R, path: &Path) -> Result<(Format, Vec<Element>)> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<()> {
        line.clear();
        let n = r.read_line(line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::parse(path, "unterminated header"));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::parse(path, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(&mut line)?;
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["end_header"] => break,
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => return Err(Error::parse(path, format!("unsupported format '{other}'"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::parse(path, format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", cnt, item, name] => {
                let (Some(c), Some(i)) = (Scalar::parse(cnt), Scalar::parse(item)) else {
                    return Err(Error::parse(path, format!("bad list property '{}'", line.trim())));
                };
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, "property before element"))?
                    .props
                    .push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::parse(path, format!("bad property type '{ty}'")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, "property before element"))?
                    .props
                    .push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(Error::parse(path, format!("unrecognized header line '{}'", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, "missing format line"))?;
    Ok((format, elements))
}

pub fn read_ply(path: &Path) -> Result<PlyMesh> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply_from(&mut BufReader::new(file), path)
}

pub fn read_ply_from<R: BufRead>(r: &mut R, path: &Path) -> Result<PlyMesh> {
    let raw = read_raw(r, path)?;
    build(raw.vertices, raw.faces, raw.colors, raw.labels)
}

/// Vertices of a PLY file, with normals when `nx ny nz` are present. Faces
/// are ignored.
#[derive(Clone, Debug)]
pub struct PlyCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Faces, when the file has any.
    pub faces: Vec<[usize; 3]>,
}

pub fn read_ply_cloud(path: &Path) -> Result<PlyCloud> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let raw = read_raw(&mut BufReader::new(file), path)?;
    Ok(PlyCloud {
        points: raw.vertices,
        normals: raw.normals,
        faces: raw.faces,
    })
}

struct RawPly {
    vertices: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    colors: Option<Vec<[u8; 3]>>,
    faces: Vec<[usize; 3]>,
    labels: Option<Vec<u8>>,
}

fn read_raw<R: BufRead>(r: &mut R, path: &Path) -> Result<RawPly> {
    let (format, elements) = parse_header(r, path)?;
    let mut src = Source {
        r,
        format,
        tokens: Vec::new().into_iter(),
        path,
    };
    let mut vertices = Vec::new();
    let mut colors: Vec<[u8; 3]> = Vec::new();
    let mut faces = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut normals = Vec::new();
    let mut have_colors = false;
    let mut have_normals = false;
    let mut have_labels = false;

    for el in &elements {
        let find = |n: &str| el.props.iter().position(|p| p.name() == n);
        match el.name.as_str() {
            "vertex" => {
                let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
                    return Err(Error::parse(path, "vertex element lacks x/y/z"));
                };
                let rgb = (find("red"), find("green"), find("blue"));
                have_colors = matches!(rgb, (Some(_), Some(_), Some(_)));
                let nrm = (find("nx"), find("ny"), find("nz"));
                have_normals = matches!(nrm, (Some(_), Some(_), Some(_)));
                for _ in 0..el.count {
                    let mut vals = vec![0.0; el.props.len()];
                    for (k, p) in el.props.iter().enumerate() {
                        match p {
                            Property::Scalar(_, ty) => vals[k] = src.read(*ty)?,
                            Property::List(_, c, i) => {
                                let n = src.read(*c)? as usize;
                                for _ in 0..n {
                                    src.read(*i)?;
                                }
                            }
                        }
                    }
                    src.end_record();
                    vertices.push(Point3::new(vals[ix], vals[iy], vals[iz]));
                    if let (Some(r), Some(g), Some(b)) = rgb {
                        colors.push([vals[r] as u8, vals[g] as u8, vals[b] as u8]);
                    }
                    if let (Some(a), Some(b), Some(c)) = nrm {
                        normals.push(Vector3::new(vals[a], vals[b], vals[c]));
                    }
                }
            }
            "face" => {
                let li = find("vertex_indices")
                    .or_else(|| find("vertex_index"))
                    .ok_or_else(|| Error::parse(path, "face element lacks vertex_indices"))?;
                let lab = find("label");
                have_labels = lab.is_some();
                for f in 0..el.count {
                    let mut poly = Vec::new();
                    let mut label = 0.0;
                    for (k, p) in el.props.iter().enumerate() {
                        match p {
                            Property::Scalar(_, ty) => {
                                let v = src.read(*ty)?;
                                if Some(k) == lab {
                                    label = v;
                                }
                            }
                            Property::List(_, c, i) => {
                                let n = src.read(*c)? as usize;
                                for _ in 0..n {
                                    let v = src.read(*i)?;
                                    if k == li {
                                        if v < 0.0 || v.fract() != 0.0 {
                                            return Err(Error::parse(path, format!("face {f}: bad index {v}")));
                                        }
                                        poly.push(v as usize);
                                    }
                                }
                            }
                        }
                    }
                    src.end_record();
                    if poly.len() < 3 {
                        return Err(Error::parse(path, format!("face {f} has {} vertices", poly.len())));
                    }
                    for k in 1..poly.len() - 1 {
                        faces.push([poly[0], poly[k], poly[k + 1]]);
                        if lab.is_some() {
                            if !(0.0..=255.0).contains(&label) {
                                return Err(Error::InvalidLabel(255));
                            }
                            labels.push(label as u8);
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar(_, ty) => {
                                src.read(*ty)?;
                            }
                            Property::List(_, c, i) => {
                                let n = src.read(*c)? as usize;
                                for _ in 0..n {
                                    src.read(*i)?;
                                }
                            }
                        }
                    }
                    src.end_record();
                }
            }
        }
    }
    Ok(RawPly {
        vertices,
        normals: have_normals.then_some(normals),
        colors: have_colors.then_some(colors),
        faces,
        labels: have_labels.then_some(labels),
    })
}

/// Validates raw arrays into a mesh; labels of dropped faces are discarded.
pub(crate) fn build(
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    colors: Option<Vec<[u8; 3]>>,
    labels: Option<Vec<u8>>,
) -> Result<PlyMesh> {
    let kept = if labels.is_some() { Some(kept_faces(&vertices, &faces)?) } else { None };
    let mut mesh = TriangleMesh::new(vertices, faces)?;
    if let Some(c) = colors {
        mesh = mesh.with_colors(c)?;
    }
    let labels = match (labels, kept) {
        (Some(l), Some(k)) => Some(LabelField::from_ids(&k.iter().map(|&f| l[f]).collect::<Vec<_>>())?),
        _ => None,
    };
    Ok(PlyMesh { mesh, labels })
}

/// Indices of the faces that mesh validation keeps, in order.
fn kept_faces(vertices: &[Point3<f64>], faces: &[[usize; 3]]) -> Result<Vec<usize>> {
    let probe = TriangleMesh::new(vertices.to_vec(), faces.to_vec())?;
    if probe.dropped_degenerate() == 0 {
        return Ok((0..faces.len()).collect());
    }
    let kept = probe.faces();
    let mut out = Vec::with_capacity(kept.len());
    let mut j = 0;
    for (i, f) in faces.iter().enumerate() {
        if j < kept.len() && kept[j] == *f {
            out.push(i);
            j += 1;
        }
    }
    Ok(out)
}

/// Writes a binary little-endian PLY with double coordinates, optional
/// per-vertex colors and optional per-face labels.
pub fn write_ply(path: &Path, mesh: &TriangleMesh<f64>, colors: Option<&[[u8; 3]]>, labels: Option<&LabelField>) -> Result<()> {
    let mut buf = Vec::new();
    write_ply_to(&mut buf, mesh, colors, labels)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_ply_to(w: &mut Vec<u8>, mesh: &TriangleMesh<f64>, colors: Option<&[[u8; 3]]>, labels: Option<&LabelField>) -> Result<()> {
    let colors = colors.or(mesh.colors());
    if let Some(c) = colors {
        if c.len() != mesh.vertex_count() {
            return Err(Error::DimensionMismatch(format!("{} colors for {} vertices", c.len(), mesh.vertex_count())));
        }
    }
    if let Some(l) = labels {
        l.check_len(mesh.face_count())?;
    }
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    h += &format!("element vertex {}\n", mesh.vertex_count());
    h += "property double x\nproperty double y\nproperty double z\n";
    if colors.is_some() {
        h += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    h += &format!("element face {}\n", mesh.face_count());
    h += "property list uchar int vertex_indices\n";
    if labels.is_some() {
        h += "property uchar label\n";
    }
    h += "end_header\n";
    w.write_all(h.as_bytes()).expect("write to Vec");
    for (i, p) in mesh.vertices().iter().enumerate() {
        for c in [p.x, p.y, p.z] {
            w.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(c) = colors {
            w.extend_from_slice(&c[i]);
        }
    }
    for (f, tri) in mesh.faces().iter().enumerate() {
        w.push(3);
        for &v in tri {
            w.extend_from_slice(&(v as i32).to_le_bytes());
        }
        if let Some(l) = labels {
            w.push(l.get(f).id());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Label;

    fn read_str(s: &str) -> Result<PlyMesh> {
        read_ply_from(&mut s.as_bytes(), Path::new("mem.ply"))
    }

    const TRI: &str = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";

    #[test]
    fn single_triangle() {
        let m = read_str(TRI).unwrap().mesh;
        assert_eq!((m.vertex_count(), m.face_count()), (3, 1));
        assert_eq!(m.face_area(0), 0.5);
    }

    #[test]
    fn zero_area_face_dropped() {
        let s = "ply\nformat ascii 1.0\nelement vertex 4\nproperty double x\nproperty double y\nproperty double z\nelement face 2\nproperty list uchar int vertex_indices\nproperty uchar label\nend_header\n0 0 0\n1 0 0\n0 1 0\n2 0 0\n3 0 1 2 4\n3 0 1 3 1\n";
        let p = read_str(s).unwrap();
        assert_eq!(p.mesh.face_count(), 1);
        assert_eq!(p.mesh.dropped_degenerate(), 1);
        assert_eq!(p.labels.unwrap().as_slice(), &[Label::Slough]);
    }

    #[test]
    fn index_out_of_range() {
        let s = TRI.replace("3 0 1 2", "3 0 1 10");
        let e = read_str(&s).unwrap_err();
        assert!(e.to_string().contains("out of range"), "{e}");
    }

    #[test]
    fn quads_are_split_and_extra_elements_skipped() {
        let s = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nelement face 1\nproperty list uchar int vertex_index\nelement edge 1\nproperty int a\nproperty int b\nend_header\n0 0 0 9\n1 0 0 9\n1 1 0 9\n0 1 0 9\n4 0 1 2 3\n0 1\n";
        let m = read_str(s).unwrap().mesh;
        assert_eq!(m.face_count(), 2);
        assert_eq!(m.total_area(), 1.0);
    }

    #[test]
    fn binary_round_trip() {
        let m = crate::mesh::test_grid(3);
        let colors: Vec<[u8; 3]> = (0..m.vertex_count()).map(|i| [i as u8, 2, 3]).collect();
        let labels = LabelField::new((0..m.face_count()).map(|f| Label::ALL[f % 7]).collect());
        let mut buf = Vec::new();
        write_ply_to(&mut buf, &m, Some(&colors), Some(&labels)).unwrap();
        let back = read_ply_from(&mut buf.as_slice(), Path::new("mem.ply")).unwrap();
        assert_eq!(back.mesh.vertices(), m.vertices());
        assert_eq!(back.mesh.faces(), m.faces());
        assert_eq!(back.mesh.colors().unwrap(), colors.as_slice());
        assert_eq!(back.labels.unwrap(), labels);
    }

    #[test]
    fn truncated_binary_errors() {
        let m = crate::mesh::test_grid(1);
        let mut buf = Vec::new();
        write_ply_to(&mut buf, &m, None, None).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_ply_from(&mut buf.as_slice(), Path::new("x")), Err(Error::Parse { .. })));
    }
}
