//! Mesh and point cloud files: OBJ, binary little-endian PLY, XYZ, plus the
//! `key = value` configuration format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binary::{put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Triangle};
use crate::mesh::IndexedMesh;

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::Parse { line, message: "missing coordinate".into() })?;
    let v: f64 = tok.parse().map_err(|_| Error::Parse { line, message: format!("invalid number `{tok}`") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("non-finite coordinate `{tok}`") });
    }
    Ok(v)
}

/// Reads `v` and `f` records. Face indices are 1-based, negative indices
/// count back from the latest vertex, polygons are fanned from their first
/// corner, and faces repeating a vertex are dropped.
pub fn read_obj(r: impl BufRead) -> Result<IndexedMesh> {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut raw_faces: Vec<(usize, Vec<(i64, usize)>)> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let p =
                    [parse_f64(toks.next(), lineno)?, parse_f64(toks.next(), lineno)?, parse_f64(toks.next(), lineno)?];
                vertices.push(p);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let v: i64 = head
                        .parse()
                        .map_err(|_| Error::Parse { line: lineno, message: format!("invalid face index `{t}`") })?;
                    if v == 0 {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "face index 0 (indices are 1-based)".into(),
                        });
                    }
                    idx.push((v, vertices.len()));
                }
                if idx.len() < 3 {
                    return Err(Error::Parse { line: lineno, message: "face needs at least 3 vertices".into() });
                }
                raw_faces.push((lineno, idx));
            }
            _ => {}
        }
    }
    let count = vertices.len();
    let mut faces = Vec::new();
    for (face, (_, idx)) in raw_faces.iter().enumerate() {
        let resolved = idx
            .iter()
            .map(|&(v, seen)| {
                let abs = if v > 0 { v - 1 } else { seen as i64 + v };
                if abs < 0 || abs as usize >= count {
                    Err(Error::IndexOutOfRange { face, index: v, count })
                } else {
                    Ok(abs as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for k in 1..resolved.len() - 1 {
            faces.extend(Triangle::new(resolved[0], resolved[k], resolved[k + 1]));
        }
    }
    IndexedMesh::new(vertices, faces)
}

/// Coordinates are written in shortest round-trip form, so a read gives
/// back the same values bit for bit.
pub fn write_obj(w: &mut impl Write, mesh: &IndexedMesh) -> Result<()> {
    for p in &mesh.vertices {
        writeln!(w, "v {} {} {}", p[0], p[1], p[2])?;
    }
    for t in mesh.faces() {
        let [a, b, c] = t.indices();
        writeln!(w, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    Ok(())
}

pub fn read_xyz(r: impl BufRead) -> Result<Vec<Point3>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut toks = t.split_whitespace();
        out.push([parse_f64(toks.next(), i + 1)?, parse_f64(toks.next(), i + 1)?, parse_f64(toks.next(), i + 1)?]);
    }
    Ok(out)
}

pub fn write_xyz(w: &mut impl Write, points: &[Point3]) -> Result<()> {
    for p in points {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    Ok(())
}

/// Binary little-endian PLY with `float` vertex coordinates and
/// `uchar`/`int` face lists.
pub fn write_ply(w: &mut impl Write, mesh: &IndexedMesh) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    )?;
    for p in &mesh.vertices {
        for c in p {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
    }
    for t in mesh.faces() {
        w.write_all(&[3u8])?;
        for i in t.indices() {
            put_u32(w, i)?;
        }
    }
    Ok(())
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn read(self, rd: &mut ByteReader<impl Read>) -> Result<f64> {
        Ok(match self {
            Self::I8 => i8::from_le_bytes(rd.bytes()?) as f64,
            Self::U8 => u8::from_le_bytes(rd.bytes()?) as f64,
            Self::I16 => i16::from_le_bytes(rd.bytes()?) as f64,
            Self::U16 => u16::from_le_bytes(rd.bytes()?) as f64,
            Self::I32 => i32::from_le_bytes(rd.bytes()?) as f64,
            Self::U32 => u32::from_le_bytes(rd.bytes()?) as f64,
            Self::F32 => f32::from_le_bytes(rd.bytes()?) as f64,
            Self::F64 => f64::from_le_bytes(rd.bytes()?),
        })
    }
}

enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn read_header(r: &mut impl BufRead) -> Result<(Vec<Element>, u64)> {
    let mut elements: Vec<Element> = Vec::new();
    let mut offset = 0u64;
    let mut lineno = 0;
    let mut line = String::new();
    let bad = |line: usize, m: &str| Error::Parse { line, message: m.to_string() };
    loop {
        line.clear();
        let n = r.read_line(&mut line)?;
        if n == 0 {
            return Err(bad(lineno, "PLY header ends before end_header"));
        }
        offset += n as u64;
        lineno += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] if lineno == 1 => {}
            _ if lineno == 1 => return Err(bad(1, "missing `ply` magic")),
            ["format", "binary_little_endian", _] => {}
            ["format", other, _] => {
                return Err(Error::FormatMismatch(format!("unsupported PLY format {other}")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(lineno, "invalid element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", c, t, name] => {
                let (Some(c), Some(t)) = (Scalar::parse(c), Scalar::parse(t)) else {
                    return Err(bad(lineno, "unknown property type"));
                };
                let el = elements.last_mut().ok_or_else(|| bad(lineno, "property before element"))?;
                el.properties.push(Property::List(name.to_string(), c, t));
            }
            ["property", t, name] => {
                let t = Scalar::parse(t).ok_or_else(|| bad(lineno, "unknown property type"))?;
                let el = elements.last_mut().ok_or_else(|| bad(lineno, "property before element"))?;
                el.properties.push(Property::Scalar(name.to_string(), t));
            }
            ["end_header"] => return Ok((elements, offset)),
            _ => return Err(bad(lineno, &format!("unrecognized header line `{}`", line.trim()))),
        }
    }
}

pub fn read_ply(r: impl Read) -> Result<IndexedMesh> {
    let mut r = BufReader::new(r);
    let (elements, header_len) = read_header(&mut r)?;
    let mut rd = ByteReader::new(r);
    rd.offset = header_len;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_no = 0;
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [None; 3];
            for p in &el.properties {
                match p {
                    Property::Scalar(name, t) => {
                        let v = t.read(&mut rd)?;
                        if let Some(axis) = ["x", "y", "z"].iter().position(|a| a == name) {
                            xyz[axis] = Some(v);
                        }
                    }
                    Property::List(name, c, t) => {
                        let n = c.read(&mut rd)? as usize;
                        let idx = (0..n).map(|_| t.read(&mut rd)).collect::<Result<Vec<_>>>()?;
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            faces.push((face_no, idx));
                            face_no += 1;
                        }
                    }
                }
            }
            if el.name == "vertex" {
                let [Some(x), Some(y), Some(z)] = xyz else {
                    return Err(Error::FormatMismatch("PLY vertex element lacks x, y or z".into()));
                };
                vertices.push([x, y, z]);
            }
        }
    }
    let count = vertices.len();
    let mut tris = Vec::new();
    for (face, idx) in faces {
        if idx.len() < 3 {
            return Err(Error::FormatMismatch(format!("PLY face {face} has fewer than 3 vertices")));
        }
        let resolved = idx
            .iter()
            .map(|&v| {
                if v < 0.0 || v as usize >= count {
                    Err(Error::IndexOutOfRange { face, index: v as i64, count })
                } else {
                    Ok(v as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for k in 1..resolved.len() - 1 {
            tris.extend(Triangle::new(resolved[0], resolved[k], resolved[k + 1]));
        }
    }
    IndexedMesh::new(vertices, tris)
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Reads an `.obj` or `.ply` mesh.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<IndexedMesh> {
    let path = path.as_ref();
    let f = File::open(path)?;
    match extension(path).as_str() {
        "obj" => read_obj(BufReader::new(f)),
        "ply" => read_ply(f),
        other => Err(Error::FormatMismatch(format!("unsupported mesh extension `.{other}`"))),
    }
}

/// Writes an `.obj` or `.ply` mesh.
pub fn save_mesh(path: impl AsRef<Path>, mesh: &IndexedMesh) -> Result<()> {
    let path = path.as_ref();
    let ext = extension(path);
    if ext != "obj" && ext != "ply" {
        return Err(Error::FormatMismatch(format!("unsupported mesh extension `.{ext}`")));
    }
    let mut w = BufWriter::new(File::create(path)?);
    if ext == "obj" {
        write_obj(&mut w, mesh)?;
    } else {
        write_ply(&mut w, mesh)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads points from `.xyz`, or the vertices of an `.obj` / `.ply`.
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<Point3>> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "xyz" | "txt" => read_xyz(BufReader::new(File::open(path)?)),
        _ => load_mesh(path).map(|m| m.vertices),
    }
}

pub fn save_points(path: impl AsRef<Path>, points: &[Point3]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_xyz(&mut w, points)?;
    w.flush()?;
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped, and a repeated key keeps the last value.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected `key = value`, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse { line: i + 1, message: "empty key".into() });
        }
        out.insert(k.replace('-', "_"), v.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::icosphere;
    use rand::{Rng, SeedableRng};

    #[test]
    fn obj_triangle_round_trip() {
        let m = IndexedMesh::from_triplets(vec![[0.1, 0.2, 0.3], [1.0, 0.0, -2.5e-7], [0.0, 1.0, 1e10]], &[[0, 1, 2]])
            .unwrap();
        let mut buf = Vec::new();
        write_obj(&mut buf, &m).unwrap();
        assert_eq!(read_obj(&buf[..]).unwrap(), m);
    }

    #[test]
    fn obj_index_rules() {
        assert!(matches!(
            read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n".as_bytes()),
            Err(Error::Parse { line: 4, .. })
        ));
        assert!(matches!(
            read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n".as_bytes()),
            Err(Error::IndexOutOfRange { index: 4, count: 3, .. })
        ));
        let m = read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf -4/1 -3//2 -2\nf 1 2 4 3\n".as_bytes()).unwrap();
        let expect: std::collections::BTreeSet<Triangle> =
            [(0, 1, 2), (0, 1, 3), (0, 2, 3)].iter().map(|&(a, b, c)| Triangle::new(a, b, c).unwrap()).collect();
        assert_eq!(m.face_set(), expect);
        assert!(matches!(read_obj("v 0 nope 0\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ply_round_trip_at_f32() {
        let m = icosphere(2);
        let mut buf = Vec::new();
        write_ply(&mut buf, &m).unwrap();
        let back = read_ply(&buf[..]).unwrap();
        assert_eq!(back.face_set(), m.face_set());
        for (a, b) in m.vertices.iter().zip(&back.vertices) {
            for d in 0..3 {
                assert_eq!(a[d] as f32 as f64, b[d]);
            }
        }
        assert!(read_ply(&buf[..buf.len() - 2]).is_err());
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(read_ply(&ascii[..]), Err(Error::FormatMismatch(_))));
    }

    #[test]
    fn xyz_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..10_000).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
        let mut buf = Vec::new();
        write_xyz(&mut buf, &pts).unwrap();
        let back = read_xyz(&buf[..]).unwrap();
        assert_eq!(back.len(), pts.len());
        for (a, b) in pts.iter().zip(&back) {
            for d in 0..3 {
                assert_eq!(a[d] as f32, b[d] as f32);
            }
        }
    }

    #[test]
    fn files_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let m = icosphere(1);
        for name in ["a.obj", "a.ply"] {
            let p = dir.path().join(name);
            save_mesh(&p, &m).unwrap();
            assert_eq!(load_mesh(&p).unwrap().face_set(), m.face_set());
            assert_eq!(load_points(&p).unwrap().len(), m.vertex_count());
        }
        assert!(save_mesh(dir.path().join("a.stl"), &m).is_err());
    }

    #[test]
    fn config_lines() {
        let c = parse_config("# comment\nk = 50\n\nlearning-rate=0.01 # trailing\nk = 16\n").unwrap();
        assert_eq!(c["k"], "16");
        assert_eq!(c["learning_rate"], "0.01");
        assert!(matches!(parse_config("a = 1\noops\n"), Err(Error::Parse { line: 2, .. })));
    }
}
