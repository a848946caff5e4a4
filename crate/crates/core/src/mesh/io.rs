//! ASCII OBJ and binary little-endian PLY mesh files.
//!
//! PLY files written here carry `double` coordinates, an optional set of
//! named per-vertex `float` scalars and `uchar`/`int` face lists. The reader
//! accepts any binary little-endian PLY whose vertex properties are scalar
//! and whose faces are triangles.

use std::fs;
use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Point3;

use super::TriangleMesh;
use crate::error::{Error, Result};

fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Per-vertex values stored alongside a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexScalars {
    pub name: String,
    pub values: Vec<f64>,
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    fs::write(path, encode_obj(mesh))?;
    Ok(())
}

pub fn encode_obj(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::new();
    for p in &mesh.vertices {
        // `{:?}` prints the shortest representation that round-trips
        writeln!(out, "v {:?} {:?} {:?}", p.x, p.y, p.z).expect("write to vec");
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to vec");
    }
    out
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    decode_obj(&fs::read(path)?)
}

/// Reads `v` and `f` records; faces with more than three corners are fanned.
/// Texture and normal indices (`f 1/2/3`) are ignored.
pub fn decode_obj(bytes: &[u8]) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in BufReader::new(bytes).lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format(format!("line {}: {e}", n + 1)))?;
                if c.len() != 3 {
                    return Err(format(format!("line {}: vertex needs three coordinates", n + 1)));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|_| format(format!("line {}: bad index {s}", n + 1)))?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        u32::try_from(resolved).map_err(|_| format(format!("line {}: index {i} out of range", n + 1)))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(format(format!("line {}: face needs at least three vertices", n + 1)));
                }
                for w in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| format(e.to_string()))
}

pub fn write_ply(path: impl AsRef<Path>, mesh: &TriangleMesh, scalars: &[VertexScalars]) -> Result<()> {
    fs::write(path, encode_ply(mesh, scalars)?)?;
    Ok(())
}

pub fn encode_ply(mesh: &TriangleMesh, scalars: &[VertexScalars]) -> Result<Vec<u8>> {
    for s in scalars {
        if s.values.len() != mesh.vertices.len() {
            return Err(Error::InvalidInput(format!(
                "scalar '{}' has {} values for {} vertices",
                s.name,
                s.values.len(),
                mesh.vertices.len()
            )));
        }
        if s.name.is_empty() || s.name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("invalid property name '{}'", s.name)));
        }
    }
    let mut out = Vec::new();
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        mesh.vertices.len()
    )?;
    for s in scalars {
        writeln!(out, "property float {}", s.name)?;
    }
    write!(
        out,
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.triangles.len()
    )?;
    for (v, p) in mesh.vertices.iter().enumerate() {
        for c in [p.x, p.y, p.z] {
            out.write_f64::<LittleEndian>(c)?;
        }
        for s in scalars {
            out.write_f32::<LittleEndian>(s.values[v] as f32)?;
        }
    }
    for t in &mesh.triangles {
        out.write_u8(3)?;
        for &i in t {
            out.write_i32::<LittleEndian>(i as i32)?;
        }
    }
    Ok(out)
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<(TriangleMesh, Vec<VertexScalars>)> {
    decode_ply(&fs::read(path)?)
}

#[derive(Clone, Copy)]
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
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return Err(format(format!("unknown PLY type {s}"))),
        })
    }

    fn read(self, r: &mut impl Read) -> Result<f64> {
        Ok(match self {
            Scalar::I8 => r.read_i8()? as f64,
            Scalar::U8 => r.read_u8()? as f64,
            Scalar::I16 => r.read_i16::<LittleEndian>()? as f64,
            Scalar::U16 => r.read_u16::<LittleEndian>()? as f64,
            Scalar::I32 => r.read_i32::<LittleEndian>()? as f64,
            Scalar::U32 => r.read_u32::<LittleEndian>()? as f64,
            Scalar::F32 => r.read_f32::<LittleEndian>()? as f64,
            Scalar::F64 => r.read_f64::<LittleEndian>()?,
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
    props: Vec<Property>,
}

fn parse_header(text: &str) -> Result<Vec<Element>> {
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(format("missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", _] => format_seen = true,
            ["format", other, ..] => return Err(format(format!("unsupported PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, i, name] => elements
                .last_mut()
                .ok_or_else(|| format("property before element"))?
                .props
                .push(Property::List(name.to_string(), Scalar::parse(c)?, Scalar::parse(i)?)),
            ["property", t, name] => elements
                .last_mut()
                .ok_or_else(|| format("property before element"))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(t)?)),
            _ => return Err(format(format!("unrecognised header line '{line}'"))),
        }
    }
    if !format_seen {
        return Err(format("missing format line"));
    }
    Ok(elements)
}

pub fn decode_ply(bytes: &[u8]) -> Result<(TriangleMesh, Vec<VertexScalars>)> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| format("missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| format("header is not UTF-8"))?;
    let elements = parse_header(header)?;
    let mut r = Cursor::new(&bytes[end + END.len()..]);

    let mut vertices = Vec::new();
    let mut scalars: Vec<VertexScalars> = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let names: Vec<&str> = el
                    .props
                    .iter()
                    .map(|p| match p {
                        Property::Scalar(n, _) => Ok(n.as_str()),
                        Property::List(..) => Err(format("list property on vertex")),
                    })
                    .collect::<Result<_>>()?;
                let pos = |n: &str| {
                    names
                        .iter()
                        .position(|&x| x == n)
                        .ok_or_else(|| format(format!("vertex lacks {n}")))
                };
                let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
                let extra: Vec<usize> = (0..names.len()).filter(|&i| ![ix, iy, iz].contains(&i)).collect();
                scalars = extra
                    .iter()
                    .map(|&i| VertexScalars {
                        name: names[i].to_string(),
                        values: Vec::with_capacity(el.count),
                    })
                    .collect();
                let mut row = vec![0.0; names.len()];
                for _ in 0..el.count {
                    for (slot, p) in row.iter_mut().zip(&el.props) {
                        if let Property::Scalar(_, t) = p {
                            *slot = t.read(&mut r).map_err(|_| format("truncated vertex data"))?;
                        }
                    }
                    vertices.push(Point3::new(row[ix], row[iy], row[iz]));
                    for (s, &i) in scalars.iter_mut().zip(&extra) {
                        s.values.push(row[i]);
                    }
                }
            }
            "face" => {
                for _ in 0..el.count {
                    let mut tri = None;
                    for p in &el.props {
                        match p {
                            Property::List(name, c, i) => {
                                let n = c.read(&mut r).map_err(|_| format("truncated face data"))? as usize;
                                let idx: Vec<f64> = (0..n)
                                    .map(|_| i.read(&mut r).map_err(|_| format("truncated face data")))
                                    .collect::<Result<_>>()?;
                                if name == "vertex_indices" || name == "vertex_index" {
                                    if n != 3 {
                                        return Err(format(format!("face with {n} corners")));
                                    }
                                    if idx.iter().any(|&v| v < 0.0) {
                                        return Err(format("negative vertex index"));
                                    }
                                    tri = Some([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
                                }
                            }
                            Property::Scalar(_, t) => {
                                t.read(&mut r).map_err(|_| format("truncated face data"))?;
                            }
                        }
                    }
                    triangles.push(tri.ok_or_else(|| format("face element lacks vertex_indices"))?);
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar(_, t) => {
                                t.read(&mut r).map_err(|_| format("truncated data"))?;
                            }
                            Property::List(_, c, i) => {
                                let n = c.read(&mut r).map_err(|_| format("truncated data"))? as usize;
                                for _ in 0..n {
                                    i.read(&mut r).map_err(|_| format("truncated data"))?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mesh = TriangleMesh::new(vertices, triangles).map_err(|e| format(e.to_string()))?;
    Ok((mesh, scalars))
}

/// Reads `.obj` or `.ply` by extension.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "obj" => read_obj(path),
        "ply" => Ok(read_ply(path)?.0),
        other => Err(format(format!("unsupported mesh extension '{other}'"))),
    }
}

/// Writes `.obj` or `.ply` by extension; scalars are only kept in PLY.
pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh, scalars: &[VertexScalars]) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "obj" => write_obj(path, mesh),
        "ply" => write_ply(path, mesh, scalars),
        other => Err(format(format!("unsupported mesh extension '{other}'"))),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}
