//! Minimal PLY support for vertex clouds with scalar properties.
//!
//! Reading accepts `ascii` and `binary_little_endian` files whose first
//! element is `vertex`; later elements are ignored. Writing always emits
//! `float` properties.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::PointCloud4D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

/// Vertex table: property names and row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyTable {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl PlyTable {
    pub fn rows(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.values.len() / self.names.len()
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn row(&self, i: usize) -> &[f64] {
        let k = self.names.len();
        &self.values[i * k..(i + 1) * k]
    }
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

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("PLY: {}", msg.into()))
}

pub fn encode(names: &[&str], values: &[f64], encoding: PlyEncoding) -> Vec<u8> {
    let k = names.len();
    let rows = if k == 0 { 0 } else { values.len() / k };
    let mut out = Vec::new();
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let _ = write!(out, "ply\nformat {fmt} 1.0\nelement vertex {rows}\n");
    for n in names {
        let _ = writeln!(out, "property float {n}");
    }
    out.extend_from_slice(b"end_header\n");
    match encoding {
        PlyEncoding::Ascii => {
            for r in values.chunks_exact(k.max(1)) {
                let line: Vec<String> = r.iter().map(|v| format!("{}", *v as f32)).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for v in values {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<PlyTable> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| fmt_err("unterminated header"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map(|s| s.trim_end_matches('\r')).map_err(|_| fmt_err("non-UTF-8 header"))
    };
    if next_line()? != "ply" {
        return Err(fmt_err("missing 'ply' signature"));
    }
    let mut encoding = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    let mut seen_element = false;
    loop {
        let line = next_line()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", "ascii", _] => encoding = Some(PlyEncoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(PlyEncoding::BinaryLittleEndian),
            ["format", other, _] => return Err(fmt_err(format!("unsupported format {other}"))),
            ["element", name, n] => {
                if !seen_element && *name != "vertex" {
                    return Err(fmt_err("first element must be 'vertex'"));
                }
                in_vertex = !seen_element;
                seen_element = true;
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| fmt_err("bad vertex count"))?);
                }
            }
            ["property", "list", ..] if in_vertex => return Err(fmt_err("list properties on vertices are unsupported")),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| fmt_err(format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return Err(fmt_err(format!("unexpected header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| fmt_err("missing format line"))?;
    let count = count.ok_or_else(|| fmt_err("missing vertex element"))?;
    let body = &bytes[pos..];
    let k = props.len();
    let mut values = Vec::with_capacity(count * k);
    match encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| fmt_err("non-UTF-8 body"))?;
            let mut toks = text.split_whitespace();
            for _ in 0..count * k {
                let t = toks.next().ok_or_else(|| fmt_err("truncated ASCII body"))?;
                values.push(t.parse::<f64>().map_err(|_| fmt_err(format!("bad value {t:?}")))?);
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let stride: usize = props.iter().map(|p| p.1.size()).sum();
            if body.len() < stride * count {
                return Err(Error::Truncated { expected: pos + stride * count, found: bytes.len() });
            }
            for r in 0..count {
                let mut off = r * stride;
                for (_, s) in &props {
                    values.push(s.read_le(&body[off..]));
                    off += s.size();
                }
            }
        }
    }
    Ok(PlyTable { names: props.into_iter().map(|p| p.0).collect(), values })
}

pub fn write_table(path: impl AsRef<Path>, names: &[&str], values: &[f64], encoding: PlyEncoding) -> Result<()> {
    fs::write(path, encode(names, values, encoding))?;
    Ok(())
}

pub fn read_table(path: impl AsRef<Path>) -> Result<PlyTable> {
    decode(&fs::read(path)?)
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud4D, encoding: PlyEncoding) -> Result<()> {
    let flat: Vec<f64> = cloud.points().iter().flatten().copied().collect();
    write_table(path, &["x", "y", "z", "intensity"], &flat, encoding)
}

fn xyz_columns(t: &PlyTable) -> Result<[usize; 3]> {
    let col = |n: &str| t.column(n).ok_or_else(|| fmt_err(format!("missing property {n}")));
    Ok([col("x")?, col("y")?, col("z")?])
}

/// Reads `x, y, z, intensity`. A missing intensity property reads as zero.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud4D> {
    let t = read_table(path)?;
    let [x, y, z] = xyz_columns(&t)?;
    let i = t.column("intensity");
    let pts = (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            [row[x], row[y], row[z], i.map_or(0.0, |i| row[i])]
        })
        .collect();
    PointCloud4D::new(pts)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<Vec<[f64; 3]>> {
    let t = read_table(path)?;
    let [x, y, z] = xyz_columns(&t)?;
    Ok((0..t.rows()).map(|r| {
        let row = t.row(r);
        [row[x], row[y], row[z]]
    }).collect())
}
