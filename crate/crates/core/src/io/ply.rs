use std::io::{BufRead, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, WriteBytesExt};
use nalgebra::Vector3;

use super::IoError;
use crate::fusion::{FusedPoint, PointCloud, WORLD_FRAME};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    Little,
    Big,
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

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode<B: ByteOrder>(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => B::read_i16(b) as f64,
            Self::U16 => B::read_u16(b) as f64,
            Self::I32 => B::read_i32(b) as f64,
            Self::U32 => B::read_u32(b) as f64,
            Self::F32 => B::read_f32(b) as f64,
            Self::F64 => B::read_f64(b),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    /// `None` type marks a list property.
    props: Vec<(String, Option<Scalar>)>,
}

fn bad(detail: impl Into<String>) -> IoError {
    IoError::format("PLY", detail)
}

const OPTIONAL: [&str; 3] = [
    "error_m",
    "predicted_error_mean_px",
    "predicted_error_std_px",
];

/// Binary little-endian PLY. Optional per-point values are written as a
/// column when any point has one (NaN where missing).
pub fn write_ply<W: Write>(w: &mut W, cloud: &PointCloud) -> Result<(), IoError> {
    let getters: [fn(&FusedPoint) -> Option<f32>; 3] = [
        |p| p.error_m,
        |p| p.predicted_error_mean_px,
        |p| p.predicted_error_std_px,
    ];
    let present: Vec<bool> = getters
        .iter()
        .map(|g| cloud.points.iter().any(|p| g(p).is_some()))
        .collect();
    writeln!(
        w,
        "ply\nformat binary_little_endian 1.0\ncomment frame {}",
        cloud.frame
    )?;
    writeln!(w, "element vertex {}", cloud.points.len())?;
    for name in ["x", "y", "z"] {
        writeln!(w, "property double {name}")?;
    }
    for name in ["source_image", "source_col", "source_row"] {
        writeln!(w, "property uint {name}")?;
    }
    writeln!(
        w,
        "property uchar num_rays\nproperty float median_angle_deg\nproperty float dim_energy"
    )?;
    for (name, _) in OPTIONAL.iter().zip(&present).filter(|(_, &on)| on) {
        writeln!(w, "property float {name}")?;
    }
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        for c in p.position.iter() {
            w.write_f64::<LittleEndian>(*c)?;
        }
        w.write_u32::<LittleEndian>(p.source_image)?;
        w.write_u32::<LittleEndian>(p.source_pixel[0])?;
        w.write_u32::<LittleEndian>(p.source_pixel[1])?;
        w.write_u8(p.num_rays)?;
        w.write_f32::<LittleEndian>(p.median_angle)?;
        w.write_f32::<LittleEndian>(p.energy)?;
        for (g, _) in getters.iter().zip(&present).filter(|(_, &on)| on) {
            w.write_f32::<LittleEndian>(g(p).unwrap_or(f32::NAN))?;
        }
    }
    Ok(())
}

fn parse_header<R: BufRead>(r: &mut R) -> Result<(Format, String, Vec<Element>), IoError> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<(), IoError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(bad("missing 'ply' magic"));
    }
    let mut format = None;
    let mut frame = WORLD_FRAME.to_string();
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(&mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::Little,
                    "binary_big_endian" => Format::Big,
                    other => return Err(bad(format!("unknown format {other}"))),
                })
            }
            ["comment", "frame", name] => frame = name.to_string(),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| bad(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| bad("property before element"))?
                .props
                .push((name.to_string(), None)),
            ["property", ty, name] => {
                let ty =
                    Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?
                    .props
                    .push((name.to_string(), Some(ty)));
            }
            _ => {
                return Err(bad(format!(
                    "unrecognised header line '{}'",
                    line.trim_end()
                )))
            }
        }
    }
    Ok((
        format.ok_or_else(|| bad("missing format line"))?,
        frame,
        elements,
    ))
}

fn point_from(values: &[f64], index: &[Option<usize>; 12]) -> FusedPoint {
    let get = |k: usize| index[k].map(|i| values[i]);
    let opt = |k: usize| get(k).map(|v| v as f32).filter(|v| !v.is_nan());
    FusedPoint {
        position: Vector3::new(get(0).unwrap(), get(1).unwrap(), get(2).unwrap()),
        source_image: get(3).unwrap_or(0.0) as u32,
        source_pixel: [get(4).unwrap_or(0.0) as u32, get(5).unwrap_or(0.0) as u32],
        num_rays: get(6).unwrap_or(0.0) as u8,
        median_angle: get(7).map_or(f32::NAN, |v| v as f32),
        energy: get(8).map_or(f32::NAN, |v| v as f32),
        error_m: opt(9),
        predicted_error_mean_px: opt(10),
        predicted_error_std_px: opt(11),
        ..FusedPoint::default()
    }
}

/// Reads the `vertex` element of an ASCII or binary PLY. Only `x`, `y`, `z`
/// are required; missing metrics default to zero (counts) or NaN (values).
pub fn read_ply<R: BufRead>(r: &mut R) -> Result<PointCloud, IoError> {
    let (format, frame, elements) = parse_header(r)?;
    const NAMES: [&str; 12] = [
        "x",
        "y",
        "z",
        "source_image",
        "source_col",
        "source_row",
        "num_rays",
        "median_angle_deg",
        "dim_energy",
        "error_m",
        "predicted_error_mean_px",
        "predicted_error_std_px",
    ];
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| bad("no vertex element"))?;
    let mut text = String::new();
    if format == Format::Ascii {
        r.read_to_string(&mut text)?;
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    for e in &elements[..vi] {
        if format == Format::Ascii {
            for _ in 0..e.count {
                lines.next().ok_or_else(|| bad("truncated element"))?;
            }
        } else {
            if e.props.iter().any(|p| p.1.is_none()) {
                return Err(bad(format!(
                    "cannot skip list element '{}' before vertices",
                    e.name
                )));
            }
            let size: usize = e.props.iter().map(|p| p.1.expect("scalar").size()).sum();
            std::io::copy(
                &mut r.by_ref().take((size * e.count) as u64),
                &mut std::io::sink(),
            )?;
        }
    }
    let v = &elements[vi];
    if v.props.iter().any(|p| p.1.is_none()) {
        return Err(bad("list properties on vertices are not supported"));
    }
    let mut index = [None; 12];
    for (k, name) in NAMES.iter().enumerate() {
        index[k] = v.props.iter().position(|p| p.0 == *name);
    }
    if index[..3].iter().any(Option::is_none) {
        return Err(bad("vertices need x, y and z"));
    }
    let types: Vec<Scalar> = v.props.iter().map(|p| p.1.expect("scalar")).collect();
    let stride: usize = types.iter().map(|t| t.size()).sum();
    let mut values = vec![0.0; types.len()];
    let mut points = Vec::with_capacity(v.count);
    let mut buf = vec![0u8; stride];
    for _ in 0..v.count {
        if format == Format::Ascii {
            let line = lines.next().ok_or_else(|| bad("truncated vertex list"))?;
            let mut it = line.split_whitespace();
            for slot in values.iter_mut() {
                let tok = it.next().ok_or_else(|| bad("short vertex line"))?;
                *slot = tok.parse().map_err(|_| bad(format!("bad number {tok}")))?;
            }
        } else {
            r.read_exact(&mut buf)?;
            let mut off = 0;
            for (slot, t) in values.iter_mut().zip(&types) {
                let b = &buf[off..off + t.size()];
                *slot = if format == Format::Little {
                    t.decode::<LittleEndian>(b)
                } else {
                    t.decode::<BigEndian>(b)
                };
                off += t.size();
            }
        }
        points.push(point_from(&values, &index));
    }
    Ok(PointCloud { frame, points })
}

pub fn save_ply(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let mut w = super::create(path)?;
    write_ply(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn load_ply(path: &Path) -> Result<PointCloud, IoError> {
    read_ply(&mut super::open(path)?)
}
