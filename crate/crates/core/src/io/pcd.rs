use std::fmt::Write;

use super::{data_lines, parse_floats, tokens, ParseError};
use crate::cloud::{PointCloud, Precision};
use crate::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcdEncoding {
    Ascii,
    Binary,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PcdError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("binary body size mismatch: expected {expected} bytes, found {actual}")]
    BodySize { expected: usize, actual: usize },
    #[error("line {line}: unsupported type {ty}{size} for field `{field}`")]
    UnsupportedType {
        line: usize,
        field: String,
        ty: char,
        size: usize,
    },
    #[error("unsupported DATA encoding `{0}`")]
    UnsupportedEncoding(String),
    #[error("header declares {declared} points, body holds {actual}")]
    PointCount { declared: usize, actual: usize },
    #[error("required field `{0}` missing")]
    MissingField(&'static str),
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone)]
struct Field {
    name: String,
    size: usize,
    ty: char,
    count: usize,
    offset: usize,
}

impl Field {
    fn decode(&self, bytes: &[u8]) -> f64 {
        let b = &bytes[self.offset..self.offset + self.size];
        macro_rules! le {
            ($t:ty) => {
                <$t>::from_le_bytes(b.try_into().unwrap()) as f64
            };
        }
        match (self.ty, self.size) {
            ('F', 4) => le!(f32),
            ('F', 8) => le!(f64),
            ('I', 1) => le!(i8),
            ('I', 2) => le!(i16),
            ('I', 4) => le!(i32),
            ('I', 8) => le!(i64),
            ('U', 1) => le!(u8),
            ('U', 2) => le!(u16),
            ('U', 4) => le!(u32),
            ('U', 8) => le!(u64),
            _ => unreachable!("validated in header"),
        }
    }

    fn parse_ascii(&self, line: usize, col: usize, tok: &str) -> Result<f64, ParseError> {
        let bad = || ParseError::at(line, Some(col), format!("malformed value `{tok}` for field `{}`", self.name));
        match self.ty {
            'F' if self.size == 4 => tok.parse::<f32>().map(f64::from).map_err(|_| bad()),
            'F' => tok.parse::<f64>().map_err(|_| bad()),
            _ => tok.parse::<i128>().map(|v| v as f64).map_err(|_| bad()),
        }
    }
}

struct Header {
    fields: Vec<Field>,
    points: usize,
    encoding: PcdEncoding,
    body_offset: usize,
    body_line: usize,
}

impl Header {
    fn point_size(&self) -> usize {
        self.fields.iter().map(|f| f.size * f.count).sum()
    }

    fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PcdError> {
    let mut names: Option<(usize, Vec<String>)> = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut types: Option<Vec<char>> = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut width = None;
    let mut height = None;
    let mut points = None;
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |p| offset + p + 1);
        line_no += 1;
        let line = std::str::from_utf8(&bytes[offset..end])
            .map_err(|_| ParseError::at(line_no, None, "invalid UTF-8 in header"))?;
        offset = end;
        let toks = tokens(line);
        let Some(&(_, key)) = toks.first() else { continue };
        if key.starts_with('#') {
            continue;
        }
        let rest: Vec<_> = toks[1..].to_vec();
        let uints = |what: &str| -> Result<Vec<usize>, ParseError> {
            rest.iter()
                .map(|&(col, t)| {
                    t.parse::<usize>()
                        .map_err(|_| ParseError::at(line_no, Some(col), format!("malformed {what} `{t}`")))
                })
                .collect()
        };
        match key {
            "VERSION" | "VIEWPOINT" => {}
            "FIELDS" => names = Some((line_no, rest.iter().map(|t| t.1.to_string()).collect())),
            "SIZE" => sizes = Some(uints("SIZE")?),
            "COUNT" => counts = Some(uints("COUNT")?),
            "TYPE" => {
                types = Some(
                    rest.iter()
                        .map(|&(col, t)| match t {
                            "F" | "I" | "U" => Ok(t.chars().next().unwrap()),
                            _ => Err(ParseError::at(line_no, Some(col), format!("unknown TYPE `{t}`"))),
                        })
                        .collect::<Result<_, _>>()?,
                )
            }
            "WIDTH" => width = Some(uints("WIDTH")?.first().copied().unwrap_or(0)),
            "HEIGHT" => height = Some(uints("HEIGHT")?.first().copied().unwrap_or(0)),
            "POINTS" => points = Some(uints("POINTS")?.first().copied().unwrap_or(0)),
            "DATA" => {
                let encoding = match rest.first().map(|t| t.1) {
                    Some("ascii") => PcdEncoding::Ascii,
                    Some("binary") => PcdEncoding::Binary,
                    other => return Err(PcdError::UnsupportedEncoding(other.unwrap_or("").to_string())),
                };
                let (fields_line, names) =
                    names.ok_or_else(|| ParseError::at(line_no, None, "DATA before FIELDS"))?;
                let n = names.len();
                let sizes = sizes.unwrap_or_else(|| vec![4; n]);
                let types = types.unwrap_or_else(|| vec!['F'; n]);
                let counts = counts.unwrap_or_else(|| vec![1; n]);
                if sizes.len() != n || types.len() != n || counts.len() != n {
                    return Err(ParseError::at(
                        fields_line,
                        None,
                        "FIELDS, SIZE, TYPE and COUNT lengths differ",
                    )
                    .into());
                }
                let mut fields = Vec::with_capacity(n);
                let mut off = 0;
                for i in 0..n {
                    let ok = match types[i] {
                        'F' => matches!(sizes[i], 4 | 8),
                        _ => matches!(sizes[i], 1 | 2 | 4 | 8),
                    };
                    let coord = matches!(names[i].as_str(), "x" | "y" | "z");
                    if !ok || (coord && types[i] != 'F') || counts[i] == 0 {
                        return Err(PcdError::UnsupportedType {
                            line: fields_line,
                            field: names[i].clone(),
                            ty: types[i],
                            size: sizes[i],
                        });
                    }
                    fields.push(Field {
                        name: names[i].clone(),
                        size: sizes[i],
                        ty: types[i],
                        count: counts[i],
                        offset: off,
                    });
                    off += sizes[i] * counts[i];
                }
                let points = match (points, width, height) {
                    (Some(p), _, _) => p,
                    (None, Some(w), h) => w * h.unwrap_or(1),
                    _ => return Err(ParseError::at(line_no, None, "POINTS missing").into()),
                };
                if let (Some(w), Some(h)) = (width, height) {
                    if w * h != points {
                        return Err(ParseError::at(
                            line_no,
                            None,
                            format!("WIDTH x HEIGHT = {} but POINTS = {points}", w * h),
                        )
                        .into());
                    }
                }
                return Ok(Header {
                    fields,
                    points,
                    encoding,
                    body_offset: offset,
                    body_line: line_no + 1,
                });
            }
            other => {
                return Err(ParseError::at(line_no, Some(1), format!("unexpected header key `{other}`")).into())
            }
        }
    }
    Err(ParseError::at(line_no, None, "header ended without DATA line").into())
}

fn looks_like_pcd(bytes: &[u8]) -> bool {
    for line in bytes.split(|&b| b == b'\n') {
        let line = String::from_utf8_lossy(line);
        let t = line.trim_start();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        return t.starts_with(|c: char| c.is_ascii_uppercase());
    }
    false
}

fn read_xyz_text(bytes: &[u8]) -> Result<PointCloud, PcdError> {
    let mut points = Vec::new();
    let mut intensity = Vec::new();
    let mut width = None;
    for (no, line) in data_lines(bytes)? {
        let v = parse_floats(no, line, width)?;
        if !(v.len() == 3 || v.len() == 4) {
            return Err(ParseError::at(no, None, format!("expected 3 or 4 fields, found {}", v.len())).into());
        }
        width = Some(v.len());
        points.push(Point3::new(v[0], v[1], v[2]));
        if v.len() == 4 {
            intensity.push(v[3] as f32);
        }
    }
    Ok(PointCloud {
        points,
        intensity: (width == Some(4)).then_some(intensity),
        precision: Precision::F64,
    })
}

/// Reads a PCD v0.7 file (ASCII or binary) or plain `x y z [intensity]` text.
pub fn read_point_cloud(bytes: &[u8]) -> Result<PointCloud, PcdError> {
    if !looks_like_pcd(bytes) {
        return read_xyz_text(bytes);
    }
    let header = parse_header(bytes)?;
    let x = header.field("x").ok_or(PcdError::MissingField("x"))?.clone();
    let y = header.field("y").ok_or(PcdError::MissingField("y"))?.clone();
    let z = header.field("z").ok_or(PcdError::MissingField("z"))?.clone();
    let intensity_field = header.field("intensity").cloned();
    let unknown: Vec<_> = header
        .fields
        .iter()
        .map(|f| f.name.as_str())
        .filter(|n| !matches!(*n, "x" | "y" | "z" | "intensity"))
        .collect();
    if !unknown.is_empty() {
        log::warn!("ignoring PCD fields {unknown:?}");
    }
    let precision = if x.size == 8 { Precision::F64 } else { Precision::F32 };
    let body = &bytes[header.body_offset..];
    let mut points = Vec::with_capacity(header.points);
    let mut intensity = intensity_field.as_ref().map(|_| Vec::with_capacity(header.points));

    match header.encoding {
        PcdEncoding::Binary => {
            let stride = header.point_size();
            let expected = stride * header.points;
            if body.len() != expected {
                return Err(PcdError::BodySize {
                    expected,
                    actual: body.len(),
                });
            }
            for rec in body.chunks_exact(stride.max(1)).take(header.points) {
                points.push(Point3::new(x.decode(rec), y.decode(rec), z.decode(rec)));
                if let (Some(f), Some(out)) = (&intensity_field, intensity.as_mut()) {
                    out.push(f.decode(rec) as f32);
                }
            }
        }
        PcdEncoding::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| ParseError::at(header.body_line, None, "invalid UTF-8 in body"))?;
            let width: usize = header.fields.iter().map(|f| f.count).sum();
            // column index of each field's first value
            let mut starts = Vec::with_capacity(header.fields.len());
            let mut acc = 0;
            for f in &header.fields {
                starts.push(acc);
                acc += f.count;
            }
            let col_of = |name: &str| starts[header.fields.iter().position(|f| f.name == name).unwrap()];
            let (xc, yc, zc) = (col_of("x"), col_of("y"), col_of("z"));
            let ic = intensity_field.as_ref().map(|_| col_of("intensity"));
            let mut rows = 0;
            for (i, line) in text.lines().enumerate() {
                let no = header.body_line + i;
                let toks = tokens(line);
                if toks.is_empty() {
                    continue;
                }
                rows += 1;
                if rows > header.points {
                    continue;
                }
                if toks.len() != width {
                    return Err(ParseError::at(no, None, format!("expected {width} values, found {}", toks.len())).into());
                }
                let v = |f: &Field, c: usize| f.parse_ascii(no, toks[c].0, toks[c].1);
                points.push(Point3::new(v(&x, xc)?, v(&y, yc)?, v(&z, zc)?));
                if let (Some(f), Some(c), Some(out)) = (&intensity_field, ic, intensity.as_mut()) {
                    out.push(v(f, c)? as f32);
                }
            }
            if rows != header.points {
                return Err(PcdError::PointCount {
                    declared: header.points,
                    actual: rows,
                });
            }
        }
    }
    let cloud = PointCloud {
        points,
        intensity,
        precision,
    };
    if let Some(index) = cloud.first_non_finite() {
        return Err(PcdError::NonFinite { index });
    }
    Ok(cloud)
}

/// Encodes a cloud as PCD v0.7. Coordinates are stored as float32 unless the
/// cloud carries [`Precision::F64`]; intensity is always float32.
pub fn write_point_cloud(pc: &PointCloud, encoding: PcdEncoding) -> Vec<u8> {
    let wide = pc.precision == Precision::F64;
    let cs = if wide { 8 } else { 4 };
    let has_i = pc.intensity.is_some();
    let mut h = String::from("# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n");
    let n = pc.points.len();
    if has_i {
        let _ = writeln!(h, "FIELDS x y z intensity\nSIZE {cs} {cs} {cs} 4\nTYPE F F F F\nCOUNT 1 1 1 1");
    } else {
        let _ = writeln!(h, "FIELDS x y z\nSIZE {cs} {cs} {cs}\nTYPE F F F\nCOUNT 1 1 1");
    }
    let _ = writeln!(h, "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}");
    let intensity = |i: usize| pc.intensity.as_ref().map(|v| v[i]);
    match encoding {
        PcdEncoding::Ascii => {
            h.push_str("DATA ascii\n");
            for (i, p) in pc.points.iter().enumerate() {
                if wide {
                    let _ = write!(h, "{} {} {}", p.x, p.y, p.z);
                } else {
                    let _ = write!(h, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
                }
                if let Some(v) = intensity(i) {
                    let _ = write!(h, " {v}");
                }
                h.push('\n');
            }
            h.into_bytes()
        }
        PcdEncoding::Binary => {
            h.push_str("DATA binary\n");
            let mut out = h.into_bytes();
            out.reserve(n * (3 * cs + if has_i { 4 } else { 0 }));
            for (i, p) in pc.points.iter().enumerate() {
                for c in p.iter() {
                    if wide {
                        out.extend_from_slice(&c.to_le_bytes());
                    } else {
                        out.extend_from_slice(&(*c as f32).to_le_bytes());
                    }
                }
                if let Some(v) = intensity(i) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out
        }
    }
}
