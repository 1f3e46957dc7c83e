//! Binary little-endian PLY: scenes (float properties) and sparse point
//! clouds (float xyz, optional uchar rgb).

use crate::error::{Error, Result};
use crate::model::{Gaussian, SceneModel, FEATURE_DIM};

pub const SCENE_VERSION_COMMENT: &str = "splatseg_version 1";

/// Scene property names in on-disk order.
pub fn scene_properties() -> Vec<String> {
    let mut names: Vec<String> = [
        "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "red_f",
        "green_f", "blue_f",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend((0..FEATURE_DIM).map(|k| format!("seg_{k}")));
    names
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

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    ty: Scalar,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    /// Byte offset of the `element` header line.
    header_offset: usize,
}

impl Element {
    fn row_size(&self) -> usize {
        self.props.iter().map(|p| p.ty.size()).sum()
    }
}

#[derive(Debug)]
struct Ply<'a> {
    elements: Vec<Element>,
    comments: Vec<String>,
    /// Payload of each element, in header order.
    payloads: Vec<&'a [u8]>,
    /// Byte offset of each payload within the file.
    payload_offsets: Vec<usize>,
}

/// Next `\n`-terminated header line and its start offset.
fn header_line<'a>(bytes: &'a [u8], offset: &mut usize, context: &str) -> Result<(usize, &'a str)> {
    let start = *offset;
    let rest = &bytes[start..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(context, start, "header ends without end_header"))?;
    *offset = start + end + 1;
    let line =
        std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse(context, start, "header line is not UTF-8"))?;
    Ok((start, line.trim_end_matches('\r')))
}

fn parse<'a>(bytes: &'a [u8], context: &str) -> Result<Ply<'a>> {
    let err = |offset: usize, msg: String| Error::parse(context, offset, msg);
    let mut offset = 0;
    let next_line = |offset: &mut usize| header_line(bytes, offset, context);

    let (at, magic) = next_line(&mut offset)?;
    if magic != "ply" {
        return Err(err(at, "missing `ply` magic".into()));
    }
    let (at, format) = next_line(&mut offset)?;
    let words: Vec<&str> = format.split_whitespace().collect();
    if words.first() != Some(&"format") {
        return Err(err(at, "expected a format line".into()));
    }
    if words.get(1) != Some(&"binary_little_endian") || words.len() != 3 {
        return Err(err(at, format!("unsupported format `{}`", words[1..].join(" "))));
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut comments = Vec::new();
    loop {
        let (at, line) = next_line(&mut offset)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] => comments.push(line["comment".len()..].trim().to_string()),
            ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(at, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    header_offset: at,
                });
            }
            ["property", "list", ..] => return Err(err(at, "list properties are not supported".into())),
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| err(at, format!("unknown property type `{ty}`")))?;
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(at, "property before any element".into()))?;
                if element.props.iter().any(|p| p.name == *name) {
                    return Err(err(at, format!("duplicate property `{name}`")));
                }
                element.props.push(Property {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(err(at, format!("unrecognized header line `{line}`"))),
        }
    }

    let mut payloads = Vec::with_capacity(elements.len());
    let mut payload_offsets = Vec::with_capacity(elements.len());
    for e in &elements {
        let need = e
            .count
            .checked_mul(e.row_size())
            .ok_or_else(|| err(e.header_offset, format!("element `{}` is too large", e.name)))?;
        let available = bytes.len() - offset;
        if need > available {
            return Err(err(
                bytes.len(),
                format!("truncated `{}` payload: expected {need} bytes, got {available}", e.name),
            ));
        }
        payloads.push(&bytes[offset..offset + need]);
        payload_offsets.push(offset);
        offset += need;
    }
    if offset != bytes.len() {
        return Err(err(
            offset,
            format!("{} trailing bytes after payload", bytes.len() - offset),
        ));
    }
    Ok(Ply {
        elements,
        comments,
        payloads,
        payload_offsets,
    })
}

impl Ply<'_> {
    fn element(&self, name: &str, context: &str) -> Result<usize> {
        self.elements.iter().position(|e| e.name == name).ok_or_else(|| {
            let found: Vec<&str> = self.elements.iter().map(|e| e.name.as_str()).collect();
            Error::parse(context, 0, format!("no `{name}` element (found: {})", found.join(", ")))
        })
    }

    /// Column layout for the requested properties: (byte offset in row, type).
    fn columns(&self, element: usize, names: &[&str], context: &str) -> Result<Vec<(usize, Scalar)>> {
        let e = &self.elements[element];
        let mut missing = Vec::new();
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let mut at = 0;
            let mut found = None;
            for p in &e.props {
                if p.name == *name {
                    found = Some((at, p.ty));
                }
                at += p.ty.size();
            }
            match found {
                Some(c) => cols.push(c),
                None => missing.push(*name),
            }
        }
        if !missing.is_empty() {
            return Err(Error::parse(
                context,
                e.header_offset,
                format!("element `{}` is missing properties: {}", e.name, missing.join(", ")),
            ));
        }
        Ok(cols)
    }

    /// Rows of the element as f64, reading only the given columns.
    fn rows(&self, element: usize, cols: &[(usize, Scalar)], context: &str) -> Result<Vec<Vec<f64>>> {
        let e = &self.elements[element];
        let size = e.row_size();
        let base = self.payload_offsets[element];
        let mut out = Vec::with_capacity(e.count);
        for (r, row) in self.payloads[element]
            .chunks_exact(size.max(1))
            .take(e.count)
            .enumerate()
        {
            let mut vals = Vec::with_capacity(cols.len());
            for &(at, ty) in cols {
                let v = ty.read(&row[at..]);
                if !v.is_finite() {
                    return Err(Error::parse(context, base + r * size + at, "non-finite value"));
                }
                vals.push(v);
            }
            out.push(vals);
        }
        Ok(out)
    }
}

fn header(comment: Option<&str>, count: usize, props: &[(&str, &str)]) -> String {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    if let Some(c) = comment {
        h.push_str(&format!("comment {c}\n"));
    }
    h.push_str(&format!("element vertex {count}\n"));
    for (ty, name) in props {
        h.push_str(&format!("property {ty} {name}\n"));
    }
    h.push_str("end_header\n");
    h
}

/// Serializes every parameter as float32.
pub fn encode_scene(scene: &SceneModel) -> Vec<u8> {
    let names = scene_properties();
    let props: Vec<(&str, &str)> = names.iter().map(|n| ("float", n.as_str())).collect();
    let mut out = header(Some(SCENE_VERSION_COMMENT), scene.len(), &props).into_bytes();
    out.reserve(scene.len() * names.len() * 4);
    for g in &scene.gaussians {
        let values = g
            .position
            .iter()
            .chain(&g.log_scale)
            .chain(&g.rotation)
            .chain(std::iter::once(&g.opacity_logit))
            .chain(&g.color)
            .chain(&g.feature);
        for v in values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_scene(bytes: &[u8]) -> Result<SceneModel> {
    const CONTEXT: &str = "scene PLY";
    let ply = parse(bytes, CONTEXT)?;
    if !ply.comments.iter().any(|c| c == SCENE_VERSION_COMMENT) {
        return Err(Error::parse(
            CONTEXT,
            0,
            format!("missing `comment {SCENE_VERSION_COMMENT}`"),
        ));
    }
    let vertex = ply.element("vertex", CONTEXT)?;
    let names = scene_properties();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cols = ply.columns(vertex, &refs, CONTEXT)?;
    let gaussians = ply
        .rows(vertex, &cols, CONTEXT)?
        .into_iter()
        .map(|v| {
            let mut g = Gaussian::new([v[0], v[1], v[2]]);
            g.log_scale = [v[3], v[4], v[5]];
            g.rotation = [v[6], v[7], v[8], v[9]];
            g.opacity_logit = v[10];
            g.color = [v[11], v[12], v[13]];
            g.feature.copy_from_slice(&v[14..14 + FEATURE_DIM]);
            g
        })
        .collect();
    SceneModel::new(gaussians)
}

/// Float xyz with uchar rgb when colors are given (channels in [0, 1]).
pub fn encode_points(points: &[[f64; 3]], colors: Option<&[[f64; 3]]>) -> Vec<u8> {
    let mut props = vec![("float", "x"), ("float", "y"), ("float", "z")];
    if colors.is_some() {
        props.extend([("uchar", "red"), ("uchar", "green"), ("uchar", "blue")]);
    }
    let mut out = header(None, points.len(), &props).into_bytes();
    for (i, p) in points.iter().enumerate() {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(c) = colors {
            out.extend(c[i].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
    }
    out
}

/// Point positions with optional per-point colors in [0, 1].
pub type PointCloud = (Vec<[f64; 3]>, Option<Vec<[f64; 3]>>);

/// Points and, when the file has `red`/`green`/`blue`, colors scaled to [0, 1].
pub fn decode_points(bytes: &[u8]) -> Result<PointCloud> {
    const CONTEXT: &str = "points PLY";
    let ply = parse(bytes, CONTEXT)?;
    let vertex = ply.element("vertex", CONTEXT)?;
    let xyz = ply.columns(vertex, &["x", "y", "z"], CONTEXT)?;
    let points = ply
        .rows(vertex, &xyz, CONTEXT)?
        .into_iter()
        .map(|v| [v[0], v[1], v[2]])
        .collect();
    let has_color = ply.elements[vertex].props.iter().any(|p| p.name == "red");
    let colors = if has_color {
        let rgb = ply.columns(vertex, &["red", "green", "blue"], CONTEXT)?;
        let scale = match ply.elements[vertex]
            .props
            .iter()
            .find(|p| p.name == "red")
            .map(|p| p.ty)
        {
            Some(Scalar::F32 | Scalar::F64) => 1.0,
            Some(Scalar::U16) => 65535.0,
            _ => 255.0,
        };
        Some(
            ply.rows(vertex, &rgb, CONTEXT)?
                .into_iter()
                .map(|v| [v[0] / scale, v[1] / scale, v[2] / scale])
                .collect(),
        )
    } else {
        None
    };
    Ok((points, colors))
}
