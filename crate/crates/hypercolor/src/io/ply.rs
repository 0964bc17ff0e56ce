//! PLY reading and writing, ascii and binary-little-endian.
//!
//! Clouds: `element vertex` with `float x y z` and optional
//! `uchar red green blue` (mapped to unit scale on load). Meshes add
//! `element face` with `property list uchar int vertex_indices`. Writers are
//! byte-stable for fixed input; colors are encoded as `round(c * 255)`
//! clamped to `[0, 255]`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::color::ColorSpaceTag;
use crate::meshgen::TriangleMesh;
use crate::{Error, Result};

use super::{CloudData, ColoredPointCloud, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(ScalarType),
    List(ScalarType, ScalarType),
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

struct Header {
    format: PlyFormat,
    elements: Vec<ElementDef>,
    /// Number of header lines consumed (for ascii error locations).
    lines: usize,
    /// Bytes consumed by the header.
    bytes: usize,
}

fn parse_err(path: &Path, location: String, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location,
        message,
    }
}

fn next_header_line<R: BufRead>(
    reader: &mut R,
    path: &Path,
    lines: &mut usize,
    bytes: &mut usize,
) -> Result<String> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 {
        return Err(parse_err(
            path,
            format!("line {}", *lines + 1),
            "unexpected end of file in header".into(),
        ));
    }
    *lines += 1;
    *bytes += n;
    Ok(line.trim_end().to_string())
}

fn read_header<R: BufRead>(reader: &mut R, path: &Path) -> Result<Header> {
    let mut lines = 0usize;
    let mut bytes = 0usize;

    let magic = next_header_line(reader, path, &mut lines, &mut bytes)?;
    if magic != "ply" {
        return Err(parse_err(
            path,
            "line 1".into(),
            format!("expected `ply` magic, got `{magic}`"),
        ));
    }
    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        let line = next_header_line(reader, path, &mut lines, &mut bytes)?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = match parts.next() {
                    Some("ascii") => Some(PlyFormat::Ascii),
                    Some("binary_little_endian") => Some(PlyFormat::BinaryLe),
                    other => {
                        return Err(parse_err(
                            path,
                            format!("line {lines}"),
                            format!("unsupported format {other:?}"),
                        ))
                    }
                };
            }
            Some("element") => {
                let name = parts.next().unwrap_or("").to_string();
                let count: usize = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| {
                        parse_err(path, format!("line {lines}"), "bad element count".into())
                    })?;
                elements.push(ElementDef {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(|| {
                    parse_err(
                        path,
                        format!("line {lines}"),
                        "property before any element".into(),
                    )
                })?;
                let first = parts.next().unwrap_or("");
                let kind = if first == "list" {
                    let count_ty = parts.next().unwrap_or("");
                    let item_ty = parts.next().unwrap_or("");
                    match (ScalarType::parse(count_ty), ScalarType::parse(item_ty)) {
                        (Some(c), Some(i)) => PropertyKind::List(c, i),
                        _ => {
                            return Err(parse_err(
                                path,
                                format!("line {lines}"),
                                format!("unsupported list types `{count_ty} {item_ty}`"),
                            ))
                        }
                    }
                } else {
                    match ScalarType::parse(first) {
                        Some(t) => PropertyKind::Scalar(t),
                        None => {
                            let name = parts.next().unwrap_or("?");
                            return Err(parse_err(
                                path,
                                format!("line {lines}"),
                                format!("unsupported property type `{first}` for `{name}`"),
                            ));
                        }
                    }
                };
                let name = parts.next().unwrap_or("").to_string();
                element.properties.push(Property { name, kind });
            }
            Some("end_header") => break,
            other => {
                return Err(parse_err(
                    path,
                    format!("line {lines}"),
                    format!("unexpected header token {other:?}"),
                ))
            }
        }
    }
    let format = format.ok_or_else(|| {
        parse_err(path, "header".into(), "missing format declaration".into())
    })?;
    Ok(Header {
        format,
        elements,
        lines,
        bytes,
    })
}

/// One parsed element body: scalar values per row, lists per row.
struct ElementBody {
    /// scalar property name -> column of values (as f64)
    scalars: Vec<Vec<f64>>,
    /// list property index within the element -> per-row lists
    lists: Vec<Vec<Vec<i64>>>,
}

fn read_element_ascii<R: BufRead>(
    reader: &mut R,
    def: &ElementDef,
    path: &Path,
    line_no: &mut usize,
) -> Result<ElementBody> {
    let mut scalars: Vec<Vec<f64>> = def.properties.iter().map(|_| Vec::new()).collect();
    let mut lists: Vec<Vec<Vec<i64>>> = def.properties.iter().map(|_| Vec::new()).collect();
    for _ in 0..def.count {
        let mut line = String::new();
        let n = reader.read_line(&mut line)?;
        *line_no += 1;
        if n == 0 {
            return Err(parse_err(
                path,
                format!("line {line_no}"),
                format!(
                    "file ended before {} rows of element `{}` were read",
                    def.count, def.name
                ),
            ));
        }
        let mut tokens = line.split_whitespace();
        for (pi, prop) in def.properties.iter().enumerate() {
            match &prop.kind {
                PropertyKind::Scalar(_) => {
                    let tok = tokens.next().ok_or_else(|| {
                        parse_err(
                            path,
                            format!("line {line_no}"),
                            format!("truncated row: missing value for `{}`", prop.name),
                        )
                    })?;
                    let v: f64 = tok.parse().map_err(|_| {
                        parse_err(
                            path,
                            format!("line {line_no}"),
                            format!("bad number `{tok}` for `{}`", prop.name),
                        )
                    })?;
                    scalars[pi].push(v);
                }
                PropertyKind::List(_, _) => {
                    let count_tok = tokens.next().ok_or_else(|| {
                        parse_err(
                            path,
                            format!("line {line_no}"),
                            format!("truncated row: missing list count for `{}`", prop.name),
                        )
                    })?;
                    let count: usize = count_tok.parse().map_err(|_| {
                        parse_err(
                            path,
                            format!("line {line_no}"),
                            format!("bad list count `{count_tok}`"),
                        )
                    })?;
                    let mut items = Vec::with_capacity(count);
                    for _ in 0..count {
                        let tok = tokens.next().ok_or_else(|| {
                            parse_err(
                                path,
                                format!("line {line_no}"),
                                format!("truncated list for `{}`", prop.name),
                            )
                        })?;
                        let v: i64 = tok.parse().map_err(|_| {
                            parse_err(
                                path,
                                format!("line {line_no}"),
                                format!("bad list item `{tok}`"),
                            )
                        })?;
                        items.push(v);
                    }
                    lists[pi].push(items);
                }
            }
        }
        if tokens.next().is_some() {
            return Err(parse_err(
                path,
                format!("line {line_no}"),
                format!("extra values after element `{}` row", def.name),
            ));
        }
    }
    Ok(ElementBody { scalars, lists })
}

fn read_scalar_binary<R: Read>(reader: &mut R, ty: ScalarType) -> std::io::Result<f64> {
    Ok(match ty {
        ScalarType::I8 => reader.read_i8()? as f64,
        ScalarType::U8 => reader.read_u8()? as f64,
        ScalarType::I16 => reader.read_i16::<LittleEndian>()? as f64,
        ScalarType::U16 => reader.read_u16::<LittleEndian>()? as f64,
        ScalarType::I32 => reader.read_i32::<LittleEndian>()? as f64,
        ScalarType::U32 => reader.read_u32::<LittleEndian>()? as f64,
        ScalarType::F32 => reader.read_f32::<LittleEndian>()? as f64,
        ScalarType::F64 => reader.read_f64::<LittleEndian>()?,
    })
}

fn read_element_binary<R: Read>(
    reader: &mut R,
    def: &ElementDef,
    path: &Path,
    byte_offset: &mut usize,
) -> Result<ElementBody> {
    let mut scalars: Vec<Vec<f64>> = def.properties.iter().map(|_| Vec::new()).collect();
    let mut lists: Vec<Vec<Vec<i64>>> = def.properties.iter().map(|_| Vec::new()).collect();
    let eof = |offset: usize, what: &str| {
        parse_err(
            path,
            format!("byte {offset}"),
            format!("unexpected end of file while reading {what}"),
        )
    };
    for _ in 0..def.count {
        for (pi, prop) in def.properties.iter().enumerate() {
            match &prop.kind {
                PropertyKind::Scalar(ty) => {
                    let v = read_scalar_binary(reader, *ty)
                        .map_err(|_| eof(*byte_offset, &prop.name))?;
                    *byte_offset += ty.size();
                    scalars[pi].push(v);
                }
                PropertyKind::List(cty, ity) => {
                    let count = read_scalar_binary(reader, *cty)
                        .map_err(|_| eof(*byte_offset, &prop.name))?
                        as usize;
                    *byte_offset += cty.size();
                    let mut items = Vec::with_capacity(count);
                    for _ in 0..count {
                        let v = read_scalar_binary(reader, *ity)
                            .map_err(|_| eof(*byte_offset, &prop.name))?;
                        *byte_offset += ity.size();
                        items.push(v as i64);
                    }
                    lists[pi].push(items);
                }
            }
        }
    }
    Ok(ElementBody { scalars, lists })
}

struct ParsedPly {
    header: Header,
    bodies: Vec<ElementBody>,
}

fn parse_ply(path: &Path) -> Result<ParsedPly> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_header(&mut reader, path)?;
    let mut bodies = Vec::with_capacity(header.elements.len());
    match header.format {
        PlyFormat::Ascii => {
            let mut line_no = header.lines;
            for def in &header.elements {
                bodies.push(read_element_ascii(&mut reader, def, path, &mut line_no)?);
            }
        }
        PlyFormat::BinaryLe => {
            let mut byte_offset = header.bytes;
            for def in &header.elements {
                bodies.push(read_element_binary(&mut reader, def, path, &mut byte_offset)?);
            }
        }
    }
    Ok(ParsedPly { header, bodies })
}

fn column<'a>(
    def: &ElementDef,
    body: &'a ElementBody,
    name: &str,
    path: &Path,
    want_float: bool,
) -> Result<Option<&'a Vec<f64>>> {
    for (pi, prop) in def.properties.iter().enumerate() {
        if prop.name == name {
            match &prop.kind {
                PropertyKind::Scalar(ty) => {
                    let ok = if want_float {
                        matches!(ty, ScalarType::F32 | ScalarType::F64)
                    } else {
                        matches!(ty, ScalarType::U8)
                    };
                    if !ok {
                        return Err(parse_err(
                            path,
                            "element vertex".into(),
                            format!("unsupported type {ty:?} for property `{name}`"),
                        ));
                    }
                    return Ok(Some(&body.scalars[pi]));
                }
                PropertyKind::List(_, _) => {
                    return Err(parse_err(
                        path,
                        "element vertex".into(),
                        format!("property `{name}` must be scalar, found list"),
                    ))
                }
            }
        }
    }
    Ok(None)
}

fn extract_vertices(
    parsed: &ParsedPly,
    path: &Path,
) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    let (def, body) = parsed
        .header
        .elements
        .iter()
        .zip(&parsed.bodies)
        .find(|(d, _)| d.name == "vertex")
        .ok_or_else(|| parse_err(path, "header".into(), "no vertex element".into()))?;
    if def.count == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut positions = Array2::zeros((def.count, 3));
    for (j, name) in ["x", "y", "z"].iter().enumerate() {
        let col = column(def, body, name, path, true)?.ok_or_else(|| {
            parse_err(
                path,
                "element vertex".into(),
                format!("missing property `{name}`"),
            )
        })?;
        for (i, v) in col.iter().enumerate() {
            positions[[i, j]] = *v;
        }
    }
    let reds = column(def, body, "red", path, false)?;
    let colors = match reds {
        Some(r) => {
            let g = column(def, body, "green", path, false)?.ok_or_else(|| {
                parse_err(path, "element vertex".into(), "missing `green`".into())
            })?;
            let b = column(def, body, "blue", path, false)?.ok_or_else(|| {
                parse_err(path, "element vertex".into(), "missing `blue`".into())
            })?;
            let mut colors = Array2::zeros((def.count, 3));
            for i in 0..def.count {
                colors[[i, 0]] = r[i] / 255.0;
                colors[[i, 1]] = g[i] / 255.0;
                colors[[i, 2]] = b[i] / 255.0;
            }
            Some(colors)
        }
        None => None,
    };
    Ok((positions, colors))
}

pub(super) fn load_cloud_ply(path: &Path) -> Result<CloudData> {
    let parsed = parse_ply(path)?;
    let (positions, colors) = extract_vertices(&parsed, path)?;
    Ok(match colors {
        Some(colors) => CloudData::Colored(ColoredPointCloud::new(
            positions,
            colors,
            ColorSpaceTag::RgbUnit,
        )?),
        None => CloudData::Plain(PointCloud::new(positions)?),
    })
}

/// Loads a triangle mesh (vertex positions, optional vertex colors, faces).
pub fn load_mesh_ply(path: &Path) -> Result<TriangleMesh> {
    let parsed = parse_ply(path)?;
    let (vertices, colors) = extract_vertices(&parsed, path)?;
    let (fdef, fbody) = parsed
        .header
        .elements
        .iter()
        .zip(&parsed.bodies)
        .find(|(d, _)| d.name == "face")
        .ok_or_else(|| parse_err(path, "header".into(), "no face element".into()))?;
    let list_idx = fdef
        .properties
        .iter()
        .position(|p| matches!(p.kind, PropertyKind::List(_, _)))
        .ok_or_else(|| {
            parse_err(path, "element face".into(), "no index list property".into())
        })?;
    let mut faces = Vec::with_capacity(fdef.count);
    for (i, items) in fbody.lists[list_idx].iter().enumerate() {
        if items.len() != 3 {
            return Err(parse_err(
                path,
                format!("face {i}"),
                format!("only triangles are supported, got {} indices", items.len()),
            ));
        }
        faces.push([items[0] as u32, items[1] as u32, items[2] as u32]);
    }
    TriangleMesh::new(vertices, faces, colors)
}

fn color_byte(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

fn write_vertex_header<W: Write>(
    w: &mut W,
    binary: bool,
    count: usize,
    with_colors: bool,
) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    if binary {
        writeln!(w, "format binary_little_endian 1.0")?;
    } else {
        writeln!(w, "format ascii 1.0")?;
    }
    writeln!(w, "element vertex {count}")?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if with_colors {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    Ok(())
}

fn write_vertex_row<W: Write>(
    w: &mut W,
    binary: bool,
    p: [f64; 3],
    color: Option<[f64; 3]>,
) -> std::io::Result<()> {
    if binary {
        for v in p {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        if let Some(c) = color {
            for v in c {
                w.write_u8(color_byte(v))?;
            }
        }
    } else {
        write!(w, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
        if let Some(c) = color {
            write!(w, " {} {} {}", color_byte(c[0]), color_byte(c[1]), color_byte(c[2]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes a cloud as PLY. Colors are converted to unit sRGB and encoded as
/// 8-bit channels.
pub fn save_cloud_ply(cloud: &CloudData, path: &Path, binary: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let unit;
    let (positions, colors) = match cloud {
        CloudData::Plain(c) => (c.positions(), None),
        CloudData::Colored(c) => {
            unit = c.to_space(ColorSpaceTag::RgbUnit);
            (cloud.positions(), Some(unit.colors().clone()))
        }
    };
    write_vertex_header(&mut w, binary, positions.nrows(), colors.is_some())?;
    writeln!(w, "end_header")?;
    for i in 0..positions.nrows() {
        let p = [positions[[i, 0]], positions[[i, 1]], positions[[i, 2]]];
        let c = colors
            .as_ref()
            .map(|col| [col[[i, 0]], col[[i, 1]], col[[i, 2]]]);
        write_vertex_row(&mut w, binary, p, c)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a mesh as PLY: float32 positions, 8-bit vertex colors (when
/// present), and `uchar 3 + int32` face index lists. Byte-stable for fixed
/// input.
pub fn save_mesh_ply(mesh: &TriangleMesh, path: &Path, binary: bool) -> Result<()> {
    mesh.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    write_vertex_header(
        &mut w,
        binary,
        mesh.vertex_count(),
        mesh.vertex_colors.is_some(),
    )?;
    writeln!(w, "element face {}", mesh.face_count())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for i in 0..mesh.vertex_count() {
        let p = [
            mesh.vertices[[i, 0]],
            mesh.vertices[[i, 1]],
            mesh.vertices[[i, 2]],
        ];
        let c = mesh
            .vertex_colors
            .as_ref()
            .map(|col| [col[[i, 0]], col[[i, 1]], col[[i, 2]]]);
        write_vertex_row(&mut w, binary, p, c)?;
    }
    for f in &mesh.faces {
        if binary {
            w.write_u8(3)?;
            for &ix in f {
                w.write_i32::<LittleEndian>(ix as i32)?;
            }
        } else {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{load_cloud, make_synthetic, SyntheticKind};
    use crate::meshgen::icosphere;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_point_ascii_ply_with_color() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0.5 -1.25 3 255 0 0\n",
        )
        .unwrap();
        let cloud = load_cloud(&path, None).unwrap();
        let colored = cloud.as_colored().unwrap();
        assert_eq!(colored.positions(), &array![[0.5, -1.25, 3.0]]);
        assert_eq!(colored.colors(), &array![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cloud = make_synthetic(SyntheticKind::Cube, 200, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.ply");
        save_cloud_ply(&CloudData::Colored(cloud.clone()), &path, true).unwrap();
        let reloaded = load_cloud(&path, None).unwrap();
        let got = reloaded.as_colored().unwrap();
        for (a, b) in cloud.positions().iter().zip(got.positions().iter()) {
            assert_eq!(*a as f32, *b as f32);
            assert_eq!(*b, *b as f32 as f64);
        }
        for (a, b) in cloud.colors().iter().zip(got.colors().iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn ascii_round_trip_preserves_f32_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let cloud = make_synthetic(SyntheticKind::Sphere, 64, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sphere.ply");
        save_cloud_ply(&CloudData::Colored(cloud.clone()), &path, false).unwrap();
        let got = load_cloud(&path, None).unwrap();
        for (a, b) in cloud.positions().iter().zip(got.positions().iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn truncated_row_is_rejected_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        let mut text = String::from(
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        );
        text.push_str("0 0 0\n1 1\n2 2 2\n");
        std::fs::write(&path, text).unwrap();
        let err = load_cloud(&path, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 9") && msg.contains("truncated"), "{msg}");
    }

    #[test]
    fn truncated_binary_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad_bin.ply");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        );
        bytes.extend_from_slice(&1.0_f32.to_le_bytes());
        bytes.extend_from_slice(&2.0_f32.to_le_bytes());
        // second point entirely missing, first is truncated mid-row
        std::fs::write(&path, bytes).unwrap();
        let err = load_cloud(&path, None).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");
    }

    #[test]
    fn unsupported_property_type_names_the_property() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("odd.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty quaternion x\nend_header\n0\n",
        )
        .unwrap();
        let err = load_cloud(&path, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("quaternion") && msg.contains("`x`"), "{msg}");
    }

    #[test]
    fn mesh_save_load_save_is_byte_identical() {
        let mut sphere = icosphere(1).unwrap();
        sphere.vertex_colors = Some(Array2::from_elem((sphere.vertex_count(), 3), 1.0));
        let dir = tempfile::tempdir().unwrap();
        for binary in [false, true] {
            let p1 = dir.path().join(format!("m1_{binary}.ply"));
            let p2 = dir.path().join(format!("m2_{binary}.ply"));
            save_mesh_ply(&sphere, &p1, binary).unwrap();
            let loaded = load_mesh_ply(&p1).unwrap();
            assert_eq!(loaded.vertex_count(), 42);
            assert_eq!(loaded.face_count(), 80);
            save_mesh_ply(&loaded, &p2, binary).unwrap();
            assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        }
    }

    #[test]
    fn white_icosahedron_reloads_with_full_colors() {
        let mut mesh = icosphere(0).unwrap();
        mesh.vertex_colors = Some(Array2::from_elem((12, 3), 1.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ico.ply");
        save_mesh_ply(&mesh, &path, true).unwrap();
        let loaded = load_mesh_ply(&path).unwrap();
        assert_eq!(loaded.vertex_count(), 12);
        assert_eq!(loaded.face_count(), 20);
        let colors = loaded.vertex_colors.unwrap();
        assert!(colors.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn half_color_rounds_half_up() {
        assert_eq!(color_byte(0.5), 128);
        assert_eq!(color_byte(0.0), 0);
        assert_eq!(color_byte(1.0), 255);
        assert_eq!(color_byte(1.5), 255);
        assert_eq!(color_byte(-0.1), 0);
    }
}
