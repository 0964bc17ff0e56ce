//! Binary checkpoint container for trained models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "HYPCOLCK" (8 bytes)
//! format version: u32
//! metadata: u32 length + JSON (model kind, precision, flags)
//! entry count: u32
//! per entry:
//!   name: u32 length + UTF-8 bytes
//!   spec: u32 width count, widths as u32, one activation tag byte per layer
//!   values: u64 byte length + f64 LE values
//! ```
//!
//! The writer is deterministic, so identical models produce identical bytes —
//! the property the determinism and frozen-stage checks rely on.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::color::ColorSpaceTag;
use crate::color_stage::ColorModel;
use crate::encoder::EncoderParams;
use crate::nn::{Activation, FlatWeights, MlpSpec, Precision};
use crate::shape_stage::ShapeModel;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HYPCOLCK";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    kind: String,
    precision: Precision,
    #[serde(default)]
    baseline: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    color_space: Option<ColorSpaceTag>,
}

struct Entry {
    spec: MlpSpec,
    values: Vec<f64>,
}

fn write_spec<W: Write>(w: &mut W, spec: &MlpSpec) -> Result<()> {
    w.write_u32::<LittleEndian>(spec.layer_widths().len() as u32)?;
    for &width in spec.layer_widths() {
        w.write_u32::<LittleEndian>(width as u32)?;
    }
    for &act in spec.activations() {
        w.write_u8(act.tag())?;
    }
    Ok(())
}

fn read_spec<R: Read>(r: &mut R) -> Result<MlpSpec> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if !(2..=1024).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible width count {n}")));
    }
    let mut widths = Vec::with_capacity(n);
    for _ in 0..n {
        widths.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let mut activations = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        activations.push(Activation::from_tag(r.read_u8()?)?);
    }
    MlpSpec::new(widths, activations)
}

fn write_entry<W: Write>(w: &mut W, name: &str, spec: &MlpSpec, values: &[f64]) -> Result<()> {
    w.write_u32::<LittleEndian>(name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_spec(w, spec)?;
    w.write_u64::<LittleEndian>((values.len() * 8) as u64)?;
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_entry<R: Read>(r: &mut R) -> Result<(String, Entry)> {
    let name_len = r.read_u32::<LittleEndian>()? as usize;
    if name_len > 4096 {
        return Err(Error::Checkpoint(format!(
            "implausible entry name length {name_len}"
        )));
    }
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|e| Error::Checkpoint(format!("entry name is not UTF-8: {e}")))?;
    let spec = read_spec(r)?;
    let byte_len = r.read_u64::<LittleEndian>()? as usize;
    if !byte_len.is_multiple_of(8) {
        return Err(Error::Checkpoint(format!(
            "entry `{name}` byte length {byte_len} is not a multiple of 8"
        )));
    }
    let mut values = Vec::with_capacity(byte_len / 8);
    for _ in 0..byte_len / 8 {
        values.push(r.read_f64::<LittleEndian>()?);
    }
    Ok((name, Entry { spec, values }))
}

fn write_container(
    metadata: &Metadata,
    entries: &[(&str, &MlpSpec, &[f64])],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    let meta = serde_json::to_string(metadata)?;
    out.write_u32::<LittleEndian>(meta.len() as u32)?;
    out.write_all(meta.as_bytes())?;
    out.write_u32::<LittleEndian>(entries.len() as u32)?;
    for (name, spec, values) in entries {
        write_entry(&mut out, name, spec, values)?;
    }
    Ok(out)
}

fn read_container(bytes: &[u8]) -> Result<(Metadata, BTreeMap<String, Entry>)> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}; not a checkpoint file"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let meta_len = r.read_u32::<LittleEndian>()? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let metadata: Metadata = serde_json::from_slice(&meta_bytes)?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let (name, entry) = read_entry(&mut r)?;
        entries.insert(name, entry);
    }
    Ok((metadata, entries))
}

fn take_weights(entries: &mut BTreeMap<String, Entry>, name: &str) -> Result<(MlpSpec, FlatWeights)> {
    let entry = entries
        .remove(name)
        .ok_or_else(|| Error::MissingCheckpointEntry(name.to_string()))?;
    let weights = FlatWeights::new(entry.values, &entry.spec)?;
    Ok((entry.spec, weights))
}

fn take_spec(entries: &mut BTreeMap<String, Entry>, name: &str) -> Result<MlpSpec> {
    let entry = entries
        .remove(name)
        .ok_or_else(|| Error::MissingCheckpointEntry(name.to_string()))?;
    Ok(entry.spec)
}

/// Serialized bytes of a stage-1 model (deterministic).
pub fn shape_model_bytes(model: &ShapeModel) -> Result<Vec<u8>> {
    let metadata = Metadata {
        kind: "shape".into(),
        precision: model.precision(),
        baseline: model.is_baseline(),
        color_space: None,
    };
    write_container(
        &metadata,
        &[
            (
                "encoder.per_point",
                model.encoder.per_point_spec(),
                model.encoder.per_point_weights.values(),
            ),
            (
                "encoder.head",
                model.encoder.head_spec(),
                model.encoder.head_weights.values(),
            ),
            (
                "weight_head",
                model.weight_head_spec(),
                model.weight_head_weights.values(),
            ),
            ("target_spec", model.target_spec(), &[]),
        ],
    )
}

/// Serialized bytes of a stage-2 model (deterministic).
pub fn color_model_bytes(model: &ColorModel) -> Result<Vec<u8>> {
    let metadata = Metadata {
        kind: "color".into(),
        precision: model.precision(),
        baseline: false,
        color_space: Some(model.color_space()),
    };
    write_container(
        &metadata,
        &[
            (
                "encoder.per_point",
                model.encoder.per_point_spec(),
                model.encoder.per_point_weights.values(),
            ),
            (
                "encoder.head",
                model.encoder.head_spec(),
                model.encoder.head_weights.values(),
            ),
            (
                "weight_head",
                model.weight_head_spec(),
                model.weight_head_weights.values(),
            ),
            ("color_spec", model.color_spec(), &[]),
        ],
    )
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_shape_model(model: &ShapeModel, path: &Path) -> Result<()> {
    write_atomic(path, &shape_model_bytes(model)?)
}

pub fn save_color_model(model: &ColorModel, path: &Path) -> Result<()> {
    write_atomic(path, &color_model_bytes(model)?)
}

pub fn load_shape_model(path: &Path) -> Result<ShapeModel> {
    let bytes = std::fs::read(path)?;
    shape_model_from_bytes(&bytes)
}

pub fn shape_model_from_bytes(bytes: &[u8]) -> Result<ShapeModel> {
    let (metadata, mut entries) = read_container(bytes)?;
    if metadata.kind != "shape" {
        return Err(Error::Checkpoint(format!(
            "expected a shape checkpoint, found kind `{}`",
            metadata.kind
        )));
    }
    let (pp_spec, pp_weights) = take_weights(&mut entries, "encoder.per_point")?;
    let (head_spec, head_weights) = take_weights(&mut entries, "encoder.head")?;
    let (wh_spec, wh_weights) = take_weights(&mut entries, "weight_head")?;
    let target_spec = take_spec(&mut entries, "target_spec")?;
    let encoder = EncoderParams::new(pp_spec, pp_weights, head_spec, head_weights)?;
    ShapeModel::from_parts(
        encoder,
        wh_spec,
        wh_weights,
        target_spec,
        metadata.precision,
        metadata.baseline,
    )
}

pub fn load_color_model(path: &Path) -> Result<ColorModel> {
    let bytes = std::fs::read(path)?;
    color_model_from_bytes(&bytes)
}

pub fn color_model_from_bytes(bytes: &[u8]) -> Result<ColorModel> {
    let (metadata, mut entries) = read_container(bytes)?;
    if metadata.kind != "color" {
        return Err(Error::Checkpoint(format!(
            "expected a color checkpoint, found kind `{}`",
            metadata.kind
        )));
    }
    let (pp_spec, pp_weights) = take_weights(&mut entries, "encoder.per_point")?;
    let (head_spec, head_weights) = take_weights(&mut entries, "encoder.head")?;
    let (wh_spec, wh_weights) = take_weights(&mut entries, "weight_head")?;
    let color_spec = take_spec(&mut entries, "color_spec")?;
    let encoder = EncoderParams::new(pp_spec, pp_weights, head_spec, head_weights)?;
    ColorModel::from_parts(
        encoder,
        wh_spec,
        wh_weights,
        color_spec,
        metadata.precision,
        metadata.color_space.unwrap_or(ColorSpaceTag::Lab),
    )
}
