//! OBJ and XYZ point-cloud loaders.
//!
//! OBJ: `v x y z [r g b]` lines (colors as unit-scale floats); all other
//! lines are ignored. XYZ: one point per non-empty line, 3 or 6
//! whitespace-separated columns, colors in unit scale.

use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;

use crate::color::ColorSpaceTag;
use crate::{Error, Result};

use super::{CloudData, ColoredPointCloud, PointCloud};

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location: format!("line {line}"),
        message,
    }
}

fn build_cloud(
    positions: Vec<[f64; 3]>,
    colors: Option<Vec<[f64; 3]>>,
) -> Result<CloudData> {
    if positions.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = positions.len();
    let pos = Array2::from_shape_fn((n, 3), |(i, j)| positions[i][j]);
    Ok(match colors {
        Some(c) => {
            let col = Array2::from_shape_fn((n, 3), |(i, j)| c[i][j]);
            CloudData::Colored(ColoredPointCloud::new(pos, col, ColorSpaceTag::RgbUnit)?)
        }
        None => CloudData::Plain(PointCloud::new(pos)?),
    })
}

fn parse_floats(
    tokens: &[&str],
    path: &Path,
    line: usize,
) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("bad number `{t}`")))
        })
        .collect()
}

pub(super) fn load_cloud_obj(path: &Path) -> Result<CloudData> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut positions = Vec::new();
    let mut colors: Option<Vec<[f64; 3]>> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.first() != Some(&"v") {
            continue;
        }
        let values = parse_floats(&tokens[1..], path, line_no)?;
        match values.len() {
            3 | 6 => {}
            n => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("vertex line must have 3 or 6 values, got {n}"),
                ))
            }
        }
        if values.len() == 6 {
            if colors.is_none() && !positions.is_empty() {
                return Err(parse_err(
                    path,
                    line_no,
                    "mixed colored and uncolored vertices".into(),
                ));
            }
            colors
                .get_or_insert_with(Vec::new)
                .push([values[3], values[4], values[5]]);
        } else if colors.is_some() {
            return Err(parse_err(
                path,
                line_no,
                "mixed colored and uncolored vertices".into(),
            ));
        }
        positions.push([values[0], values[1], values[2]]);
    }
    build_cloud(positions, colors)
}

pub(super) fn load_cloud_xyz(path: &Path) -> Result<CloudData> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut positions = Vec::new();
    let mut colors: Option<Vec<[f64; 3]>> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let values = parse_floats(&tokens, path, line_no)?;
        match values.len() {
            3 => {
                if colors.is_some() {
                    return Err(parse_err(path, line_no, "row has no color columns".into()));
                }
            }
            6 => {
                if colors.is_none() && !positions.is_empty() {
                    return Err(parse_err(
                        path,
                        line_no,
                        "row has unexpected color columns".into(),
                    ));
                }
                colors
                    .get_or_insert_with(Vec::new)
                    .push([values[3], values[4], values[5]]);
            }
            n => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected 3 or 6 columns, got {n}"),
                ))
            }
        }
        positions.push([values[0], values[1], values[2]]);
    }
    build_cloud(positions, colors)
}
