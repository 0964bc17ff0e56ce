//! Dataset ingestion, normalization, synthetic data, and file formats.
//!
//! Colors are stored in unit-scale sRGB internally regardless of the source
//! format; 0-255 appears only at file boundaries and in evaluation reports.
//! PLY is the canonical output format because vertex colors are first-class
//! there.

mod ply;
mod text;

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::color::ColorSpaceTag;
use crate::{Error, Result};

pub use ply::{load_mesh_ply, save_cloud_ply, save_mesh_ply};

/// Positions only, `N x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Array2<f64>,
}

impl PointCloud {
    pub fn new(positions: Array2<f64>) -> Result<Self> {
        if positions.nrows() == 0 {
            return Err(Error::EmptyCloud);
        }
        if positions.ncols() != 3 {
            return Err(Error::ShapeMismatch {
                context: "point cloud",
                expected: "N x 3".into(),
                actual: format!("{} x {}", positions.nrows(), positions.ncols()),
            });
        }
        if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "positions",
                index: i,
            });
        }
        Ok(PointCloud { positions })
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        [
            self.positions[[i, 0]],
            self.positions[[i, 1]],
            self.positions[[i, 2]],
        ]
    }

    /// Uniform subsample without replacement; `n >= len` returns a clone.
    pub fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointCloud {
        PointCloud {
            positions: subsample_rows(&self.positions, n, rng),
        }
    }
}

/// Positions plus colors with a tagged color space, `N x 6` overall.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredPointCloud {
    positions: Array2<f64>,
    colors: Array2<f64>,
    space: ColorSpaceTag,
}

impl ColoredPointCloud {
    pub fn new(positions: Array2<f64>, colors: Array2<f64>, space: ColorSpaceTag) -> Result<Self> {
        let base = PointCloud::new(positions)?;
        if colors.dim() != base.positions.dim() {
            return Err(Error::ShapeMismatch {
                context: "cloud colors",
                expected: format!("{} x 3", base.positions.nrows()),
                actual: format!("{} x {}", colors.nrows(), colors.ncols()),
            });
        }
        if let Some(i) = colors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "colors",
                index: i,
            });
        }
        Ok(ColoredPointCloud {
            positions: base.positions,
            colors,
            space,
        })
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.positions
    }

    pub fn colors(&self) -> &Array2<f64> {
        &self.colors
    }

    pub fn space(&self) -> ColorSpaceTag {
        self.space
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions_cloud(&self) -> PointCloud {
        PointCloud {
            positions: self.positions.clone(),
        }
    }

    /// Colors converted to another space; positions untouched.
    pub fn to_space(&self, space: ColorSpaceTag) -> ColoredPointCloud {
        let (colors, _) = crate::color::rgb_lab_convert(&self.colors, self.space, space);
        ColoredPointCloud {
            positions: self.positions.clone(),
            colors,
            space,
        }
    }

    /// `N x 6` position/color matrix, the encoder input for stage 2.
    pub fn channels6(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[self.positions.view(), self.colors.view()]).unwrap()
    }

    pub fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> ColoredPointCloud {
        let idx = subsample_indices(self.len(), n, rng);
        ColoredPointCloud {
            positions: select_rows(&self.positions, &idx),
            colors: select_rows(&self.colors, &idx),
            space: self.space,
        }
    }
}

/// A loaded cloud, with or without colors.
#[derive(Debug, Clone, PartialEq)]
pub enum CloudData {
    Plain(PointCloud),
    Colored(ColoredPointCloud),
}

impl CloudData {
    pub fn positions(&self) -> &Array2<f64> {
        match self {
            CloudData::Plain(c) => c.positions(),
            CloudData::Colored(c) => c.positions(),
        }
    }

    pub fn positions_cloud(&self) -> PointCloud {
        PointCloud {
            positions: self.positions().clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions().nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_colored(&self) -> Result<&ColoredPointCloud> {
        match self {
            CloudData::Colored(c) => Ok(c),
            CloudData::Plain(_) => Err(Error::MissingColors),
        }
    }
}

fn subsample_indices<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    if n >= len {
        return idx;
    }
    idx.shuffle(rng);
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

fn select_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), m.ncols()), |(i, j)| m[[idx[i], j]])
}

fn subsample_rows<R: Rng + ?Sized>(m: &Array2<f64>, n: usize, rng: &mut R) -> Array2<f64> {
    let idx = subsample_indices(m.nrows(), n, rng);
    select_rows(m, &idx)
}

/// Supported cloud file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    Ply,
    Obj,
    Xyz,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("ply") => Ok(CloudFormat::Ply),
            Some("obj") => Ok(CloudFormat::Obj),
            Some("xyz") | Some("txt") => Ok(CloudFormat::Xyz),
            other => Err(Error::Parse {
                path: path.display().to_string(),
                location: "extension".into(),
                message: format!("cannot infer format from extension {other:?}"),
            }),
        }
    }
}

/// Loads a point cloud, inferring the format from the extension when `format`
/// is `None`. 8-bit colors are mapped to unit scale.
pub fn load_cloud(path: &Path, format: Option<CloudFormat>) -> Result<CloudData> {
    let format = match format {
        Some(f) => f,
        None => CloudFormat::from_path(path)?,
    };
    match format {
        CloudFormat::Ply => ply::load_cloud_ply(path),
        CloudFormat::Obj => text::load_cloud_obj(path),
        CloudFormat::Xyz => text::load_cloud_xyz(path),
    }
}

/// Centering and scaling applied to bring an object into the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub center: [f64; 3],
    pub scale: f64,
}

fn normalize_positions(positions: &Array2<f64>) -> Result<(Array2<f64>, NormRecord)> {
    let n = positions.nrows() as f64;
    let center = [
        positions.column(0).sum() / n,
        positions.column(1).sum() / n,
        positions.column(2).sum() / n,
    ];
    let mut shifted = positions.clone();
    for mut row in shifted.rows_mut() {
        row[0] -= center[0];
        row[1] -= center[1];
        row[2] -= center[2];
    }
    let scale = shifted
        .rows()
        .into_iter()
        .map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Err(Error::DegenerateScale);
    }
    shifted.mapv_inplace(|v| v / scale);
    Ok((shifted, NormRecord { center, scale }))
}

/// Centers a cloud on its centroid and scales the farthest point to norm 1.
pub fn normalize_unit_ball(cloud: &PointCloud) -> Result<(PointCloud, NormRecord)> {
    let (positions, rec) = normalize_positions(&cloud.positions)?;
    Ok((PointCloud { positions }, rec))
}

/// Colored variant of [`normalize_unit_ball`]; colors pass through unchanged.
pub fn normalize_unit_ball_colored(
    cloud: &ColoredPointCloud,
) -> Result<(ColoredPointCloud, NormRecord)> {
    let (positions, rec) = normalize_positions(&cloud.positions)?;
    Ok((
        ColoredPointCloud {
            positions,
            colors: cloud.colors.clone(),
            space: cloud.space,
        },
        rec,
    ))
}

/// Inverse of [`normalize_unit_ball`].
pub fn denormalize(cloud: &PointCloud, rec: &NormRecord) -> PointCloud {
    let mut positions = cloud.positions.clone();
    for mut row in positions.rows_mut() {
        row[0] = row[0] * rec.scale + rec.center[0];
        row[1] = row[1] * rec.scale + rec.center[1];
        row[2] = row[2] * rec.scale + rec.center[2];
    }
    PointCloud { positions }
}

/// Synthetic colored primitives standing in for scanned data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Cube,
    Sphere,
    TwoToneChairlike,
}

/// Deterministic (given the RNG) colored point-cloud primitives.
///
/// - `cube`: surface of `[-1, 1]^3`, one fixed color per face.
/// - `sphere`: unit sphere, color = absolute surface normal.
/// - `two_tone_chairlike`: a seat plate below `z = 0` and a backrest above
///   it; points with `z > 0` are red, `z <= 0` blue, exactly.
pub fn make_synthetic<R: Rng + ?Sized>(
    kind: SyntheticKind,
    n: usize,
    rng: &mut R,
) -> Result<ColoredPointCloud> {
    if n < 8 {
        return Err(Error::InvalidConfig {
            key: "n".into(),
            message: format!("synthetic clouds need at least 8 points, got {n}"),
        });
    }
    let mut positions = Array2::zeros((n, 3));
    let mut colors = Array2::zeros((n, 3));
    match kind {
        SyntheticKind::Cube => {
            let palette = [
                [1.0, 0.0, 0.0], // +x
                [0.0, 1.0, 0.0], // -x
                [0.0, 0.0, 1.0], // +y
                [1.0, 1.0, 0.0], // -y
                [1.0, 0.0, 1.0], // +z
                [0.0, 1.0, 1.0], // -z
            ];
            for i in 0..n {
                let face = rng.gen_range(0..6usize);
                let u = rng.gen_range(-1.0..1.0);
                let v = rng.gen_range(-1.0..1.0);
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let mut p = [u, v, sign];
                p.swap(2, axis);
                for j in 0..3 {
                    positions[[i, j]] = p[j];
                    colors[[i, j]] = palette[face][j];
                }
            }
        }
        SyntheticKind::Sphere => {
            for i in 0..n {
                let dir = random_unit_vector(rng);
                for j in 0..3 {
                    positions[[i, j]] = dir[j];
                    colors[[i, j]] = dir[j].abs();
                }
            }
        }
        SyntheticKind::TwoToneChairlike => {
            // Seat: z = -0.25 plate; backrest: y = 1 plate over z in
            // [0.05, 1.2]. The gap around z = 0 keeps the two color regions
            // spatially separated.
            let seat_area = 2.0 * 2.0;
            let back_area = 2.0 * 1.15;
            let p_seat = seat_area / (seat_area + back_area);
            for i in 0..n {
                let (p, red) = if rng.gen_bool(p_seat) {
                    (
                        [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), -0.25],
                        false,
                    )
                } else {
                    (
                        [rng.gen_range(-1.0..1.0), 1.0, rng.gen_range(0.05..1.2)],
                        true,
                    )
                };
                for j in 0..3 {
                    positions[[i, j]] = p[j];
                }
                colors[[i, 0]] = if red { 1.0 } else { 0.0 };
                colors[[i, 2]] = if red { 0.0 } else { 1.0 };
            }
        }
    }
    ColoredPointCloud::new(positions, colors, ColorSpaceTag::RgbUnit)
}

pub(crate) fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// One dataset object: id, source file, class label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub object_id: String,
    pub path: PathBuf,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormRecord>,
}

/// Plain-text (JSON) dataset listing with a train/test split tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: String,
    pub entries: Vec<ManifestEntry>,
}

/// A loaded, unit-ball-normalized dataset object.
#[derive(Debug, Clone)]
pub struct DatasetObject {
    pub object_id: String,
    pub label: String,
    pub cloud: CloudData,
    pub normalization: NormRecord,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let mut seen = std::collections::BTreeSet::new();
        for e in &manifest.entries {
            if !seen.insert(&e.object_id) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    location: format!("object_id {}", e.object_id),
                    message: "duplicate object id".into(),
                });
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loads every entry, normalizes it to the unit ball, and records the
    /// per-object center/scale. Relative paths resolve against `base_dir`.
    pub fn load_objects(&self, base_dir: &Path) -> Result<Vec<DatasetObject>> {
        self.entries
            .iter()
            .map(|e| {
                let path = if e.path.is_absolute() {
                    e.path.clone()
                } else {
                    base_dir.join(&e.path)
                };
                let data = load_cloud(&path, None)?;
                let (cloud, normalization) = match data {
                    CloudData::Plain(c) => {
                        let (c, r) = normalize_unit_ball(&c)?;
                        (CloudData::Plain(c), r)
                    }
                    CloudData::Colored(c) => {
                        let (c, r) = normalize_unit_ball_colored(&c)?;
                        (CloudData::Colored(c), r)
                    }
                };
                Ok(DatasetObject {
                    object_id: e.object_id.clone(),
                    label: e.label.clone(),
                    cloud,
                    normalization,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_hand_case() {
        let cloud = PointCloud::new(array![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let (out, rec) = normalize_unit_ball(&cloud).unwrap();
        assert_eq!(rec.center, [1.0, 0.0, 0.0]);
        assert_eq!(rec.scale, 1.0);
        assert_eq!(out.positions(), &array![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn normalize_already_normalized_is_identity() {
        let cloud = PointCloud::new(array![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let (out, rec) = normalize_unit_ball(&cloud).unwrap();
        assert_eq!(rec.center, [0.0, 0.0, 0.0]);
        assert_eq!(rec.scale, 1.0);
        assert_eq!(out.positions(), cloud.positions());
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let positions = Array2::from_shape_fn((50, 3), |_| rng.gen_range(-5.0..7.0));
        let cloud = PointCloud::new(positions).unwrap();
        let (norm, rec) = normalize_unit_ball(&cloud).unwrap();
        let max_norm = norm
            .positions()
            .rows()
            .into_iter()
            .map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
            .fold(0.0_f64, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-12);
        let back = denormalize(&norm, &rec);
        for (a, b) in back.positions().iter().zip(cloud.positions().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let positions = Array2::from_shape_fn((30, 3), |_| rng.gen_range(-2.0..3.0));
        let cloud = PointCloud::new(positions).unwrap();
        let (once, _) = normalize_unit_ball(&cloud).unwrap();
        let (twice, rec) = normalize_unit_ball(&once).unwrap();
        assert!((rec.scale - 1.0).abs() < 1e-12);
        for (a, b) in once.positions().iter().zip(twice.positions().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_degenerate_cloud() {
        let cloud = PointCloud::new(array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            normalize_unit_ball(&cloud),
            Err(Error::DegenerateScale)
        ));
    }

    #[test]
    fn cube_points_lie_on_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cloud = make_synthetic(SyntheticKind::Cube, 1000, &mut rng).unwrap();
        for row in cloud.positions().rows() {
            let max_abs = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!((0.999..=1.0).contains(&max_abs));
        }
    }

    #[test]
    fn two_tone_color_rule_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let cloud = make_synthetic(SyntheticKind::TwoToneChairlike, 500, &mut rng).unwrap();
        for (p, c) in cloud
            .positions()
            .rows()
            .into_iter()
            .zip(cloud.colors().rows())
        {
            if p[2] > 0.0 {
                assert_eq!([c[0], c[1], c[2]], [1.0, 0.0, 0.0]);
            } else {
                assert_eq!([c[0], c[1], c[2]], [0.0, 0.0, 1.0]);
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_under_fixed_seed() {
        let a = make_synthetic(
            SyntheticKind::Sphere,
            256,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let b = make_synthetic(
            SyntheticKind::Sphere,
            256,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_is_a_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let cloud = make_synthetic(SyntheticKind::Sphere, 100, &mut rng).unwrap();
        let sub = cloud.subsample(10, &mut rng);
        assert_eq!(sub.len(), 10);
        for row in sub.positions().rows() {
            assert!(cloud
                .positions()
                .rows()
                .into_iter()
                .any(|orig| orig == row));
        }
    }
}
