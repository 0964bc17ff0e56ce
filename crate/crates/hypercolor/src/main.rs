//! `hypercolor` — batch CLI for the two-stage auto-coloring pipeline.
//!
//! Subcommands: `train-shape`, `train-color`, `reconstruct`, `mesh`,
//! `interpolate`, `eval`. Every run is driven by a JSON config (flags
//! override file values), echoes the fully resolved config next to its
//! outputs, writes files atomically (temp name + rename), and exits nonzero
//! on any error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hypercolor::checkpoint::{
    load_color_model, load_shape_model, save_color_model, save_shape_model,
};
use hypercolor::color::ColorSpaceTag;
use hypercolor::color_stage::{reconstruct_colored, reconstruct_colored_mean, train_stage2};
use hypercolor::config::TrainConfig;
use hypercolor::io::{
    load_cloud, normalize_unit_ball, normalize_unit_ball_colored, save_cloud_ply, save_mesh_ply,
    CloudData, ColoredPointCloud, DatasetManifest, NormRecord,
};
use hypercolor::meshgen::{icosphere, interpolate, triangulate, TriangleMesh, MAX_SUBDIVISIONS};
use hypercolor::metrics::{chamfer_normalized, color_mse_aligned};
use hypercolor::shape_stage::{
    reconstruct, reconstruct_baseline, reconstruct_baseline_mean, sample_prior, train_stage1,
};
use hypercolor::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hypercolor",
    version,
    about = "Two-stage hypernetwork pipeline for auto-colored 3D point clouds and meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Hyperparameters come from `--config` (JSON); any flag given here overrides
/// the file value. `--seed` alone is enough to run without a file.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON config file; unknown keys are rejected by name.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (mandatory if no config file is given).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Stage-1 KL weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Stage-2 KL weight.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Neighbor count for color alignment targets.
    #[arg(long)]
    k: Option<usize>,
    /// Prior sample size per step and default reconstruction size.
    #[arg(long)]
    recon_points: Option<usize>,
    /// Prior kind: ball | sphere.
    #[arg(long)]
    prior: Option<String>,
    /// Arithmetic precision: f32 | f64.
    #[arg(long)]
    precision: Option<String>,
    /// Stage-2 training color space: rgb_unit | rgb255 | lab.
    #[arg(long)]
    color_space: Option<String>,
    /// Single-stage baseline: 6-channel target network, Chamfer in R^6.
    #[arg(long)]
    baseline_mode: Option<bool>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut config = match (&self.config, self.seed) {
            (Some(path), _) => TrainConfig::load(path)?,
            (None, Some(seed)) => TrainConfig::with_seed(seed),
            (None, None) => {
                return Err(Error::InvalidConfig {
                    key: "seed".into(),
                    message: "provide --config or --seed".into(),
                })
            }
        };
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.latent_dim {
            config.latent_dim = v;
        }
        if let Some(v) = self.steps {
            config.steps = v;
        }
        if let Some(v) = self.lr {
            config.lr = v;
        }
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(v) = self.lambda2 {
            config.lambda2 = v;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.recon_points {
            config.recon_points = v;
        }
        if let Some(v) = &self.prior {
            config.prior = parse_tag("prior", v)?;
        }
        if let Some(v) = &self.precision {
            config.precision = parse_tag("precision", v)?;
        }
        if let Some(v) = &self.color_space {
            config.color_space = parse_tag("color_space", v)?;
        }
        if let Some(v) = self.baseline_mode {
            config.baseline_mode = v;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Parses a flag value through the same serde names the config file uses.
fn parse_tag<T: serde::de::DeserializeOwned>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string())).map_err(|_| {
        Error::InvalidConfig {
            key: key.into(),
            message: format!("unrecognized value {value:?}"),
        }
    })
}

#[derive(Subcommand)]
enum Command {
    /// Train the stage-1 shape hypernetwork on a dataset manifest.
    TrainShape {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset manifest (JSON); entry paths resolve against its directory.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for shape.ckpt, train_shape_log.jsonl, config.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the stage-2 color hypernetwork against a frozen shape checkpoint.
    TrainColor {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        /// Frozen stage-1 checkpoint.
        #[arg(long)]
        shape_ckpt: PathBuf,
        /// Output directory for color.ckpt, train_color_log.jsonl, config.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reconstruct a (colored) point cloud from a trained model.
    Reconstruct {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        shape_ckpt: PathBuf,
        /// Stage-2 checkpoint; omit for shape-only or baseline reconstruction.
        #[arg(long)]
        color_ckpt: Option<PathBuf>,
        /// Input cloud (.ply, .xyz, .txt).
        #[arg(long)]
        input: PathBuf,
        /// Number of reconstructed points (default: config recon_points).
        #[arg(long)]
        n: Option<usize>,
        /// Output PLY path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a vertex-colored triangle mesh via the triangulation trick.
    Mesh {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        shape_ckpt: PathBuf,
        #[arg(long)]
        color_ckpt: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Icosphere subdivision level (0..=7).
        #[arg(long, default_value_t = 4)]
        subdivisions: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Morph between two objects in latent space; writes frame_%04d.ply.
    Interpolate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        shape_ckpt: PathBuf,
        #[arg(long)]
        color_ckpt: PathBuf,
        #[arg(long)]
        cloud_a: PathBuf,
        #[arg(long)]
        cloud_b: PathBuf,
        /// Number of frames (>= 2); endpoints are the exact encodings.
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        subdivisions: u32,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate reconstructions over a manifest: per-object Chamfer and
    /// color MSE with a mean +/- std footer.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        shape_ckpt: PathBuf,
        /// Required unless the shape checkpoint is a baseline model.
        #[arg(long)]
        color_ckpt: Option<PathBuf>,
        /// Report file; the same text is printed to stdout.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainShape {
            config,
            manifest,
            out_dir,
        } => cmd_train_shape(&config.resolve()?, &manifest, &out_dir),
        Command::TrainColor {
            config,
            manifest,
            shape_ckpt,
            out_dir,
        } => cmd_train_color(&config.resolve()?, &manifest, &shape_ckpt, &out_dir),
        Command::Reconstruct {
            config,
            shape_ckpt,
            color_ckpt,
            input,
            n,
            out,
        } => cmd_reconstruct(
            &config.resolve()?,
            &shape_ckpt,
            color_ckpt.as_deref(),
            &input,
            n,
            &out,
        ),
        Command::Mesh {
            config,
            shape_ckpt,
            color_ckpt,
            input,
            subdivisions,
            out,
        } => cmd_mesh(
            &config.resolve()?,
            &shape_ckpt,
            color_ckpt.as_deref(),
            &input,
            subdivisions,
            &out,
        ),
        Command::Interpolate {
            config,
            shape_ckpt,
            color_ckpt,
            cloud_a,
            cloud_b,
            frames,
            subdivisions,
            out_dir,
        } => cmd_interpolate(
            &config.resolve()?,
            &shape_ckpt,
            &color_ckpt,
            &cloud_a,
            &cloud_b,
            frames,
            subdivisions,
            &out_dir,
        ),
        Command::Eval {
            config,
            manifest,
            shape_ckpt,
            color_ckpt,
            out,
        } => cmd_eval(
            &config.resolve()?,
            &manifest,
            &shape_ckpt,
            color_ckpt.as_deref(),
            &out,
        ),
    }
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

/// Writes `bytes` to a temp name in the same directory, then renames onto
/// `path`, so a crash never leaves a partial file at the final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_name(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_name(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Echoes the fully resolved config next to a run's outputs: `config.json`
/// inside a directory, or `<stem>.config.json` beside a file output.
fn echo_config_dir(config: &TrainConfig, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("config.json"), config_bytes(config)?.as_slice())
}

fn echo_config_beside(config: &TrainConfig, out_file: &Path) -> Result<()> {
    let stem = out_file.file_stem().unwrap_or_default().to_os_string();
    let mut name = stem;
    name.push(".config.json");
    write_atomic(&out_file.with_file_name(name), config_bytes(config)?.as_slice())
}

fn config_bytes(config: &TrainConfig) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn load_manifest_objects(path: &Path) -> Result<Vec<(String, CloudData)>> {
    let manifest = DatasetManifest::load(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let objects = manifest.load_objects(base)?;
    Ok(objects
        .into_iter()
        .map(|o| (o.object_id, o.cloud))
        .collect())
}

/// Loads and unit-ball-normalizes one cloud file, keeping the record so
/// outputs can be mapped back to the input's frame.
fn load_normalized(path: &Path) -> Result<(CloudData, NormRecord)> {
    match load_cloud(path, None)? {
        CloudData::Plain(c) => {
            let (c, rec) = normalize_unit_ball(&c)?;
            Ok((CloudData::Plain(c), rec))
        }
        CloudData::Colored(c) => {
            let (c, rec) = normalize_unit_ball_colored(&c)?;
            Ok((CloudData::Colored(c), rec))
        }
    }
}



// ---------------------------------------------------------------------------
// Training commands
// ---------------------------------------------------------------------------

fn cmd_train_shape(config: &TrainConfig, manifest: &Path, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let objects = load_manifest_objects(manifest)?;
    eprintln!(
        "train-shape: {} objects, {} steps, seed {}",
        objects.len(),
        config.steps,
        config.seed
    );
    let mut log = Vec::new();
    let every = (config.steps / 10).max(1);
    let ckpt_path = out_dir.join("shape.ckpt");
    let model = train_stage1(
        &objects,
        config,
        |r| {
            log.push(serde_json::to_string(r).expect("record serializes"));
            if r.step % every == 0 || r.step == config.steps {
                eprintln!(
                    "step {:>6}  {}  chamfer {:.6e}  kl {:.4e}",
                    r.step, r.object_id, r.chamfer, r.kl
                );
            }
        },
        |m, _step| save_shape_model(m, &ckpt_path),
    )?;
    save_shape_model(&model, &ckpt_path)?;
    write_log(&out_dir.join("train_shape_log.jsonl"), &log)?;
    echo_config_dir(config, out_dir)?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn cmd_train_color(
    config: &TrainConfig,
    manifest: &Path,
    shape_ckpt: &Path,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let shape = load_shape_model(shape_ckpt)?;
    let objects = load_manifest_objects(manifest)?;
    let colored: Vec<(String, ColoredPointCloud)> = objects
        .iter()
        .map(|(id, data)| {
            let c = data.as_colored()?;
            Ok((id.clone(), c.clone()))
        })
        .collect::<Result<_>>()?;
    eprintln!(
        "train-color: {} objects, {} steps, seed {}, space {:?}",
        colored.len(),
        config.steps,
        config.seed,
        config.color_space
    );
    let mut log = Vec::new();
    let every = (config.steps / 10).max(1);
    let ckpt_path = out_dir.join("color.ckpt");
    let model = train_stage2(
        &colored,
        &shape,
        config,
        |r| {
            log.push(serde_json::to_string(r).expect("record serializes"));
            if r.step % every == 0 || r.step == config.steps {
                eprintln!(
                    "step {:>6}  {}  mse {:.6e}  mse_rgb255 {:.4e}",
                    r.step, r.object_id, r.mse_lab_unit, r.mse_rgb255
                );
            }
        },
        |m, _step| save_color_model(m, &ckpt_path),
    )?;
    save_color_model(&model, &ckpt_path)?;
    write_log(&out_dir.join("train_color_log.jsonl"), &log)?;
    echo_config_dir(config, out_dir)?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn write_log(path: &Path, lines: &[String]) -> Result<()> {
    let mut bytes = Vec::new();
    for line in lines {
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

// ---------------------------------------------------------------------------
// Inference commands
// ---------------------------------------------------------------------------

fn cmd_reconstruct(
    config: &TrainConfig,
    shape_ckpt: &Path,
    color_ckpt: Option<&Path>,
    input: &Path,
    n: Option<usize>,
    out: &Path,
) -> Result<()> {
    let shape = load_shape_model(shape_ckpt)?;
    let (data, rec) = load_normalized(input)?;
    let n = n.unwrap_or(config.recon_points);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let recon = if shape.is_baseline() {
        let cloud = data.as_colored()?;
        let out_cloud = reconstruct_baseline(
            &shape,
            cloud,
            n,
            config.prior,
            config.color_space,
            ColorSpaceTag::RgbUnit,
            &mut rng,
        )?;
        CloudData::Colored(denorm_colored(&out_cloud, &rec))
    } else if let Some(color_path) = color_ckpt {
        let color = load_color_model(color_path)?;
        let cloud = data.as_colored()?;
        let out_cloud = reconstruct_colored(
            &shape,
            &color,
            cloud,
            n,
            config.prior,
            ColorSpaceTag::RgbUnit,
            &mut rng,
        )?;
        CloudData::Colored(denorm_colored(&out_cloud, &rec))
    } else {
        let prior = sample_prior(n, config.prior, &mut rng)?;
        let (theta, _) = hypercolor::shape_stage::predict_weights(
            &shape,
            &data.positions_cloud(),
            &mut rng,
        )?;
        let positions = reconstruct(shape.target_spec(), &theta, &prior, shape.precision())?;
        CloudData::Plain(hypercolor::io::denormalize(&positions, &rec))
    };
    save_cloud_atomic(&recon, out)?;
    echo_config_beside(config, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn denorm_colored(cloud: &ColoredPointCloud, rec: &NormRecord) -> ColoredPointCloud {
    let positions = hypercolor::io::denormalize(&cloud.positions_cloud(), rec);
    ColoredPointCloud::new(
        positions.positions().clone(),
        cloud.colors().clone(),
        cloud.space(),
    )
    .expect("shape preserved")
}

fn save_cloud_atomic(cloud: &CloudData, out: &Path) -> Result<()> {
    let tmp = temp_name(out);
    save_cloud_ply(cloud, &tmp, true)?;
    std::fs::rename(&tmp, out)?;
    Ok(())
}

fn save_mesh_atomic(mesh: &TriangleMesh, out: &Path) -> Result<()> {
    let tmp = temp_name(out);
    save_mesh_ply(mesh, &tmp, true)?;
    std::fs::rename(&tmp, out)?;
    Ok(())
}

fn cmd_mesh(
    config: &TrainConfig,
    shape_ckpt: &Path,
    color_ckpt: Option<&Path>,
    input: &Path,
    subdivisions: u32,
    out: &Path,
) -> Result<()> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::InvalidConfig {
            key: "subdivisions".into(),
            message: format!("must be at most {MAX_SUBDIVISIONS}, got {subdivisions}"),
        });
    }
    let shape = load_shape_model(shape_ckpt)?;
    if shape.is_baseline() {
        return Err(Error::InvalidConfig {
            key: "baseline_mode".into(),
            message: "mesh export needs a two-stage (3-channel) shape model".into(),
        });
    }
    let (data, rec) = load_normalized(input)?;
    let z = shape.encode_mean(&data.positions_cloud())?;
    let theta = shape.decode_weights(&z)?;
    let sphere = icosphere(subdivisions)?;

    let color_parts = match color_ckpt {
        Some(path) => {
            let model = load_color_model(path)?;
            let cloud = data.as_colored()?;
            let c = model.encode_mean(cloud)?;
            let eta = model.decode_weights(&c)?;
            Some((model, eta))
        }
        None => None,
    };
    let mut mesh = match &color_parts {
        Some((model, eta)) => triangulate(
            shape.target_spec(),
            &theta,
            Some((model.color_spec(), eta)),
            &sphere,
        )?,
        None => triangulate(shape.target_spec(), &theta, None, &sphere)?,
    };
    if let (Some((model, _)), Some(colors)) = (&color_parts, mesh.vertex_colors.take()) {
        let (rgb, _) =
            hypercolor::color::rgb_lab_convert(&colors, model.color_space(), ColorSpaceTag::RgbUnit);
        mesh.vertex_colors = Some(rgb);
    }
    mesh.vertices
        .rows_mut()
        .into_iter()
        .for_each(|mut row| {
            for j in 0..3 {
                row[j] = row[j] * rec.scale + rec.center[j];
            }
        });
    save_mesh_atomic(&mesh, out)?;
    echo_config_beside(config, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_interpolate(
    config: &TrainConfig,
    shape_ckpt: &Path,
    color_ckpt: &Path,
    cloud_a: &Path,
    cloud_b: &Path,
    frames: usize,
    subdivisions: u32,
    out_dir: &Path,
) -> Result<()> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::InvalidConfig {
            key: "subdivisions".into(),
            message: format!("must be at most {MAX_SUBDIVISIONS}, got {subdivisions}"),
        });
    }
    let shape = load_shape_model(shape_ckpt)?;
    let color = load_color_model(color_ckpt)?;
    let (data_a, _) = load_normalized(cloud_a)?;
    let (data_b, _) = load_normalized(cloud_b)?;
    let a = data_a.as_colored()?;
    let b = data_b.as_colored()?;
    let sphere = icosphere(subdivisions)?;
    let meshes = interpolate(&shape, &color, a, b, frames, &sphere)?;
    std::fs::create_dir_all(out_dir)?;
    for (i, mut frame) in meshes.into_iter().enumerate() {
        if let Some(colors) = frame.vertex_colors.take() {
            let (rgb, _) = hypercolor::color::rgb_lab_convert(
                &colors,
                color.color_space(),
                ColorSpaceTag::RgbUnit,
            );
            frame.vertex_colors = Some(rgb);
        }
        save_mesh_atomic(&frame, &out_dir.join(format!("frame_{i:04}.ply")))?;
    }
    echo_config_dir(config, out_dir)?;
    println!("wrote {frames} frames to {}", out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalRow {
    object_id: String,
    chamfer_shape: f64,
    mse_colors_rgb255: f64,
}

fn cmd_eval(
    config: &TrainConfig,
    manifest: &Path,
    shape_ckpt: &Path,
    color_ckpt: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let shape = load_shape_model(shape_ckpt)?;
    let color = match (shape.is_baseline(), color_ckpt) {
        (true, _) => None,
        (false, Some(path)) => Some(load_color_model(path)?),
        (false, None) => {
            return Err(Error::InvalidConfig {
                key: "color_ckpt".into(),
                message: "eval needs a color checkpoint unless the shape model is baseline".into(),
            })
        }
    };
    let mut objects = load_manifest_objects(manifest)?;
    objects.sort_by(|a, b| a.0.cmp(&b.0));

    let mut rows = Vec::with_capacity(objects.len());
    for (id, data) in &objects {
        let cloud = data.as_colored()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a(id.as_bytes()));
        let recon = match &color {
            Some(color) => reconstruct_colored_mean(
                &shape,
                color,
                cloud,
                config.recon_points,
                config.prior,
                ColorSpaceTag::RgbUnit,
                &mut rng,
            )?,
            None => reconstruct_baseline_mean(
                &shape,
                cloud,
                config.recon_points,
                config.prior,
                config.color_space,
                ColorSpaceTag::RgbUnit,
                &mut rng,
            )?,
        };
        let original = cloud
            .to_space(ColorSpaceTag::RgbUnit)
            .subsample(config.recon_points, &mut rng);
        let chamfer_shape = chamfer_normalized(original.positions(), recon.positions());
        let mse_colors_rgb255 = color_mse_aligned(&recon, &original, config.k)? * 255.0 * 255.0;
        rows.push(EvalRow {
            object_id: id.clone(),
            chamfer_shape,
            mse_colors_rgb255,
        });
    }

    let report = render_report(&rows);
    write_atomic(out, report.as_bytes())?;
    echo_config_beside(config, out)?;
    print!("{report}");
    std::io::stdout().flush()?;
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn render_report(rows: &[EvalRow]) -> String {
    let id_width = rows
        .iter()
        .map(|r| r.object_id.len())
        .chain(["object_id".len()])
        .max()
        .unwrap_or(9);
    let mut s = String::new();
    s.push_str(&format!(
        "{:<id_width$}  {:>14}  {:>18}\n",
        "object_id", "chamfer_shape", "mse_colors_rgb255"
    ));
    for r in rows {
        s.push_str(&format!(
            "{:<id_width$}  {:>14.6e}  {:>18.6e}\n",
            r.object_id, r.chamfer_shape, r.mse_colors_rgb255
        ));
    }
    let (cm, cs) = mean_std(rows.iter().map(|r| r.chamfer_shape));
    let (mm, ms) = mean_std(rows.iter().map(|r| r.mse_colors_rgb255));
    s.push_str(&format!(
        "aggregate over {} objects: chamfer_shape = {:.6e} +/- {:.6e}, mse_colors_rgb255 = {:.6e} +/- {:.6e}\n",
        rows.len(), cm, cs, mm, ms
    ));
    s
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
