//! Stage 1: a hypernetwork that encodes a point cloud and emits the flat
//! weights of a small target network mapping unit-ball samples onto the
//! object's surface.
//!
//! The loss is Chamfer distance between the target network's output on a
//! fresh prior sample and the training cloud, plus a KL term on the
//! variational latent. Gradients flow from the reconstruction through the
//! generated weights into the weight head and the encoder; the chain is
//! assembled by hand from the `nn` tapes.
//!
//! A baseline mode makes the target network emit 6 channels (positions and
//! colors jointly) and trains with Chamfer in R^6 — the single-stage
//! comparison point for the two-stage pipeline.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::encoder::{
    self, encode, encode_with_trace, EncoderGrads, EncoderParams, LatentCode,
};
use crate::io::{CloudData, PointCloud};
use crate::metrics::chamfer_general_with_grad;
use crate::nn::{self, Activation, AdamState, FlatWeights, MlpSpec, Precision};
use crate::{Error, Result};

/// Prior distribution the target networks consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Uniform on the closed unit ball (training default).
    #[default]
    Ball,
    /// Uniform on the unit sphere.
    Sphere,
}

/// Points drawn from the prior; both target networks must consume the same
/// sample so row `i`'s position and color correspond.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSample {
    pub points: Array2<f64>,
    pub kind: PriorKind,
}

impl PriorSample {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// `n` points uniform on the unit ball (direction times cube-root radius) or
/// unit sphere (normalized Gaussian directions).
pub fn sample_prior<R: Rng + ?Sized>(n: usize, kind: PriorKind, rng: &mut R) -> Result<PriorSample> {
    if n == 0 {
        return Err(Error::InvalidConfig {
            key: "n".into(),
            message: "prior sample size must be positive".into(),
        });
    }
    let mut points = Array2::zeros((n, 3));
    for i in 0..n {
        let dir = crate::io::random_unit_vector(rng);
        let r = match kind {
            PriorKind::Ball => rng.gen_range(0.0..1.0_f64).cbrt(),
            PriorKind::Sphere => 1.0,
        };
        for j in 0..3 {
            points[[i, j]] = dir[j] * r;
        }
    }
    Ok(PriorSample { points, kind })
}

/// Stage-1 model: encoder, weight head, and the target architecture the head
/// emits weights for.
#[derive(Debug, Clone)]
pub struct ShapeModel {
    pub encoder: EncoderParams,
    weight_head_spec: MlpSpec,
    pub weight_head_weights: FlatWeights,
    target_spec: MlpSpec,
    precision: Precision,
    baseline: bool,
}

impl ShapeModel {
    pub fn from_parts(
        encoder: EncoderParams,
        weight_head_spec: MlpSpec,
        weight_head_weights: FlatWeights,
        target_spec: MlpSpec,
        precision: Precision,
        baseline: bool,
    ) -> Result<Self> {
        if weight_head_spec.output_dim() != target_spec.param_count() {
            return Err(Error::InvalidSpec(format!(
                "weight head emits {} values but the target network has {} parameters",
                weight_head_spec.output_dim(),
                target_spec.param_count()
            )));
        }
        if weight_head_spec.input_dim() != encoder.latent_dim() {
            return Err(Error::InvalidSpec(format!(
                "weight head input {} must equal latent dim {}",
                weight_head_spec.input_dim(),
                encoder.latent_dim()
            )));
        }
        if target_spec.input_dim() != 3 {
            return Err(Error::InvalidSpec(format!(
                "target network input must be 3, got {}",
                target_spec.input_dim()
            )));
        }
        let expected_out = if baseline { 6 } else { 3 };
        if target_spec.output_dim() != expected_out {
            return Err(Error::InvalidSpec(format!(
                "target network output must be {expected_out}, got {}",
                target_spec.output_dim()
            )));
        }
        if !weight_head_weights.is_bound_to(&weight_head_spec) {
            return Err(Error::InvalidSpec(
                "weight head weights are not bound to its spec".into(),
            ));
        }
        Ok(ShapeModel {
            encoder,
            weight_head_spec,
            weight_head_weights,
            target_spec,
            precision,
            baseline,
        })
    }

    /// Xavier-initialized model per the config's architecture fields.
    pub fn new_random<R: Rng + ?Sized>(config: &TrainConfig, rng: &mut R) -> Result<Self> {
        let in_ch = if config.baseline_mode { 6 } else { 3 };
        let out_ch = if config.baseline_mode { 6 } else { 3 };
        let features = *config.encoder_widths.last().unwrap();
        let hidden = &config.encoder_widths[..config.encoder_widths.len() - 1];
        let encoder = EncoderParams::new_random(
            in_ch,
            hidden,
            features,
            &[features],
            config.latent_dim,
            rng,
        )?;
        let target_spec = MlpSpec::with_hidden(
            3,
            &config.target_widths,
            out_ch,
            Activation::Relu,
            Activation::Identity,
        )?;
        let weight_head_spec = MlpSpec::with_hidden(
            config.latent_dim,
            &config.weight_head_widths,
            target_spec.param_count(),
            Activation::Relu,
            Activation::Identity,
        )?;
        let weight_head_weights = FlatWeights::xavier(&weight_head_spec, rng);
        ShapeModel::from_parts(
            encoder,
            weight_head_spec,
            weight_head_weights,
            target_spec,
            config.precision,
            config.baseline_mode,
        )
    }

    pub fn weight_head_spec(&self) -> &MlpSpec {
        &self.weight_head_spec
    }

    pub fn target_spec(&self) -> &MlpSpec {
        &self.target_spec
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn is_baseline(&self) -> bool {
        self.baseline
    }

    /// Latent mean of a positions-only cloud (no sampling noise); the
    /// deterministic encoding used by meshing and interpolation.
    pub fn encode_mean(&self, cloud: &PointCloud) -> Result<Array1<f64>> {
        self.encode_mean_matrix(cloud.positions())
    }

    pub(crate) fn encode_mean_matrix(&self, data: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(encode(&self.encoder, data, self.precision)?.mu)
    }

    /// Target-network weights for a latent vector.
    pub fn decode_weights(&self, z: &Array1<f64>) -> Result<FlatWeights> {
        let row = z.clone().insert_axis(Axis(0));
        let out = nn::forward_prec(
            &self.weight_head_spec,
            &self.weight_head_weights,
            &row,
            self.precision,
        )?;
        FlatWeights::new(out.row(0).to_vec(), &self.target_spec)
    }

    /// Positions for a prior sample under generated weights `theta`.
    pub fn reconstruct(&self, theta: &FlatWeights, prior: &PriorSample) -> Result<PointCloud> {
        reconstruct(&self.target_spec, theta, prior, self.precision)
    }
}

/// Encode, sample the latent, and decode target-network weights.
pub fn predict_weights<R: Rng + ?Sized>(
    model: &ShapeModel,
    cloud: &PointCloud,
    rng: &mut R,
) -> Result<(FlatWeights, LatentCode)> {
    let mut code = encode(&model.encoder, cloud.positions(), model.precision)?;
    let z = encoder::sample_latent(&code, rng);
    let theta = model.decode_weights(&z)?;
    code.z = Some(z);
    Ok((theta, code))
}

/// `forward(target_spec, theta, prior.points)` wrapped as a cloud. Row `i`
/// of the output corresponds to row `i` of the prior.
pub fn reconstruct(
    target_spec: &MlpSpec,
    theta: &FlatWeights,
    prior: &PriorSample,
    precision: Precision,
) -> Result<PointCloud> {
    let out = nn::forward_prec(target_spec, theta, &prior.points, precision)?;
    PointCloud::new(out)
}

/// Baseline reconstruction: the 6-channel target network emits positions and
/// colors jointly. The model is encoded on the cloud's 6-channel matrix in
/// `training_space` (the space the baseline was trained in); the last three
/// output channels are converted from that space to `out_space`.
pub fn reconstruct_baseline<R: Rng + ?Sized>(
    model: &ShapeModel,
    cloud: &crate::io::ColoredPointCloud,
    n: usize,
    kind: PriorKind,
    training_space: crate::color::ColorSpaceTag,
    out_space: crate::color::ColorSpaceTag,
    rng: &mut R,
) -> Result<crate::io::ColoredPointCloud> {
    if !model.baseline {
        return Err(Error::InvalidConfig {
            key: "baseline_mode".into(),
            message: "reconstruct_baseline needs a baseline-mode shape model".into(),
        });
    }
    baseline_decode(model, cloud, n, kind, training_space, out_space, rng, true)
}

/// [`reconstruct_baseline`] with the latent fixed to the encoder mean — the
/// deterministic inference path used for evaluation (only the prior sample
/// consumes randomness).
pub fn reconstruct_baseline_mean<R: Rng + ?Sized>(
    model: &ShapeModel,
    cloud: &crate::io::ColoredPointCloud,
    n: usize,
    kind: PriorKind,
    training_space: crate::color::ColorSpaceTag,
    out_space: crate::color::ColorSpaceTag,
    rng: &mut R,
) -> Result<crate::io::ColoredPointCloud> {
    if !model.baseline {
        return Err(Error::InvalidConfig {
            key: "baseline_mode".into(),
            message: "reconstruct_baseline_mean needs a baseline-mode shape model".into(),
        });
    }
    baseline_decode(model, cloud, n, kind, training_space, out_space, rng, false)
}

#[allow(clippy::too_many_arguments)]
fn baseline_decode<R: Rng + ?Sized>(
    model: &ShapeModel,
    cloud: &crate::io::ColoredPointCloud,
    n: usize,
    kind: PriorKind,
    training_space: crate::color::ColorSpaceTag,
    out_space: crate::color::ColorSpaceTag,
    rng: &mut R,
    sample_z: bool,
) -> Result<crate::io::ColoredPointCloud> {
    let prior = sample_prior(n, kind, rng)?;
    let input = cloud.to_space(training_space).channels6();
    let code = encode(&model.encoder, &input, model.precision)?;
    let z = if sample_z {
        encoder::sample_latent(&code, rng)
    } else {
        code.mu.clone()
    };
    let theta = model.decode_weights(&z)?;
    let out = nn::forward_prec(&model.target_spec, &theta, &prior.points, model.precision)?;
    let positions = out.slice(ndarray::s![.., 0..3]).to_owned();
    let raw_colors = out.slice(ndarray::s![.., 3..6]).to_owned();
    let (colors, _) = crate::color::rgb_lab_convert(&raw_colors, training_space, out_space);
    crate::io::ColoredPointCloud::new(positions, colors, out_space)
}

/// Loss components for one stage-1 step.
#[derive(Debug, Clone, Copy)]
pub struct Stage1Loss {
    pub total: f64,
    pub chamfer: f64,
    pub kl: f64,
}

/// Gradients for every trainable block of a [`ShapeModel`].
pub struct ShapeGrads {
    pub encoder: EncoderGrads,
    pub weight_head: FlatWeights,
}

/// Stage-1 loss `chamfer(T_theta(prior), data) + lambda * KL` with the
/// reparameterization noise passed in explicitly so the value is a
/// deterministic function of its arguments. `data` is `N x 3` positions, or
/// `N x 6` positions-plus-colors in baseline mode.
pub fn stage1_loss(
    model: &ShapeModel,
    data: &Array2<f64>,
    prior: &PriorSample,
    lambda: f64,
    eps: &Array1<f64>,
) -> Result<Stage1Loss> {
    let code = encode(&model.encoder, data, model.precision)?;
    let z = encoder::reparameterize(&code, eps);
    let theta = model.decode_weights(&z)?;
    let recon = nn::forward_prec(&model.target_spec, &theta, &prior.points, model.precision)?;
    let (chamfer, _) = chamfer_general_with_grad(&recon, data)?;
    let kl = encoder::kl_divergence(&code);
    Ok(Stage1Loss {
        total: chamfer + lambda * kl,
        chamfer,
        kl,
    })
}

/// [`stage1_loss`] plus gradients with respect to the encoder and weight
/// head, chained by hand: Chamfer -> target net -> theta -> weight head ->
/// latent (reparameterization + KL) -> encoder.
pub fn stage1_loss_with_grad(
    model: &ShapeModel,
    data: &Array2<f64>,
    prior: &PriorSample,
    lambda: f64,
    eps: &Array1<f64>,
) -> Result<(Stage1Loss, ShapeGrads)> {
    let (code, enc_trace) = encode_with_trace(&model.encoder, data, model.precision)?;
    let z = encoder::reparameterize(&code, eps);
    let z_row = z.clone().insert_axis(Axis(0));
    let (theta_row, head_tape) = nn::forward_with_tape(
        &model.weight_head_spec,
        &model.weight_head_weights,
        &z_row,
        model.precision,
    )?;
    let theta = FlatWeights::new(theta_row.row(0).to_vec(), &model.target_spec)?;
    let (recon, target_tape) =
        nn::forward_with_tape(&model.target_spec, &theta, &prior.points, model.precision)?;
    let (chamfer, grad_recon) = chamfer_general_with_grad(&recon, data)?;
    let kl = encoder::kl_divergence(&code);
    let loss = Stage1Loss {
        total: chamfer + lambda * kl,
        chamfer,
        kl,
    };

    // Chamfer gradient through the target network gives dL/dtheta.
    let (grad_theta, _) = nn::backward(&target_tape, &grad_recon)?;
    let upstream =
        Array2::from_shape_vec((1, grad_theta.values().len()), grad_theta.values().to_vec())
            .unwrap();
    let (grad_head, grad_z_row) = nn::backward(&head_tape, &upstream)?;
    let grad_z = grad_z_row.row(0).to_owned();

    // z = mu + exp(logvar/2) * eps, so dz/dmu = 1 and
    // dz/dlogvar = 0.5 * exp(logvar/2) * eps.
    let mut grad_mu = grad_z.clone();
    let mut grad_logvar =
        &grad_z * &(code.logvar.mapv(|v| 0.5 * (v / 2.0).exp()) * eps);
    let (kl_mu, kl_lv) = encoder::kl_gradients(&code);
    grad_mu = grad_mu + lambda * &kl_mu;
    grad_logvar = grad_logvar + lambda * &kl_lv;

    let enc_grads = encoder::encoder_backward(&model.encoder, &enc_trace, &grad_mu, &grad_logvar)?;
    Ok((
        loss,
        ShapeGrads {
            encoder: enc_grads,
            weight_head: grad_head,
        },
    ))
}

/// One line of the stage-1 training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage1Record {
    pub step: usize,
    pub object_id: String,
    pub chamfer: f64,
    pub kl: f64,
    pub total: f64,
}

/// Extracts the matrix stage 1 trains against: positions, or (in baseline
/// mode) positions plus colors converted to the configured training space.
pub fn training_matrix(cloud: &CloudData, config: &TrainConfig) -> Result<Array2<f64>> {
    if config.baseline_mode {
        let colored = cloud.as_colored()?;
        Ok(colored.to_space(config.color_space).channels6())
    } else {
        Ok(cloud.positions().clone())
    }
}

/// Trains a stage-1 model: one object per step (round-robin), a fresh prior
/// sample each step, Adam on all three weight blocks. `on_record` receives
/// every step's losses; `on_checkpoint` fires periodically and once at the
/// end. A non-finite loss halts with the step and object id.
pub fn train_stage1<L, C>(
    objects: &[(String, CloudData)],
    config: &TrainConfig,
    mut on_record: L,
    mut on_checkpoint: C,
) -> Result<ShapeModel>
where
    L: FnMut(&Stage1Record),
    C: FnMut(&ShapeModel, usize) -> Result<()>,
{
    if objects.is_empty() {
        return Err(Error::EmptyCloud);
    }
    config.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ShapeModel::new_random(config, &mut rng)?;
    let data: Vec<(String, Array2<f64>)> = objects
        .iter()
        .map(|(id, cloud)| Ok((id.clone(), training_matrix(cloud, config)?)))
        .collect::<Result<_>>()?;

    let hp = config.adam_params();
    let mut st_pp = AdamState::new(model.encoder.per_point_weights.values().len());
    let mut st_head = AdamState::new(model.encoder.head_weights.values().len());
    let mut st_wh = AdamState::new(model.weight_head_weights.values().len());
    let checkpoint_every = (config.steps / 4).max(1);

    for step in 1..=config.steps {
        let (object_id, matrix) = &data[(step - 1) % data.len()];
        let prior = sample_prior(config.recon_points, config.prior, &mut rng)?;
        let eps = encoder::sample_eps(config.latent_dim, &mut rng);
        let (loss, grads) = stage1_loss_with_grad(&model, matrix, &prior, config.lambda, &eps)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NanLoss {
                    step,
                    object_id: object_id.clone(),
                },
                other => other,
            })?;
        if !loss.total.is_finite() {
            return Err(Error::NanLoss {
                step,
                object_id: object_id.clone(),
            });
        }
        nn::adam_step(
            &mut model.encoder.per_point_weights,
            &grads.encoder.per_point,
            &mut st_pp,
            &hp,
        )?;
        nn::adam_step(
            &mut model.encoder.head_weights,
            &grads.encoder.head,
            &mut st_head,
            &hp,
        )?;
        nn::adam_step(&mut model.weight_head_weights, &grads.weight_head, &mut st_wh, &hp)?;
        on_record(&Stage1Record {
            step,
            object_id: object_id.clone(),
            chamfer: loss.chamfer,
            kl: loss.kl,
            total: loss.total,
        });
        if step % checkpoint_every == 0 || step == config.steps {
            on_checkpoint(&model, step)?;
        }
    }
    Ok(model)
}
