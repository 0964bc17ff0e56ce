//! Stage 2: a second hypernetwork that colors frozen stage-1
//! reconstructions.
//!
//! The encoder consumes the 6-channel colored cloud (positions plus colors in
//! the training color space, LAB by default), the weight head emits the color
//! target network's weights, and the loss is MSE between the predicted colors
//! of a prior sample and k-NN-aligned ground-truth colors on the frozen
//! reconstruction of that same sample. Gradients never touch the shape model.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::encoder::{
    self, encode, encode_with_trace, EncoderGrads, EncoderParams, LatentCode,
};
use crate::io::ColoredPointCloud;
use crate::metrics::{color_mse_with_grad, knn_align_positions};
use crate::nn::{self, Activation, AdamState, FlatWeights, MlpSpec, Precision};
use crate::shape_stage::{reconstruct, sample_prior, PriorSample, ShapeModel};
use crate::{Error, Result};

pub use crate::color::{rgb_lab_convert, ColorSpaceTag};

/// Stage-2 model: 6-channel encoder, weight head, and the color target
/// network architecture (sigmoid output, so colors land in `[0, 1]`).
#[derive(Debug, Clone)]
pub struct ColorModel {
    pub encoder: EncoderParams,
    weight_head_spec: MlpSpec,
    pub weight_head_weights: FlatWeights,
    color_spec: MlpSpec,
    precision: Precision,
    color_space: ColorSpaceTag,
}

impl ColorModel {
    pub fn from_parts(
        encoder: EncoderParams,
        weight_head_spec: MlpSpec,
        weight_head_weights: FlatWeights,
        color_spec: MlpSpec,
        precision: Precision,
        color_space: ColorSpaceTag,
    ) -> Result<Self> {
        if encoder.input_dim() != 6 {
            return Err(Error::InvalidSpec(format!(
                "color encoder input must be 6 channels, got {}",
                encoder.input_dim()
            )));
        }
        if weight_head_spec.output_dim() != color_spec.param_count() {
            return Err(Error::InvalidSpec(format!(
                "weight head emits {} values but the color network has {} parameters",
                weight_head_spec.output_dim(),
                color_spec.param_count()
            )));
        }
        if weight_head_spec.input_dim() != encoder.latent_dim() {
            return Err(Error::InvalidSpec(format!(
                "weight head input {} must equal latent dim {}",
                weight_head_spec.input_dim(),
                encoder.latent_dim()
            )));
        }
        if color_spec.input_dim() != 3 || color_spec.output_dim() != 3 {
            return Err(Error::InvalidSpec(format!(
                "color network must map 3 -> 3, got {} -> {}",
                color_spec.input_dim(),
                color_spec.output_dim()
            )));
        }
        if *color_spec.activations().last().unwrap() != Activation::Sigmoid {
            return Err(Error::InvalidSpec(
                "color network output activation must be sigmoid".into(),
            ));
        }
        if !weight_head_weights.is_bound_to(&weight_head_spec) {
            return Err(Error::InvalidSpec(
                "weight head weights are not bound to its spec".into(),
            ));
        }
        Ok(ColorModel {
            encoder,
            weight_head_spec,
            weight_head_weights,
            color_spec,
            precision,
            color_space,
        })
    }

    pub fn new_random<R: Rng + ?Sized>(config: &TrainConfig, rng: &mut R) -> Result<Self> {
        let features = *config.encoder_widths.last().unwrap();
        let hidden = &config.encoder_widths[..config.encoder_widths.len() - 1];
        let encoder =
            EncoderParams::new_random(6, hidden, features, &[features], config.latent_dim, rng)?;
        let color_spec = MlpSpec::with_hidden(
            3,
            &config.color_widths,
            3,
            Activation::Relu,
            Activation::Sigmoid,
        )?;
        let weight_head_spec = MlpSpec::with_hidden(
            config.latent_dim,
            &config.weight_head_widths,
            color_spec.param_count(),
            Activation::Relu,
            Activation::Identity,
        )?;
        let weight_head_weights = FlatWeights::xavier(&weight_head_spec, rng);
        ColorModel::from_parts(
            encoder,
            weight_head_spec,
            weight_head_weights,
            color_spec,
            config.precision,
            config.color_space,
        )
    }

    pub fn weight_head_spec(&self) -> &MlpSpec {
        &self.weight_head_spec
    }

    pub fn color_spec(&self) -> &MlpSpec {
        &self.color_spec
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Color space the model was trained in; encoder inputs and color
    /// outputs live in this space.
    pub fn color_space(&self) -> ColorSpaceTag {
        self.color_space
    }

    pub fn encoder_input(&self, cloud: &ColoredPointCloud) -> Array2<f64> {
        cloud.to_space(self.color_space).channels6()
    }

    /// Latent mean of a colored cloud (no sampling noise).
    pub fn encode_mean(&self, cloud: &ColoredPointCloud) -> Result<Array1<f64>> {
        Ok(encode(&self.encoder, &self.encoder_input(cloud), self.precision)?.mu)
    }

    /// Color-network weights for a latent vector.
    pub fn decode_weights(&self, z: &Array1<f64>) -> Result<FlatWeights> {
        let row = z.clone().insert_axis(Axis(0));
        let out = nn::forward_prec(
            &self.weight_head_spec,
            &self.weight_head_weights,
            &row,
            self.precision,
        )?;
        FlatWeights::new(out.row(0).to_vec(), &self.color_spec)
    }

    /// Colors for a prior sample under generated weights `eta`; row `i`
    /// colors the shape reconstruction of the same prior row.
    pub fn colorize(&self, eta: &FlatWeights, prior: &PriorSample) -> Result<Array2<f64>> {
        colorize(&self.color_spec, eta, prior, self.precision)
    }
}

/// Encode a colored cloud, sample the latent, decode color-network weights.
pub fn predict_color_weights<R: Rng + ?Sized>(
    model: &ColorModel,
    cloud: &ColoredPointCloud,
    rng: &mut R,
) -> Result<(FlatWeights, LatentCode)> {
    let mut code = encode(&model.encoder, &model.encoder_input(cloud), model.precision)?;
    let z = encoder::sample_latent(&code, rng);
    let eta = model.decode_weights(&z)?;
    code.z = Some(z);
    Ok((eta, code))
}

/// `forward(color_spec, eta, prior.points)`; sigmoid output keeps every
/// channel in `[0, 1]`.
pub fn colorize(
    color_spec: &MlpSpec,
    eta: &FlatWeights,
    prior: &PriorSample,
    precision: Precision,
) -> Result<Array2<f64>> {
    nn::forward_prec(color_spec, eta, &prior.points, precision)
}

/// Loss components for one stage-2 step.
#[derive(Debug, Clone, Copy)]
pub struct Stage2Loss {
    pub total: f64,
    /// MSE in the training color space, unit scale.
    pub mse: f64,
    /// The same comparison on the 0-255 RGB scale (reported, not trained).
    pub mse_rgb255: f64,
    pub kl: f64,
}

/// Gradients for every trainable block of a [`ColorModel`].
pub struct ColorGrads {
    pub encoder: EncoderGrads,
    pub weight_head: FlatWeights,
}

fn stage2_forward(
    model: &ColorModel,
    shape: &ShapeModel,
    theta: &FlatWeights,
    cloud: &ColoredPointCloud,
    prior: &PriorSample,
    k: usize,
) -> Result<Array2<f64>> {
    // Alignment targets: colors of the k nearest original points to each
    // frozen-reconstruction point, in the training color space.
    let recon = reconstruct(shape.target_spec(), theta, prior, shape.precision())?;
    let train_cloud = cloud.to_space(model.color_space);
    knn_align_positions(recon.positions(), &train_cloud, k)
}

fn rgb255_mse(model: &ColorModel, predicted: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let (p, _) = rgb_lab_convert(predicted, model.color_space, ColorSpaceTag::RgbUnit);
    let (t, _) = rgb_lab_convert(targets, model.color_space, ColorSpaceTag::RgbUnit);
    crate::metrics::color_mse(&p, &t).unwrap() * 255.0 * 255.0
}

/// Stage-2 loss on a frozen `theta`: MSE between the color network's output
/// on the prior sample and k-NN-aligned targets, plus an optional KL term.
/// Gradients flow through the color path only.
#[allow(clippy::too_many_arguments)]
pub fn stage2_loss(
    model: &ColorModel,
    shape: &ShapeModel,
    theta: &FlatWeights,
    cloud: &ColoredPointCloud,
    prior: &PriorSample,
    k: usize,
    lambda2: f64,
    eps: &Array1<f64>,
) -> Result<Stage2Loss> {
    let targets = stage2_forward(model, shape, theta, cloud, prior, k)?;
    let code = encode(&model.encoder, &model.encoder_input(cloud), model.precision)?;
    let z = encoder::reparameterize(&code, eps);
    let eta = model.decode_weights(&z)?;
    let predicted = model.colorize(&eta, prior)?;
    let (mse, _) = color_mse_with_grad(&predicted, &targets)?;
    let kl = encoder::kl_divergence(&code);
    Ok(Stage2Loss {
        total: mse + lambda2 * kl,
        mse,
        mse_rgb255: rgb255_mse(model, &predicted, &targets),
        kl,
    })
}

/// [`stage2_loss`] plus gradients for the color model's weight blocks.
#[allow(clippy::too_many_arguments)]
pub fn stage2_loss_with_grad(
    model: &ColorModel,
    shape: &ShapeModel,
    theta: &FlatWeights,
    cloud: &ColoredPointCloud,
    prior: &PriorSample,
    k: usize,
    lambda2: f64,
    eps: &Array1<f64>,
) -> Result<(Stage2Loss, ColorGrads)> {
    let targets = stage2_forward(model, shape, theta, cloud, prior, k)?;
    let (code, enc_trace) =
        encode_with_trace(&model.encoder, &model.encoder_input(cloud), model.precision)?;
    let z = encoder::reparameterize(&code, eps);
    let z_row = z.clone().insert_axis(Axis(0));
    let (eta_row, head_tape) = nn::forward_with_tape(
        &model.weight_head_spec,
        &model.weight_head_weights,
        &z_row,
        model.precision,
    )?;
    let eta = FlatWeights::new(eta_row.row(0).to_vec(), &model.color_spec)?;
    let (predicted, color_tape) =
        nn::forward_with_tape(&model.color_spec, &eta, &prior.points, model.precision)?;
    let (mse, grad_pred) = color_mse_with_grad(&predicted, &targets)?;
    let kl = encoder::kl_divergence(&code);
    let loss = Stage2Loss {
        total: mse + lambda2 * kl,
        mse,
        mse_rgb255: rgb255_mse(model, &predicted, &targets),
        kl,
    };

    let (grad_eta, _) = nn::backward(&color_tape, &grad_pred)?;
    let upstream =
        Array2::from_shape_vec((1, grad_eta.values().len()), grad_eta.values().to_vec()).unwrap();
    let (grad_head, grad_z_row) = nn::backward(&head_tape, &upstream)?;
    let grad_z = grad_z_row.row(0).to_owned();
    let mut grad_mu = grad_z.clone();
    let mut grad_logvar = &grad_z * &(code.logvar.mapv(|v| 0.5 * (v / 2.0).exp()) * eps);
    let (kl_mu, kl_lv) = encoder::kl_gradients(&code);
    grad_mu = grad_mu + lambda2 * &kl_mu;
    grad_logvar = grad_logvar + lambda2 * &kl_lv;
    let enc_grads = encoder::encoder_backward(&model.encoder, &enc_trace, &grad_mu, &grad_logvar)?;
    Ok((
        loss,
        ColorGrads {
            encoder: enc_grads,
            weight_head: grad_head,
        },
    ))
}

/// One line of the stage-2 training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage2Record {
    pub step: usize,
    pub object_id: String,
    pub mse_lab_unit: f64,
    pub mse_rgb255: f64,
}

/// Trains a stage-2 model against a frozen [`ShapeModel`]. Each object's
/// `theta` is decoded once from its latent mean and never updated; alignment
/// targets are recomputed every step because the prior sample is fresh.
pub fn train_stage2<L, C>(
    objects: &[(String, ColoredPointCloud)],
    shape: &ShapeModel,
    config: &TrainConfig,
    mut on_record: L,
    mut on_checkpoint: C,
) -> Result<ColorModel>
where
    L: FnMut(&Stage2Record),
    C: FnMut(&ColorModel, usize) -> Result<()>,
{
    if objects.is_empty() {
        return Err(Error::EmptyCloud);
    }
    config.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ColorModel::new_random(config, &mut rng)?;
    let frozen: Vec<(String, &ColoredPointCloud, FlatWeights)> = objects
        .iter()
        .map(|(id, cloud)| {
            let z = shape.encode_mean(&cloud.positions_cloud())?;
            let theta = shape.decode_weights(&z)?;
            Ok((id.clone(), cloud, theta))
        })
        .collect::<Result<_>>()?;

    let hp = config.adam_params();
    let mut st_pp = AdamState::new(model.encoder.per_point_weights.values().len());
    let mut st_head = AdamState::new(model.encoder.head_weights.values().len());
    let mut st_wh = AdamState::new(model.weight_head_weights.values().len());
    let checkpoint_every = (config.steps / 4).max(1);

    for step in 1..=config.steps {
        let (object_id, cloud, theta) = &frozen[(step - 1) % frozen.len()];
        let prior = sample_prior(config.recon_points, config.prior, &mut rng)?;
        let eps = encoder::sample_eps(config.latent_dim, &mut rng);
        let (loss, grads) = stage2_loss_with_grad(
            &model,
            shape,
            theta,
            cloud,
            &prior,
            config.k,
            config.lambda2,
            &eps,
        )
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
        on_record(&Stage2Record {
            step,
            object_id: object_id.clone(),
            mse_lab_unit: loss.mse,
            mse_rgb255: loss.mse_rgb255,
        });
        if step % checkpoint_every == 0 || step == config.steps {
            on_checkpoint(&model, step)?;
        }
    }
    Ok(model)
}

/// The full two-stage reconstruction: one prior sample `S`, positions from
/// the shape target network, colors from the color target network, both on
/// the same rows of `S`. Colors are returned in `out_space`.
pub fn reconstruct_colored<R: Rng + ?Sized>(
    shape: &ShapeModel,
    color: &ColorModel,
    cloud: &ColoredPointCloud,
    n: usize,
    kind: crate::shape_stage::PriorKind,
    out_space: ColorSpaceTag,
    rng: &mut R,
) -> Result<ColoredPointCloud> {
    let prior = sample_prior(n, kind, rng)?;
    let (theta, _) = crate::shape_stage::predict_weights(shape, &cloud.positions_cloud(), rng)?;
    let (eta, _) = predict_color_weights(color, cloud, rng)?;
    let positions = shape.reconstruct(&theta, &prior)?;
    let colors = color.colorize(&eta, &prior)?;
    let (colors, _) = rgb_lab_convert(&colors, color.color_space, out_space);
    ColoredPointCloud::new(positions.positions().clone(), colors, out_space)
}

/// [`reconstruct_colored`] with both latents fixed to the encoder mean — the
/// deterministic inference path used for evaluation (only the prior sample
/// consumes randomness). This matches how stage 2 was trained, where each
/// object's shape weights are decoded from the latent mean.
pub fn reconstruct_colored_mean<R: Rng + ?Sized>(
    shape: &ShapeModel,
    color: &ColorModel,
    cloud: &ColoredPointCloud,
    n: usize,
    kind: crate::shape_stage::PriorKind,
    out_space: ColorSpaceTag,
    rng: &mut R,
) -> Result<ColoredPointCloud> {
    let prior = sample_prior(n, kind, rng)?;
    let theta = shape.decode_weights(&shape.encode_mean(&cloud.positions_cloud())?)?;
    let eta = color.decode_weights(&color.encode_mean(cloud)?)?;
    let positions = shape.reconstruct(&theta, &prior)?;
    let colors = color.colorize(&eta, &prior)?;
    let (colors, _) = rgb_lab_convert(&colors, color.color_space, out_space);
    ColoredPointCloud::new(positions.positions().clone(), colors, out_space)
}
