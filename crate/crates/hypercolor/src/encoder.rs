//! Permutation-invariant point-cloud encoder with a variational latent.
//!
//! Both training stages use the same construction: a per-point MLP lifts each
//! point (3 channels in stage 1, 6 in stage 2) to a feature vector, a
//! coordinate-wise max pool collapses the set to one vector, and a head MLP
//! emits the latent mean and log-variance side by side. Max pooling makes the
//! whole thing independent of point order, which the gradient path preserves
//! by routing each pooled coordinate's gradient back to the point that won
//! the max.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{self, FlatWeights, GradTape, MlpSpec, Precision};
use crate::{Error, Result};

/// Bound on `logvar` before exponentiation.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Variational latent: mean, log-variance, and (after sampling) `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Array1<f64>,
    pub logvar: Array1<f64>,
    pub z: Option<Array1<f64>>,
}

impl LatentCode {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Weights for one encoder: per-point MLP plus pooled head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    per_point_spec: MlpSpec,
    pub per_point_weights: FlatWeights,
    head_spec: MlpSpec,
    pub head_weights: FlatWeights,
}

impl EncoderParams {
    pub fn new(
        per_point_spec: MlpSpec,
        per_point_weights: FlatWeights,
        head_spec: MlpSpec,
        head_weights: FlatWeights,
    ) -> Result<Self> {
        if per_point_spec.output_dim() != head_spec.input_dim() {
            return Err(Error::InvalidSpec(format!(
                "per-point output width {} must equal head input width {}",
                per_point_spec.output_dim(),
                head_spec.input_dim()
            )));
        }
        if !head_spec.output_dim().is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!(
                "head output width {} must be even (mu ++ logvar)",
                head_spec.output_dim()
            )));
        }
        if !per_point_weights.is_bound_to(&per_point_spec)
            || !head_weights.is_bound_to(&head_spec)
        {
            return Err(Error::InvalidSpec(
                "encoder weights are not bound to the given specs".into(),
            ));
        }
        Ok(EncoderParams {
            per_point_spec,
            per_point_weights,
            head_spec,
            head_weights,
        })
    }

    /// Xavier-initialized encoder: `input_dim -> feature_widths -> features`,
    /// then `features -> head_widths -> 2 * latent_dim`.
    pub fn new_random<R: Rng + ?Sized>(
        input_dim: usize,
        feature_widths: &[usize],
        features: usize,
        head_widths: &[usize],
        latent_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        use crate::nn::Activation::{Identity, Relu};
        let per_point_spec =
            MlpSpec::with_hidden(input_dim, feature_widths, features, Relu, Relu)?;
        let head_spec =
            MlpSpec::with_hidden(features, head_widths, 2 * latent_dim, Relu, Identity)?;
        let per_point_weights = FlatWeights::xavier(&per_point_spec, rng);
        let head_weights = FlatWeights::xavier(&head_spec, rng);
        EncoderParams::new(per_point_spec, per_point_weights, head_spec, head_weights)
    }

    pub fn per_point_spec(&self) -> &MlpSpec {
        &self.per_point_spec
    }

    pub fn head_spec(&self) -> &MlpSpec {
        &self.head_spec
    }

    pub fn input_dim(&self) -> usize {
        self.per_point_spec.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.head_spec.output_dim() / 2
    }

    pub fn param_count(&self) -> usize {
        self.per_point_spec.param_count() + self.head_spec.param_count()
    }
}

/// Recorded encoder forward pass for [`encoder_backward`].
pub struct EncoderTrace {
    per_point: GradTape,
    head: GradTape,
    /// Winning row index for each pooled feature coordinate.
    argmax: Vec<usize>,
    /// Which logvar coordinates hit the clamp (gradient is zero there).
    clamped: Vec<bool>,
}

/// Gradients for both encoder weight blocks.
pub struct EncoderGrads {
    pub per_point: FlatWeights,
    pub head: FlatWeights,
}

fn check_input(params: &EncoderParams, points: &Array2<f64>) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::EmptyCloud);
    }
    if points.ncols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "encoder input",
            expected: format!("N x {}", params.input_dim()),
            actual: format!("{} x {}", points.nrows(), points.ncols()),
        });
    }
    Ok(())
}

/// Coordinate-wise max over rows; ties go to the lowest row index.
fn max_pool(features: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let (n, d) = features.dim();
    let mut pooled = Array1::zeros(d);
    let mut argmax = vec![0usize; d];
    for j in 0..d {
        let mut best = features[[0, j]];
        let mut best_i = 0;
        for i in 1..n {
            if features[[i, j]] > best {
                best = features[[i, j]];
                best_i = i;
            }
        }
        pooled[j] = best;
        argmax[j] = best_i;
    }
    (pooled, argmax)
}

fn split_head_output(out: &Array2<f64>) -> (Array1<f64>, Array1<f64>, Vec<bool>) {
    let d = out.ncols() / 2;
    let mu = Array1::from_iter((0..d).map(|j| out[[0, j]]));
    let mut clamped = vec![false; d];
    let logvar = Array1::from_iter((0..d).map(|j| {
        let raw = out[[0, d + j]];
        if raw.abs() > LOGVAR_CLAMP {
            clamped[j] = true;
            raw.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
        } else {
            raw
        }
    }));
    (mu, logvar, clamped)
}

/// Per-point MLP, max pool, head MLP. The result is independent of point
/// order; `logvar` is clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`.
pub fn encode(
    params: &EncoderParams,
    points: &Array2<f64>,
    precision: Precision,
) -> Result<LatentCode> {
    check_input(params, points)?;
    let features = nn::forward_prec(
        &params.per_point_spec,
        &params.per_point_weights,
        points,
        precision,
    )?;
    let (pooled, _) = max_pool(&features);
    let head_in = pooled.insert_axis(Axis(0));
    let out = nn::forward_prec(&params.head_spec, &params.head_weights, &head_in, precision)?;
    let (mu, logvar, _) = split_head_output(&out);
    Ok(LatentCode {
        mu,
        logvar,
        z: None,
    })
}

/// [`encode`] plus the trace needed to backpropagate through the encoder.
pub fn encode_with_trace(
    params: &EncoderParams,
    points: &Array2<f64>,
    precision: Precision,
) -> Result<(LatentCode, EncoderTrace)> {
    check_input(params, points)?;
    let (features, per_point) = nn::forward_with_tape(
        &params.per_point_spec,
        &params.per_point_weights,
        points,
        precision,
    )?;
    let (pooled, argmax) = max_pool(&features);
    let head_in = pooled.insert_axis(Axis(0));
    let (out, head) =
        nn::forward_with_tape(&params.head_spec, &params.head_weights, &head_in, precision)?;
    let (mu, logvar, clamped) = split_head_output(&out);
    Ok((
        LatentCode {
            mu,
            logvar,
            z: None,
        },
        EncoderTrace {
            per_point,
            head,
            argmax,
            clamped,
        },
    ))
}

/// Backpropagates `(grad_mu, grad_logvar)` through the head, the max pool
/// (gradient routed to each coordinate's winning point), and the per-point
/// MLP. Clamped logvar coordinates contribute zero gradient.
pub fn encoder_backward(
    params: &EncoderParams,
    trace: &EncoderTrace,
    grad_mu: &Array1<f64>,
    grad_logvar: &Array1<f64>,
) -> Result<EncoderGrads> {
    let d = params.latent_dim();
    if grad_mu.len() != d || grad_logvar.len() != d {
        return Err(Error::ShapeMismatch {
            context: "encoder_backward upstream",
            expected: format!("two vectors of length {d}"),
            actual: format!("{} and {}", grad_mu.len(), grad_logvar.len()),
        });
    }
    let mut upstream = Array2::zeros((1, 2 * d));
    for j in 0..d {
        upstream[[0, j]] = grad_mu[j];
        upstream[[0, d + j]] = if trace.clamped[j] { 0.0 } else { grad_logvar[j] };
    }
    let (head_grads, pooled_grad) = nn::backward(&trace.head, &upstream)?;
    let features = trace.per_point.output();
    let mut feature_grad = Array2::zeros(features.dim());
    for (j, &i) in trace.argmax.iter().enumerate() {
        feature_grad[[i, j]] = pooled_grad[[0, j]];
    }
    let (per_point_grads, _) = nn::backward(&trace.per_point, &feature_grad)?;
    Ok(EncoderGrads {
        per_point: per_point_grads,
        head: head_grads,
    })
}

/// Standard-normal noise vector for the reparameterization trick.
pub fn sample_eps<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|_| StandardNormal.sample(rng)))
}

/// `z = mu + exp(logvar / 2) * eps` — deterministic given the noise, so
/// gradients flow to `mu` and `logvar`.
pub fn reparameterize(code: &LatentCode, eps: &Array1<f64>) -> Array1<f64> {
    &code.mu + &(code.logvar.mapv(|v| (v / 2.0).exp()) * eps)
}

/// Draws fresh noise and reparameterizes.
pub fn sample_latent<R: Rng + ?Sized>(code: &LatentCode, rng: &mut R) -> Array1<f64> {
    let eps = sample_eps(code.dim(), rng);
    reparameterize(code, &eps)
}

/// `KL(N(mu, exp(logvar)) || N(0, I)) = 0.5 * sum(exp(lv) + mu^2 - 1 - lv)`.
pub fn kl_divergence(code: &LatentCode) -> f64 {
    code.mu
        .iter()
        .zip(code.logvar.iter())
        .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

/// Gradients of [`kl_divergence`] with respect to `mu` and `logvar`.
pub fn kl_gradients(code: &LatentCode) -> (Array1<f64>, Array1<f64>) {
    let grad_mu = code.mu.clone();
    let grad_logvar = code.logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0));
    (grad_mu, grad_logvar)
}
