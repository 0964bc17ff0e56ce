//! Dense MLPs with reverse-mode gradients over externally supplied flat
//! weight vectors.
//!
//! Hypernetworks emit a target network's parameters as a plain vector, so
//! every forward pass here takes the weights as data rather than owning them.
//! The flat layout is fixed: for each layer, the weight matrix in row-major
//! order (shape `in_dim x out_dim`, row = input unit), followed by the biases.
//! This makes the hypernetwork's output head a straight index map into the
//! target network.
//!
//! Arithmetic runs in f64 by default; f32 is selectable per call via
//! [`Precision`] (weights and inputs are cast down, the same kernel runs
//! monomorphized for f32, and results are cast back).

use ndarray::{Array2, ArrayView1, ArrayView2, NdFloat};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply<F: NdFloat>(self, z: F) -> F {
        match self {
            Activation::Relu => {
                if z > F::zero() {
                    z
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => F::one() / (F::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    fn deriv<F: NdFloat>(self, z: F) -> F {
        match self {
            Activation::Relu => {
                if z > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                F::one() - t * t
            }
            Activation::Sigmoid => {
                let s = F::one() / (F::one() + (-z).exp());
                s * (F::one() - s)
            }
            Activation::Identity => F::one(),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Identity => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            2 => Activation::Sigmoid,
            3 => Activation::Identity,
            other => {
                return Err(Error::Checkpoint(format!(
                    "unknown activation tag {other}"
                )))
            }
        })
    }
}

/// Floating-point width for a forward/backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Architecture of a dense MLP: layer widths plus one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output widths, got {:?}",
                layer_widths
            )));
        }
        if layer_widths.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "zero layer width in {:?}",
                layer_widths
            )));
        }
        if activations.len() != layer_widths.len() - 1 {
            return Err(Error::InvalidSpec(format!(
                "{} widths require {} activations, got {}",
                layer_widths.len(),
                layer_widths.len() - 1,
                activations.len()
            )));
        }
        Ok(MlpSpec {
            layer_widths,
            activations,
        })
    }

    /// `in -> hidden... -> out` with one activation for every hidden layer
    /// and a separate output activation.
    pub fn with_hidden(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(output_act);
        MlpSpec::new(widths, acts)
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    /// Total parameter count: sum over layers of `(in + 1) * out`.
    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// FNV-1a over widths and activation tags; binds a weight vector to its
    /// architecture.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for &w in &self.layer_widths {
            for b in (w as u64).to_le_bytes() {
                eat(b);
            }
        }
        for &a in &self.activations {
            eat(a.tag());
        }
        h
    }

    /// Offsets of each layer's weight block and bias block in the flat
    /// vector.
    fn layer_offsets(&self) -> Vec<(usize, usize, usize)> {
        // (weight_start, bias_start, end)
        let mut out = Vec::with_capacity(self.num_layers());
        let mut pos = 0;
        for w in self.layer_widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bias_start = pos + fan_in * fan_out;
            let end = bias_start + fan_out;
            out.push((pos, bias_start, end));
            pos = end;
        }
        out
    }
}

/// A flat parameter vector bound to an [`MlpSpec`] by hash.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatWeights {
    values: Vec<f64>,
    spec_hash: u64,
}

impl FlatWeights {
    pub fn new(values: Vec<f64>, spec: &MlpSpec) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::ShapeMismatch {
                context: "FlatWeights::new",
                expected: format!("{} parameters", spec.param_count()),
                actual: format!("{}", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "weights",
                index: i,
            });
        }
        Ok(FlatWeights {
            values,
            spec_hash: spec.hash(),
        })
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        FlatWeights {
            values: vec![0.0; spec.param_count()],
            spec_hash: spec.hash(),
        }
    }

    /// Xavier/Glorot uniform init, biases zero.
    pub fn xavier<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut values = vec![0.0; spec.param_count()];
        for (layer, (w_start, b_start, _)) in spec.layer_offsets().into_iter().enumerate() {
            let (fan_in, fan_out) = (
                spec.layer_widths[layer],
                spec.layer_widths[layer + 1],
            );
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut values[w_start..b_start] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        FlatWeights {
            values,
            spec_hash: spec.hash(),
        }
    }

    pub(crate) fn from_raw(values: Vec<f64>, spec_hash: u64) -> Self {
        FlatWeights { values, spec_hash }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn spec_hash(&self) -> u64 {
        self.spec_hash
    }

    pub fn is_bound_to(&self, spec: &MlpSpec) -> bool {
        self.spec_hash == spec.hash()
    }

    fn check_bound(&self, spec: &MlpSpec) -> Result<()> {
        if !self.is_bound_to(spec) {
            return Err(Error::SpecBinding {
                expected: spec.hash(),
                actual: self.spec_hash,
            });
        }
        Ok(())
    }
}

struct TapeData<F> {
    spec: MlpSpec,
    weights: Vec<F>,
    /// Input to each layer; `layer_inputs[0]` is the network input.
    layer_inputs: Vec<Array2<F>>,
    pre_activations: Vec<Array2<F>>,
    output: Array2<F>,
}

enum TapeInner {
    F32(TapeData<f32>),
    F64(TapeData<f64>),
}

/// Recorded forward pass, sufficient to compute parameter and input
/// gradients.
pub struct GradTape(TapeInner);

impl GradTape {
    /// Re-runs the recorded forward pass from the stored inputs and weights.
    /// The result is bit-identical to the original output.
    pub fn replay(&self) -> Array2<f64> {
        match &self.0 {
            TapeInner::F32(t) => {
                let (out, _) = run_forward(&t.spec, &t.weights, &t.layer_inputs[0], false);
                out.mapv(|v| v as f64)
            }
            TapeInner::F64(t) => {
                let (out, _) = run_forward(&t.spec, &t.weights, &t.layer_inputs[0], false);
                out
            }
        }
    }

    pub fn output(&self) -> Array2<f64> {
        match &self.0 {
            TapeInner::F32(t) => t.output.mapv(|v| v as f64),
            TapeInner::F64(t) => t.output.clone(),
        }
    }

    fn output_shape(&self) -> (usize, usize) {
        match &self.0 {
            TapeInner::F32(t) => t.output.dim(),
            TapeInner::F64(t) => t.output.dim(),
        }
    }
}

/// Per-layer inputs and pre-activations recorded for the backward pass.
type ForwardTrace<F> = (Vec<Array2<F>>, Vec<Array2<F>>);

fn run_forward<F: NdFloat>(
    spec: &MlpSpec,
    weights: &[F],
    inputs: &Array2<F>,
    record: bool,
) -> (Array2<F>, Option<ForwardTrace<F>>) {
    let offsets = spec.layer_offsets();
    let mut layer_inputs = Vec::new();
    let mut pre_acts = Vec::new();
    let mut x = inputs.clone();
    for (layer, &(w_start, b_start, end)) in offsets.iter().enumerate() {
        let fan_in = spec.layer_widths[layer];
        let fan_out = spec.layer_widths[layer + 1];
        let w = ArrayView2::from_shape((fan_in, fan_out), &weights[w_start..b_start]).unwrap();
        let b = ArrayView1::from_shape(fan_out, &weights[b_start..end]).unwrap();
        let mut z = x.dot(&w);
        z += &b;
        let act = spec.activations[layer];
        let y = z.mapv(|v| act.apply(v));
        if record {
            layer_inputs.push(x);
            pre_acts.push(z);
        }
        x = y;
    }
    let trace = record.then_some((layer_inputs, pre_acts));
    (x, trace)
}

fn run_backward<F: NdFloat>(tape: &TapeData<F>, upstream: &Array2<F>) -> (Vec<F>, Array2<F>) {
    let spec = &tape.spec;
    let offsets = spec.layer_offsets();
    let mut grads = vec![F::zero(); spec.param_count()];
    let mut d_out = upstream.clone();
    for layer in (0..spec.num_layers()).rev() {
        let (w_start, b_start, end) = offsets[layer];
        let fan_in = spec.layer_widths[layer];
        let fan_out = spec.layer_widths[layer + 1];
        let act = spec.activations[layer];
        let dz = &d_out * &tape.pre_activations[layer].mapv(|z| act.deriv(z));
        let x = &tape.layer_inputs[layer];
        let dw = x.t().dot(&dz);
        let db = dz.sum_axis(ndarray::Axis(0));
        grads[w_start..b_start].copy_from_slice(dw.as_standard_layout().as_slice().unwrap());
        grads[b_start..end].copy_from_slice(db.as_slice().unwrap());
        let w = ArrayView2::from_shape((fan_in, fan_out), &tape.weights[w_start..b_start]).unwrap();
        d_out = dz.dot(&w.t());
    }
    (grads, d_out)
}

fn validate_forward(spec: &MlpSpec, weights: &FlatWeights, inputs: &Array2<f64>) -> Result<()> {
    weights.check_bound(spec)?;
    if weights.values.len() != spec.param_count() {
        return Err(Error::ShapeMismatch {
            context: "forward weights",
            expected: format!("{} parameters", spec.param_count()),
            actual: format!("{}", weights.values.len()),
        });
    }
    if let Some(i) = weights.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "weights",
            index: i,
        });
    }
    if inputs.ncols() != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "forward inputs",
            expected: format!("B x {}", spec.input_dim()),
            actual: format!("{} x {}", inputs.nrows(), inputs.ncols()),
        });
    }
    Ok(())
}

/// Forward pass in f64. Pure function of `(weights, inputs)`.
pub fn forward(spec: &MlpSpec, weights: &FlatWeights, inputs: &Array2<f64>) -> Result<Array2<f64>> {
    forward_prec(spec, weights, inputs, Precision::F64)
}

/// Forward pass at a chosen precision.
pub fn forward_prec(
    spec: &MlpSpec,
    weights: &FlatWeights,
    inputs: &Array2<f64>,
    precision: Precision,
) -> Result<Array2<f64>> {
    validate_forward(spec, weights, inputs)?;
    match precision {
        Precision::F64 => {
            let (out, _) = run_forward(spec, &weights.values, inputs, false);
            Ok(out)
        }
        Precision::F32 => {
            let w: Vec<f32> = weights.values.iter().map(|&v| v as f32).collect();
            let x = inputs.mapv(|v| v as f32);
            let (out, _) = run_forward(spec, &w, &x, false);
            Ok(out.mapv(|v| v as f64))
        }
    }
}

/// Forward pass that records a [`GradTape`] for [`backward`].
pub fn forward_with_tape(
    spec: &MlpSpec,
    weights: &FlatWeights,
    inputs: &Array2<f64>,
    precision: Precision,
) -> Result<(Array2<f64>, GradTape)> {
    validate_forward(spec, weights, inputs)?;
    match precision {
        Precision::F64 => {
            let (out, trace) = run_forward(spec, &weights.values, inputs, true);
            let (layer_inputs, pre_activations) = trace.unwrap();
            let tape = GradTape(TapeInner::F64(TapeData {
                spec: spec.clone(),
                weights: weights.values.clone(),
                layer_inputs,
                pre_activations,
                output: out.clone(),
            }));
            Ok((out, tape))
        }
        Precision::F32 => {
            let w: Vec<f32> = weights.values.iter().map(|&v| v as f32).collect();
            let x = inputs.mapv(|v| v as f32);
            let (out, trace) = run_forward(spec, &w, &x, true);
            let (layer_inputs, pre_activations) = trace.unwrap();
            let out64 = out.mapv(|v| v as f64);
            let tape = GradTape(TapeInner::F32(TapeData {
                spec: spec.clone(),
                weights: w,
                layer_inputs,
                pre_activations,
                output: out,
            }));
            Ok((out64, tape))
        }
    }
}

/// Reverse pass: gradients of `sum(upstream * output)` with respect to the
/// flat weights and the inputs.
pub fn backward(tape: &GradTape, upstream: &Array2<f64>) -> Result<(FlatWeights, Array2<f64>)> {
    let expected = tape.output_shape();
    if upstream.dim() != expected {
        return Err(Error::ShapeMismatch {
            context: "backward upstream",
            expected: format!("{} x {}", expected.0, expected.1),
            actual: format!("{} x {}", upstream.nrows(), upstream.ncols()),
        });
    }
    match &tape.0 {
        TapeInner::F64(t) => {
            let (grads, d_in) = run_backward(t, upstream);
            Ok((FlatWeights::from_raw(grads, t.spec.hash()), d_in))
        }
        TapeInner::F32(t) => {
            let up = upstream.mapv(|v| v as f32);
            let (grads, d_in) = run_backward(t, &up);
            Ok((
                FlatWeights::from_raw(grads.into_iter().map(|g| g as f64).collect(), t.spec.hash()),
                d_in.mapv(|v| v as f64),
            ))
        }
    }
}

fn sum_loss(spec: &MlpSpec, weights: &FlatWeights, inputs: &Array2<f64>) -> f64 {
    let (out, _) = run_forward(spec, &weights.values, inputs, false);
    out.sum()
}

fn analytic_sum_grads(
    spec: &MlpSpec,
    weights: &FlatWeights,
    inputs: &Array2<f64>,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let (out, tape) = forward_with_tape(spec, weights, inputs, Precision::F64)?;
    let ones = Array2::ones(out.dim());
    let (gw, gx) = backward(&tape, &ones)?;
    Ok((gw.values, gx))
}

fn numeric_sum_grads(
    spec: &MlpSpec,
    weights: &FlatWeights,
    inputs: &Array2<f64>,
    eps: f64,
) -> (Vec<f64>, Array2<f64>) {
    let mut w = weights.clone();
    let mut gw = vec![0.0; w.values.len()];
    for (i, g) in gw.iter_mut().enumerate() {
        let orig = w.values[i];
        w.values[i] = orig + eps;
        let plus = sum_loss(spec, &w, inputs);
        w.values[i] = orig - eps;
        let minus = sum_loss(spec, &w, inputs);
        w.values[i] = orig;
        *g = (plus - minus) / (2.0 * eps);
    }
    let mut x = inputs.clone();
    let mut gx = Array2::zeros(inputs.dim());
    for idx in ndarray::indices(inputs.dim()) {
        let orig = x[idx];
        x[idx] = orig + eps;
        let plus = sum_loss(spec, weights, &x);
        x[idx] = orig - eps;
        let minus = sum_loss(spec, weights, &x);
        x[idx] = orig;
        gx[idx] = (plus - minus) / (2.0 * eps);
    }
    (gw, gx)
}

/// Maximum relative error between the analytic gradient and a central
/// finite-difference estimate, over all parameters and inputs, for the
/// surrogate loss `sum(forward(...))`.
pub fn grad_check(
    spec: &MlpSpec,
    weights: &FlatWeights,
    inputs: &Array2<f64>,
    eps: f64,
) -> Result<f64> {
    assert!(eps > 0.0, "grad_check eps must be positive");
    let (agw, agx) = analytic_sum_grads(spec, weights, inputs)?;
    let (ngw, ngx) = numeric_sum_grads(spec, weights, inputs, eps);
    let mut max_err: f64 = 0.0;
    for (a, n) in agw.iter().zip(&ngw) {
        max_err = max_err.max(rel_err(*a, *n));
    }
    for (a, n) in agx.iter().zip(ngx.iter()) {
        max_err = max_err.max(rel_err(*a, *n));
    }
    Ok(max_err)
}

pub(crate) fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (1e-8_f64).max(analytic.abs() + numeric.abs())
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and step count for one parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. Rejects non-finite gradients, naming the
/// offending parameter index.
pub fn adam_step(
    params: &mut FlatWeights,
    grads: &FlatWeights,
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    if params.values.len() != grads.values.len() || params.values.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            context: "adam_step",
            expected: format!("{} parameters", params.values.len()),
            actual: format!("{} grads / {} state", grads.values.len(), state.m.len()),
        });
    }
    if let Some(i) = grads.values.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            index: i,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.values.len() {
        let g = grads.values[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.values[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}
