//! Neural optimizer for the relaxed gearshift problem.
//!
//! A tanh MLP maps a horizon's reference speeds and accelerations to `N`
//! heads of `n_b` logits. Each head goes through a scaled softmax
//! ("soft-argmax"), so every output row is a valid relaxed selector row by
//! construction. Training minimises
//!
//! ```text
//! ω₁ · x_N(B) / E_ref  +  ω₂ · Σ_{k,i} b_{i,k} (1 − b_{i,k})
//! ```
//!
//! directly, back-propagating through the single-shooting rollout. No
//! labels from an exact solver are involved.
//!
//! Gradients are derived by hand for this fixed architecture; see
//! [`backward`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cycle::Scenario;
use crate::error::{Error, Result};
use crate::ocp::{ModeTable, RelaxedPlan, StepMatrix};
use crate::vehicle::{Gear, Powertrain};

/// Version tag written into persisted parameter files.
pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Number of heads, one per horizon step.
    pub horizon: usize,
    /// Width of each head, one per gear.
    pub modes: usize,
    /// Soft-argmax scale K.
    pub k_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 64,
            horizon: 8,
            modes: 2,
            k_scale: 10.0,
        }
    }
}

impl NetConfig {
    pub fn input_dim(&self) -> usize {
        2 * self.horizon
    }

    pub fn output_dim(&self) -> usize {
        self.horizon * self.modes
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_width == 0 || self.horizon == 0 || self.modes < 2
        {
            return Err(Error::InvalidParams(
                "network needs at least one hidden layer, one step and two modes".into(),
            ));
        }
        if !(self.k_scale > 0.0) {
            return Err(Error::InvalidParams(
                "soft-argmax scale K must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Fully connected layer, `weights` row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn xavier(inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let limit = gain * (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs))
            .zip(&self.bias)
        {
            *o = b + dot(row, x);
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = a4
        .remainder()
        .iter()
        .zip(b4.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in a4.zip(b4) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Per-feature affine normalisation `(x − mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and standard deviation of raw features over `data`; constant
    /// features get scale 1.
    pub fn fit(data: &[Scenario]) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::InvalidParams("cannot fit normalisation to no data".into()))?;
        let dim = 2 * first.horizon();
        let mut mean = vec![0.0; dim];
        let mut raw = vec![0.0; dim];
        for s in data {
            raw_features(s, &mut raw)?;
            mean.iter_mut().zip(&raw).for_each(|(m, r)| *m += r);
        }
        let n = data.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for s in data {
            raw_features(s, &mut raw)?;
            for ((v, r), m) in var.iter_mut().zip(&raw).zip(&mean) {
                *v += (r - m) * (r - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-9 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn denormalize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(f, (m, s))| f * s + m)
            .collect()
    }
}

fn raw_features(s: &Scenario, out: &mut [f64]) -> Result<()> {
    let n = s.horizon();
    if out.len() != 2 * n {
        return Err(Error::Shape(format!(
            "feature vector of length {} does not fit a horizon of {n}",
            out.len()
        )));
    }
    out[..n].copy_from_slice(&s.v_ref);
    out[n..].copy_from_slice(&s.a_ref);
    Ok(())
}

/// Network weights, normalisation statistics and architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub format_version: u32,
    pub config: NetConfig,
    pub norm: FeatureNorm,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// All-zero weights: every head outputs a uniform row.
    pub fn zeros(config: NetConfig, norm: FeatureNorm) -> Result<Self> {
        Self::build(config, norm, Dense::zeros)
    }

    /// Xavier-uniform initialisation. The output layer is scaled by
    /// `output_gain` so the soft-argmax starts away from saturation.
    pub fn init(
        config: NetConfig,
        norm: FeatureNorm,
        output_gain: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let n_layers = config.hidden_layers + 1;
        let mut built = 0;
        Self::build(config, norm, |i, o| {
            built += 1;
            let gain = if built == n_layers { output_gain } else { 1.0 };
            Dense::xavier(i, o, gain, rng)
        })
    }

    fn build(
        config: NetConfig,
        norm: FeatureNorm,
        mut layer: impl FnMut(usize, usize) -> Dense,
    ) -> Result<Self> {
        config.validate()?;
        if norm.mean.len() != config.input_dim() || norm.scale.len() != config.input_dim() {
            return Err(Error::Shape(format!(
                "normalisation has {} features, network expects {}",
                norm.mean.len(),
                config.input_dim()
            )));
        }
        if norm.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParams(
                "normalisation scales must be positive".into(),
            ));
        }
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        let mut width = config.input_dim();
        for _ in 0..config.hidden_layers {
            layers.push(layer(width, config.hidden_width));
            width = config.hidden_width;
        }
        layers.push(layer(width, config.output_dim()));
        Ok(Self {
            format_version: PARAMS_FORMAT_VERSION,
            config,
            norm,
            layers,
        })
    }

    /// Checks version and layer shapes after deserialisation.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::InvalidParams(format!(
                "unsupported parameter format version {}",
                self.format_version
            )));
        }
        let reference = Self::zeros(self.config.clone(), self.norm.clone())?;
        let shapes_match = reference.layers.len() == self.layers.len()
            && reference.layers.iter().zip(&self.layers).all(|(a, b)| {
                a.inputs == b.inputs
                    && a.outputs == b.outputs
                    && b.weights.len() == a.weights.len()
                    && b.bias.len() == a.bias.len()
            });
        if !shapes_match {
            return Err(Error::Shape(
                "layer shapes do not match the network config".into(),
            ));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Parameters flattened layer by layer, weights before bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            flat.extend_from_slice(&l.weights);
            flat.extend_from_slice(&l.bias);
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            let (b, tail) = tail.split_at(l.bias.len());
            l.weights.copy_from_slice(w);
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }
}

/// Normalised network input: speeds then accelerations over the horizon.
/// The initial energy is left out since it cannot change the optimal plan.
pub fn featurize(s: &Scenario, params: &MlpParams) -> Result<Vec<f64>> {
    if s.horizon() != params.config.horizon {
        return Err(Error::Shape(format!(
            "scenario horizon {} but network has {} heads",
            s.horizon(),
            params.config.horizon
        )));
    }
    let mut x = vec![0.0; params.config.input_dim()];
    raw_features(s, &mut x)?;
    for (xi, (m, sc)) in x
        .iter_mut()
        .zip(params.norm.mean.iter().zip(&params.norm.scale))
    {
        *xi = (*xi - m) / sc;
    }
    Ok(x)
}

/// `exp(K·z_i) / Σ_j exp(K·z_j)`, shifted by the max logit for overflow
/// safety. Panics on NaN logits.
pub fn soft_argmax(z: &[f64], k: f64) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    soft_argmax_into(z, k, &mut out);
    out
}

fn soft_argmax_into(z: &[f64], k: f64, out: &mut [f64]) {
    assert!(z.iter().all(|x| !x.is_nan()), "soft_argmax of NaN logits");
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = (k * (zi - zmax)).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// `tanh` through a single `exp`; several times cheaper than the libm call
/// and accurate to a few ulps in absolute terms.
#[inline]
fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

/// Activations retained for the backward pass.
struct Trace {
    /// Input followed by each hidden layer's output.
    activations: Vec<Vec<f64>>,
    plan: StepMatrix,
}

fn forward_trace(s: &Scenario, params: &MlpParams) -> Result<Trace> {
    let cfg = &params.config;
    let mut activations = Vec::with_capacity(cfg.hidden_layers + 1);
    activations.push(featurize(s, params)?);
    let (hidden, output) = params.layers.split_at(params.layers.len() - 1);
    for layer in hidden {
        let mut h = vec![0.0; layer.outputs];
        layer.apply(&activations[activations.len() - 1], &mut h);
        h.iter_mut().for_each(|x| *x = tanh(*x));
        activations.push(h);
    }
    let mut logits = vec![0.0; cfg.output_dim()];
    output[0].apply(&activations[activations.len() - 1], &mut logits);
    let mut plan = StepMatrix::zeros(cfg.horizon, cfg.modes);
    for (k, z) in logits.chunks_exact(cfg.modes).enumerate() {
        soft_argmax_into(z, cfg.k_scale, plan.row_mut(k));
    }
    Ok(Trace { activations, plan })
}

/// Relaxed plan for scenario `s`; rows sum to one up to rounding.
pub fn forward(s: &Scenario, params: &MlpParams) -> Result<RelaxedPlan> {
    Ok(RelaxedPlan::from_matrix_unchecked(
        forward_trace(s, params)?.plan,
    ))
}

/// Gear the network picks for the first step, by argmax of the first head.
/// Equivalent to rounding [`forward`] and taking step 0.
pub fn first_gear(s: &Scenario, params: &MlpParams) -> Result<Gear> {
    let trace = forward_trace(s, params)?;
    Ok(crate::ocp::round_sos1(&RelaxedPlan::from_matrix_unchecked(trace.plan)).gears[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "sgd")]
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub omega1: f64,
    pub omega2: f64,
    /// Learning rate.
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Energy normalisation (J). Derived from the training data when unset.
    pub e_ref: Option<f64>,
    /// Scale of the output layer's initial weights.
    pub output_init_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            omega1: 1.0,
            omega2: 1e-4,
            eta: 1e-3,
            epochs: 300,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            e_ref: None,
            output_init_gain: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.omega1, self.eta, self.output_init_gain];
        if positive.iter().any(|x| !(*x > 0.0)) || !(self.omega2 >= 0.0) {
            return Err(Error::InvalidParams(
                "omega1, eta and output_init_gain must be positive, omega2 non-negative".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParams(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if let Some(e) = self.e_ref {
            if !(e > 0.0) {
                return Err(Error::InvalidParams("e_ref must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Weights of the two loss terms plus the energy scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub omega1: f64,
    pub omega2: f64,
    pub e_ref: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// ω₁ · x_N / E_ref
    pub energy: f64,
    /// ω₂ · Σ b (1 − b)
    pub binarity: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.energy + self.binarity
    }
}

fn binarity_penalty(b: &StepMatrix) -> f64 {
    b.as_slice().iter().map(|x| x * (1.0 - x)).sum()
}

/// Training loss of `plan` on `s`.
pub fn loss(
    plan: &RelaxedPlan,
    s: &Scenario,
    w: &LossWeights,
    pt: &Powertrain,
) -> Result<LossTerms> {
    let x_n = crate::ocp::rollout(s, plan, pt)?.terminal();
    Ok(LossTerms {
        energy: w.omega1 * x_n / w.e_ref,
        binarity: w.omega2 * binarity_penalty(plan.matrix()),
    })
}

/// Gradient of the loss with respect to every network parameter, in
/// [`MlpParams::to_flat`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub terms: LossTerms,
    /// ∂L/∂B for the plan the network produced.
    pub plan_grad: StepMatrix,
    pub params: Vec<f64>,
}

/// Analytic gradient of the training loss on one scenario.
///
/// The chain runs loss → selectors → logits → layers:
///
/// * `∂L/∂b_{i,k} = ω₁/E_ref · ∂x_N/∂b_{i,k} + ω₂ (1 − 2 b_{i,k})`, with the
///   rollout sensitivity taken from [`ModeTable::terminal_gradient`];
/// * through the scaled softmax, `∂L/∂z_i = K b_i (g_i − Σ_j g_j b_j)`;
/// * then ordinary dense/tanh back-propagation.
pub fn backward(
    s: &Scenario,
    params: &MlpParams,
    w: &LossWeights,
    pt: &Powertrain,
) -> Result<Gradient> {
    let table = ModeTable::build(s, pt)?;
    backward_with_table(s, &table, params, w)
}

fn backward_with_table(
    s: &Scenario,
    table: &ModeTable,
    params: &MlpParams,
    w: &LossWeights,
) -> Result<Gradient> {
    let cfg = &params.config;
    if table.power.modes() != cfg.modes {
        return Err(Error::Shape(format!(
            "powertrain has {} gears, network has {} outputs per head",
            table.power.modes(),
            cfg.modes
        )));
    }
    let trace = forward_trace(s, params)?;
    let b = &trace.plan;

    let x_n = table.terminal_energy(s.x0, s.dt, b);
    let terms = LossTerms {
        energy: w.omega1 * x_n / w.e_ref,
        binarity: w.omega2 * binarity_penalty(b),
    };

    let mut plan_grad = table.terminal_gradient(s.x0, s.dt, b);
    for (g, &bi) in plan_grad.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *g = w.omega1 / w.e_ref * *g + w.omega2 * (1.0 - 2.0 * bi);
    }

    let mut grad_z = vec![0.0; cfg.output_dim()];
    for k in 0..cfg.horizon {
        let (bk, gk) = (b.row(k), plan_grad.row(k));
        let dot: f64 = bk.iter().zip(gk).map(|(x, y)| x * y).sum();
        for i in 0..cfg.modes {
            grad_z[k * cfg.modes + i] = cfg.k_scale * bk[i] * (gk[i] - dot);
        }
    }

    let mut per_layer: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(params.layers.len());
    let mut upstream = grad_z;
    for (li, layer) in params.layers.iter().enumerate().rev() {
        let input = &trace.activations[li];
        let mut gw = vec![0.0; layer.weights.len()];
        for (row, &g) in gw.chunks_exact_mut(layer.inputs).zip(&upstream) {
            row.iter_mut().zip(input).for_each(|(d, x)| *d = g * x);
        }
        let gb = upstream.clone();
        if li > 0 {
            let mut down = vec![0.0; layer.inputs];
            for (wrow, &g) in layer.weights.chunks_exact(layer.inputs).zip(&upstream) {
                down.iter_mut().zip(wrow).for_each(|(d, wv)| *d += wv * g);
            }
            // input is tanh output of the layer below.
            down.iter_mut()
                .zip(input)
                .for_each(|(d, h)| *d *= 1.0 - h * h);
            upstream = down;
        }
        per_layer.push((gw, gb));
    }
    per_layer.reverse();
    let mut flat = Vec::with_capacity(params.n_params());
    for (gw, gb) in per_layer {
        flat.extend(gw);
        flat.extend(gb);
    }
    Ok(Gradient {
        terms,
        plan_grad,
        params: flat,
    })
}

/// Mean loss over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub energy_term: f64,
    pub binarity_term: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub history: Vec<EpochStats>,
    pub weights: LossWeights,
}

/// Largest |x_N| over all feasible single-gear plans of the data set.
pub fn energy_scale(data: &[Scenario], pt: &Powertrain) -> Result<f64> {
    let mut e_ref: f64 = 0.0;
    for s in data {
        let table = ModeTable::build(s, pt)?;
        for i in 0..pt.n_gears() {
            let gear = Gear::from_index(i);
            if table.infeasible.iter().any(|(_, g, _)| *g == gear) {
                continue;
            }
            let x_n: f64 = (0..s.horizon()).map(|k| table.power.get(k, i) * s.dt).sum();
            e_ref = e_ref.max(x_n.abs());
        }
    }
    Ok(if e_ref > 0.0 { e_ref } else { 1.0 })
}

enum Optimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Optimizer::Sgd => theta.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g),
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - Self::BETA1.powi(*t);
                let c2 = 1.0 - Self::BETA2.powi(*t);
                for (((p, g), mi), vi) in theta
                    .iter_mut()
                    .zip(grad)
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *mi = Self::BETA1 * *mi + (1.0 - Self::BETA1) * g;
                    *vi = Self::BETA2 * *vi + (1.0 - Self::BETA2) * g * g;
                    *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Mini-batch training on `data`, deterministic for a given seed.
pub fn train(
    data: &[Scenario],
    cfg: &TrainConfig,
    net: &NetConfig,
    pt: &Powertrain,
    seed: u64,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidParams("training set is empty".into()));
    }
    cfg.validate()?;
    net.validate()?;
    if net.modes != pt.n_gears() {
        return Err(Error::Shape(format!(
            "network has {} outputs per head but the vehicle has {} gears",
            net.modes,
            pt.n_gears()
        )));
    }
    let tables = data
        .iter()
        .map(|s| ModeTable::build(s, pt))
        .collect::<Result<Vec<_>>>()?;
    let weights = LossWeights {
        omega1: cfg.omega1,
        omega2: cfg.omega2,
        e_ref: match cfg.e_ref {
            Some(e) => e,
            None => energy_scale(data, pt)?,
        },
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = FeatureNorm::fit(data)?;
    let mut params = MlpParams::init(net.clone(), norm, cfg.output_init_gain, &mut rng)?;
    let mut theta = params.to_flat();
    let mut optimizer = Optimizer::new(cfg.optimizer, theta.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad_sum = vec![0.0; theta.len()];
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut totals = LossTerms::default();
        for batch in order.chunks(cfg.batch_size) {
            grad_sum.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                let g = backward_with_table(&data[idx], &tables[idx], &params, &weights)?;
                totals.energy += g.terms.energy;
                totals.binarity += g.terms.binarity;
                grad_sum
                    .iter_mut()
                    .zip(&g.params)
                    .for_each(|(a, b)| *a += b);
            }
            let inv = 1.0 / batch.len() as f64;
            grad_sum.iter_mut().for_each(|g| *g *= inv);
            optimizer.step(&mut theta, &grad_sum, cfg.eta);
            params.set_flat(&theta)?;
        }
        let n = data.len() as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: totals.total() / n,
            energy_term: totals.energy / n,
            binarity_term: totals.binarity / n,
        };
        if !stats.mean_loss.is_finite() || theta.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: stats.mean_loss,
            });
        }
        history.push(stats);
    }
    Ok(TrainOutcome {
        params,
        history,
        weights,
    })
}

/// Mean of `1 − max_i b_{i,k}` over all rows and scenarios, and the share of
/// rows whose largest selector exceeds `confident`.
pub fn binarity_stats(data: &[Scenario], params: &MlpParams, confident: f64) -> Result<(f64, f64)> {
    let mut gap = 0.0;
    let mut sure = 0usize;
    let mut rows = 0usize;
    for s in data {
        let plan = forward(s, params)?;
        for row in plan.matrix().rows() {
            let top = row.iter().cloned().fold(0.0, f64::max);
            gap += 1.0 - top;
            if top > confident {
                sure += 1;
            }
            rows += 1;
        }
    }
    Ok((gap / rows as f64, sure as f64 / rows as f64))
}

/// Writes `epoch,mean_loss,energy_term,binarity_term`.
pub fn write_history_csv<W: std::io::Write>(history: &[EpochStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in history {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
