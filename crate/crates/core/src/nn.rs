//! Fully connected ReLU networks with a scalar linear readout.
//!
//! A network computes `f(x) = v . h_L` with `h_0 = x` and, per layer,
//! either `h = ReLU(W h) + b` ([`BiasPlacement::AfterActivation`], the
//! layer form used throughout the theory) or the conventional
//! `h = ReLU(W h + b)` ([`BiasPlacement::BeforeActivation`]).
//!
//! Gradients are for the mean squared error and are computed by hand-written
//! reverse mode. The ReLU derivative at exactly zero is taken to be zero.
//! All reductions run in a fixed order so training is bit-reproducible.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, LabRng};
use crate::sampler::PointSampler;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasPlacement {
    /// `ReLU(W h) + b`.
    #[default]
    AfterActivation,
    /// `ReLU(W h + b)`.
    BeforeActivation,
}

/// One affine layer. Weights are row-major with shape `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(out_dim: usize, in_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let layer = DenseLayer { shape: [out_dim, in_dim], weights, bias };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        DenseLayer {
            shape: [out_dim, in_dim],
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.shape[0]
    }

    pub fn in_dim(&self) -> usize {
        self.shape[1]
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.shape[1] + col]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn validate(&self) -> Result<()> {
        let [rows, cols] = self.shape;
        if rows == 0 || cols == 0 {
            return Err(Error::domain("layer dimensions must be positive"));
        }
        if self.weights.len() != rows * cols {
            return Err(Error::Shape { expected: rows * cols, actual: self.weights.len() });
        }
        if self.bias.len() != rows {
            return Err(Error::Shape { expected: rows, actual: self.bias.len() });
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::domain("non-finite parameter"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    input_dim: usize,
    #[serde(default)]
    bias_placement: BiasPlacement,
    layers: Vec<DenseLayer>,
    readout: Vec<f64>,
}

/// ReLU network; also used as a trainable student.
///
/// The JSON checkpoint records `input_dim`, `bias_placement`, every layer as
/// `{shape: [out, in], weights: [row-major], bias}` and the `readout`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct ReluNetwork {
    input_dim: usize,
    bias_placement: BiasPlacement,
    layers: Vec<DenseLayer>,
    readout: Vec<f64>,
}

impl TryFrom<NetworkDoc> for ReluNetwork {
    type Error = Error;

    fn try_from(d: NetworkDoc) -> Result<Self> {
        ReluNetwork::new(d.input_dim, d.layers, d.readout, d.bias_placement)
    }
}

impl From<ReluNetwork> for NetworkDoc {
    fn from(n: ReluNetwork) -> Self {
        NetworkDoc {
            input_dim: n.input_dim,
            bias_placement: n.bias_placement,
            layers: n.layers,
            readout: n.readout,
        }
    }
}

impl ReluNetwork {
    pub fn new(
        input_dim: usize,
        layers: Vec<DenseLayer>,
        readout: Vec<f64>,
        bias_placement: BiasPlacement,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("network needs at least one hidden layer"));
        }
        let mut width = input_dim;
        for layer in &layers {
            layer.validate()?;
            if layer.in_dim() != width {
                return Err(Error::Shape { expected: width, actual: layer.in_dim() });
            }
            width = layer.out_dim();
        }
        if readout.len() != width {
            return Err(Error::Shape { expected: width, actual: readout.len() });
        }
        if readout.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite readout"));
        }
        Ok(ReluNetwork { input_dim, bias_placement, layers, readout })
    }

    /// Random initialisation with `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
    /// weights, biases and readout.
    pub fn random_uniform(
        input_dim: usize,
        hidden: &[usize],
        bias_placement: BiasPlacement,
        rng: &mut LabRng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &width in hidden {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = || rng.random_range(-bound..bound);
            let weights = (0..width * fan_in).map(|_| draw()).collect();
            let bias = (0..width).map(|_| draw()).collect();
            layers.push(DenseLayer::new(width, fan_in, weights, bias)?);
            fan_in = width;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let readout = (0..fan_in).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(input_dim, layers, readout, bias_placement)
    }

    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`, zero biases.
    pub fn random_gaussian(
        input_dim: usize,
        hidden: &[usize],
        bias_placement: BiasPlacement,
        rng: &mut LabRng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &width in hidden {
            let scale = 1.0 / (fan_in as f64).sqrt();
            let weights =
                (0..width * fan_in).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            layers.push(DenseLayer::new(width, fan_in, weights, vec![0.0; width])?);
            fan_in = width;
        }
        let scale = 1.0 / (fan_in as f64).sqrt();
        let readout = (0..fan_in).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        Self::new(input_dim, layers, readout, bias_placement)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn readout(&self) -> &[f64] {
        &self.readout
    }

    pub fn bias_placement(&self) -> BiasPlacement {
        self.bias_placement
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>() + self.readout.len()
    }

    /// Copy with the readout multiplied by `a`.
    pub fn scale_readout(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.readout.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::Shape { expected: self.input_dim, actual: x.len() });
        }
        Ok(self.eval(x))
    }

    /// Forward pass without the shape check.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            self.layer_forward(layer, &h, &mut next, None);
            std::mem::swap(&mut h, &mut next);
        }
        self.readout.iter().zip(&h).map(|(v, a)| v * a).sum()
    }

    /// `out <- activation(layer, input)`; optionally stores pre-activations.
    fn layer_forward(&self, layer: &DenseLayer, input: &[f64], out: &mut Vec<f64>, pre: Option<&mut Vec<f64>>) {
        let cols = layer.in_dim();
        out.clear();
        let mut pre = pre;
        if let Some(p) = pre.as_deref_mut() {
            p.clear();
        }
        for (row, b) in layer.weights.chunks_exact(cols).zip(&layer.bias) {
            let mut z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            if self.bias_placement == BiasPlacement::BeforeActivation {
                z += b;
            }
            if let Some(p) = pre.as_deref_mut() {
                p.push(z);
            }
            let mut a = if z > 0.0 { z } else { 0.0 };
            if self.bias_placement == BiasPlacement::AfterActivation {
                a += b;
            }
            out.push(a);
        }
    }

    /// `||v|| * prod_l ||W_l||_F`, a Lipschitz constant of the network.
    pub fn lipschitz_bound(&self) -> f64 {
        let v = self.readout.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.layers.iter().fold(v, |acc, l| acc * l.frobenius_norm())
    }

    /// Parameters in canonical order: per layer weights then bias, then readout.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p.extend_from_slice(&self.readout);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape { expected: self.param_count(), actual: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|w| *w = it.next().unwrap());
        }
        self.readout.iter_mut().for_each(|w| *w = it.next().unwrap());
        Ok(())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
            .chain(self.readout.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

/// Gradient with the same layout as [`ReluNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub layers: Vec<DenseLayer>,
    pub readout: Vec<f64>,
}

impl Gradient {
    fn zeros_like(net: &ReluNetwork) -> Self {
        Gradient {
            layers: net.layers.iter().map(|l| DenseLayer::zeros(l.out_dim(), l.in_dim())).collect(),
            readout: vec![0.0; net.readout.len()],
        }
    }

    /// Flattened in the order of [`ReluNetwork::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p.extend_from_slice(&self.readout);
        p
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// An input with its scalar label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: f64,
}

pub fn label_with(target: &ReluNetwork, xs: Vec<Vec<f64>>) -> Vec<LabeledSample> {
    xs.into_iter()
        .map(|x| {
            let y = target.eval(&x);
            LabeledSample { x, y }
        })
        .collect()
}

/// Mean squared error of `net` on `batch` and its gradient.
pub fn mse_grad(net: &ReluNetwork, batch: &[LabeledSample]) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let mut grad = Gradient::zeros_like(net);
    let depth = net.layers.len();
    let mut acts: Vec<Vec<f64>> = vec![Vec::new(); depth + 1];
    let mut pres: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut delta = Vec::new();
    let mut delta_prev = Vec::new();
    let scale = 2.0 / batch.len() as f64;
    let mut loss = 0.0;
    for sample in batch {
        if sample.x.len() != net.input_dim {
            return Err(Error::Shape { expected: net.input_dim, actual: sample.x.len() });
        }
        acts[0].clear();
        acts[0].extend_from_slice(&sample.x);
        for (l, layer) in net.layers.iter().enumerate() {
            let (lo, hi) = acts.split_at_mut(l + 1);
            net.layer_forward(layer, &lo[l], &mut hi[0], Some(&mut pres[l]));
        }
        let out: f64 = net.readout.iter().zip(&acts[depth]).map(|(v, a)| v * a).sum();
        let err = out - sample.y;
        loss += err * err;
        let g = scale * err;
        for (gv, a) in grad.readout.iter_mut().zip(&acts[depth]) {
            *gv += g * a;
        }
        // dL/dh_L
        delta.clear();
        delta.extend(net.readout.iter().map(|v| g * v));
        for l in (0..depth).rev() {
            let layer = &net.layers[l];
            let gl = &mut grad.layers[l];
            if net.bias_placement == BiasPlacement::AfterActivation {
                gl.bias.iter_mut().zip(&delta).for_each(|(b, d)| *b += d);
            }
            // dL/dz
            for (d, z) in delta.iter_mut().zip(&pres[l]) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
            if net.bias_placement == BiasPlacement::BeforeActivation {
                gl.bias.iter_mut().zip(&delta).for_each(|(b, d)| *b += d);
            }
            let cols = layer.in_dim();
            let input = &acts[l];
            for (row, d) in gl.weights.chunks_exact_mut(cols).zip(&delta) {
                if *d != 0.0 {
                    row.iter_mut().zip(input).for_each(|(w, x)| *w += d * x);
                }
            }
            if l > 0 {
                delta_prev.clear();
                delta_prev.resize(cols, 0.0);
                for (row, d) in layer.weights.chunks_exact(cols).zip(&delta) {
                    if *d != 0.0 {
                        delta_prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }
    Ok((loss / batch.len() as f64, grad))
}

pub fn mse(net: &ReluNetwork, data: &[LabeledSample]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    data.iter().map(|s| (net.eval(&s.x) - s.y).powi(2)).sum::<f64>() / data.len() as f64
}

/// MSE divided by the mean squared label (plain MSE when all labels are 0).
pub fn relative_mse(net: &ReluNetwork, data: &[LabeledSample]) -> f64 {
    let second_moment = data.iter().map(|s| s.y * s.y).sum::<f64>() / data.len().max(1) as f64;
    let m = mse(net, data);
    if second_moment > 0.0 {
        m / second_moment
    } else {
        m
    }
}

/// Rescale the readout so the RMS output over `batch` fresh inputs is 1.
/// Returns the scaled network and the factor applied.
pub fn normalize_target<S: PointSampler + ?Sized>(
    net: &ReluNetwork,
    sampler: &S,
    batch: usize,
    rng: &mut LabRng,
) -> Result<(ReluNetwork, f64)> {
    if batch == 0 {
        return Err(Error::domain("normalisation batch must be non-empty"));
    }
    let mean_sq = (0..batch).map(|_| net.eval(&sampler.sample(rng)).powi(2)).sum::<f64>() / batch as f64;
    let rms = mean_sq.sqrt();
    if !(rms >= 1e-9) {
        return Err(Error::domain(format!("degenerate target: empirical RMS {rms:e}")));
    }
    Ok((net.scale_readout(1.0 / rms), 1.0 / rms))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub base_lr: f64,
    /// Learning-rate multiplier exponent `c`; the step size is `base_lr * exp(c)`.
    #[serde(default)]
    pub lr_log_multiplier: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Draw a fresh batch from the sampler every step instead of cycling a
    /// fixed training set.
    #[serde(default)]
    pub fresh_batches: bool,
    /// Trace interval in steps.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_eval_every() -> usize {
    100
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return Err(Error::Config("base_lr must be finite and non-negative".into()));
        }
        if !(-2.0..=1.0).contains(&self.lr_log_multiplier) {
            return Err(Error::Config("lr_log_multiplier must lie in [-2, 1]".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        self.base_lr * self.lr_log_multiplier.exp()
    }
}

/// Where training batches come from.
pub enum DataSource<'a> {
    /// Fixed training set, reshuffled every epoch.
    Dataset(&'a [LabeledSample]),
    /// Fresh i.i.d. samples on demand.
    Stream(&'a dyn Fn(&mut LabRng) -> LabeledSample),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Relative MSE on the training set (fixed data) or the latest batch (stream).
    pub train_mse: f64,
    /// Relative MSE on the evaluation set.
    pub test_mse: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub diverged: bool,
}

impl TrainTrace {
    pub fn final_test_mse(&self) -> Option<f64> {
        self.rows.last().map(|r| r.test_mse)
    }

    /// CSV with header `step,train_mse,test_mse,lr`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(net: &mut ReluNetwork, grad: &[f64], lr: f64, adam: Option<&mut Adam>) {
    match adam {
        None => net.params_mut().zip(grad).for_each(|(p, g)| *p -= lr * g),
        Some(state) => {
            state.t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(state.t);
            let c2 = 1.0 - ADAM_BETA2.powi(state.t);
            for (((p, g), m), v) in net.params_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Train `student` in place and return its trace.
///
/// Rows are recorded at step 0, every `eval_every` steps and after the last
/// step. A non-finite loss stops training and sets `diverged`.
pub fn train(
    student: &mut ReluNetwork,
    source: DataSource<'_>,
    cfg: &TrainConfig,
    eval: &[LabeledSample],
) -> Result<TrainTrace> {
    cfg.validate()?;
    match (&source, cfg.fresh_batches) {
        (DataSource::Dataset(d), false) if d.is_empty() => {
            return Err(Error::domain("empty training set"));
        }
        (DataSource::Dataset(_), false) | (DataSource::Stream(_), true) => {}
        _ => return Err(Error::Config("fresh_batches does not match the data source".into())),
    }
    let lr = cfg.learning_rate();
    let mut rng = seeded(cfg.seed);
    let mut adam = (cfg.optimizer == OptimizerKind::Adam).then(|| Adam {
        m: vec![0.0; student.param_count()],
        v: vec![0.0; student.param_count()],
        t: 0,
    });
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut batch: Vec<LabeledSample> = Vec::with_capacity(cfg.batch_size);
    let mut trace = TrainTrace::default();

    let train_metric = |net: &ReluNetwork, batch: &[LabeledSample]| match &source {
        DataSource::Dataset(d) => relative_mse(net, d),
        DataSource::Stream(_) => relative_mse(net, batch),
    };

    for step in 0..=cfg.steps {
        batch.clear();
        match &source {
            DataSource::Dataset(data) => {
                for _ in 0..cfg.batch_size {
                    if cursor == order.len() {
                        order = (0..data.len()).collect();
                        shuffle(&mut order, &mut rng);
                        cursor = 0;
                    }
                    batch.push(data[order[cursor]].clone());
                    cursor += 1;
                }
            }
            DataSource::Stream(draw) => {
                batch.extend((0..cfg.batch_size).map(|_| draw(&mut rng)));
            }
        }
        if step % cfg.eval_every == 0 || step == cfg.steps {
            trace.rows.push(TraceRow {
                step,
                train_mse: train_metric(student, &batch),
                test_mse: relative_mse(student, eval),
                lr,
            });
        }
        if step == cfg.steps {
            break;
        }
        let (loss, grad) = mse_grad(student, &batch)?;
        if !loss.is_finite() {
            trace.diverged = true;
            break;
        }
        apply_update(student, &grad.flatten(), lr, adam.as_mut());
        if !student.is_finite() {
            trace.diverged = true;
            break;
        }
    }
    Ok(trace)
}

fn shuffle(v: &mut [usize], rng: &mut LabRng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}
