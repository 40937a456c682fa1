//! Fault-probability model: a sigmoid over an affine map of the indicators,
//! optionally preceded by tanh hidden layers, trained by full-batch gradient
//! descent on binary cross-entropy.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{LabeledWindow, MetricVector, Tick};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct FaultProbability(f64);

impl FaultProbability {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::Numeric("fault probability"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Warning threshold; a warning fires when the probability strictly exceeds it.
    pub threshold: f64,
    /// Ticks after an observation within which a fault counts as predicted.
    pub horizon: Tick,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden_sizes: Vec<usize>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            horizon: 10,
            learning_rate: 10.0,
            epochs: 400,
            hidden_sizes: vec![8],
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(
                "predictor.threshold",
                "must be in (0,1)",
                self.threshold,
            ));
        }
        if self.horizon < 1 {
            return Err(Error::config(
                "predictor.horizon",
                "must be >= 1",
                self.horizon,
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(
                "predictor.learning_rate",
                "must be positive",
                self.learning_rate,
            ));
        }
        if self.epochs < 1 {
            return Err(Error::config(
                "predictor.epochs",
                "must be >= 1",
                self.epochs,
            ));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::config(
                "predictor.hidden_sizes",
                "layer widths must be >= 1",
                format!("{:?}", self.hidden_sizes),
            ));
        }
        Ok(())
    }
}

/// Dense layer; `weights[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn outputs(&self) -> usize {
        self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    pub hidden_layers: Vec<Layer>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl PredictorWeights {
    /// Plain logistic model: no hidden layers, `n` output weights.
    pub fn logistic(output_weights: Vec<f64>, output_bias: f64) -> Self {
        Self {
            hidden_layers: Vec::new(),
            output_weights,
            output_bias,
        }
    }

    pub fn zeros(inputs: usize, hidden_sizes: &[usize]) -> Self {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden_sizes {
            layers.push(Layer {
                weights: vec![vec![0.0; width]; h],
                bias: vec![0.0; h],
            });
            width = h;
        }
        Self {
            hidden_layers: layers,
            output_weights: vec![0.0; width],
            output_bias: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_layers
            .first()
            .map_or(self.output_weights.len(), Layer::inputs)
    }

    pub fn param_count(&self) -> usize {
        self.hidden_layers
            .iter()
            .map(|l| l.outputs() * (l.inputs() + 1))
            .sum::<usize>()
            + self.output_weights.len()
            + 1
    }

    /// Flattened parameters: each hidden layer row-major weights then bias,
    /// then output weights, then output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.hidden_layers {
            for row in &layer.weights {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&layer.bias);
        }
        out.extend_from_slice(&self.output_weights);
        out.push(self.output_bias);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "predictor parameters",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for layer in &mut self.hidden_layers {
            for row in &mut layer.weights {
                row.iter_mut().for_each(|w| *w = it.next().unwrap());
            }
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.output_weights
            .iter_mut()
            .for_each(|w| *w = it.next().unwrap());
        self.output_bias = it.next().unwrap();
        Ok(())
    }

    fn check_shape(&self) -> Result<()> {
        let mut width = self.input_dim();
        for layer in &self.hidden_layers {
            if layer.weights.iter().any(|row| row.len() != width)
                || layer.weights.len() != layer.bias.len()
            {
                return Err(Error::Dimension {
                    context: "hidden layer",
                    expected: width,
                    actual: layer.inputs(),
                });
            }
            width = layer.outputs();
        }
        if self.output_weights.len() != width {
            return Err(Error::Dimension {
                context: "output layer",
                expected: width,
                actual: self.output_weights.len(),
            });
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self.output_bias.is_finite()
            && self.output_weights.iter().all(|w| w.is_finite())
            && self.hidden_layers.iter().all(|l| {
                l.bias.iter().all(|b| b.is_finite())
                    && l.weights.iter().flatten().all(|w| w.is_finite())
            });
        if finite {
            Ok(())
        } else {
            Err(Error::Numeric("predictor weights"))
        }
    }

    /// Pre-sigmoid output plus the hidden activations of every layer.
    /// `activations` is reused across calls.
    fn forward(&self, x: &[f64], activations: &mut Vec<Vec<f64>>) -> f64 {
        activations.resize_with(self.hidden_layers.len(), Vec::new);
        for (li, layer) in self.hidden_layers.iter().enumerate() {
            let (done, rest) = activations.split_at_mut(li);
            let input: &[f64] = done.last().map_or(x, Vec::as_slice);
            let a = &mut rest[0];
            a.clear();
            a.extend(
                layer
                    .weights
                    .iter()
                    .zip(&layer.bias)
                    .map(|(row, b)| (dot(row, input) + b).tanh()),
            );
        }
        let last: &[f64] = activations.last().map_or(x, Vec::as_slice);
        dot(&self.output_weights, last) + self.output_bias
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let mut scratch = Vec::with_capacity(self.hidden_layers.len());
        self.forward(x, &mut scratch)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn predict_fault(weights: &PredictorWeights, x: &MetricVector) -> Result<FaultProbability> {
    if x.values.len() != weights.input_dim() {
        return Err(Error::Dimension {
            context: "predict_fault",
            expected: weights.input_dim(),
            actual: x.values.len(),
        });
    }
    weights.check_finite()?;
    FaultProbability::new(sigmoid(weights.logit(&x.values)))
}

/// Strict: a probability equal to the threshold is not a warning.
pub fn is_warning(p: FaultProbability, threshold: f64) -> bool {
    p.value() > threshold
}

/// Row-major feature matrix and 0/1 targets, ready for batch training.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: usize,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn from_windows(data: &[LabeledWindow]) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::Input("training set is empty".into()))?;
        let inputs = first.features.len();
        let mut features = Vec::with_capacity(inputs * data.len());
        let mut labels = Vec::with_capacity(data.len());
        for w in data {
            if w.features.len() != inputs {
                return Err(Error::Dimension {
                    context: "training window",
                    expected: inputs,
                    actual: w.features.len(),
                });
            }
            features.extend_from_slice(&w.features.values);
            labels.push(if w.label { 1.0 } else { 0.0 });
        }
        Ok(Self {
            inputs,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.inputs..(i + 1) * self.inputs]
    }
}

/// Fixed chunking keeps the summation order independent of the thread pool.
const CHUNK: usize = 2048;

/// Mean binary cross-entropy and its gradient in `params()` order.
pub fn loss_and_gradient(weights: &PredictorWeights, data: &Dataset) -> (f64, Vec<f64>) {
    let n_params = weights.param_count();
    let chunks: Vec<(f64, Vec<f64>)> = (0..data.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; n_params];
            let mut acts = Vec::with_capacity(weights.hidden_layers.len());
            let mut scratch = Scratch::new(weights);
            for i in c * CHUNK..((c + 1) * CHUNK).min(data.len()) {
                let x = data.row(i);
                let y = data.labels[i];
                let z = weights.forward(x, &mut acts);
                loss += softplus(z) - y * z;
                let dz = sigmoid(z) - y;
                backprop(weights, x, &acts, dz, &mut grad, &mut scratch);
            }
            (loss, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in chunks {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    let m = data.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    (loss / m, grad)
}

/// Per-chunk buffers for [`backprop`].
struct Scratch {
    /// Parameter offset of each hidden layer, in `params()` order.
    offsets: Vec<usize>,
    out_offset: usize,
    delta: Vec<f64>,
    pre: Vec<f64>,
}

impl Scratch {
    fn new(weights: &PredictorWeights) -> Self {
        let mut offsets = Vec::with_capacity(weights.hidden_layers.len());
        let mut off = 0;
        for l in &weights.hidden_layers {
            offsets.push(off);
            off += l.outputs() * (l.inputs() + 1);
        }
        Self {
            offsets,
            out_offset: off,
            delta: Vec::new(),
            pre: Vec::new(),
        }
    }
}

fn backprop(
    weights: &PredictorWeights,
    x: &[f64],
    acts: &[Vec<f64>],
    dz: f64,
    grad: &mut [f64],
    s: &mut Scratch,
) {
    let out_off = s.out_offset;
    let last_input: &[f64] = acts.last().map_or(x, Vec::as_slice);
    for (j, a) in last_input.iter().enumerate() {
        grad[out_off + j] += dz * a;
    }
    grad[out_off + last_input.len()] += dz;

    // delta holds dL/d(activation) of the layer being processed.
    s.delta.clear();
    s.delta
        .extend(weights.output_weights.iter().map(|w| w * dz));
    for (li, layer) in weights.hidden_layers.iter().enumerate().rev() {
        let input: &[f64] = if li == 0 { x } else { &acts[li - 1] };
        let a = &acts[li];
        let base = s.offsets[li];
        let width_in = layer.inputs();
        s.pre.clear();
        s.pre
            .extend(s.delta.iter().zip(a).map(|(d, a)| d * (1.0 - a * a)));
        for (o, d) in s.pre.iter().enumerate() {
            let row = base + o * width_in;
            for (k, xi) in input.iter().enumerate() {
                grad[row + k] += d * xi;
            }
            grad[base + layer.outputs() * width_in + o] += d;
        }
        if li > 0 {
            s.delta.clear();
            let pre = &s.pre;
            s.delta.extend((0..width_in).map(|k| {
                pre.iter()
                    .zip(&layer.weights)
                    .map(|(d, row)| d * row[k])
                    .sum::<f64>()
            }));
        }
    }
}

/// Uniform `[-0.1, 0.1]` initialization from `seed`.
pub fn init_weights(inputs: usize, hidden_sizes: &[usize], seed: u64) -> PredictorWeights {
    let mut w = PredictorWeights::zeros(inputs, hidden_sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<f64> = (0..w.param_count())
        .map(|_| rng.random_range(-0.1..=0.1))
        .collect();
    w.set_params(&params).expect("matching length");
    w
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: PredictorWeights,
    /// Loss before each update, then the final loss.
    pub losses: Vec<f64>,
}

pub fn train(
    data: &[LabeledWindow],
    config: &PredictorConfig,
    seed: u64,
) -> Result<PredictorWeights> {
    Ok(train_dataset(&Dataset::from_windows(data)?, config, seed)?.weights)
}

pub fn train_dataset(data: &Dataset, config: &PredictorConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut weights = init_weights(data.inputs, &config.hidden_sizes, seed);
    let mut params = weights.params();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let (loss, grad) = loss_and_gradient(&weights, data);
        if !loss.is_finite() {
            return Err(Error::Training { epoch, loss });
        }
        losses.push(loss);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training {
                epoch: epoch + 1,
                loss: f64::NAN,
            });
        }
        weights.set_params(&params)?;
    }
    let (loss, _) = loss_and_gradient(&weights, data);
    if !loss.is_finite() {
        return Err(Error::Training {
            epoch: config.epochs,
            loss,
        });
    }
    losses.push(loss);
    Ok(TrainOutcome { weights, losses })
}

const WEIGHTS_MAGIC: &str = "ftsim-predictor v1";

/// Text format: a magic line, `dims <in> <hidden...> 1`, then per layer a
/// `layer` marker, one line per output row of weights, and a `bias` line.
pub fn write_weights<W: Write>(weights: &PredictorWeights, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{WEIGHTS_MAGIC}")?;
    let mut dims = vec![weights.input_dim()];
    dims.extend(weights.hidden_layers.iter().map(Layer::outputs));
    dims.push(1);
    writeln!(out, "dims {}", join(&dims))?;
    for layer in &weights.hidden_layers {
        writeln!(out, "layer")?;
        for row in &layer.weights {
            writeln!(out, "{}", join(row))?;
        }
        writeln!(out, "bias {}", join(&layer.bias))?;
    }
    writeln!(out, "layer")?;
    writeln!(out, "{}", join(&weights.output_weights))?;
    writeln!(out, "bias {}", weights.output_bias)
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|v| {
            v.parse()
                .map_err(|_| Error::parse("predictor weights", format!("bad number {v:?}")))
        })
        .collect()
}

pub fn read_weights<R: BufRead>(input: R) -> Result<PredictorWeights> {
    let lines: Vec<String> = input
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::parse("predictor weights", e))?;
    let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
    let bad = |m: &str| Error::parse("predictor weights", m);
    if it.next() != Some(WEIGHTS_MAGIC) {
        return Err(bad("missing format header"));
    }
    let dims: Vec<usize> = it
        .next()
        .and_then(|l| l.strip_prefix("dims "))
        .ok_or_else(|| bad("missing dims line"))?
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| bad("bad dimension")))
        .collect::<Result<_>>()?;
    if dims.len() < 2 || *dims.last().unwrap() != 1 {
        return Err(bad("dims must end with a single output"));
    }
    let mut layers = Vec::new();
    for pair in dims.windows(2) {
        let (inputs, outputs) = (pair[0], pair[1]);
        if it.next() != Some("layer") {
            return Err(bad("missing layer marker"));
        }
        let mut rows = Vec::with_capacity(outputs);
        for _ in 0..outputs {
            let row = parse_row(it.next().ok_or_else(|| bad("truncated layer"))?)?;
            if row.len() != inputs {
                return Err(Error::Dimension {
                    context: "weights row",
                    expected: inputs,
                    actual: row.len(),
                });
            }
            rows.push(row);
        }
        let bias = parse_row(
            it.next()
                .and_then(|l| l.strip_prefix("bias"))
                .ok_or_else(|| bad("missing bias line"))?,
        )?;
        if bias.len() != outputs {
            return Err(Error::Dimension {
                context: "bias",
                expected: outputs,
                actual: bias.len(),
            });
        }
        layers.push(Layer {
            weights: rows,
            bias,
        });
    }
    let output = layers.pop().expect("at least one layer");
    let weights = PredictorWeights {
        hidden_layers: layers,
        output_weights: output.weights.into_iter().next().unwrap(),
        output_bias: output.bias[0],
    };
    weights.check_shape()?;
    weights.check_finite()?;
    Ok(weights)
}
