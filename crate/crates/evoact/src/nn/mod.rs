//! Feedforward networks with an arbitrary scalar activation.
//!
//! Hidden layers are affine transforms followed by the activation applied
//! elementwise; the output head is a sigmoid, softmax, or identity matched
//! to the task loss (binary cross-entropy, categorical cross-entropy, mean
//! squared error). Training is mini-batch ADAM with balanced class weights,
//! inverted dropout, L2 on the designated kernels, early stopping, and
//! best-epoch checkpointing.
//!
//! Dropout and L2 skip the first hidden layer and the output layer: dropout
//! masks the activations of hidden layers after the first, and L2 penalizes
//! the kernels of those same layers, so the network's input and output
//! stay unregularized.
//!
//! A non-finite value anywhere (activation overflow, NaN loss) aborts the
//! run; the returned model carries worst-possible validation fitness rather
//! than crashing or propagating infinities.

mod activation;
mod metrics;

pub use activation::{Activation, SELU_ALPHA, SELU_LAMBDA};
pub use metrics::{
    balanced_class_weights, metrics, FitnessMetric, MetricKind, MetricSet, MissingClass,
};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Targets;
use crate::expr::NonFinite;
use crate::init::{sample_weights, InitScheme};
use crate::rng::{derive, Stream, StreamAddress};

/// Probability clamp for cross-entropy losses.
const LOSS_EPSILON: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    /// One unit, sigmoid head, binary cross-entropy.
    BinarySigmoid,
    /// `k` units, softmax head, categorical cross-entropy.
    Softmax(usize),
    /// One unit, identity head, mean squared error.
    Linear,
}

impl OutputKind {
    pub fn units(self) -> usize {
        match self {
            OutputKind::BinarySigmoid | OutputKind::Linear => 1,
            OutputKind::Softmax(k) => k,
        }
    }

    pub fn for_targets(targets: &Targets) -> Self {
        match targets {
            Targets::Binary(_) => OutputKind::BinarySigmoid,
            Targets::Multiclass { classes, .. } => OutputKind::Softmax(*classes),
            Targets::Regression(_) => OutputKind::Linear,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub l2_enabled: bool,
    pub l2_lambda: f64,
    pub output: OutputKind,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.input_dim == 0 {
            return Err("input_dim must be at least 1".into());
        }
        if self.hidden.is_empty() {
            return Err("at least one hidden layer is required".into());
        }
        if self.hidden.contains(&0) {
            return Err("hidden layer units must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if self.l2_lambda < 0.0 {
            return Err("l2_lambda must be nonnegative".into());
        }
        Ok(())
    }

    /// Dropout/L2 apply to hidden layers after the first; never to the
    /// output layer.
    fn regularized(&self, layer: usize) -> bool {
        layer >= 1 && layer < self.hidden.len()
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_dim;
        for &units in &self.hidden {
            dims.push((prev, units));
            prev = units;
        }
        dims.push((prev, self.output.units()));
        dims
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases for every layer; the last layer is the output head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
}

impl Model {
    /// Fresh model with kernels drawn under `init` and zero biases. Each
    /// layer consumes its own sub-stream of `addr`.
    pub fn init(spec: &NetworkSpec, init: InitScheme, master: u64, addr: &StreamAddress) -> Model {
        let layers = spec
            .layer_dims()
            .into_iter()
            .enumerate()
            .map(|(l, (fan_in, fan_out))| {
                let mut rng = derive(master, &addr.child("weight_init", l as u64));
                Layer {
                    weights: sample_weights(init, fan_in, fan_out, fan_in, fan_out, &mut rng),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Model { layers }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: Option<usize>,
    pub checkpoint: bool,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub class_weighting: bool,
    pub fitness_metric: FitnessMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            batch_size: 32,
            patience: None,
            checkpoint: false,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-7,
            class_weighting: true,
            fitness_metric: FitnessMetric::F1,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_fitness: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: Model,
    pub best_epoch: usize,
    pub validation_fitness: f64,
    pub history: Vec<EpochRecord>,
    pub diverged: bool,
}

/// Training history as JSONL, one object per epoch.
pub fn write_history_jsonl(
    model: &TrainedModel,
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    for record in &model.history {
        serde_json::to_writer(&mut w, record)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Inference-mode forward pass: hidden affine + activation, output head.
pub fn predict(
    model: &Model,
    spec: &NetworkSpec,
    activation: &Activation,
    batch: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, NonFinite> {
    forward(model, spec, activation, batch, false, None)
}

/// Forward pass. With `training` true, inverted dropout masks the
/// regularized hidden layers, drawing from `rng`; in inference mode dropout
/// is the identity and `rng` is unused.
pub fn forward(
    model: &Model,
    spec: &NetworkSpec,
    activation: &Activation,
    batch: ArrayView2<'_, f64>,
    training: bool,
    rng: Option<&mut Stream>,
) -> Result<Array2<f64>, NonFinite> {
    assert_eq!(batch.ncols(), spec.input_dim, "batch width != input_dim");
    let mut current = batch.to_owned();
    let mut rng = rng;
    for (l, layer) in model.layers[..model.layers.len() - 1].iter().enumerate() {
        let z = current.dot(&layer.weights) + &layer.bias;
        let mut act = Array2::zeros(z.dim());
        for ((i, j), &zv) in z.indexed_iter() {
            act[[i, j]] = activation.eval(zv)?;
        }
        if training && spec.dropout_rate > 0.0 && spec.regularized(l) {
            let rng = rng
                .as_deref_mut()
                .expect("training forward needs a stream for dropout");
            apply_dropout(&mut act, None, spec.dropout_rate, rng);
        }
        current = act;
    }
    let out_layer = model.layers.last().expect("output layer");
    let z = current.dot(&out_layer.weights) + &out_layer.bias;
    apply_head(z, spec.output)
}

fn apply_head(z: Array2<f64>, output: OutputKind) -> Result<Array2<f64>, NonFinite> {
    let out = match output {
        OutputKind::BinarySigmoid => z.mapv(|v| 1.0 / (1.0 + (-v).exp())),
        OutputKind::Linear => z,
        OutputKind::Softmax(_) => {
            let mut out = z;
            for mut row in out.axis_iter_mut(Axis(0)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
            out
        }
    };
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(NonFinite)
    }
}

/// Inverted dropout: drop with probability `rate`, scale survivors by
/// 1/(1-rate). Mask order is row-major, one draw per element.
fn apply_dropout(
    act: &mut Array2<f64>,
    mut deriv: Option<&mut Array2<f64>>,
    rate: f64,
    rng: &mut Stream,
) {
    let keep = 1.0 - rate;
    let cols = act.ncols();
    for idx in 0..act.len() {
        let (r, c) = (idx / cols, idx % cols);
        if rng.random::<f64>() < rate {
            act[[r, c]] = 0.0;
            if let Some(d) = deriv.as_deref_mut() {
                d[[r, c]] = 0.0;
            }
        } else {
            act[[r, c]] /= keep;
            if let Some(d) = deriv.as_deref_mut() {
                d[[r, c]] /= keep;
            }
        }
    }
}

struct ForwardCache {
    /// Post-activation, post-dropout outputs of each hidden layer.
    hidden: Vec<Array2<f64>>,
    /// Activation derivatives w.r.t. pre-activations, dropout-scaled.
    derivs: Vec<Array2<f64>>,
    /// Head output.
    output: Array2<f64>,
}

fn forward_cached(
    model: &Model,
    spec: &NetworkSpec,
    activation: &Activation,
    batch: ArrayView2<'_, f64>,
    dropout_rng: Option<&mut Stream>,
) -> Result<ForwardCache, NonFinite> {
    let mut hidden = Vec::with_capacity(spec.hidden.len());
    let mut derivs = Vec::with_capacity(spec.hidden.len());
    let mut current = batch.to_owned();
    let mut rng = dropout_rng;
    for (l, layer) in model.layers[..model.layers.len() - 1].iter().enumerate() {
        let z = current.dot(&layer.weights) + &layer.bias;
        let mut act = Array2::zeros(z.dim());
        let mut der = Array2::zeros(z.dim());
        for ((i, j), &zv) in z.indexed_iter() {
            let dual = activation.eval_dual(zv)?;
            act[[i, j]] = dual.value;
            der[[i, j]] = dual.derivative;
        }
        if spec.dropout_rate > 0.0 && spec.regularized(l) {
            if let Some(rng) = rng.as_deref_mut() {
                apply_dropout(&mut act, Some(&mut der), spec.dropout_rate, rng);
            }
        }
        derivs.push(der);
        hidden.push(act.clone());
        current = act;
    }
    let out_layer = model.layers.last().expect("output layer");
    let z = current.dot(&out_layer.weights) + &out_layer.bias;
    let output = apply_head(z, spec.output)?;
    Ok(ForwardCache {
        hidden,
        derivs,
        output,
    })
}

/// Loss value and output-layer delta (dL/dz of the head input) for one
/// batch. Cross-entropy probabilities are clamped in the loss; class
/// weights scale each sample and the batch normalizes by the weight sum.
fn loss_and_delta(
    output: &Array2<f64>,
    targets: &Targets,
    sample_weights: &[f64],
) -> Result<(f64, Array2<f64>), NonFinite> {
    let n = output.nrows();
    debug_assert_eq!(sample_weights.len(), n);
    let weight_sum: f64 = sample_weights.iter().sum();
    let mut delta = Array2::zeros(output.dim());
    let mut loss = 0.0;
    match targets {
        Targets::Binary(y) => {
            for i in 0..n {
                let p = output[[i, 0]];
                let clamped = p.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
                let w = sample_weights[i];
                loss -= w * (y[i] * clamped.ln() + (1.0 - y[i]) * (1.0 - clamped).ln());
                delta[[i, 0]] = w * (p - y[i]) / weight_sum;
            }
            loss /= weight_sum;
        }
        Targets::Multiclass { classes, labels } => {
            for i in 0..n {
                let w = sample_weights[i];
                for c in 0..*classes {
                    let p = output[[i, c]];
                    let y = f64::from(labels[i] == c);
                    if y == 1.0 {
                        loss -= w * p.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON).ln();
                    }
                    delta[[i, c]] = w * (p - y) / weight_sum;
                }
            }
            loss /= weight_sum;
        }
        Targets::Regression(y) => {
            for i in 0..n {
                let err = output[[i, 0]] - y[i];
                loss += err * err;
                delta[[i, 0]] = 2.0 * err / n as f64;
            }
            loss /= n as f64;
        }
    }
    if loss.is_finite() {
        Ok((loss, delta))
    } else {
        Err(NonFinite)
    }
}

/// Full batch loss, including the L2 penalty on regularized kernels,
/// without dropout. The backprop oracle differentiates exactly this.
pub fn batch_loss(
    model: &Model,
    spec: &NetworkSpec,
    activation: &Activation,
    batch: ArrayView2<'_, f64>,
    targets: &Targets,
    class_weights: Option<&[f64]>,
) -> Result<f64, NonFinite> {
    let cache = forward_cached(model, spec, activation, batch, None)?;
    let weights = per_sample_weights(targets, class_weights);
    let (loss, _) = loss_and_delta(&cache.output, targets, &weights)?;
    Ok(loss + l2_penalty(model, spec))
}

/// (kernel gradient, bias gradient) per layer.
pub type LayerGradients = Vec<(Array2<f64>, Array1<f64>)>;

/// Analytic gradient of [`batch_loss`] for every parameter. Dropout-free,
/// like `batch_loss` itself.
pub fn loss_gradients(
    model: &Model,
    spec: &NetworkSpec,
    activation: &Activation,
    batch: ArrayView2<'_, f64>,
    targets: &Targets,
    class_weights: Option<&[f64]>,
) -> Result<LayerGradients, NonFinite> {
    let cache = forward_cached(model, spec, activation, batch, None)?;
    let weights = per_sample_weights(targets, class_weights);
    let (_, delta) = loss_and_delta(&cache.output, targets, &weights)?;
    let grads = backward(model, spec, batch, &cache, delta);
    Ok(grads
        .layers
        .into_iter()
        .map(|l| (l.weights, l.bias))
        .collect())
}

fn l2_penalty(model: &Model, spec: &NetworkSpec) -> f64 {
    if !spec.l2_enabled {
        return 0.0;
    }
    let mut penalty = 0.0;
    for (l, layer) in model.layers.iter().enumerate() {
        if spec.regularized(l) {
            penalty += layer.weights.iter().map(|w| w * w).sum::<f64>();
        }
    }
    spec.l2_lambda * penalty
}

fn per_sample_weights(targets: &Targets, class_weights: Option<&[f64]>) -> Vec<f64> {
    match (targets, class_weights) {
        (Targets::Binary(y), Some(cw)) => y.iter().map(|&v| cw[v as usize]).collect(),
        (Targets::Multiclass { labels, .. }, Some(cw)) => labels.iter().map(|&l| cw[l]).collect(),
        _ => vec![1.0; targets.len()],
    }
}

struct Gradients {
    layers: Vec<Layer>,
}

fn backward(
    model: &Model,
    spec: &NetworkSpec,
    batch: ArrayView2<'_, f64>,
    cache: &ForwardCache,
    delta_out: Array2<f64>,
) -> Gradients {
    let n_hidden = spec.hidden.len();
    let mut grads: Vec<Option<Layer>> = (0..model.layers.len()).map(|_| None).collect();

    let last_hidden = &cache.hidden[n_hidden - 1];
    grads[n_hidden] = Some(Layer {
        weights: last_hidden.t().dot(&delta_out),
        bias: delta_out.sum_axis(Axis(0)),
    });
    let mut back = delta_out.dot(&model.layers[n_hidden].weights.t());

    for l in (0..n_hidden).rev() {
        let dz = back * &cache.derivs[l];
        let inputs = if l == 0 {
            batch.to_owned()
        } else {
            cache.hidden[l - 1].clone()
        };
        let mut weight_grad = inputs.t().dot(&dz);
        if spec.l2_enabled && spec.regularized(l) {
            weight_grad += &(2.0 * spec.l2_lambda * &model.layers[l].weights);
        }
        grads[l] = Some(Layer {
            weights: weight_grad,
            bias: dz.sum_axis(Axis(0)),
        });
        back = dz.dot(&model.layers[l].weights.t());
    }
    Gradients {
        layers: grads
            .into_iter()
            .map(|g| g.expect("all layers populated"))
            .collect(),
    }
}

/// ADAM state over all model parameters. Steps are counted per batch and
/// shared by every tensor.
struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    fn new(model: &Model, cfg: &TrainConfig) -> Self {
        let zeros = |layers: &[Layer]| {
            layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(&model.layers),
            v: zeros(&model.layers),
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            epsilon: cfg.adam_epsilon,
        }
    }

    fn step(&mut self, model: &mut Model, grads: &Gradients) {
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t);
        let bias2 = 1.0 - self.beta2.powi(self.t);
        for (l, grad) in grads.layers.iter().enumerate() {
            // Kernel.
            moment_update(
                self.m[l].weights.iter_mut(),
                self.v[l].weights.iter_mut(),
                model.layers[l].weights.iter_mut(),
                grad.weights.iter(),
                (self.beta1, self.beta2, self.lr, self.epsilon),
                (bias1, bias2),
            );
            // Bias.
            moment_update(
                self.m[l].bias.iter_mut(),
                self.v[l].bias.iter_mut(),
                model.layers[l].bias.iter_mut(),
                grad.bias.iter(),
                (self.beta1, self.beta2, self.lr, self.epsilon),
                (bias1, bias2),
            );
        }
    }
}

fn moment_update<'a>(
    m: impl Iterator<Item = &'a mut f64>,
    v: impl Iterator<Item = &'a mut f64>,
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    (beta1, beta2, lr, epsilon): (f64, f64, f64, f64),
    (bias1, bias2): (f64, f64),
) {
    for (((m, v), p), &g) in m.zip(v).zip(params).zip(grads) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let mhat = *m / bias1;
        let vhat = *v / bias2;
        *p -= lr * mhat / (vhat.sqrt() + epsilon);
    }
}

/// Tracks the best validation fitness; improvement must be strict. With
/// `patience` set, signals a stop after that many stagnant epochs.
pub struct EarlyStopTracker {
    patience: Option<usize>,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopTracker {
    pub fn new(patience: Option<usize>) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Observes one epoch's validation fitness; returns (improved, stop).
    pub fn observe(&mut self, epoch: usize, fitness: f64) -> (bool, bool) {
        let improved = fitness > self.best;
        if improved {
            self.best = fitness;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        (improved, self.patience.is_some_and(|p| self.stale >= p))
    }
}

/// Trains a network on `train_set`, tracking fitness on `val_set`.
///
/// Weight init, epoch shuffles, and dropout masks each draw from their own
/// sub-stream of `addr`, so a run is a pure function of `(master, addr)` and
/// its inputs. A non-finite activation or loss aborts the run with
/// `validation_fitness = -inf` and `diverged` set, instead of crashing.
#[allow(clippy::too_many_arguments)]
pub fn train(
    spec: &NetworkSpec,
    activation: &Activation,
    init: InitScheme,
    train_set: (ArrayView2<'_, f64>, &Targets),
    val_set: (ArrayView2<'_, f64>, &Targets),
    cfg: &TrainConfig,
    master: u64,
    addr: &StreamAddress,
) -> TrainedModel {
    let (train_x, train_y) = train_set;
    let (val_x, val_y) = val_set;
    assert!(!val_y.is_empty(), "validation set must be non-empty");
    assert!(cfg.max_epochs >= 1 && cfg.batch_size >= 1);

    let mut model = Model::init(spec, init, master, addr);
    let mut adam = Adam::new(&model, cfg);
    let mut tracker = EarlyStopTracker::new(cfg.patience);
    let mut history = Vec::new();
    let mut best_model: Option<Model> = None;

    let class_weights = if cfg.class_weighting {
        match balanced_class_weights(train_y) {
            Ok(w) if !w.is_empty() => Some(w),
            _ => None,
        }
    } else {
        None
    };
    let weights_per_sample = per_sample_weights(train_y, class_weights.as_deref());

    let diverge = |model: Model, history: Vec<EpochRecord>| TrainedModel {
        model,
        best_epoch: 0,
        validation_fitness: f64::NEG_INFINITY,
        history,
        diverged: true,
    };

    let n = train_x.nrows();
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        {
            use rand::seq::SliceRandom;
            let mut shuffle_rng = derive(master, &addr.child("shuffle", epoch as u64));
            order.shuffle(&mut shuffle_rng);
        }
        let mut dropout_rng = derive(master, &addr.child("dropout", epoch as u64));

        let mut epoch_loss = 0.0;
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch_x = train_x.select(Axis(0), batch_idx);
            let batch_y = train_y.select(batch_idx);
            let batch_w: Vec<f64> = batch_idx.iter().map(|&i| weights_per_sample[i]).collect();

            let cache = match forward_cached(
                &model,
                spec,
                activation,
                batch_x.view(),
                Some(&mut dropout_rng),
            ) {
                Ok(c) => c,
                Err(NonFinite) => return diverge(model, history),
            };
            let (loss, delta) = match loss_and_delta(&cache.output, &batch_y, &batch_w) {
                Ok(v) => v,
                Err(NonFinite) => return diverge(model, history),
            };
            let grads = backward(&model, spec, batch_x.view(), &cache, delta);
            adam.step(&mut model, &grads);
            epoch_loss += loss * batch_idx.len() as f64;
        }
        let train_loss = epoch_loss / n as f64 + l2_penalty(&model, spec);

        let val_fitness = match predict(&model, spec, activation, val_x) {
            Ok(out) => cfg.fitness_metric.of(&metrics(out.view(), val_y)),
            Err(NonFinite) => return diverge(model, history),
        };
        if !val_fitness.is_finite() {
            return diverge(model, history);
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_fitness,
        });

        let (improved, stop) = tracker.observe(epoch, val_fitness);
        if improved && (cfg.checkpoint || cfg.patience.is_some()) {
            best_model = Some(model.clone());
        }
        if stop {
            break;
        }
    }

    if let Some(best) = best_model {
        model = best;
    }
    TrainedModel {
        model,
        best_epoch: tracker.best_epoch,
        validation_fitness: tracker.best,
        history,
        diverged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth, SynthKind};
    use crate::expr::ActivationTree;
    use ndarray::s;

    fn addr(tag: &str) -> StreamAddress {
        StreamAddress::root().child(tag, 0)
    }

    fn tree(text: &str) -> Activation {
        Activation::Tree(text.parse::<ActivationTree>().unwrap())
    }

    fn zero_model(spec: &NetworkSpec) -> Model {
        Model {
            layers: spec
                .layer_dims()
                .into_iter()
                .map(|(fi, fo)| Layer {
                    weights: Array2::zeros((fi, fo)),
                    bias: Array1::zeros(fo),
                })
                .collect(),
        }
    }

    fn binary_spec(input: usize, hidden: Vec<usize>) -> NetworkSpec {
        NetworkSpec {
            input_dim: input,
            hidden,
            dropout_rate: 0.0,
            l2_enabled: false,
            l2_lambda: 0.0,
            output: OutputKind::BinarySigmoid,
        }
    }

    #[test]
    fn zero_network_outputs_half_through_sigmoid() {
        let spec = binary_spec(3, vec![4]);
        let model = zero_model(&spec);
        let x = Array2::from_shape_vec((2, 3), vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let out = predict(&model, &spec, &tree("(relu x)"), x.view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_binary_head_stays_open() {
        let mut spec = binary_spec(2, vec![5]);
        spec.output = OutputKind::Softmax(4);
        let mut rng = derive(1, &addr("softmax"));
        let model = Model::init(&spec, InitScheme::HeNormal, 1, &addr("softmax-model"));
        let x = Array2::from_shape_simple_fn((16, 2), || rng.random_range(-3.0..3.0));
        let out = predict(&model, &spec, &tree("(tanh x)"), x.view()).unwrap();
        for row in out.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }

        let spec = binary_spec(2, vec![5]);
        let model = Model::init(&spec, InitScheme::HeNormal, 2, &addr("binary-model"));
        let out = predict(&model, &spec, &tree("(tanh x)"), x.view()).unwrap();
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn inference_mode_ignores_dropout() {
        let mut spec = binary_spec(2, vec![6, 6]);
        spec.dropout_rate = 0.5;
        let model = Model::init(&spec, InitScheme::GlorotUniform, 3, &addr("drop-model"));
        let x =
            Array2::from_shape_vec((4, 2), vec![0.1, 0.2, -0.5, 1.0, 2.0, -2.0, 0.0, 0.3]).unwrap();
        let a = predict(&model, &spec, &tree("(relu x)"), x.view()).unwrap();
        let b = predict(&model, &spec, &tree("(relu x)"), x.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let rate = 0.3;
        let mut rng = derive(9, &addr("dropout-mean"));
        let mut total = 0.0;
        let passes = 100_000;
        for _ in 0..passes {
            let mut act = Array2::from_elem((1, 8), 1.0);
            apply_dropout(&mut act, None, rate, &mut rng);
            total += act.sum() / 8.0;
        }
        let mean = total / passes as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn adam_with_zero_gradient_leaves_parameters_unchanged() {
        let spec = binary_spec(2, vec![3]);
        let model0 = Model::init(&spec, InitScheme::HeNormal, 4, &addr("adam"));
        let mut model = model0.clone();
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(&model, &cfg);
        let grads = Gradients {
            layers: zero_model(&spec).layers,
        };
        for _ in 0..10 {
            adam.step(&mut model, &grads);
        }
        assert_eq!(model, model0);
    }

    #[test]
    fn early_stopping_bookkeeping() {
        // Strictly decreasing from epoch 1: stops at epoch 11, best is 1.
        let mut tracker = EarlyStopTracker::new(Some(10));
        let mut stopped_at = 0;
        for epoch in 1..=50 {
            let fitness = 1.0 - epoch as f64 * 0.01;
            let (_, stop) = tracker.observe(epoch, fitness);
            if stop {
                stopped_at = epoch;
                break;
            }
        }
        assert_eq!(stopped_at, 11);
        assert_eq!(tracker.best_epoch, 1);
    }

    #[test]
    fn restored_fitness_is_the_history_maximum() {
        let data = synth(
            SynthKind::Moons,
            120,
            0.3,
            &mut derive(5, &addr("moons-data")),
        );
        let train_x = data.features.slice(s![..90, ..]);
        let val_x = data.features.slice(s![90.., ..]);
        let idx_train: Vec<usize> = (0..90).collect();
        let idx_val: Vec<usize> = (90..120).collect();
        let train_y = data.targets.select(&idx_train);
        let val_y = data.targets.select(&idx_val);
        let cfg = TrainConfig {
            max_epochs: 20,
            patience: Some(5),
            ..TrainConfig::default()
        };
        let spec = binary_spec(2, vec![8]);
        let trained = train(
            &spec,
            &tree("(tanh x)"),
            InitScheme::GlorotUniform,
            (train_x, &train_y),
            (val_x, &val_y),
            &cfg,
            11,
            &addr("restore"),
        );
        assert!(!trained.diverged);
        let best_in_history = trained
            .history
            .iter()
            .map(|r| r.val_fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(trained.validation_fitness, best_in_history);
        assert_eq!(
            trained.history[trained.best_epoch - 1].val_fitness,
            trained.validation_fitness
        );
        // Restored weights really score the recorded fitness.
        let out = predict(&trained.model, &spec, &tree("(tanh x)"), val_x).unwrap();
        let refit = cfg.fitness_metric.of(&metrics(out.view(), &val_y));
        assert_eq!(refit, trained.validation_fitness);
    }

    #[test]
    fn diverging_activation_reports_worst_fitness_without_crashing() {
        let data = synth(
            SynthKind::Moons,
            40,
            0.1,
            &mut derive(6, &addr("blowup-data")),
        );
        let big = data.features.mapv(|v| v * 200.0);
        let idx: Vec<usize> = (0..40).collect();
        let y = data.targets.select(&idx);
        let spec = binary_spec(2, vec![4]);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let trained = train(
            &spec,
            &tree("(cosh (cosh (cosh x)))"),
            InitScheme::HeNormal,
            (big.view(), &y),
            (big.view(), &y),
            &cfg,
            13,
            &addr("blowup"),
        );
        assert!(trained.diverged);
        assert_eq!(trained.validation_fitness, f64::NEG_INFINITY);
    }

    #[test]
    fn equal_class_weights_match_unweighted_training_bitwise() {
        let data = synth(SynthKind::Moons, 80, 0.25, &mut derive(7, &addr("cw-data")));
        // Moons lays out class 0 first; even/odd indices give an exactly
        // balanced train split.
        let idx_train: Vec<usize> = (0..80).step_by(2).collect();
        let idx_val: Vec<usize> = (0..80).skip(1).step_by(2).collect();
        let train_y = data.targets.select(&idx_train);
        let val_y = data.targets.select(&idx_val);
        let train_x = data.features.select(Axis(0), &idx_train);
        let val_x = data.features.select(Axis(0), &idx_val);
        // This slice of moons is exactly balanced, so balanced weights are
        // all 1.0 and must change nothing.
        match balanced_class_weights(&train_y) {
            Ok(w) => assert_eq!(w, vec![1.0, 1.0]),
            Err(e) => panic!("{e}"),
        }
        let spec = binary_spec(2, vec![6]);
        let run = |class_weighting: bool| {
            let cfg = TrainConfig {
                max_epochs: 5,
                class_weighting,
                ..TrainConfig::default()
            };
            train(
                &spec,
                &tree("(tanh x)"),
                InitScheme::GlorotUniform,
                (train_x.view(), &train_y),
                (val_x.view(), &val_y),
                &cfg,
                21,
                &addr("cw"),
            )
        };
        let weighted = run(true);
        let unweighted = run(false);
        for (a, b) in weighted.history.iter().zip(&unweighted.history) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.val_fitness.to_bits(), b.val_fitness.to_bits());
        }
    }

    #[test]
    fn gradients_match_finite_differences_for_every_head() {
        // Small smooth-tree network; every parameter's analytic gradient
        // against central differences of batch_loss, for all three output
        // heads and their losses.
        let cases = [
            (
                OutputKind::BinarySigmoid,
                Targets::Binary((0..12).map(|i| f64::from(i % 2 == 0)).collect()),
            ),
            (
                OutputKind::Softmax(3),
                Targets::Multiclass {
                    classes: 3,
                    labels: (0..12).map(|i| i % 3).collect(),
                },
            ),
            (
                OutputKind::Linear,
                Targets::Regression((0..12).map(|i| (i as f64 * 0.7).sin()).collect()),
            ),
        ];
        for (output, y) in cases {
            let mut spec = binary_spec(3, vec![5, 4]);
            spec.output = output;
            spec.l2_enabled = true;
            spec.l2_lambda = 0.01;
            let activation = tree("(mul (tanh x) (sigmoid x))");
            let mut rng = derive(8, &addr("fd-data"));
            let x = Array2::from_shape_simple_fn((12, 3), || rng.random_range(-1.5..1.5));
            let cw = balanced_class_weights(&y).ok().filter(|w| !w.is_empty());
            let model = Model::init(&spec, InitScheme::GlorotUniform, 15, &addr("fd-model"));

            let cache = forward_cached(&model, &spec, &activation, x.view(), None).unwrap();
            let w = per_sample_weights(&y, cw.as_deref());
            let (_, delta) = loss_and_delta(&cache.output, &y, &w).unwrap();
            let grads = backward(&model, &spec, x.view(), &cache, delta);

            let h = 1e-6;
            let mut checked = 0;
            for l in 0..model.layers.len() {
                let cols = model.layers[l].weights.ncols();
                for idx in 0..model.layers[l].weights.len() {
                    let (r, c) = (idx / cols, idx % cols);
                    let mut plus = model.clone();
                    plus.layers[l].weights[[r, c]] += h;
                    let mut minus = model.clone();
                    minus.layers[l].weights[[r, c]] -= h;
                    let lp =
                        batch_loss(&plus, &spec, &activation, x.view(), &y, cw.as_deref()).unwrap();
                    let lm = batch_loss(&minus, &spec, &activation, x.view(), &y, cw.as_deref())
                        .unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    let analytic = grads.layers[l].weights[[r, c]];
                    let rel = (analytic - fd).abs() / analytic.abs().max(1e-3);
                    assert!(
                        rel < 1e-4,
                        "{output:?} layer {l} w[{r},{c}]: {analytic} vs {fd}"
                    );
                    checked += 1;
                }
                for b in 0..model.layers[l].bias.len() {
                    let mut plus = model.clone();
                    plus.layers[l].bias[b] += h;
                    let mut minus = model.clone();
                    minus.layers[l].bias[b] -= h;
                    let lp =
                        batch_loss(&plus, &spec, &activation, x.view(), &y, cw.as_deref()).unwrap();
                    let lm = batch_loss(&minus, &spec, &activation, x.view(), &y, cw.as_deref())
                        .unwrap();
                    let fd = (lp - lm) / (2.0 * h);
                    let analytic = grads.layers[l].bias[b];
                    let rel = (analytic - fd).abs() / analytic.abs().max(1e-3);
                    assert!(
                        rel < 1e-4,
                        "{output:?} layer {l} b[{b}]: {analytic} vs {fd}"
                    );
                    checked += 1;
                }
            }
            // 3x5 + 5x4 + 4xout kernels plus biases.
            assert_eq!(checked, 44 + 5 * output.units());
        }
    }

    #[test]
    fn regression_training_reduces_mse() {
        let data = synth(
            SynthKind::SineRegression,
            80,
            0.05,
            &mut derive(3, &addr("sine")),
        );
        let idx_train: Vec<usize> = (0..60).collect();
        let idx_val: Vec<usize> = (60..80).collect();
        let train_x = data.features.select(Axis(0), &idx_train);
        let val_x = data.features.select(Axis(0), &idx_val);
        let train_y = data.targets.select(&idx_train);
        let val_y = data.targets.select(&idx_val);
        let spec = NetworkSpec {
            input_dim: 1,
            hidden: vec![12],
            dropout_rate: 0.0,
            l2_enabled: false,
            l2_lambda: 0.0,
            output: OutputKind::Linear,
        };
        let cfg = TrainConfig {
            max_epochs: 600,
            learning_rate: 0.02,
            fitness_metric: FitnessMetric::NegMse,
            checkpoint: true,
            ..TrainConfig::default()
        };
        let trained = train(
            &spec,
            &tree("(tanh x)"),
            InitScheme::GlorotUniform,
            (train_x.view(), &train_y),
            (val_x.view(), &val_y),
            &cfg,
            9,
            &addr("sine-train"),
        );
        assert!(!trained.diverged);
        // Fitness is negated MSE; it must improve markedly over epoch 1.
        let first = trained.history.first().unwrap().val_fitness;
        assert!(
            trained.validation_fitness > first + 0.1,
            "no learning: {} -> {}",
            first,
            trained.validation_fitness
        );
        assert!(trained.validation_fitness > -0.05, "final MSE too high");
    }
}
