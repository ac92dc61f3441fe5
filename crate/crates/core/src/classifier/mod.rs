//! Transition classifier: two dense layers over pair features.
//!
//! ```text
//! h      = relu(W1ᵀ x + b1)          W1: input × hidden
//! z      = W2ᵀ h + b2                W2: hidden × 6
//! scores = softmax(z) | sigmoid(z)
//! ```
//!
//! Trained with categorical cross-entropy and RMSprop. In sigmoid mode the
//! loss is taken on the renormalized sigmoid scores.

pub mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::{cohen_kappa, ConfusionMatrix, KappaScore};
use crate::corpus::PanelPair;
use crate::error::{Error, Result};
use crate::label::{TransitionLabel, NUM_LABELS};

pub const HIDDEN_UNITS: usize = 256;

/// Lower clip applied to scores before taking the log.
pub const SCORE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Softmax,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub epochs_per_round: usize,
    /// Mini-batch size; a value at or above the pool size trains full-batch.
    pub batch_size: usize,
    pub output_activation: OutputActivation,
    pub hidden_units: usize,
    /// Standardize pair features over the training pool before fitting.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            epochs_per_round: 10,
            batch_size: 32,
            output_activation: OutputActivation::Softmax,
            hidden_units: HIDDEN_UNITS,
            standardize: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("train config: {m}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return bad("rmsprop_decay must lie in (0, 1)");
        }
        if self.rmsprop_epsilon <= 0.0 {
            return bad("rmsprop_epsilon must be positive");
        }
        if self.epochs_per_round == 0 || self.batch_size == 0 || self.hidden_units == 0 {
            return bad("epochs_per_round, batch_size and hidden_units must be positive");
        }
        Ok(())
    }
}

/// Weights of the two dense layers, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// `input_dim × hidden`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden × 6`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        MlpParams {
            input_dim,
            hidden,
            w1: vec![0.0; input_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * NUM_LABELS],
            b2: vec![0.0; NUM_LABELS],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden)
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Glorot-uniform weights with the default 256 hidden units; zero biases.
pub fn init_params(seed: u64, input_dim: usize) -> MlpParams {
    init_params_with_hidden(seed, input_dim, HIDDEN_UNITS)
}

pub fn init_params_with_hidden(seed: u64, input_dim: usize, hidden: usize) -> MlpParams {
    assert!(input_dim > 0 && hidden > 0, "layer sizes must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MlpParams::zeros(input_dim, hidden);
    let limit1 = (6.0 / (input_dim + hidden) as f64).sqrt();
    for w in &mut p.w1 {
        *w = rng.random_range(-limit1..limit1);
    }
    let limit2 = (6.0 / (hidden + NUM_LABELS) as f64).sqrt();
    for w in &mut p.w2 {
        *w = rng.random_range(-limit2..limit2);
    }
    p
}

struct Activations {
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    logits: [f64; NUM_LABELS],
}

fn forward_pass(params: &MlpParams, x: &[f64]) -> Activations {
    let h = params.hidden;
    let mut pre_hidden = params.b1.clone();
    for (xi, row) in x.iter().zip(params.w1.chunks_exact(h)) {
        if *xi == 0.0 {
            continue;
        }
        for (acc, w) in pre_hidden.iter_mut().zip(row) {
            *acc += xi * w;
        }
    }
    let hidden: Vec<f64> = pre_hidden.iter().map(|&v| v.max(0.0)).collect();
    let mut logits = [0.0; NUM_LABELS];
    logits.copy_from_slice(&params.b2);
    for (hj, row) in hidden.iter().zip(params.w2.chunks_exact(NUM_LABELS)) {
        for (acc, w) in logits.iter_mut().zip(row) {
            *acc += hj * w;
        }
    }
    Activations {
        pre_hidden,
        hidden,
        logits,
    }
}

pub fn softmax(z: &[f64; NUM_LABELS]) -> [f64; NUM_LABELS] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = z.map(|v| (v - max).exp());
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn activate(z: &[f64; NUM_LABELS], activation: OutputActivation) -> [f64; NUM_LABELS] {
    match activation {
        OutputActivation::Softmax => softmax(z),
        OutputActivation::Sigmoid => z.map(sigmoid),
    }
}

/// Class scores for one pair feature.
pub fn forward(params: &MlpParams, x: &[f64], activation: OutputActivation) -> Result<[f64; NUM_LABELS]> {
    params.check_input(x)?;
    Ok(activate(&forward_pass(params, x).logits, activation))
}

/// Scores as a probability vector: softmax output as is, sigmoid output
/// renormalized to sum to one.
pub fn normalized_scores(scores: &[f64; NUM_LABELS], activation: OutputActivation) -> [f64; NUM_LABELS] {
    match activation {
        OutputActivation::Softmax => *scores,
        OutputActivation::Sigmoid => {
            let s: f64 = scores.iter().sum();
            scores.map(|v| v / s)
        }
    }
}

/// Categorical cross-entropy `-Σ target · ln(clip(scores))`.
pub fn loss(scores: &[f64; NUM_LABELS], target: &[f64; NUM_LABELS]) -> Result<f64> {
    let ones = target.iter().filter(|&&t| t == 1.0).count();
    let zeros = target.iter().filter(|&&t| t == 0.0).count();
    if ones != 1 || zeros != NUM_LABELS - 1 {
        return Err(Error::Validation(format!("target {target:?} is not one-hot")));
    }
    Ok(-scores
        .iter()
        .zip(target)
        .map(|(&s, &t)| t * s.clamp(SCORE_FLOOR, 1.0).ln())
        .sum::<f64>())
}

fn example_loss(params: &MlpParams, x: &[f64], label: TransitionLabel, activation: OutputActivation) -> f64 {
    let scores = activate(&forward_pass(params, x).logits, activation);
    let p = normalized_scores(&scores, activation);
    -p[label.index()].clamp(SCORE_FLOOR, 1.0).ln()
}

/// Mean loss over a batch.
pub fn batch_loss(
    params: &MlpParams,
    batch: &[(&[f64], TransitionLabel)],
    activation: OutputActivation,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss over an empty batch".into()));
    }
    let mut total = 0.0;
    for (x, label) in batch {
        params.check_input(x)?;
        total += example_loss(params, x, *label, activation);
    }
    Ok(total / batch.len() as f64)
}

/// Argmax with ties going to the lowest label index.
pub fn argmax(scores: &[f64; NUM_LABELS]) -> TransitionLabel {
    let mut best = 0;
    for i in 1..NUM_LABELS {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    TransitionLabel::ALL[best]
}

/// dL/dz for one example.
fn output_error(logits: &[f64; NUM_LABELS], label: TransitionLabel, activation: OutputActivation) -> [f64; NUM_LABELS] {
    let t = label.index();
    match activation {
        OutputActivation::Softmax => {
            let mut d = softmax(logits);
            d[t] -= 1.0;
            d
        }
        OutputActivation::Sigmoid => {
            let s = logits.map(sigmoid);
            let total: f64 = s.iter().sum();
            let mut d = [0.0; NUM_LABELS];
            for k in 0..NUM_LABELS {
                d[k] = s[k] * (1.0 - s[k]) / total;
            }
            d[t] -= 1.0 - s[t];
            d
        }
    }
}

/// Mean gradient of the batch loss with respect to every parameter.
pub fn gradients(
    params: &MlpParams,
    batch: &[(&[f64], TransitionLabel)],
    activation: OutputActivation,
) -> Result<MlpParams> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient of an empty batch".into()));
    }
    let h = params.hidden;
    let mut g = params.zeros_like();
    let mut d_hidden = vec![0.0; h];
    for (x, label) in batch {
        params.check_input(x)?;
        let act = forward_pass(params, x);
        let dz = output_error(&act.logits, *label, activation);

        for (j, (hj, row)) in act.hidden.iter().zip(g.w2.chunks_exact_mut(NUM_LABELS)).enumerate() {
            let w_row = &params.w2[j * NUM_LABELS..(j + 1) * NUM_LABELS];
            let mut back = 0.0;
            for k in 0..NUM_LABELS {
                row[k] += hj * dz[k];
                back += w_row[k] * dz[k];
            }
            // relu'(0) = 0
            d_hidden[j] = if act.pre_hidden[j] > 0.0 { back } else { 0.0 };
        }
        for (acc, d) in g.b2.iter_mut().zip(&dz) {
            *acc += d;
        }
        for (acc, d) in g.b1.iter_mut().zip(&d_hidden) {
            *acc += d;
        }
        for (xi, row) in x.iter().zip(g.w1.chunks_exact_mut(h)) {
            if *xi == 0.0 {
                continue;
            }
            for (acc, d) in row.iter_mut().zip(&d_hidden) {
                *acc += xi * d;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for t in g.tensors_mut() {
        for v in t.iter_mut() {
            *v *= scale;
        }
    }
    Ok(g)
}

/// Running mean-square accumulators, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub mean_square: MlpParams,
}

impl RmsPropState {
    pub fn new(params: &MlpParams) -> Self {
        RmsPropState {
            mean_square: params.zeros_like(),
        }
    }
}

/// `s ← ρ·s + (1−ρ)·g²;  θ ← θ − lr·g / (√s + ε)` elementwise.
pub fn rmsprop_update(theta: &mut [f64], grad: &[f64], mean_square: &mut [f64], lr: f64, decay: f64, eps: f64) {
    for ((t, g), s) in theta.iter_mut().zip(grad).zip(mean_square.iter_mut()) {
        *s = decay * *s + (1.0 - decay) * g * g;
        *t -= lr * g / (s.sqrt() + eps);
    }
}

pub fn rmsprop_step(params: &mut MlpParams, grads: &MlpParams, state: &mut RmsPropState, config: &TrainConfig) {
    let g = grads.tensors();
    for ((theta, grad), s) in params
        .tensors_mut()
        .into_iter()
        .zip(g)
        .zip(state.mean_square.tensors_mut())
    {
        rmsprop_update(
            theta,
            grad,
            s,
            config.learning_rate,
            config.rmsprop_decay,
            config.rmsprop_epsilon,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// A labeled training example.
pub type Example = (Vec<f64>, TransitionLabel);

/// Runs `epochs_per_round` epochs of shuffled mini-batch RMSprop from fresh
/// optimizer state.
pub fn train(params: &mut MlpParams, data: &[Example], config: &TrainConfig) -> Result<TrainHistory> {
    let mut state = RmsPropState::new(params);
    train_with_state(params, &mut state, data, config)
}

/// As [`train`], continuing from existing optimizer state. Per-epoch loss and
/// accuracy are measured over the whole set after each epoch's updates.
pub fn train_with_state(
    params: &mut MlpParams,
    state: &mut RmsPropState,
    data: &[Example],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let view: Vec<(&[f64], TransitionLabel)> = data.iter().map(|(x, l)| (x.as_slice(), *l)).collect();
    for (x, _) in &view {
        params.check_input(x)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..view.len()).collect();
    let mut history = TrainHistory::default();
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs_per_round {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| view[i]));
            let g = gradients(params, &batch, config.output_activation)?;
            rmsprop_step(params, &g, state, config);
        }
        let (mean_loss, accuracy) = loss_and_accuracy(params, &view, config.output_activation);
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            mean_loss,
            accuracy,
        });
    }
    Ok(history)
}

fn loss_and_accuracy(
    params: &MlpParams,
    data: &[(&[f64], TransitionLabel)],
    activation: OutputActivation,
) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, label) in data {
        let scores = activate(&forward_pass(params, x).logits, activation);
        let p = normalized_scores(&scores, activation);
        loss -= p[label.index()].clamp(SCORE_FLOOR, 1.0).ln();
        if argmax(&scores) == *label {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    (loss / n, correct as f64 / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair: PanelPair,
    pub scores: [f64; NUM_LABELS],
    pub label: TransitionLabel,
}

pub fn predict(
    params: &MlpParams,
    pair: PanelPair,
    x: &[f64],
    activation: OutputActivation,
) -> Result<Prediction> {
    let scores = forward(params, x, activation)?;
    Ok(Prediction {
        pair,
        label: argmax(&scores),
        scores,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Rows are predictions, columns are true labels.
    pub confusion: ConfusionMatrix,
    /// `None` when kappa is undefined (both sides constant on one label).
    pub kappa: Option<KappaScore>,
}

pub fn evaluate(params: &MlpParams, data: &[Example], activation: OutputActivation) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set is empty".into()));
    }
    let mut confusion = ConfusionMatrix::labels();
    let mut correct = 0usize;
    for (x, truth) in data {
        let predicted = argmax(&forward(params, x, activation)?);
        confusion.add(predicted, *truth);
        if predicted == *truth {
            correct += 1;
        }
    }
    Ok(evaluation_from(confusion, correct, data.len()))
}

pub(crate) fn evaluation_from(confusion: ConfusionMatrix, correct: usize, n: usize) -> Evaluation {
    let kappa = match cohen_kappa(&confusion) {
        Ok(k) => Some(k),
        Err(Error::DegenerateKappa) => None,
        Err(e) => unreachable!("non-empty confusion: {e}"),
    };
    Evaluation {
        accuracy: correct as f64 / n as f64,
        confusion,
        kappa,
    }
}
