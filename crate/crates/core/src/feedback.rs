//! Iterative feedback training.
//!
//! Each round: split the labeled pool 90/10, train on the larger part
//! (continuing from the current weights), score the holdout, predict a random
//! batch of unlabeled pairs, collect feedback labels for them, and move the
//! correctly predicted pairs into the labeled pool. Incorrect pairs go back to
//! the unlabeled pool unless `adopt_corrections` is set.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::kappa_of_labels;
use crate::classifier::{
    self, init_params_with_hidden, Checkpoint, Example, MlpParams, Prediction, RmsPropState,
    TrainConfig, TrainHistory,
};
use crate::corpus::{labels_by, AnnotationRecord, LabelMap, PanelPair};
use crate::error::{Error, Result};
use crate::features::{pair_feature, FeatureStore, Standardizer};
use crate::label::TransitionLabel;

/// Annotator id carried by oracle feedback files.
pub const ORACLE_ANNOTATOR: &str = "oracle";

pub const MIN_POOL: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPool {
    labeled: LabelMap,
    unlabeled: BTreeSet<PanelPair>,
    holdout_fraction: f64,
    round_index: usize,
}

impl LabelPool {
    pub fn new(labeled: LabelMap, unlabeled: impl IntoIterator<Item = PanelPair>, holdout_fraction: f64) -> Result<Self> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "holdout_fraction {holdout_fraction} outside (0, 1)"
            )));
        }
        let unlabeled: BTreeSet<PanelPair> = unlabeled.into_iter().collect();
        if let Some(p) = unlabeled.iter().find(|p| labeled.contains_key(*p)) {
            return Err(Error::Validation(format!("pair {p} is both labeled and unlabeled")));
        }
        Ok(LabelPool {
            labeled,
            unlabeled,
            holdout_fraction,
            round_index: 0,
        })
    }

    pub fn labeled(&self) -> &LabelMap {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<PanelPair> {
        &self.unlabeled
    }

    pub fn holdout_fraction(&self) -> f64 {
        self.holdout_fraction
    }

    /// Number of completed rounds.
    pub fn round_index(&self) -> usize {
        self.round_index
    }

    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub feedback_batch_size: usize,
    pub holdout_fraction: f64,
    /// Put incorrectly predicted pairs into the labeled pool with the
    /// feedback label instead of returning them to the unlabeled pool.
    pub adopt_corrections: bool,
    /// Re-initialize the learner at the start of every round.
    pub cold_start: bool,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            feedback_batch_size: 100,
            holdout_fraction: 0.1,
            adopt_corrections: false,
            cold_start: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based.
    pub round_index: usize,
    pub train_size: usize,
    pub holdout_size: usize,
    pub holdout_accuracy: f64,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub feedback_batch_size: usize,
    pub feedback_correct_count: usize,
    /// Kappa between predictions and feedback labels; `None` when undefined.
    pub kappa_vs_feedback: Option<f64>,
    pub pool_size_after: usize,
    pub unlabeled_after: usize,
}

/// Anything that can be trained on labeled pairs and label new ones.
pub trait Learner {
    /// Returns the learner to its initial state (used for cold starts).
    fn reset(&mut self) {}

    fn fit(&mut self, train: &[(PanelPair, TransitionLabel)], round: usize) -> Result<TrainHistory>;

    fn predict(&self, pairs: &[PanelPair]) -> Result<Vec<Prediction>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    OracleFile,
    InteractiveSession,
}

/// Supplies a label for every queried pair, in query order.
pub trait FeedbackSource {
    fn kind(&self) -> FeedbackKind;

    fn collect(&mut self, round: usize, pairs: &[PanelPair]) -> Result<Vec<TransitionLabel>>;
}

/// Feedback answered from a fixed label file.
#[derive(Debug, Clone)]
pub struct OracleFeedback {
    labels: LabelMap,
}

impl OracleFeedback {
    pub fn new(labels: LabelMap) -> Self {
        OracleFeedback { labels }
    }

    /// Uses records by the `oracle` annotator; if there are none, all records.
    pub fn from_records(records: &[AnnotationRecord]) -> Self {
        let oracle = labels_by(records, ORACLE_ANNOTATOR);
        let labels = if oracle.is_empty() {
            records.iter().map(|r| (r.pair.clone(), r.label)).collect()
        } else {
            oracle
        };
        OracleFeedback { labels }
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }
}

impl FeedbackSource for OracleFeedback {
    fn kind(&self) -> FeedbackKind {
        FeedbackKind::OracleFile
    }

    fn collect(&mut self, _round: usize, pairs: &[PanelPair]) -> Result<Vec<TransitionLabel>> {
        pairs
            .iter()
            .map(|p| {
                self.labels
                    .get(p)
                    .copied()
                    .ok_or_else(|| Error::Feedback(format!("oracle has no label for pair {p}")))
            })
            .collect()
    }
}

/// Stable seed for one (round, purpose) stream.
pub(crate) fn derive_seed(seed: u64, round: usize, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined inputs
    let mut z = seed
        ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SPLIT: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_TRAIN: u64 = 3;

pub type LabeledPairs = Vec<(PanelPair, TransitionLabel)>;

/// Fresh random train/holdout split of the labeled pool, deterministic in
/// `(seed, pool.round_index())`. The holdout gets `floor(n·fraction)` pairs,
/// at least one.
pub fn split_pool(pool: &LabelPool, seed: u64) -> Result<(LabeledPairs, LabeledPairs)> {
    let n = pool.labeled.len();
    if n < MIN_POOL {
        return Err(Error::Validation(format!(
            "labeled pool has {n} pairs; at least {MIN_POOL} are needed for a train/holdout split"
        )));
    }
    let holdout_n = ((n as f64 * pool.holdout_fraction).floor() as usize).max(1);
    let mut all: LabeledPairs = pool.labeled.iter().map(|(p, l)| (p.clone(), *l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, pool.round_index, STREAM_SPLIT));
    all.shuffle(&mut rng);
    let train = all.split_off(holdout_n);
    Ok((train, all))
}

fn holdout_accuracy(learner: &dyn Learner, holdout: &[(PanelPair, TransitionLabel)]) -> Result<f64> {
    let pairs: Vec<PanelPair> = holdout.iter().map(|(p, _)| p.clone()).collect();
    let preds = learner.predict(&pairs)?;
    let correct = preds
        .iter()
        .zip(holdout)
        .filter(|(pr, (_, l))| pr.label == *l)
        .count();
    Ok(correct as f64 / holdout.len() as f64)
}

fn kappa_or_none(a: &[TransitionLabel], b: &[TransitionLabel]) -> Option<f64> {
    kappa_of_labels(a, b).ok().map(|k| k.kappa)
}

/// One feedback round. The pool is only modified once feedback has been
/// collected successfully.
pub fn run_round(
    pool: &mut LabelPool,
    learner: &mut dyn Learner,
    feedback: &mut dyn FeedbackSource,
    config: &LoopConfig,
) -> Result<RoundReport> {
    let round = pool.round_index + 1;
    let (train, holdout) = split_pool(pool, config.seed)?;
    if config.cold_start {
        learner.reset();
    }
    let history = learner.fit(&train, round)?;
    let holdout_accuracy = holdout_accuracy(learner, &holdout)?;

    if pool.unlabeled.len() < config.feedback_batch_size {
        log::warn!(
            "round {round}: only {} unlabeled pairs left, fewer than the batch size {}",
            pool.unlabeled.len(),
            config.feedback_batch_size
        );
    }
    let candidates: Vec<&PanelPair> = pool.unlabeled.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, pool.round_index, STREAM_SAMPLE));
    let batch: Vec<PanelPair> = candidates
        .choose_multiple(&mut rng, config.feedback_batch_size)
        .map(|p| (*p).clone())
        .collect();

    let predictions = learner.predict(&batch)?;
    let answers = feedback.collect(round, &batch)?;
    if answers.len() != batch.len() {
        return Err(Error::Feedback(format!(
            "feedback returned {} labels for {} pairs",
            answers.len(),
            batch.len()
        )));
    }
    let predicted: Vec<TransitionLabel> = predictions.iter().map(|p| p.label).collect();

    let mut correct = 0;
    for ((pair, pred), truth) in batch.iter().zip(&predicted).zip(&answers) {
        if pred == truth {
            correct += 1;
        } else if !config.adopt_corrections {
            continue;
        }
        pool.unlabeled.remove(pair);
        pool.labeled.insert(pair.clone(), *truth);
    }
    pool.round_index = round;

    let last = history.last().copied();
    Ok(RoundReport {
        round_index: round,
        train_size: train.len(),
        holdout_size: holdout.len(),
        holdout_accuracy,
        train_accuracy: last.map_or(f64::NAN, |e| e.accuracy),
        train_loss: last.map_or(f64::NAN, |e| e.mean_loss),
        feedback_batch_size: batch.len(),
        feedback_correct_count: correct,
        kappa_vs_feedback: kappa_or_none(&predicted, &answers),
        pool_size_after: pool.labeled.len(),
        unlabeled_after: pool.unlabeled.len(),
    })
}

/// Runs rounds until `max_rounds` or the unlabeled pool is exhausted. Each
/// report is handed to `sink` as soon as its round completes.
pub fn run_experiment(
    pool: &mut LabelPool,
    learner: &mut dyn Learner,
    feedback: &mut dyn FeedbackSource,
    config: &LoopConfig,
    max_rounds: usize,
    mut sink: impl FnMut(&RoundReport) -> Result<()>,
) -> Result<Vec<RoundReport>> {
    let mut reports = Vec::new();
    for _ in 0..max_rounds {
        if pool.unlabeled.is_empty() {
            log::info!("unlabeled pool exhausted after {} rounds", pool.round_index);
            break;
        }
        let round = pool.round_index + 1;
        let report = run_round(pool, learner, feedback, config).map_err(|e| Error::Round {
            round,
            source: Box::new(e),
        })?;
        sink(&report)?;
        reports.push(report);
    }
    Ok(reports)
}

/// The no-feedback comparison: one fixed split, `rounds` blocks of training
/// on the same pool, and after each block a fresh random batch of unlabeled
/// pairs is predicted and compared against feedback. The pool never grows.
pub fn run_baseline(
    pool: &LabelPool,
    learner: &mut dyn Learner,
    feedback: &mut dyn FeedbackSource,
    config: &LoopConfig,
    rounds: usize,
) -> Result<Vec<RoundReport>> {
    let (train, holdout) = split_pool(pool, config.seed)?;
    let candidates: Vec<&PanelPair> = pool.unlabeled.iter().collect();
    let mut reports = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let history = learner.fit(&train, round)?;
        let holdout_accuracy = holdout_accuracy(learner, &holdout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, round - 1, STREAM_SAMPLE));
        let batch: Vec<PanelPair> = candidates
            .choose_multiple(&mut rng, config.feedback_batch_size)
            .map(|p| (*p).clone())
            .collect();
        let predicted: Vec<TransitionLabel> = learner.predict(&batch)?.iter().map(|p| p.label).collect();
        let answers = feedback.collect(round, &batch)?;
        let correct = predicted.iter().zip(&answers).filter(|(a, b)| a == b).count();
        let last = history.last().copied();
        reports.push(RoundReport {
            round_index: round,
            train_size: train.len(),
            holdout_size: holdout.len(),
            holdout_accuracy,
            train_accuracy: last.map_or(f64::NAN, |e| e.accuracy),
            train_loss: last.map_or(f64::NAN, |e| e.mean_loss),
            feedback_batch_size: batch.len(),
            feedback_correct_count: correct,
            kappa_vs_feedback: kappa_or_none(&predicted, &answers),
            pool_size_after: pool.labeled.len(),
            unlabeled_after: pool.unlabeled.len(),
        });
    }
    Ok(reports)
}

/// Report table with one column per round.
pub fn render_rounds_table(reports: &[RoundReport]) -> String {
    let mut out = format!("{:<22}", "labeling framework");
    for r in reports {
        out.push_str(&format!(" | {:>9}", format!("{} round", r.round_index)));
    }
    out.push('\n');
    let mut row = |name: &str, f: &dyn Fn(&RoundReport) -> String| {
        out.push_str(&format!("{name:<22}"));
        for r in reports {
            out.push_str(&format!(" | {:>9}", f(r)));
        }
        out.push('\n');
    };
    row("Learning Accu", &|r| format!("{:.2}%", 100.0 * r.holdout_accuracy));
    row("Train Accu", &|r| format!("{:.2}%", 100.0 * r.train_accuracy));
    row("Cohen's kappa", &|r| {
        r.kappa_vs_feedback.map_or("n/a".into(), |k| format!("{k:.4}"))
    });
    row("Feedback correct", &|r| format!("{}/{}", r.feedback_correct_count, r.feedback_batch_size));
    row("Labeled pool", &|r| r.pool_size_after.to_string());
    out
}

/// The two-layer network bound to a feature store.
pub struct MlpLearner<'a> {
    store: &'a FeatureStore,
    config: TrainConfig,
    init_seed: u64,
    params: MlpParams,
    state: RmsPropState,
    standardizer: Option<Standardizer>,
}

impl<'a> MlpLearner<'a> {
    pub fn new(store: &'a FeatureStore, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = init_params_with_hidden(config.seed, store.pair_dim(), config.hidden_units);
        let state = RmsPropState::new(&params);
        Ok(MlpLearner {
            store,
            init_seed: config.seed,
            config,
            params,
            state,
            standardizer: None,
        })
    }

    /// Resumes from a saved model.
    pub fn from_checkpoint(store: &'a FeatureStore, ckpt: Checkpoint) -> Result<Self> {
        if ckpt.params.input_dim != store.pair_dim() {
            return Err(Error::Shape {
                expected: ckpt.params.input_dim,
                actual: store.pair_dim(),
            });
        }
        let state = RmsPropState::new(&ckpt.params);
        Ok(MlpLearner {
            store,
            init_seed: ckpt.config.seed,
            config: ckpt.config,
            params: ckpt.params,
            state,
            standardizer: ckpt.standardizer,
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            config: self.config.clone(),
            standardizer: self.standardizer.clone(),
        }
    }

    fn raw_features(&self, pairs: &[PanelPair]) -> Result<Vec<Vec<f64>>> {
        pairs
            .iter()
            .map(|p| pair_feature(self.store, p).map(|f| f.x))
            .collect()
    }

    fn features(&self, pairs: &[PanelPair]) -> Result<Vec<Vec<f64>>> {
        let mut xs = self.raw_features(pairs)?;
        if let Some(st) = &self.standardizer {
            for x in &mut xs {
                st.apply(x);
            }
        }
        Ok(xs)
    }
}

impl Learner for MlpLearner<'_> {
    fn reset(&mut self) {
        self.params = init_params_with_hidden(self.init_seed, self.store.pair_dim(), self.config.hidden_units);
        self.state = RmsPropState::new(&self.params);
        self.standardizer = None;
    }

    fn fit(&mut self, train: &[(PanelPair, TransitionLabel)], round: usize) -> Result<TrainHistory> {
        let pairs: Vec<PanelPair> = train.iter().map(|(p, _)| p.clone()).collect();
        let mut xs = self.raw_features(&pairs)?;
        if self.config.standardize {
            let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let st = Standardizer::fit(&rows)?;
            for x in &mut xs {
                st.apply(x);
            }
            self.standardizer = Some(st);
        }
        let data: Vec<Example> = xs.into_iter().zip(train.iter().map(|(_, l)| *l)).collect();
        let round_config = TrainConfig {
            seed: derive_seed(self.config.seed, round, STREAM_TRAIN),
            ..self.config.clone()
        };
        classifier::train_with_state(&mut self.params, &mut self.state, &data, &round_config)
    }

    fn predict(&self, pairs: &[PanelPair]) -> Result<Vec<Prediction>> {
        let xs = self.features(pairs)?;
        pairs
            .iter()
            .zip(xs)
            .map(|(p, x)| classifier::predict(&self.params, p.clone(), &x, self.config.output_activation))
            .collect()
    }
}

/// Labeled pairs split into (labeled, unlabeled) for a fresh pool.
pub fn pool_from(ground_truth: &LabelMap, candidates: &[PanelPair], holdout_fraction: f64) -> Result<LabelPool> {
    let unlabeled: Vec<PanelPair> = candidates
        .iter()
        .filter(|p| !ground_truth.contains_key(*p))
        .cloned()
        .collect();
    LabelPool::new(ground_truth.clone(), unlabeled, holdout_fraction)
}

/// Label counts of the labeled pool, for progress displays.
pub fn pool_label_counts(pool: &LabelPool) -> BTreeMap<TransitionLabel, usize> {
    let mut m = BTreeMap::new();
    for l in pool.labeled.values() {
        *m.entry(*l).or_insert(0) += 1;
    }
    m
}
