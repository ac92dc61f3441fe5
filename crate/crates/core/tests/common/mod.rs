//! Brute-force reference implementations shared by the integration and
//! acceptance tests. None of these call into the library's algorithms.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use panelscope_core::classifier::{batch_loss, gradients, MlpParams, OutputActivation, Prediction, TrainHistory};
use panelscope_core::feedback::{pool_from, run_baseline, run_experiment, run_round, LoopConfig, MlpLearner, OracleFeedback};
use panelscope_core::synthetic::{blob_dataset, BlobConfig};
use panelscope_core::{
    FeedbackKind, FeedbackSource, LabelMap, Learner, PanelPair, Result, RoundReport, TrainConfig, TransitionLabel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cohen's kappa by expanding the table into individual rated items.
/// `None` when chance agreement is 1.
pub fn brute_kappa(counts: &[Vec<u64>]) -> Option<f64> {
    let q = counts.len();
    let mut items = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            for _ in 0..c {
                items.push((i, j));
            }
        }
    }
    let n = items.len() as f64;
    let agree = items.iter().filter(|(a, b)| a == b).count() as f64 / n;
    let mut chance = 0.0;
    for cat in 0..q {
        let first = items.iter().filter(|(a, _)| *a == cat).count() as f64 / n;
        let second = items.iter().filter(|(_, b)| *b == cat).count() as f64 / n;
        chance += first * second;
    }
    if (1.0 - chance).abs() < 1e-15 {
        return None;
    }
    Some((agree - chance) / (1.0 - chance))
}

pub fn random_confusion(rng: &mut impl Rng) -> Vec<Vec<u64>> {
    let q = rng.random_range(2..=6);
    let budget = rng.random_range(1..=1000u64);
    let mut m = vec![vec![0u64; q]; q];
    // Diagonal-heavy most of the time so kappa spans its whole range.
    let bias = rng.random_range(0.0..1.0);
    for _ in 0..budget {
        let i = rng.random_range(0..q);
        let j = if rng.random_bool(bias) { i } else { rng.random_range(0..q) };
        m[i][j] += 1;
    }
    m
}

/// Minimum inertia over every labeling of `points` with at most `k` labels.
pub fn exhaustive_min_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut cost = 0.0;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..dim {
                let mean = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                cost += members.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>();
            }
        }
        best = best.min(cost);
        // next labeling in base k
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

/// Counts every length-`n` pattern by testing all 6^n candidates at every
/// start position.
pub fn brute_ngrams(seqs: &[Vec<TransitionLabel>], n: usize) -> BTreeMap<Vec<TransitionLabel>, usize> {
    let mut out = BTreeMap::new();
    let candidates = 6usize.pow(n as u32);
    for code in 0..candidates {
        let mut pattern = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            pattern.push(TransitionLabel::ALL[c % 6]);
            c /= 6;
        }
        let mut count = 0;
        for s in seqs {
            if s.len() < n {
                continue;
            }
            for start in 0..=s.len() - n {
                if (0..n).all(|o| s[start + o] == pattern[o]) {
                    count += 1;
                }
            }
        }
        if count > 0 {
            out.insert(pattern, count);
        }
    }
    out
}

/// Sequences made of runs of exactly two identical labels, consecutive runs
/// always differing.
pub fn run_length_two_corpus(rng: &mut impl Rng, sequences: usize, runs_per_seq: usize) -> Vec<Vec<TransitionLabel>> {
    (0..sequences)
        .map(|_| {
            let mut s = Vec::new();
            let mut prev: Option<usize> = None;
            for _ in 0..runs_per_seq {
                let mut l = rng.random_range(0..6);
                while Some(l) == prev {
                    l = rng.random_range(0..6);
                }
                prev = Some(l);
                s.extend([TransitionLabel::ALL[l]; 2]);
            }
            s
        })
        .collect()
}

/// Largest relative error between analytic gradients and central
/// differences with step `h`. The denominator is floored at 1e-6 so that
/// parameters whose true gradient is ~0 are compared in absolute terms.
pub fn gradient_check(
    params: &MlpParams,
    batch: &[(&[f64], TransitionLabel)],
    activation: OutputActivation,
    h: f64,
) -> f64 {
    let analytic = gradients(params, batch, activation).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for t in 0..4 {
        for i in 0..params.tensors()[t].len() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let up = batch_loss(&probe, batch, activation).unwrap();
            probe.tensors_mut()[t][i] = orig - h;
            let down = batch_loss(&probe, batch, activation).unwrap();
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.tensors()[t][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// A small random network with random biases and a batch of inputs, drawn
/// so that no hidden pre-activation sits within `margin` of the relu kink.
pub fn random_instance(
    rng: &mut impl Rng,
    max_input: usize,
    margin: f64,
) -> (MlpParams, Vec<Vec<f64>>, Vec<TransitionLabel>) {
    loop {
        let input = rng.random_range(1..=max_input);
        let hidden = rng.random_range(2..=7);
        let mut p = MlpParams::zeros(input, hidden);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let n = rng.random_range(1..=4);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..input).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let near_kink = xs.iter().any(|x| {
            (0..hidden).any(|j| {
                let pre: f64 = p.b1[j] + (0..input).map(|i| x[i] * p.w1[i * hidden + j]).sum::<f64>();
                pre.abs() < margin
            })
        });
        if near_kink {
            continue;
        }
        let labels = (0..n).map(|_| TransitionLabel::ALL[rng.random_range(0..6)]).collect();
        return (p, xs, labels);
    }
}

/// Answers correctly with probability `rate`, otherwise with a wrong label.
pub struct NoisyStub {
    pub truth: LabelMap,
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Learner for NoisyStub {
    fn fit(&mut self, _train: &[(PanelPair, TransitionLabel)], _round: usize) -> Result<TrainHistory> {
        Ok(TrainHistory::default())
    }

    fn predict(&self, pairs: &[PanelPair]) -> Result<Vec<Prediction>> {
        // Draw per call from a snapshot so predict stays &self.
        let mut rng = self.rng.clone();
        let out = pairs
            .iter()
            .map(|p| {
                let t = self.truth[p];
                let label = if rng.random_bool(self.rate) {
                    t
                } else {
                    TransitionLabel::from_index((t.index() + rng.random_range(1..6)) % 6).unwrap()
                };
                Prediction { pair: p.clone(), scores: [1.0 / 6.0; 6], label }
            })
            .collect();
        Ok(out)
    }
}

/// Oracle that records what it was asked.
pub struct Recording {
    pub inner: OracleFeedback,
    pub asked: Vec<Vec<PanelPair>>,
}

impl FeedbackSource for Recording {
    fn kind(&self) -> FeedbackKind {
        FeedbackKind::OracleFile
    }

    fn collect(&mut self, round: usize, pairs: &[PanelPair]) -> Result<Vec<TransitionLabel>> {
        self.asked.push(pairs.to_vec());
        self.inner.collect(round, pairs)
    }
}

pub fn truth_map(n: usize, rng: &mut impl Rng) -> LabelMap {
    (0..n)
        .map(|i| (PanelPair::new("b", (i / 4) as u32, (i % 4) as u32), TransitionLabel::ALL[rng.random_range(0..6)]))
        .collect()
}

/// Runs `sims` randomized loop simulations and asserts, after every round,
/// that the pool is conserved, only grows, never re-queries a labeled pair and
/// grows by exactly the accepted feedback.
pub fn check_pool_invariants(seed: u64, sims: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sim in 0..sims {
        let n = rng.random_range(40..400);
        let truth = truth_map(n, &mut rng);
        let ground_n = rng.random_range(10..n / 2);
        let ground: LabelMap = truth.iter().take(ground_n).map(|(p, l)| (p.clone(), *l)).collect();
        let candidates: Vec<PanelPair> = truth.keys().cloned().collect();
        let mut pool = pool_from(&ground, &candidates, 0.1).unwrap();
        let total = pool.total();
        let cfg = LoopConfig {
            feedback_batch_size: rng.random_range(1..60),
            adopt_corrections: rng.random_bool(0.3),
            seed: sim,
            ..LoopConfig::default()
        };
        let mut learner = NoisyStub {
            truth: truth.clone(),
            rate: rng.random_range(0.0..=1.0),
            rng: ChaCha8Rng::seed_from_u64(sim),
        };
        let mut feedback = Recording { inner: OracleFeedback::new(truth.clone()), asked: vec![] };
        let rounds = rng.random_range(1..15);
        let mut labeled_before: BTreeSet<PanelPair> = pool.labeled().keys().cloned().collect();
        for _ in 0..rounds {
            if pool.unlabeled().is_empty() {
                break;
            }
            let r = run_round(&mut pool, &mut learner, &mut feedback, &cfg).unwrap();
            let asked = feedback.asked.last().unwrap();
            assert!(asked.iter().all(|p| !labeled_before.contains(p)), "re-queried a labeled pair");
            assert_eq!(pool.total(), total);
            assert!(pool.labeled().len() >= labeled_before.len());
            assert!(labeled_before.iter().all(|p| pool.labeled().contains_key(p)));
            let moved = pool.labeled().len() - labeled_before.len();
            let expected = if cfg.adopt_corrections { r.feedback_batch_size } else { r.feedback_correct_count };
            assert_eq!(moved, expected);
            labeled_before = pool.labeled().keys().cloned().collect();
        }
    }
}

/// The oracle loop and the fixed-pool baseline on the default blob dataset,
/// 11 rounds each.
pub fn blob_run(seed: u64) -> (Vec<RoundReport>, Vec<RoundReport>) {
    let data = blob_dataset(&BlobConfig::default()).unwrap();
    let cfg = LoopConfig { seed, ..LoopConfig::default() };
    let train = TrainConfig { seed, ..TrainConfig::default() };
    let mut fb = OracleFeedback::new(data.truth.clone());

    let mut pool = pool_from(&data.ground, &data.unlabeled, 0.1).unwrap();
    let mut learner = MlpLearner::new(&data.features, train.clone()).unwrap();
    let loop_reports = run_experiment(&mut pool, &mut learner, &mut fb, &cfg, 11, |_| Ok(())).unwrap();

    let fixed = pool_from(&data.ground, &data.unlabeled, 0.1).unwrap();
    let mut baseline = MlpLearner::new(&data.features, train).unwrap();
    let base_reports = run_baseline(&fixed, &mut baseline, &mut fb, &cfg, 11).unwrap();
    (loop_reports, base_reports)
}
