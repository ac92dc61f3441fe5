//! Inter-annotator reliability: confusion matrices and Cohen's kappa.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationRecord, PanelPair};
use crate::error::{Error, Result};
use crate::label::{TransitionLabel, NUM_LABELS};

/// Square contingency table; rows are rater A's category, columns rater B's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// An all-zero matrix over the six transition labels.
    pub fn labels() -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; NUM_LABELS]; NUM_LABELS],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::EmptyInput("confusion matrix has no categories".into()));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != n) {
            return Err(Error::Shape {
                expected: n,
                actual: row.len(),
            });
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn add(&mut self, a: TransitionLabel, b: TransitionLabel) {
        self.counts[a.index()][b.index()] += 1;
    }

    pub fn categories(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row][col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.categories())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.categories();
        ConfusionMatrix {
            counts: (0..n).map(|i| (0..n).map(|j| self.counts[j][i]).collect()).collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("A\\B ");
        let label_names = self.categories() == NUM_LABELS;
        let name = |i: usize| {
            if label_names {
                TransitionLabel::ALL[i].code().to_string()
            } else {
                format!("c{i}")
            }
        };
        for j in 0..self.categories() {
            out.push_str(&format!("{:>6}", name(j)));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:<4}", name(i)));
            for c in row {
                out.push_str(&format!("{c:>6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// McHugh's interpretation bands for kappa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaBand {
    NoAgreement,
    NoneToSlight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl KappaBand {
    pub fn as_str(self) -> &'static str {
        match self {
            KappaBand::NoAgreement => "no agreement",
            KappaBand::NoneToSlight => "none to slight",
            KappaBand::Fair => "fair",
            KappaBand::Moderate => "moderate",
            KappaBand::Substantial => "substantial",
            KappaBand::AlmostPerfect => "almost perfect",
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaScore {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub band: KappaBand,
}

/// Bands are closed on the upper end: (0.60, 0.80] is substantial, and
/// anything at or below 0 is no agreement.
pub fn interpret_kappa(kappa: f64) -> Result<KappaBand> {
    if !(-1.0..=1.0).contains(&kappa) {
        return Err(Error::Validation(format!("kappa {kappa} outside [-1, 1]")));
    }
    Ok(match kappa {
        k if k <= 0.0 => KappaBand::NoAgreement,
        k if k <= 0.20 => KappaBand::NoneToSlight,
        k if k <= 0.40 => KappaBand::Fair,
        k if k <= 0.60 => KappaBand::Moderate,
        k if k <= 0.80 => KappaBand::Substantial,
        _ => KappaBand::AlmostPerfect,
    })
}

/// Cohen's kappa from a contingency table.
pub fn cohen_kappa(m: &ConfusionMatrix) -> Result<KappaScore> {
    let total = m.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix total is 0".into()));
    }
    let diag: u64 = (0..m.categories()).map(|i| m.get(i, i)).sum();
    // Integer accumulation keeps the p_e = 1 test exact.
    let chance: u128 = m
        .row_sums()
        .iter()
        .zip(m.col_sums())
        .map(|(&r, c)| r as u128 * c as u128)
        .sum();
    let total_sq = total as u128 * total as u128;
    if chance == total_sq {
        return Err(Error::DegenerateKappa);
    }
    let p_o = diag as f64 / total as f64;
    let p_e = chance as f64 / total_sq as f64;
    let kappa = (p_o - p_e) / (1.0 - p_e);
    Ok(KappaScore {
        kappa,
        observed_agreement: p_o,
        expected_agreement: p_e,
        band: interpret_kappa(kappa)?,
    })
}

/// Kappa between two aligned label sequences.
pub fn kappa_of_labels(a: &[TransitionLabel], b: &[TransitionLabel]) -> Result<KappaScore> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut m = ConfusionMatrix::labels();
    for (&x, &y) in a.iter().zip(b) {
        m.add(x, y);
    }
    cohen_kappa(&m)
}

fn by_pair(records: &[AnnotationRecord]) -> BTreeMap<&PanelPair, TransitionLabel> {
    records.iter().map(|r| (&r.pair, r.label)).collect()
}

/// Confusion over the pairs both raters labeled.
pub fn build_confusion(a: &[AnnotationRecord], b: &[AnnotationRecord]) -> Result<ConfusionMatrix> {
    let a = by_pair(a);
    let b = by_pair(b);
    let mut m = ConfusionMatrix::labels();
    for (pair, la) in &a {
        if let Some(lb) = b.get(pair) {
            m.add(*la, *lb);
        }
    }
    if m.total() == 0 {
        return Err(Error::EmptyInput(
            "the two raters share no annotated pairs; check the evaluation-set assignment".into(),
        ));
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseAgreement {
    pub rater_a: String,
    pub rater_b: String,
    pub overlap: u64,
    pub confusion: ConfusionMatrix,
    pub score: Option<KappaScore>,
}

/// Kappa for every annotator pair that shares at least one pair.
pub fn pairwise_agreement(records: &[AnnotationRecord]) -> Vec<PairwiseAgreement> {
    let mut per_rater: BTreeMap<&str, Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        per_rater.entry(&r.annotator_id).or_default().push(r.clone());
    }
    let raters: BTreeSet<&str> = per_rater.keys().copied().collect();
    let raters: Vec<&str> = raters.into_iter().collect();
    let mut out = Vec::new();
    for (i, a) in raters.iter().enumerate() {
        for b in &raters[i + 1..] {
            let Ok(m) = build_confusion(&per_rater[a], &per_rater[b]) else {
                continue;
            };
            out.push(PairwiseAgreement {
                rater_a: a.to_string(),
                rater_b: b.to_string(),
                overlap: m.total(),
                score: cohen_kappa(&m).ok(),
                confusion: m,
            });
        }
    }
    out
}

pub fn render_pairwise_table(rows: &[PairwiseAgreement]) -> String {
    let mut out = format!("{:<28}", "--");
    for r in rows {
        out.push_str(&format!(" | {:>16}", format!("{}&{}", r.rater_a, r.rater_b)));
    }
    out.push('\n');
    out.push_str(&format!("{:<28}", "overlap (pairs)"));
    for r in rows {
        out.push_str(&format!(" | {:>16}", r.overlap));
    }
    out.push('\n');
    out.push_str(&format!("{:<28}", "reliability (kappa score)"));
    for r in rows {
        let v = r.score.map_or("undefined".to_string(), |s| format!("{:.3}", s.kappa));
        out.push_str(&format!(" | {v:>16}"));
    }
    out.push('\n');
    out.push_str(&format!("{:<28}", "band"));
    for r in rows {
        let v = r.score.map_or("-".to_string(), |s| s.band.to_string());
        out.push_str(&format!(" | {v:>16}"));
    }
    out.push('\n');
    out
}
