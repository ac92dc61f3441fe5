//! Synthetic corpora for tests, demos and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{AnnotationRecord, BookMeta, Corpus, Genre, LabelMap, Panel, PanelKey, PanelPair};
use crate::error::Result;
use crate::features::FeatureStore;
use crate::label::{TransitionLabel, NUM_LABELS};

fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Six Gaussian classes, one pair per two-panel page.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub books: usize,
    pub panel_dim: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    /// Coordinates per panel that carry class signal; the rest is clutter.
    pub signal_dims: usize,
    /// Distance of every class mean from the origin. Needs at least one
    /// signal coordinate.
    pub separation: f64,
    /// Standard deviation on the signal coordinates.
    pub noise: f64,
    /// Standard deviation on the clutter coordinates.
    pub clutter: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            books: 14,
            panel_dim: 32,
            labeled: 300,
            unlabeled: 1100,
            signal_dims: 4,
            separation: 3.0,
            noise: 0.5,
            clutter: 3.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlobData {
    pub corpus: Corpus,
    pub features: FeatureStore,
    /// Labels of every pair; serves as the feedback oracle.
    pub truth: LabelMap,
    /// The initially labeled subset of `truth`.
    pub ground: LabelMap,
    pub unlabeled: Vec<PanelPair>,
}

pub fn blob_dataset(cfg: &BlobConfig) -> Result<BlobData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = cfg.labeled + cfg.unlabeled;
    let dim = 2 * cfg.panel_dim;
    let signal = |i: usize| i % cfg.panel_dim < cfg.signal_dims;
    // Class means on distinct signal axes (sign flipped once the axes run
    // out), so every pair of means is equally far apart.
    let axes: Vec<usize> = (0..dim).filter(|&i| signal(i)).collect();
    let centers: Vec<Vec<f64>> = (0..NUM_LABELS)
        .map(|c| {
            let mut v = vec![0.0; dim];
            let sign = if (c / axes.len()) % 2 == 0 { 1.0 } else { -1.0 };
            v[axes[c % axes.len()]] = sign * cfg.separation;
            v
        })
        .collect();

    let books = cfg.books.max(1);
    let per_book = total.div_ceil(books);
    let mut book_meta = Vec::new();
    let mut panels = Vec::new();
    let mut pairs = Vec::new();
    for b in 0..books {
        let pages = per_book.min(total - pairs.len());
        if pages == 0 {
            break;
        }
        let book_id = format!("blob{b:02}");
        book_meta.push(BookMeta {
            book_id: book_id.clone(),
            title: format!("Blob {b}"),
            genre: Genre::ALL[b % Genre::ALL.len()],
            page_count: pages as u32,
        });
        for p in 0..pages as u32 {
            for i in 0..2 {
                panels.push(Panel {
                    book_id: book_id.clone(),
                    page_index: p,
                    panel_index: i,
                    image_ref: None,
                });
            }
            pairs.push(PanelPair::new(book_id.clone(), p, 0));
        }
    }

    let mut labels: Vec<TransitionLabel> = (0..total).map(|i| TransitionLabel::ALL[i % NUM_LABELS]).collect();
    labels.shuffle(&mut rng);
    let mut features = FeatureStore::new(cfg.panel_dim)?;
    let mut truth = LabelMap::new();
    for (pair, label) in pairs.iter().zip(&labels) {
        let x: Vec<f64> = centers[label.index()]
            .iter()
            .zip(normal_vec(&mut rng, dim))
            .enumerate()
            .map(|(i, (c, e))| c + if signal(i) { cfg.noise } else { cfg.clutter } * e)
            .collect();
        features.insert(pair.first(), x[..cfg.panel_dim].to_vec())?;
        features.insert(pair.second(), x[cfg.panel_dim..].to_vec())?;
        truth.insert(pair.clone(), *label);
    }

    let mut order = pairs.clone();
    order.shuffle(&mut rng);
    let ground: LabelMap = order[..cfg.labeled].iter().map(|p| (p.clone(), truth[p])).collect();
    let unlabeled = order[cfg.labeled..].to_vec();
    Ok(BlobData {
        corpus: Corpus::new(book_meta, panels, vec![])?,
        features,
        truth,
        ground,
        unlabeled,
    })
}

/// Label counts of the bundled sample corpus, in label index order.
pub const SAMPLE_LABEL_COUNTS: [usize; NUM_LABELS] = [741, 186, 456, 226, 282, 337];
pub const SAMPLE_EVAL_PAIRS: usize = 129;
pub const SAMPLE_FEATURE_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub books: usize,
    pub pages_per_book: u32,
    pub label_counts: [usize; NUM_LABELS],
    pub eval_pairs: usize,
    /// Chance that a secondary annotator disagrees on an evaluation pair.
    pub annotator_noise: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            books: 40,
            pages_per_book: 12,
            label_counts: SAMPLE_LABEL_COUNTS,
            eval_pairs: SAMPLE_EVAL_PAIRS,
            annotator_noise: 0.12,
            feature_dim: SAMPLE_FEATURE_DIM,
            seed: 109,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleCorpus {
    /// One `a1` record per pair.
    pub corpus: Corpus,
    pub features: FeatureStore,
    /// `a1`, `a2` and `a3` records on the evaluation subset.
    pub evaluation: Vec<AnnotationRecord>,
}

/// Builds a corpus whose every pair is labeled by `a1` with exactly
/// `label_counts`, plus a three-annotator evaluation subset. On that subset at
/// most one of `a2`, `a3` deviates from `a1`, so majority vote always recovers
/// the `a1` label.
pub fn sample_corpus(cfg: &SampleConfig) -> Result<SampleCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total: usize = cfg.label_counts.iter().sum();
    let pages = cfg.books * cfg.pages_per_book as usize;

    // Panel counts per page, then nudged until the pair total matches.
    let mut panel_counts: Vec<u32> = (0..pages).map(|_| rng.random_range(3..=8)).collect();
    let mut pair_total: usize = panel_counts.iter().map(|&c| c as usize - 1).sum();
    while pair_total != total {
        let i = rng.random_range(0..pages);
        if pair_total < total && panel_counts[i] < 12 {
            panel_counts[i] += 1;
            pair_total += 1;
        } else if pair_total > total && panel_counts[i] > 2 {
            panel_counts[i] -= 1;
            pair_total -= 1;
        }
    }

    // Repetition runs of one to three identical labels, shuffled as units.
    let mut runs: Vec<Vec<TransitionLabel>> = Vec::new();
    for (label, &count) in TransitionLabel::ALL.iter().zip(&cfg.label_counts) {
        let mut left = count;
        while left > 0 {
            let len = rng.random_range(1..=3).min(left);
            runs.push(vec![*label; len]);
            left -= len;
        }
    }
    runs.shuffle(&mut rng);
    let sequence: Vec<TransitionLabel> = runs.into_iter().flatten().collect();

    let mut books = Vec::new();
    let mut panels = Vec::new();
    let mut records = Vec::new();
    let mut features = FeatureStore::new(cfg.feature_dim)?;
    let displacement: Vec<Vec<f64>> = (0..NUM_LABELS).map(|_| normal_vec(&mut rng, cfg.feature_dim)).collect();
    let mut next = sequence.iter();
    let mut page_iter = panel_counts.iter();
    for b in 0..cfg.books {
        let book_id = format!("book{b:02}");
        books.push(BookMeta {
            book_id: book_id.clone(),
            title: format!("Sample Book {b}"),
            genre: Genre::ALL[b % Genre::ALL.len()],
            page_count: cfg.pages_per_book,
        });
        for page in 0..cfg.pages_per_book {
            let n = *page_iter.next().unwrap();
            let mut current = normal_vec(&mut rng, cfg.feature_dim);
            for i in 0..n {
                let key = PanelKey {
                    book_id: book_id.clone(),
                    page_index: page,
                    panel_index: i,
                };
                panels.push(Panel {
                    book_id: book_id.clone(),
                    page_index: page,
                    panel_index: i,
                    image_ref: Some(format!("images/{book_id}/{page:03}_{i}.png")),
                });
                features.insert(key, current.clone())?;
                if i + 1 < n {
                    let label = *next.next().unwrap();
                    records.push(AnnotationRecord {
                        pair: PanelPair::new(book_id.clone(), page, i),
                        annotator_id: "a1".into(),
                        label,
                    });
                    let noise = normal_vec(&mut rng, cfg.feature_dim);
                    for ((c, d), e) in current.iter_mut().zip(&displacement[label.index()]).zip(noise) {
                        *c += d + 0.5 * e;
                    }
                }
            }
        }
    }

    let mut eval: Vec<usize> = (0..records.len()).collect();
    eval.shuffle(&mut rng);
    eval.truncate(cfg.eval_pairs);
    eval.sort_unstable();
    let mut evaluation = Vec::new();
    for i in eval {
        let truth = records[i].label;
        let wrong = |rng: &mut ChaCha8Rng| {
            let other = rng.random_range(1..NUM_LABELS);
            TransitionLabel::from_index((truth.index() + other) % NUM_LABELS).unwrap()
        };
        let (a2, a3) = match rng.random::<f64>() {
            u if u < cfg.annotator_noise => (wrong(&mut rng), truth),
            u if u < 2.0 * cfg.annotator_noise => (truth, wrong(&mut rng)),
            _ => (truth, truth),
        };
        let pair = &records[i].pair;
        for (who, label) in [("a1", truth), ("a2", a2), ("a3", a3)] {
            evaluation.push(AnnotationRecord {
                pair: pair.clone(),
                annotator_id: who.into(),
                label,
            });
        }
    }

    Ok(SampleCorpus {
        corpus: Corpus::new(books, panels, records)?,
        features,
        evaluation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::consensus_labels;

    #[test]
    fn blob_sizes() {
        let cfg = BlobConfig {
            labeled: 30,
            unlabeled: 70,
            books: 3,
            ..BlobConfig::default()
        };
        let d = blob_dataset(&cfg).unwrap();
        assert_eq!(d.truth.len(), 100);
        assert_eq!(d.ground.len(), 30);
        assert_eq!(d.unlabeled.len(), 70);
        assert_eq!(d.features.pair_dim(), 64);
        assert!(d.unlabeled.iter().all(|p| !d.ground.contains_key(p)));
    }

    #[test]
    fn sample_counts_are_exact() {
        let s = sample_corpus(&SampleConfig::default()).unwrap();
        let mut all = s.corpus.annotations().to_vec();
        all.extend(s.evaluation.iter().cloned());
        let consensus = consensus_labels(&all);
        let mut counts = [0; NUM_LABELS];
        for l in consensus.values() {
            counts[l.index()] += 1;
        }
        assert_eq!(counts, SAMPLE_LABEL_COUNTS);
        assert_eq!(s.corpus.all_pairs().len(), SAMPLE_LABEL_COUNTS.iter().sum::<usize>());
        assert_eq!(s.evaluation.len(), 3 * SAMPLE_EVAL_PAIRS);
    }
}
