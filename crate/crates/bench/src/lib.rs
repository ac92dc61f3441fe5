//! Fixtures shared by the benchmarks.

use panelscope_core::classifier::Example;
use panelscope_core::corpus::consensus_labels;
use panelscope_core::features::pair_feature;
use panelscope_core::seqmine::{page_sequences, PageSequence};
use panelscope_core::synthetic::{blob_dataset, sample_corpus, BlobConfig, SampleConfig};
use panelscope_core::ConfusionMatrix;

/// A dense 6x6 table with `total` items spread deterministically.
pub fn confusion(total: u64) -> ConfusionMatrix {
    let mut counts = vec![vec![0u64; 6]; 6];
    for i in 0..total {
        let r = (i * 7 % 6) as usize;
        let c = if i % 3 == 0 { (r + 1) % 6 } else { r };
        counts[r][c] += 1;
    }
    ConfusionMatrix::from_counts(counts).unwrap()
}

/// The default blob dataset's labeled pairs as training examples.
pub fn blob_examples() -> Vec<Example> {
    let d = blob_dataset(&BlobConfig::default()).unwrap();
    d.ground
        .iter()
        .map(|(p, l)| (pair_feature(&d.features, p).unwrap().x, *l))
        .collect()
}

/// 6-d book vectors: `n` points scattered around four corners.
pub fn book_points(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut v = vec![0.05; 6];
            v[i % 4] = 0.7;
            v[(i * 5 + 1) % 6] += (i % 11) as f64 * 0.01;
            v
        })
        .collect()
}

/// Page sequences of the sample corpus.
pub fn sample_sequences() -> Vec<PageSequence> {
    let s = sample_corpus(&SampleConfig::default()).unwrap();
    page_sequences(&s.corpus, &consensus_labels(s.corpus.annotations()))
}
