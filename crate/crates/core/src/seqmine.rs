//! Page-wise transition sequences and frequent pattern counting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GenreGroup, LabelMap, PanelPair};
use crate::error::{Error, Result};
use crate::label::{format_sequence, TransitionLabel};

/// A maximal labeled run of consecutive transitions on one page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSequence {
    pub book_id: String,
    pub page_index: u32,
    /// Index of the first panel of the run's first pair.
    pub start_panel: u32,
    pub labels: Vec<TransitionLabel>,
}

/// Extracts sequences in reading order (book, page, panel). An unlabeled pair
/// ends the current run; runs of length zero are dropped.
pub fn page_sequences(corpus: &Corpus, labels: &LabelMap) -> Vec<PageSequence> {
    let mut out = Vec::new();
    for book in corpus.books() {
        let Some(layout) = corpus.page_layout(&book.book_id) else {
            continue;
        };
        for (&page, &panels) in layout {
            let mut run: Option<PageSequence> = None;
            for first in 0..panels.saturating_sub(1) {
                let pair = PanelPair::new(book.book_id.clone(), page, first);
                match labels.get(&pair) {
                    Some(l) => run
                        .get_or_insert_with(|| PageSequence {
                            book_id: book.book_id.clone(),
                            page_index: page,
                            start_panel: first,
                            labels: Vec::new(),
                        })
                        .labels
                        .push(*l),
                    None => out.extend(run.take()),
                }
            }
            out.extend(run.take());
        }
    }
    out
}

pub type NgramCounts = BTreeMap<Vec<TransitionLabel>, usize>;

/// Counts every contiguous window of length `n`, overlaps included.
pub fn ngram_counts(seqs: &[PageSequence], n: usize) -> Result<NgramCounts> {
    if n == 0 {
        return Err(Error::Validation("pattern length must be at least 1".into()));
    }
    let mut counts = NgramCounts::new();
    for s in seqs {
        for w in s.labels.windows(n) {
            *counts.entry(w.to_vec()).or_default() += 1;
        }
    }
    Ok(counts)
}

/// Counts embeddings `i1 < … < in` whose consecutive positions are at most
/// `max_gap + 1` apart. `max_gap = 0` equals [`ngram_counts`].
pub fn gapped_counts(seqs: &[PageSequence], n: usize, max_gap: usize) -> Result<NgramCounts> {
    if n == 0 {
        return Err(Error::Validation("pattern length must be at least 1".into()));
    }
    let mut counts = NgramCounts::new();
    let mut stack = Vec::with_capacity(n);
    for s in seqs {
        for start in 0..s.labels.len() {
            stack.clear();
            stack.push(start);
            extend_embedding(&s.labels, n, max_gap, &mut stack, &mut counts);
        }
    }
    Ok(counts)
}

fn extend_embedding(
    labels: &[TransitionLabel],
    n: usize,
    max_gap: usize,
    stack: &mut Vec<usize>,
    counts: &mut NgramCounts,
) {
    if stack.len() == n {
        let pattern = stack.iter().map(|&i| labels[i]).collect();
        *counts.entry(pattern).or_default() += 1;
        return;
    }
    let last = *stack.last().unwrap();
    let end = (last + max_gap + 2).min(labels.len());
    for next in last + 1..end {
        stack.push(next);
        extend_embedding(labels, n, max_gap, stack, counts);
        stack.pop();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub labels: Vec<TransitionLabel>,
    pub count: usize,
    pub rank: usize,
}

/// Dense ranking by count; tied patterns share a rank and are ordered by
/// label index. Everything up to and including rank `k` is returned.
pub fn top_k(counts: &NgramCounts, k: usize) -> Result<Vec<Pattern>> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let mut sorted: Vec<(&Vec<TransitionLabel>, usize)> = counts.iter().map(|(p, &c)| (p, c)).collect();
    // BTreeMap iteration is already lexicographic; the stable sort keeps it within ties.
    sorted.sort_by(|a, b| b.1.cmp(&a.1));
    let mut out = Vec::new();
    let mut rank = 0;
    let mut prev = None;
    for (labels, count) in sorted {
        if prev != Some(count) {
            rank += 1;
            prev = Some(count);
        }
        if rank > k {
            break;
        }
        out.push(Pattern {
            labels: labels.clone(),
            count,
            rank,
        });
    }
    Ok(out)
}

/// Selects how patterns are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CountMode {
    #[default]
    Contiguous,
    Gapped {
        max_gap: usize,
    },
}

impl CountMode {
    pub fn count(self, seqs: &[PageSequence], n: usize) -> Result<NgramCounts> {
        match self {
            CountMode::Contiguous => ngram_counts(seqs, n),
            CountMode::Gapped { max_gap } => gapped_counts(seqs, n, max_gap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthPatterns {
    pub length: usize,
    pub patterns: Vec<Pattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPatterns {
    pub group: GenreGroup,
    pub sequences: usize,
    pub by_length: Vec<LengthPatterns>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineReport {
    pub k: usize,
    pub mode: CountMode,
    pub groups: Vec<GroupPatterns>,
}

/// Top-k patterns of each requested length for every genre group.
pub fn mine(
    corpus: &Corpus,
    labels: &LabelMap,
    groups: &BTreeMap<String, GenreGroup>,
    lengths: &[usize],
    k: usize,
    mode: CountMode,
) -> Result<MineReport> {
    if lengths.is_empty() {
        return Err(Error::Validation("no pattern lengths requested".into()));
    }
    let mut per_group: BTreeMap<GenreGroup, Vec<PageSequence>> = BTreeMap::new();
    for s in page_sequences(corpus, labels) {
        if let Some(g) = groups.get(&s.book_id) {
            per_group.entry(*g).or_default().push(s);
        }
    }
    let mut out = Vec::new();
    for g in GenreGroup::ALL {
        let Some(seqs) = per_group.get(&g) else {
            log::warn!("genre group {g} has no labeled sequences; omitted");
            continue;
        };
        let by_length = lengths
            .iter()
            .map(|&n| {
                Ok(LengthPatterns {
                    length: n,
                    patterns: top_k(&mode.count(seqs, n)?, k)?,
                })
            })
            .collect::<Result<_>>()?;
        out.push(GroupPatterns {
            group: g,
            sequences: seqs.len(),
            by_length,
        });
    }
    Ok(MineReport {
        k,
        mode,
        groups: out,
    })
}

impl MineReport {
    /// One block per group; rows are ranks, columns are pattern lengths.
    /// Tied patterns share a cell; past three the rest are only counted.
    pub fn render(&self) -> String {
        const SHOWN: usize = 3;
        let mut out = String::new();
        for g in &self.groups {
            writeln!(out, "{} ({} sequences)", g.group.name(), g.sequences).unwrap();
            for rank in 1..=self.k {
                write!(out, "  top {rank}").unwrap();
                for lp in &g.by_length {
                    let tied: Vec<&Pattern> = lp.patterns.iter().filter(|p| p.rank == rank).collect();
                    let mut cell: Vec<String> = tied
                        .iter()
                        .take(SHOWN)
                        .map(|p| format!("{} {}", format_sequence(&p.labels), p.count))
                        .collect();
                    if tied.len() > SHOWN {
                        cell.push(format!("(+{} more)", tied.len() - SHOWN));
                    }
                    let cell = if cell.is_empty() { "-".to_string() } else { cell.join(" / ") };
                    write!(out, " | len {}: {cell}", lp.length).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}
