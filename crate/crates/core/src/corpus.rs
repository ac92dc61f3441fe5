//! Books, pages, panels in reading order, transition annotations and genres.
//!
//! A corpus manifest is a directory holding three line-delimited JSON files:
//!
//! - `books.jsonl`: one [`BookMeta`] per line
//! - `panels.jsonl`: one [`Panel`] per line
//! - `annotations.jsonl`: one [`AnnotationRecord`] per line (optional)
//!
//! Unknown fields are ignored. Reading order within a page is given by
//! `panel_index`; the toolkit never reorders panels spatially.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::label::{TransitionLabel, NUM_LABELS};

pub const BOOKS_FILE: &str = "books.jsonl";
pub const PANELS_FILE: &str = "panels.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

/// One of the twelve Manga109 genres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Genre {
    Humor,
    Battle,
    RomanticComedy,
    Animal,
    ScienceFiction,
    Sports,
    HistoricalDrama,
    Fantasy,
    LoveRomance,
    Suspense,
    Horror,
    FourFrameCartoons,
}

impl Genre {
    pub const ALL: [Genre; 12] = [
        Genre::Humor,
        Genre::Battle,
        Genre::RomanticComedy,
        Genre::Animal,
        Genre::ScienceFiction,
        Genre::Sports,
        Genre::HistoricalDrama,
        Genre::Fantasy,
        Genre::LoveRomance,
        Genre::Suspense,
        Genre::Horror,
        Genre::FourFrameCartoons,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Humor => "humor",
            Genre::Battle => "battle",
            Genre::RomanticComedy => "romantic comedy",
            Genre::Animal => "animal",
            Genre::ScienceFiction => "science fiction",
            Genre::Sports => "sports",
            Genre::HistoricalDrama => "historical drama",
            Genre::Fantasy => "fantasy",
            Genre::LoveRomance => "love romance",
            Genre::Suspense => "suspense",
            Genre::Horror => "horror",
            Genre::FourFrameCartoons => "four frame cartoons",
        }
    }

    pub fn group(self) -> Option<GenreGroup> {
        GenreGroup::ALL.into_iter().find(|g| g.members().contains(&self))
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Genre {
    type Err = Error;

    /// Case-insensitive after trimming.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Genre::ALL
            .into_iter()
            .find(|g| t.eq_ignore_ascii_case(g.as_str()))
            .ok_or_else(|| {
                let allowed: Vec<&str> = Genre::ALL.iter().map(|g| g.as_str()).collect();
                Error::Validation(format!(
                    "unknown genre {s:?}; allowed: {}",
                    allowed.join(", ")
                ))
            })
    }
}

impl Serialize for Genre {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Genre {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Coarse genre groups used for group-level reports. Humor and horror belong
/// to no group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GenreGroup {
    Romance,
    Fiction,
    Action,
    Plot,
    FourPanel,
}

impl GenreGroup {
    pub const ALL: [GenreGroup; 5] = [
        GenreGroup::Romance,
        GenreGroup::Fiction,
        GenreGroup::Action,
        GenreGroup::Plot,
        GenreGroup::FourPanel,
    ];

    pub fn members(self) -> &'static [Genre] {
        match self {
            GenreGroup::Romance => &[Genre::LoveRomance, Genre::RomanticComedy],
            GenreGroup::Fiction => &[Genre::ScienceFiction, Genre::Fantasy],
            GenreGroup::Action => &[Genre::Battle, Genre::Sports],
            GenreGroup::Plot => &[Genre::HistoricalDrama, Genre::Suspense, Genre::Animal],
            GenreGroup::FourPanel => &[Genre::FourFrameCartoons],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GenreGroup::Romance => "Romance",
            GenreGroup::Fiction => "Fiction",
            GenreGroup::Action => "Action",
            GenreGroup::Plot => "Plot",
            GenreGroup::FourPanel => "FourPanel",
        }
    }
}

impl fmt::Display for GenreGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a genre string onto its group; `Ok(None)` for ungrouped genres.
pub fn genre_group_of(genre: &str) -> Result<Option<GenreGroup>> {
    Ok(genre.parse::<Genre>()?.group())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookMeta {
    pub book_id: String,
    pub title: String,
    pub genre: Genre,
    pub page_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Panel {
    pub book_id: String,
    pub page_index: u32,
    pub panel_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl Panel {
    pub fn key(&self) -> PanelKey {
        PanelKey {
            book_id: self.book_id.clone(),
            page_index: self.page_index,
            panel_index: self.panel_index,
        }
    }
}

/// Identifies a single panel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PanelKey {
    pub book_id: String,
    pub page_index: u32,
    pub panel_index: u32,
}

impl fmt::Display for PanelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.book_id, self.page_index, self.panel_index)
    }
}

/// Two consecutive panels on the same page.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PanelPair {
    pub book_id: String,
    pub page_index: u32,
    pub first_panel_index: u32,
    pub second_panel_index: u32,
}

impl PanelPair {
    pub fn new(book_id: impl Into<String>, page_index: u32, first_panel_index: u32) -> Self {
        PanelPair {
            book_id: book_id.into(),
            page_index,
            first_panel_index,
            second_panel_index: first_panel_index + 1,
        }
    }

    pub fn first(&self) -> PanelKey {
        PanelKey {
            book_id: self.book_id.clone(),
            page_index: self.page_index,
            panel_index: self.first_panel_index,
        }
    }

    pub fn second(&self) -> PanelKey {
        PanelKey {
            book_id: self.book_id.clone(),
            page_index: self.page_index,
            panel_index: self.second_panel_index,
        }
    }

    pub fn is_consecutive(&self) -> bool {
        self.first_panel_index.checked_add(1) == Some(self.second_panel_index)
    }

    /// Compact `book:page:first` form used in URLs and logs.
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.book_id, self.page_index, self.first_panel_index)
    }

    /// Inverse of [`PanelPair::key`]. The book id may itself contain `:`.
    pub fn parse_key(key: &str) -> Result<Self> {
        let mut parts = key.rsplitn(3, ':');
        let (first, page, book) = (parts.next(), parts.next(), parts.next());
        match (book, page, first) {
            (Some(b), Some(p), Some(f)) if !b.is_empty() => {
                let page = p
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad page index in pair key {key:?}")))?;
                let first = f
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad panel index in pair key {key:?}")))?;
                Ok(PanelPair::new(b, page, first))
            }
            _ => Err(Error::Validation(format!(
                "pair key {key:?} is not of the form book:page:panel"
            ))),
        }
    }
}

impl fmt::Display for PanelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}-{}",
            self.book_id, self.page_index, self.first_panel_index, self.second_panel_index
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair: PanelPair,
    pub annotator_id: String,
    pub label: TransitionLabel,
}

/// Ground-truth view: one label per pair.
pub type LabelMap = BTreeMap<PanelPair, TransitionLabel>;

/// A validated corpus. Immutable after loading.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    books: Vec<BookMeta>,
    panels: Vec<Panel>,
    annotations: Vec<AnnotationRecord>,
    /// book_id -> page_index -> panel count
    layout: HashMap<String, BTreeMap<u32, u32>>,
    image_refs: HashMap<PanelKey, String>,
}

impl Corpus {
    /// Validates and assembles a corpus from raw records.
    pub fn new(
        books: Vec<BookMeta>,
        panels: Vec<Panel>,
        annotations: Vec<AnnotationRecord>,
    ) -> Result<Self> {
        let mut book_pages = HashMap::new();
        for b in &books {
            if b.page_count == 0 {
                return Err(Error::Validation(format!(
                    "book {:?} has page_count 0",
                    b.book_id
                )));
            }
            if book_pages.insert(b.book_id.clone(), b.page_count).is_some() {
                return Err(Error::Validation(format!("duplicate book_id {:?}", b.book_id)));
            }
        }

        let mut seen = BTreeSet::new();
        let mut indices: HashMap<(String, u32), Vec<u32>> = HashMap::new();
        let mut image_refs = HashMap::new();
        for p in &panels {
            let Some(&page_count) = book_pages.get(&p.book_id) else {
                return Err(Error::Validation(format!(
                    "panel {} references unknown book",
                    p.key()
                )));
            };
            if p.page_index >= page_count {
                return Err(Error::Validation(format!(
                    "panel {} has page_index beyond page_count {page_count}",
                    p.key()
                )));
            }
            if !seen.insert(p.key()) {
                return Err(Error::Validation(format!("duplicate panel key {}", p.key())));
            }
            if let Some(r) = &p.image_ref {
                image_refs.insert(p.key(), r.clone());
            }
            indices
                .entry((p.book_id.clone(), p.page_index))
                .or_default()
                .push(p.panel_index);
        }

        let mut layout: HashMap<String, BTreeMap<u32, u32>> = HashMap::new();
        for ((book, page), mut idx) in indices {
            idx.sort_unstable();
            if let Some(pos) = idx.iter().enumerate().position(|(i, &v)| v as usize != i) {
                return Err(Error::Validation(format!(
                    "panel indices on {book}:{page} are not contiguous from 0 (found {} at position {pos})",
                    idx[pos]
                )));
            }
            layout.entry(book).or_default().insert(page, idx.len() as u32);
        }

        let mut corpus = Corpus {
            books,
            panels,
            annotations: Vec::new(),
            layout,
            image_refs,
        };
        for a in &annotations {
            corpus.check_pair(&a.pair)?;
        }
        corpus.annotations = dedup_annotations(annotations);
        Ok(corpus)
    }

    pub fn books(&self) -> &[BookMeta] {
        &self.books
    }

    pub fn book(&self, book_id: &str) -> Option<&BookMeta> {
        self.books.iter().find(|b| b.book_id == book_id)
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn annotations(&self) -> &[AnnotationRecord] {
        &self.annotations
    }

    pub fn image_ref(&self, key: &PanelKey) -> Option<&str> {
        self.image_refs.get(key).map(String::as_str)
    }

    /// Panel counts per page of a book, ordered by page index.
    pub fn page_layout(&self, book_id: &str) -> Option<&BTreeMap<u32, u32>> {
        self.layout.get(book_id)
    }

    pub fn contains_panel(&self, key: &PanelKey) -> bool {
        self.layout
            .get(&key.book_id)
            .and_then(|pages| pages.get(&key.page_index))
            .is_some_and(|&n| key.panel_index < n)
    }

    /// Errors unless `pair` names two consecutive panels present on one page.
    pub fn check_pair(&self, pair: &PanelPair) -> Result<()> {
        if !pair.is_consecutive() {
            return Err(Error::Validation(format!(
                "pair {pair} is not consecutive in reading order"
            )));
        }
        if !self.contains_panel(&pair.second()) {
            return Err(Error::Validation(format!(
                "pair {pair} references a panel missing from the corpus"
            )));
        }
        Ok(())
    }

    /// All within-page consecutive pairs of a book in reading order.
    pub fn extract_pairs(&self, book_id: &str) -> Result<Vec<PanelPair>> {
        if self.book(book_id).is_none() {
            return Err(Error::NotFound(format!("book {book_id:?}")));
        }
        let mut pairs = Vec::new();
        if let Some(pages) = self.layout.get(book_id) {
            for (&page, &n) in pages {
                for first in 0..n.saturating_sub(1) {
                    pairs.push(PanelPair::new(book_id, page, first));
                }
            }
        }
        Ok(pairs)
    }

    /// Pairs of every book, books in manifest order.
    pub fn all_pairs(&self) -> Vec<PanelPair> {
        self.books
            .iter()
            .flat_map(|b| self.extract_pairs(&b.book_id).unwrap_or_default())
            .collect()
    }

    pub fn stats(&self) -> CorpusStats {
        let pages = self.layout.values().map(BTreeMap::len).sum();
        let pairs = self.all_pairs().len();
        let labels = consensus_labels(&self.annotations);
        let annotators: BTreeSet<&str> =
            self.annotations.iter().map(|a| a.annotator_id.as_str()).collect();
        let per_book = self
            .books
            .iter()
            .map(|b| BookPairCount {
                book_id: b.book_id.clone(),
                genre: b.genre,
                pairs: self.extract_pairs(&b.book_id).map(|p| p.len()).unwrap_or(0),
                labeled_pairs: labels.keys().filter(|p| p.book_id == b.book_id).count(),
            })
            .collect();
        let distribution = distribution_of(labels.values().copied()).ok();
        CorpusStats {
            books: self.books.len(),
            pages,
            panels: self.panels.len(),
            pairs,
            annotation_records: self.annotations.len(),
            annotated_pairs: labels.len(),
            annotators: annotators.into_iter().map(str::to_owned).collect(),
            distribution,
            per_book,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BookPairCount {
    pub book_id: String,
    pub genre: Genre,
    pub pairs: usize,
    pub labeled_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub books: usize,
    pub pages: usize,
    pub panels: usize,
    pub pairs: usize,
    pub annotation_records: usize,
    pub annotated_pairs: usize,
    pub annotators: Vec<String>,
    /// Distribution over consensus labels, one per annotated pair.
    pub distribution: Option<[f64; NUM_LABELS]>,
    pub per_book: Vec<BookPairCount>,
}

/// Keeps the last record per (annotator, pair), preserving first-seen order.
fn dedup_annotations(records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
    let mut slot: HashMap<(String, PanelPair), usize> = HashMap::new();
    let mut out: Vec<AnnotationRecord> = Vec::with_capacity(records.len());
    for r in records {
        let key = (r.annotator_id.clone(), r.pair.clone());
        match slot.get(&key) {
            Some(&i) => out[i] = r,
            None => {
                slot.insert(key, out.len());
                out.push(r);
            }
        }
    }
    out
}

/// Fraction of records per label, in canonical label order.
pub fn label_distribution(records: &[AnnotationRecord]) -> Result<[f64; NUM_LABELS]> {
    distribution_of(records.iter().map(|r| r.label))
}

pub(crate) fn distribution_of(
    labels: impl IntoIterator<Item = TransitionLabel>,
) -> Result<[f64; NUM_LABELS]> {
    let mut counts = [0usize; NUM_LABELS];
    for l in labels {
        counts[l.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("label distribution needs at least one record".into()));
    }
    Ok(counts.map(|c| c as f64 / total as f64))
}

/// Labels of a single annotator.
pub fn labels_by(records: &[AnnotationRecord], annotator_id: &str) -> LabelMap {
    records
        .iter()
        .filter(|r| r.annotator_id == annotator_id)
        .map(|r| (r.pair.clone(), r.label))
        .collect()
}

/// One label per pair by majority vote over annotators; ties go to the lowest
/// label index.
pub fn consensus_labels(records: &[AnnotationRecord]) -> LabelMap {
    let mut votes: BTreeMap<&PanelPair, [usize; NUM_LABELS]> = BTreeMap::new();
    for r in records {
        votes.entry(&r.pair).or_default()[r.label.index()] += 1;
    }
    let mut contested = 0usize;
    let out = votes
        .into_iter()
        .map(|(pair, counts)| {
            let best = *counts.iter().max().unwrap();
            if counts.iter().filter(|&&c| c == best).count() > 1 {
                contested += 1;
            }
            let idx = counts.iter().position(|&c| c == best).unwrap();
            (pair.clone(), TransitionLabel::ALL[idx])
        })
        .collect();
    if contested > 0 {
        log::warn!("{contested} pairs had tied votes; resolved to the lowest label index");
    }
    out
}

/// Ground truth for a set of records: majority vote, then overridden by any
/// adjudicated labels.
pub fn ground_truth(records: &[AnnotationRecord], adjudicated: &[AnnotationRecord]) -> LabelMap {
    let mut labels = consensus_labels(records);
    for r in adjudicated {
        labels.insert(r.pair.clone(), r.label);
    }
    labels
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("records serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let records = read_jsonl(path.as_ref())?;
    Ok(dedup_annotations(records))
}

pub fn save_annotations(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), records)
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let books = read_jsonl(&dir.join(BOOKS_FILE))?;
    let panels = read_jsonl(&dir.join(PANELS_FILE))?;
    let ann_path = dir.join(ANNOTATIONS_FILE);
    let annotations = if ann_path.exists() {
        read_jsonl(&ann_path)?
    } else {
        Vec::new()
    };
    Corpus::new(books, panels, annotations)
}

pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join(BOOKS_FILE), &corpus.books)?;
    write_jsonl(&dir.join(PANELS_FILE), &corpus.panels)?;
    write_jsonl(&dir.join(ANNOTATIONS_FILE), &corpus.annotations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use TransitionLabel::*;

    fn book(id: &str, genre: Genre, pages: u32) -> BookMeta {
        BookMeta {
            book_id: id.into(),
            title: id.to_uppercase(),
            genre,
            page_count: pages,
        }
    }

    fn panels(book: &str, page: u32, n: u32) -> Vec<Panel> {
        (0..n)
            .map(|i| Panel {
                book_id: book.into(),
                page_index: page,
                panel_index: i,
                image_ref: None,
            })
            .collect()
    }

    fn rec(pair: PanelPair, who: &str, label: TransitionLabel) -> AnnotationRecord {
        AnnotationRecord {
            pair,
            annotator_id: who.into(),
            label,
        }
    }

    #[test]
    fn one_page_three_panels_gives_two_pairs() {
        let c = Corpus::new(vec![book("b", Genre::Humor, 1)], panels("b", 0, 3), vec![]).unwrap();
        assert_eq!(c.panels().len(), 3);
        assert_eq!(c.extract_pairs("b").unwrap().len(), 2);
    }

    #[test]
    fn non_contiguous_panels_rejected() {
        let mut ps = panels("b", 0, 3);
        ps.remove(1);
        let err = Corpus::new(vec![book("b", Genre::Humor, 1)], ps, vec![]).unwrap_err();
        assert!(err.to_string().contains("contiguous"), "{err}");
    }

    #[test]
    fn duplicate_panel_rejected() {
        let mut ps = panels("b", 0, 2);
        ps.push(ps[0].clone());
        let err = Corpus::new(vec![book("b", Genre::Humor, 1)], ps, vec![]).unwrap_err();
        assert!(err.to_string().contains("duplicate panel"), "{err}");
    }

    #[test]
    fn pairs_in_reading_order_never_cross_pages() {
        let mut ps = panels("b", 0, 4);
        ps.extend(panels("b", 1, 3));
        ps.extend(panels("b", 2, 1));
        let c = Corpus::new(vec![book("b", Genre::Battle, 3)], ps, vec![]).unwrap();
        let pairs = c.extract_pairs("b").unwrap();
        let got: Vec<(u32, u32, u32)> = pairs
            .iter()
            .map(|p| (p.page_index, p.first_panel_index, p.second_panel_index))
            .collect();
        assert_eq!(
            got,
            vec![(0, 0, 1), (0, 1, 2), (0, 2, 3), (1, 0, 1), (1, 1, 2)]
        );
    }

    #[test]
    fn unknown_book_not_found() {
        let c = Corpus::new(vec![book("b", Genre::Humor, 1)], panels("b", 0, 2), vec![]).unwrap();
        assert!(matches!(c.extract_pairs("zzz"), Err(Error::NotFound(_))));
    }

    #[test]
    fn label_distribution_examples() {
        let p = PanelPair::new("b", 0, 0);
        let recs: Vec<_> = [Act, Act, Act, Non]
            .iter()
            .enumerate()
            .map(|(i, &l)| rec(p.clone(), &format!("a{i}"), l))
            .collect();
        assert_eq!(label_distribution(&recs).unwrap(), [0.75, 0.0, 0.0, 0.0, 0.0, 0.25]);
        assert_eq!(label_distribution(&recs[..3]).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(label_distribution(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn genre_groups() {
        assert_eq!(genre_group_of("sports").unwrap(), Some(GenreGroup::Action));
        assert_eq!(genre_group_of("four frame cartoons").unwrap(), Some(GenreGroup::FourPanel));
        assert_eq!(genre_group_of("  Love Romance ").unwrap(), Some(GenreGroup::Romance));
        assert_eq!(genre_group_of("horror").unwrap(), None);
        assert_eq!(genre_group_of("humor").unwrap(), None);
        assert!(genre_group_of("western").is_err());
    }

    #[test]
    fn group_members_disjoint_and_functional() {
        let mut seen = BTreeSet::new();
        for g in GenreGroup::ALL {
            for m in g.members() {
                assert!(seen.insert(*m), "{m} in two groups");
                assert_eq!(m.group(), Some(g));
            }
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn later_annotation_replaces_earlier() {
        let p = PanelPair::new("b", 0, 0);
        let c = Corpus::new(
            vec![book("b", Genre::Humor, 1)],
            panels("b", 0, 2),
            vec![rec(p.clone(), "x", Act), rec(p.clone(), "y", Sub), rec(p.clone(), "x", Mom)],
        )
        .unwrap();
        assert_eq!(c.annotations().len(), 2);
        assert_eq!(c.annotations()[0].label, Mom);
    }

    #[test]
    fn annotation_on_missing_pair_rejected() {
        let err = Corpus::new(
            vec![book("b", Genre::Humor, 1)],
            panels("b", 0, 2),
            vec![rec(PanelPair::new("b", 0, 1), "x", Act)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn consensus_majority_and_ties() {
        let p = PanelPair::new("b", 0, 0);
        let q = PanelPair::new("b", 0, 1);
        let recs = vec![
            rec(p.clone(), "a", Sub),
            rec(p.clone(), "b", Sub),
            rec(p.clone(), "c", Act),
            rec(q.clone(), "a", Non),
            rec(q.clone(), "b", Asp),
        ];
        let gt = consensus_labels(&recs);
        assert_eq!(gt[&p], Sub);
        assert_eq!(gt[&q], Asp);
        let adj = ground_truth(&recs, &[rec(q.clone(), "judge", Non)]);
        assert_eq!(adj[&q], Non);
    }

    #[test]
    fn pair_key_round_trip() {
        let p = PanelPair::new("odd:book", 3, 7);
        assert_eq!(p.key(), "odd:book:3:7");
        assert_eq!(PanelPair::parse_key(&p.key()).unwrap(), p);
        assert!(PanelPair::parse_key("nope").is_err());
        assert!(PanelPair::parse_key("b:x:1").is_err());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(BOOKS_FILE),
            "{\"book_id\":\"b\",\"title\":\"B\",\"genre\":\"humor\",\"page_count\":1}\n{oops\n",
        )
        .unwrap();
        fs::write(dir.path().join(PANELS_FILE), "").unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_genre_lists_allowed_set() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(BOOKS_FILE),
            "{\"book_id\":\"b\",\"title\":\"B\",\"genre\":\"western\",\"page_count\":1}\n",
        )
        .unwrap();
        fs::write(dir.path().join(PANELS_FILE), "").unwrap();
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("four frame cartoons"), "{err}");
    }

    #[test]
    fn unknown_fields_ignored_and_genre_case_insensitive() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(BOOKS_FILE),
            "{\"book_id\":\"b\",\"title\":\"B\",\"genre\":\" Science Fiction\",\"page_count\":1,\"extra\":5}\n",
        )
        .unwrap();
        fs::write(
            dir.path().join(PANELS_FILE),
            "{\"book_id\":\"b\",\"page_index\":0,\"panel_index\":0,\"bbox\":[1,2]}\n",
        )
        .unwrap();
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!(c.books()[0].genre, Genre::ScienceFiction);
        assert!(c.annotations().is_empty());
    }
}
