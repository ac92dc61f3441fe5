//! Per-book transition distributions, k-means, elbow selection and
//! cluster/genre-group intersections.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GenreGroup, LabelMap};
use crate::error::{Error, Result};
use crate::feedback::derive_seed;
use crate::label::{TransitionLabel, NUM_LABELS};

/// Normalized transition-type counts of one book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookVector {
    pub book_id: String,
    pub v: [f64; NUM_LABELS],
    /// Number of labeled pairs behind `v`.
    pub pairs: usize,
}

/// `None` when the book has no labeled pairs.
pub fn book_vector(book_id: &str, labels: impl IntoIterator<Item = TransitionLabel>) -> Option<BookVector> {
    let mut counts = [0usize; NUM_LABELS];
    for l in labels {
        counts[l.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    (total > 0).then(|| BookVector {
        book_id: book_id.to_string(),
        v: counts.map(|c| c as f64 / total as f64),
        pairs: total,
    })
}

/// One vector per book that has labels, sorted by book id.
pub fn book_vectors(labels: &LabelMap) -> Vec<BookVector> {
    let mut per_book: BTreeMap<&str, Vec<TransitionLabel>> = BTreeMap::new();
    for (pair, l) in labels {
        per_book.entry(&pair.book_id).or_default().push(*l);
    }
    per_book
        .into_iter()
        .filter_map(|(b, ls)| book_vector(b, ls))
        .collect()
}

/// As [`book_vectors`], warning about corpus books that have no labels.
pub fn corpus_book_vectors(corpus: &Corpus, labels: &LabelMap) -> Vec<BookVector> {
    let vectors = book_vectors(labels);
    for b in corpus.books() {
        if !vectors.iter().any(|v| v.book_id == b.book_id) {
            log::warn!("book {} has no labeled pairs; excluded from clustering", b.book_id);
        }
    }
    vectors
}

/// Group of every corpus book whose genre belongs to one.
pub fn book_groups(corpus: &Corpus) -> BTreeMap<String, GenreGroup> {
    let mut out = BTreeMap::new();
    for b in corpus.books() {
        match b.genre.group() {
            Some(g) => {
                out.insert(b.book_id.clone(), g);
            }
            None => log::warn!(
                "book {} has ungrouped genre {:?}; excluded from group reports",
                b.book_id,
                b.genre.as_str()
            ),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iter: 300,
            tol: 1e-6,
            restarts: 10,
            seed: 0,
        }
    }
}

/// Result of clustering raw points.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning run.
    pub inertia_trace: Vec<f64>,
    /// Index of the winning restart.
    pub restart: usize,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (a, p) in assignments.iter_mut().zip(points) {
        let (i, d) = nearest(p, centroids);
        *a = i;
        inertia += d;
    }
    inertia
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // Fewer distinct points than k; duplicates are allowed.
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from the given centroids.
fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, cfg: &KMeansConfig) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![0; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let inertia = assign(points, &centroids, &mut assignments);
        trace.push(inertia);
        if iterations == cfg.max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut movement: f64 = 0.0;
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            let new = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // Empty cluster: re-seed at the point farthest from its centroid.
                let far = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .map(|(i, p)| (i, squared_distance(p, &centroids[assignments[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                taken[far] = true;
                points[far].clone()
            };
            movement = movement.max(squared_distance(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if movement < cfg.tol {
            let inertia = assign(points, &centroids, &mut assignments);
            trace.push(inertia);
            break;
        }
    }
    KMeansFit {
        inertia: *trace.last().unwrap(),
        centroids,
        assignments,
        iterations,
        inertia_trace: trace,
        restart: 0,
    }
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::Validation(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: p.len(),
        });
    }
    Ok(())
}

/// Best of `restarts` k-means++ seeded Lloyd runs, selected by
/// (inertia, restart index).
pub fn kmeans_points(points: &[Vec<f64>], k: usize, cfg: &KMeansConfig) -> Result<KMeansFit> {
    check_points(points, k)?;
    let mut best: Option<KMeansFit> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, restart, k as u64));
        let init = plus_plus_seed(points, k, &mut rng);
        let mut fit = lloyd(points, init, cfg);
        fit.restart = restart;
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, usize>,
    pub inertia: f64,
}

impl ClusterModel {
    /// Cluster of each vector's book, aligned with `vectors`.
    pub fn cluster_of(&self, book_id: &str) -> Option<usize> {
        self.assignments.get(book_id).copied()
    }
}

fn canonical(vectors: &[BookVector]) -> Vec<&BookVector> {
    let mut sorted: Vec<&BookVector> = vectors.iter().collect();
    sorted.sort_by(|a, b| a.book_id.cmp(&b.book_id));
    sorted
}

/// Clusters book vectors. Input order does not matter: books are sorted by
/// id before seeding.
pub fn kmeans(vectors: &[BookVector], k: usize, cfg: &KMeansConfig) -> Result<ClusterModel> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("no book vectors to cluster".into()));
    }
    let sorted = canonical(vectors);
    let points: Vec<Vec<f64>> = sorted.iter().map(|b| b.v.to_vec()).collect();
    let fit = kmeans_points(&points, k, cfg)?;
    Ok(ClusterModel {
        k,
        assignments: sorted
            .iter()
            .zip(&fit.assignments)
            .map(|(b, &a)| (b.book_id.clone(), a))
            .collect(),
        centroids: fit.centroids,
        inertia: fit.inertia,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Stop at the first k whose relative inertia drop to k+1 is below this.
    pub threshold: f64,
    /// Also stop once distortion (inertia / n) is at or below this floor.
    pub distortion_floor: f64,
    pub kmeans: KMeansConfig,
}

impl Default for ElbowConfig {
    fn default() -> Self {
        ElbowConfig {
            k_min: 1,
            k_max: 10,
            threshold: 0.10,
            distortion_floor: 1e-4,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    pub inertia: f64,
    pub distortion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub points: Vec<ElbowPoint>,
    pub chosen_k: usize,
    pub threshold: f64,
}

impl ElbowReport {
    /// `k,distortion,inertia` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,distortion,inertia\n");
        for p in &self.points {
            writeln!(out, "{},{},{}", p.k, p.distortion, p.inertia).unwrap();
        }
        out
    }
}

/// Fits every k in `k_min..=k_max` and picks the elbow. Besides the regular
/// restarts, each k > k_min also tries the (k−1) solution plus the point
/// farthest from it, which keeps inertia non-increasing in k.
pub fn elbow(points: &[Vec<f64>], cfg: &ElbowConfig) -> Result<ElbowReport> {
    if cfg.k_min == 0 || cfg.k_min > cfg.k_max {
        return Err(Error::Validation(format!(
            "invalid k range {}..={}",
            cfg.k_min, cfg.k_max
        )));
    }
    check_points(points, cfg.k_max)?;
    let n = points.len() as f64;
    let mut fits: Vec<KMeansFit> = Vec::new();
    for k in cfg.k_min..=cfg.k_max {
        let mut fit = kmeans_points(points, k, &cfg.kmeans)?;
        if let Some(prev) = fits.last() {
            let far = points
                .iter()
                .map(|p| nearest(p, &prev.centroids).1)
                .enumerate()
                .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b })
                .0;
            let mut init = prev.centroids.clone();
            init.push(points[far].clone());
            let warm = lloyd(points, init, &cfg.kmeans);
            if warm.inertia < fit.inertia {
                fit = warm;
            }
        }
        fits.push(fit);
    }
    let pts: Vec<ElbowPoint> = fits
        .iter()
        .zip(cfg.k_min..)
        .map(|(f, k)| ElbowPoint {
            k,
            inertia: f.inertia,
            distortion: f.inertia / n,
        })
        .collect();
    let mut chosen_k = cfg.k_max;
    for w in pts.windows(2) {
        let (cur, next) = (w[0], w[1]);
        if cur.distortion <= cfg.distortion_floor {
            chosen_k = cur.k;
            break;
        }
        let drop = (cur.inertia - next.inertia) / cur.inertia;
        if drop < cfg.threshold {
            chosen_k = cur.k;
            break;
        }
    }
    Ok(ElbowReport {
        points: pts,
        chosen_k,
        threshold: cfg.threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionRow {
    pub group: GenreGroup,
    pub books: usize,
    /// Fraction of the group's books in each cluster.
    pub cells: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTable {
    pub k: usize,
    pub rows: Vec<IntersectionRow>,
}

impl IntersectionTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:<12}", "Genres");
        for c in 0..self.k {
            write!(out, " | {:>6}", format!("clus{}", c + 1)).unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{:<12}", r.group.name()).unwrap();
            for v in &r.cells {
                write!(out, " | {v:>6.2}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// `cell(g, c) = |books of g in c| / |books of g|`. Books without a group are
/// skipped; groups without books are omitted.
pub fn intersect(model: &ClusterModel, groups: &BTreeMap<String, GenreGroup>) -> IntersectionTable {
    let mut counts: BTreeMap<GenreGroup, Vec<usize>> = BTreeMap::new();
    for (book, &cluster) in &model.assignments {
        match groups.get(book) {
            Some(g) => counts.entry(*g).or_insert_with(|| vec![0; model.k])[cluster] += 1,
            None => log::warn!("book {book} has no genre group; skipped in intersection table"),
        }
    }
    let mut rows = Vec::new();
    for g in GenreGroup::ALL {
        match counts.get(&g) {
            Some(c) => {
                let total: usize = c.iter().sum();
                rows.push(IntersectionRow {
                    group: g,
                    books: total,
                    cells: c.iter().map(|&x| x as f64 / total as f64).collect(),
                });
            }
            None => log::warn!("genre group {g} has no clustered books; row omitted"),
        }
    }
    IntersectionTable { k: model.k, rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: GenreGroup,
    pub books: usize,
    /// Unweighted mean of the members' normalized vectors.
    pub mean: [f64; NUM_LABELS],
}

pub fn genre_transition_summary(
    vectors: &[BookVector],
    groups: &BTreeMap<String, GenreGroup>,
) -> Vec<GroupSummary> {
    let mut acc: BTreeMap<GenreGroup, (usize, [f64; NUM_LABELS])> = BTreeMap::new();
    for bv in vectors {
        if let Some(g) = groups.get(&bv.book_id) {
            let e = acc.entry(*g).or_insert((0, [0.0; NUM_LABELS]));
            e.0 += 1;
            for (s, v) in e.1.iter_mut().zip(&bv.v) {
                *s += v;
            }
        }
    }
    GenreGroup::ALL
        .iter()
        .filter_map(|g| {
            acc.get(g).map(|(n, sum)| GroupSummary {
                group: *g,
                books: *n,
                mean: sum.map(|s| s / *n as f64),
            })
        })
        .collect()
}

/// `book_id,cluster,act,asp,sub` rows: the three-axis view of a clustering.
pub fn projection_csv(vectors: &[BookVector], model: &ClusterModel) -> String {
    let mut out = String::from("book_id,cluster,act,asp,sub\n");
    for bv in canonical(vectors) {
        let c = model.cluster_of(&bv.book_id).map_or(String::new(), |c| (c + 1).to_string());
        writeln!(out, "{},{},{},{},{}", bv.book_id, c, bv.v[0], bv.v[1], bv.v[2]).unwrap();
    }
    out
}
