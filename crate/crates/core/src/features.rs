//! Precomputed panel descriptors and pair features.
//!
//! Text format (normative):
//!
//! ```text
//! dim=<N>
//! <book_id> <page_index> <panel_index> <v1> ... <vN>
//! ```
//!
//! Binary format: the magic `PSFEAT01`, then `dim: u32`, `count: u64`, then
//! `count` records of `key_len: u32`, `book_id` (UTF-8), `page_index: u32`,
//! `panel_index: u32`, and `dim` values as `f32`. All integers and floats are
//! little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::{PanelKey, PanelPair};
use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 8] = b"PSFEAT01";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    vectors: BTreeMap<PanelKey, Vec<f64>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("feature dim must be positive".into()));
        }
        Ok(FeatureStore {
            dim,
            vectors: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, key: PanelKey, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Validation(format!(
                "descriptor for {key} has length {}, expected dim {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("descriptor for {key} has a non-finite value")));
        }
        if self.vectors.contains_key(&key) {
            return Err(Error::Validation(format!("duplicate descriptor for {key}")));
        }
        self.vectors.insert(key, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &PanelKey) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PanelKey, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Input length of a pair feature built from this store.
    pub fn pair_dim(&self) -> usize {
        2 * self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature {
    pub pair: PanelPair,
    pub x: Vec<f64>,
}

/// First panel's descriptor followed by the second's.
pub fn pair_feature(store: &FeatureStore, pair: &PanelPair) -> Result<PairFeature> {
    let lookup = |k: PanelKey| {
        store
            .get(&k)
            .ok_or_else(|| Error::NotFound(format!("no descriptor for panel {k}")))
    };
    let a = lookup(pair.first())?;
    let b = lookup(pair.second())?;
    let mut x = Vec::with_capacity(store.pair_dim());
    x.extend_from_slice(a);
    x.extend_from_slice(b);
    Ok(PairFeature {
        pair: pair.clone(),
        x,
    })
}

/// Per-component standardization fitted on a training pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput("cannot standardize an empty pool".into()));
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        // Constant components pass through centred but unscaled.
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 8];
    let is_binary = file.read_exact(&mut magic).is_ok() && &magic == BINARY_MAGIC;
    drop(file);
    if is_binary {
        load_features_binary(path)
    } else {
        load_features_text(path)
    }
}

fn load_features_text(path: &Path) -> Result<FeatureStore> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut store = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::parse(path, 1, "missing `dim=<N>` header"));
        };
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let dim = t
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::parse(path, i + 1, "expected header `dim=<N>`"))?;
        break FeatureStore::new(dim)?;
    };
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(book_id) = fields.next() else {
            continue;
        };
        let mut int = |what: &str| -> Result<u32> {
            fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(path, i + 1, format!("missing or invalid {what}")))
        };
        let page_index = int("page_index")?;
        let panel_index = int("panel_index")?;
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad value: {e}")))?;
        let key = PanelKey {
            book_id: book_id.to_string(),
            page_index,
            panel_index,
        };
        store
            .insert(key, values)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
    }
    Ok(store)
}

pub fn save_features(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "dim={}", store.dim).map_err(io)?;
    for (k, v) in &store.vectors {
        write!(w, "{} {} {}", k.book_id, k.page_index, k.panel_index).map_err(io)?;
        for x in v {
            write!(w, " {x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_features_binary(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(store.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(store.vectors.len() as u64).to_le_bytes());
    for (k, v) in &store.vectors {
        buf.extend_from_slice(&(k.book_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(k.book_id.as_bytes());
        buf.extend_from_slice(&k.page_index.to_le_bytes());
        buf.extend_from_slice(&k.panel_index.to_le_bytes());
        for x in v {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn load_features_binary(path: &Path) -> Result<FeatureStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = &bytes[BINARY_MAGIC.len()..];
    let truncated = || Error::parse(path, 0, "truncated binary feature file");
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(truncated());
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut store = FeatureStore::new(dim)?;
    for _ in 0..count {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let book_id = std::str::from_utf8(take(len)?)
            .map_err(|_| Error::parse(path, 0, "book id is not UTF-8"))?
            .to_string();
        let page_index = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let panel_index = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let raw = take(4 * dim)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        store.insert(
            PanelKey {
                book_id,
                page_index,
                panel_index,
            },
            values,
        )?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(panel: u32) -> PanelKey {
        PanelKey {
            book_id: "b".into(),
            page_index: 0,
            panel_index: panel,
        }
    }

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("f.txt");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_three_panels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "dim=4\nb 0 0 1 2 3 4\nb 0 1 0.5 0 0 1e-3\nb 0 2 -1 -2 -3 -4\n");
        let s = load_features(&p).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.dim(), 4);
        assert_eq!(s.get(&key(1)).unwrap(), &[0.5, 0.0, 0.0, 1e-3]);
    }

    #[test]
    fn mixed_dims_rejected_with_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "dim=4\nb 0 0 1 2 3 4\nb 0 1 1 2 3 4 5\n");
        let err = load_features(&p).unwrap_err().to_string();
        assert!(err.contains("b:0:1"), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "dim=2\nb 0 0 1 NaN\n");
        assert!(load_features(&p).is_err());
        let p = write(&dir, "dim=2\nb 0 0 inf 1\n");
        assert!(load_features(&p).is_err());
    }

    #[test]
    fn missing_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "b 0 0 1 2\n");
        assert!(matches!(load_features(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn pair_feature_concatenates_in_order() {
        let mut s = FeatureStore::new(2).unwrap();
        s.insert(key(0), vec![1.0, 2.0]).unwrap();
        s.insert(key(1), vec![3.0, 4.0]).unwrap();
        let f = pair_feature(&s, &PanelPair::new("b", 0, 0)).unwrap();
        assert_eq!(f.x, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&f.x[..2], s.get(&key(0)).unwrap());
    }

    #[test]
    fn reversed_pair_differs() {
        // Panels 1 and 2 reversed: the forward pair (1,2) versus a store in
        // which the descriptors are swapped.
        let mut s = FeatureStore::new(2).unwrap();
        s.insert(key(1), vec![1.0, 0.0]).unwrap();
        s.insert(key(2), vec![0.0, 1.0]).unwrap();
        let mut r = FeatureStore::new(2).unwrap();
        r.insert(key(1), vec![0.0, 1.0]).unwrap();
        r.insert(key(2), vec![1.0, 0.0]).unwrap();
        let pair = PanelPair::new("b", 0, 1);
        assert_ne!(pair_feature(&s, &pair).unwrap().x, pair_feature(&r, &pair).unwrap().x);
    }

    #[test]
    fn identical_panels_duplicate_vector() {
        let mut s = FeatureStore::new(3).unwrap();
        s.insert(key(0), vec![1.0, 2.0, 3.0]).unwrap();
        s.insert(key(1), vec![1.0, 2.0, 3.0]).unwrap();
        let f = pair_feature(&s, &PanelPair::new("b", 0, 0)).unwrap();
        assert_eq!(f.x, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_panel_names_key() {
        let mut s = FeatureStore::new(1).unwrap();
        s.insert(key(0), vec![1.0]).unwrap();
        let err = pair_feature(&s, &PanelPair::new("b", 0, 0)).unwrap_err();
        assert!(err.to_string().contains("b:0:1"));
    }

    #[test]
    fn line_order_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let a = load_features(write(&dir, "dim=1\nb 0 0 1\nb 0 1 2\nc 3 0 5\n")).unwrap();
        let b = load_features(write(&dir, "dim=1\nc 3 0 5\nb 0 1 2\nb 0 0 1\n")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_and_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = FeatureStore::new(3).unwrap();
        s.insert(key(0), vec![0.25, -1.5, 3.0]).unwrap();
        s.insert(key(1), vec![0.1, 0.2, 0.3]).unwrap();
        let t = dir.path().join("t.txt");
        save_features(&s, &t).unwrap();
        assert_eq!(load_features(&t).unwrap(), s);

        let b = dir.path().join("b.bin");
        save_features_binary(&s, &b).unwrap();
        let back = load_features(&b).unwrap();
        assert_eq!(back.len(), 2);
        for (k, v) in s.iter() {
            let w = back.get(k).unwrap();
            for (x, y) in v.iter().zip(w) {
                assert_eq!(*y, *x as f32 as f64);
            }
        }
    }

    #[test]
    fn standardizer_zero_mean_unit_variance() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let st = Standardizer::fit(&refs).unwrap();
        let mut out: Vec<Vec<f64>> = rows.clone();
        for r in &mut out {
            st.apply(r);
        }
        let mean: f64 = out.iter().map(|r| r[0]).sum::<f64>() / 3.0;
        let var: f64 = out.iter().map(|r| r[0] * r[0]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|r| r[1] == 0.0));
    }
}
