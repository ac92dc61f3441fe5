use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use panelscope_core::corpus::{consensus_labels, labels_by, load_annotations};
use panelscope_core::{AnnotationRecord, LabelMap, PanelPair};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Labels from an annotation file: one annotator's if given, otherwise the
/// majority vote.
pub fn read_labels(path: &Path, annotator: Option<&str>) -> Result<LabelMap> {
    let records = load_annotations(path)?;
    let labels = match annotator {
        Some(a) => labels_by(&records, a),
        None => consensus_labels(&records),
    };
    if labels.is_empty() {
        bail!("{}: no labels{}", path.display(), annotator.map_or(String::new(), |a| format!(" by annotator {a:?}")));
    }
    Ok(labels)
}

/// Pairs, one per line, either as `book:page:panel` keys or JSON records.
pub fn read_pairs(path: &Path) -> Result<Vec<PanelPair>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let pair = if t.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(t).with_context(|| format!("{}:{}", path.display(), i + 1))?;
            // annotation and prediction records nest the pair
            let v = v.get("pair").cloned().unwrap_or(v);
            serde_json::from_value(v).with_context(|| format!("{}:{}", path.display(), i + 1))?
        } else {
            PanelPair::parse_key(t).with_context(|| format!("{}:{}", path.display(), i + 1))?
        };
        out.push(pair);
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn records_from(labels: &LabelMap, annotator: &str) -> Vec<AnnotationRecord> {
    labels
        .iter()
        .map(|(pair, label)| AnnotationRecord {
            pair: pair.clone(),
            annotator_id: annotator.to_string(),
            label: *label,
        })
        .collect()
}
