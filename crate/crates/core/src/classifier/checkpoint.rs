//! Model checkpoint file.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! | field            | type                     |
//! |------------------|--------------------------|
//! | magic            | 8 bytes, `PSCKPT01`      |
//! | header_len       | u32                      |
//! | header           | `header_len` bytes, UTF-8 JSON: dims, activation, seed, full config |
//! | input_dim        | u64                      |
//! | hidden           | u64                      |
//! | outputs          | u64 (always 6)           |
//! | w1               | input_dim·hidden × f64, row-major |
//! | b1               | hidden × f64             |
//! | w2               | hidden·outputs × f64, row-major |
//! | b2               | outputs × f64            |
//! | has_standardizer | u8 (0 or 1)              |
//! | mean, scale      | input_dim × f64 each, present only when the flag is 1 |
//!
//! The binary payload is authoritative; the JSON header is informational plus
//! the config echo.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpParams, OutputActivation, TrainConfig};
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::label::NUM_LABELS;

const MAGIC: &[u8; 8] = b"PSCKPT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub config: TrainConfig,
    pub standardizer: Option<Standardizer>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    input_dim: usize,
    hidden: usize,
    outputs: usize,
    activation: OutputActivation,
    seed: u64,
    config: TrainConfig,
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, mut w: impl Write) -> Result<()> {
    let p = &ckpt.params;
    let header = Header {
        input_dim: p.input_dim,
        hidden: p.hidden,
        outputs: NUM_LABELS,
        activation: ckpt.config.output_activation,
        seed: ckpt.config.seed,
        config: ckpt.config.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(64 + header.len() + 8 * p.num_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for d in [p.input_dim, p.hidden, NUM_LABELS] {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for t in p.tensors() {
        put_f64s(&mut buf, t);
    }
    match &ckpt.standardizer {
        Some(s) => {
            buf.push(1);
            put_f64s(&mut buf, &s.mean);
            put_f64s(&mut buf, &s.scale);
        }
        None => buf.push(0),
    }
    w.write_all(&buf)
        .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    let mut cur = Cursor { bytes: &bytes };
    if cur.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let header_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(cur.take(header_len)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let (input_dim, hidden, outputs) = (cur.u64()?, cur.u64()?, cur.u64()?);
    if outputs != NUM_LABELS || header.input_dim != input_dim || header.hidden != hidden {
        return Err(Error::Checkpoint("header and payload dimensions disagree".into()));
    }
    let params = MlpParams {
        input_dim,
        hidden,
        w1: cur.f64s(input_dim * hidden)?,
        b1: cur.f64s(hidden)?,
        w2: cur.f64s(hidden * NUM_LABELS)?,
        b2: cur.f64s(NUM_LABELS)?,
    };
    let standardizer = match cur.take(1)?[0] {
        0 => None,
        1 => Some(Standardizer {
            mean: cur.f64s(input_dim)?,
            scale: cur.f64s(input_dim)?,
        }),
        b => return Err(Error::Checkpoint(format!("bad standardizer flag {b}"))),
    };
    if !cur.bytes.is_empty() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(Checkpoint {
        params,
        config: header.config,
        standardizer,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(ckpt, std::io::BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_params_with_hidden;

    fn sample() -> Checkpoint {
        let mut params = init_params_with_hidden(11, 5, 7);
        params.b1[2] = -0.1 / 3.0;
        params.b2[5] = f64::MIN_POSITIVE;
        Checkpoint {
            params,
            config: TrainConfig {
                learning_rate: 0.1 / 7.0,
                seed: 99,
                ..TrainConfig::default()
            },
            standardizer: Some(Standardizer {
                mean: vec![0.1, 0.2, 0.3, 0.4, 1.0 / 3.0],
                scale: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            }),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let mut bytes = Vec::new();
        write_checkpoint(&ckpt, &mut bytes).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        for (a, b) in ckpt.params.tensors().iter().zip(back.params.tensors()) {
            let a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        assert_eq!(back, ckpt);
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = Vec::new();
        write_checkpoint(&sample(), &mut bytes).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
    }
}
