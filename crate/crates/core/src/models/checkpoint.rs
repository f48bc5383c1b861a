//! Checkpoint files: `<name>.manifest` lists every parameter with its shape
//! and offset into `<name>.bin`, which holds the values as little-endian
//! `f64`. The manifest also records hashes of the label space and vocabulary
//! the parameters were trained against.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{sha1_hex, LabelSpace, Vocabulary};
use crate::error::{Error, Result};
use crate::math::{ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub labels_hash: String,
    pub vocab_hash: String,
}

impl CheckpointMeta {
    pub fn new(labels: &LabelSpace, vocab: &Vocabulary) -> Self {
        Self {
            labels_hash: labels_hash(labels),
            vocab_hash: vocab_hash(vocab),
        }
    }
}

pub fn labels_hash(labels: &LabelSpace) -> String {
    let text: String = labels
        .labels()
        .iter()
        .map(|l| format!("{}\t{}\n", l.slot, l.value))
        .collect();
    sha1_hex(text.as_bytes())
}

pub fn vocab_hash(vocab: &Vocabulary) -> String {
    sha1_hex(vocab.tokens().join("\n").as_bytes())
}

pub fn save_checkpoint(dir: &Path, name: &str, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "labels_hash = {}", meta.labels_hash);
    let _ = writeln!(manifest, "vocab_hash = {}", meta.vocab_hash);
    let _ = writeln!(manifest, "values_hash = {}", store.content_hash());
    let mut bin = Vec::with_capacity(store.num_values() * 8);
    let mut offset = 0;
    for (pname, value) in store.named_values() {
        let shape: Vec<String> = value.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(manifest, "param {pname} [{}] {offset} {}", shape.join(","), value.len());
        for v in value.data() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        offset += value.len();
    }
    fs::write(dir.join(format!("{name}.manifest")), manifest)?;
    fs::write(dir.join(format!("{name}.bin")), bin)?;
    Ok(())
}

/// Loads values into `store`, refusing checkpoints written against a
/// different label space or vocabulary.
pub fn load_checkpoint(dir: &Path, name: &str, store: &mut ParamStore, meta: &CheckpointMeta) -> Result<()> {
    let manifest = fs::read_to_string(dir.join(format!("{name}.manifest")))?;
    let bin = fs::read(dir.join(format!("{name}.bin")))?;
    if bin.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("{name}.bin is not a whole number of f64 values")));
    }
    let floats: Vec<f64> = bin
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut values = Vec::new();
    for line in manifest.lines() {
        if let Some(h) = line.strip_prefix("labels_hash = ") {
            if h != meta.labels_hash {
                return Err(Error::Checkpoint(format!("{name}: label space hash mismatch")));
            }
        } else if let Some(h) = line.strip_prefix("vocab_hash = ") {
            if h != meta.vocab_hash {
                return Err(Error::Checkpoint(format!("{name}: vocabulary hash mismatch")));
            }
        } else if let Some(rest) = line.strip_prefix("param ") {
            values.push(parse_param(rest, &floats)?);
        }
    }
    store.load_values(&values)
}

fn parse_param(rest: &str, floats: &[f64]) -> Result<(String, Tensor)> {
    let bad = || Error::Checkpoint(format!("malformed parameter line {rest:?}"));
    let mut parts = rest.rsplitn(4, ' ');
    let count: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let offset: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let shape_text = parts.next().ok_or_else(bad)?;
    let pname = parts.next().ok_or_else(bad)?.to_string();
    let inner = shape_text
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(bad)?;
    let shape: Vec<usize> = if inner.is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    let data = floats.get(offset..offset + count).ok_or_else(bad)?.to_vec();
    Ok((pname, Tensor::new(shape, data)?))
}
