use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::labels::{LabelSpace, SemanticFrame};
use super::mr::{canonical_key, parse_mr, SlotValue};
use super::text::preprocess_text;
use super::vocab::{Vocabulary, BOS, EOS};
use crate::error::{Error, Result};

/// One CSV row: meaning representation and reference text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRow {
    pub mr: String,
    pub text: String,
}

/// Reads an E2E-format CSV with `mr` and `ref` columns (header names are
/// matched case-insensitively).
pub fn read_e2e_csv(path: &Path) -> Result<Vec<RawRow>> {
    let file = std::fs::File::open(path)?;
    read_e2e_csv_from(file)
}

pub fn read_e2e_csv_from<R: Read>(reader: R) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("csv is missing the `{name}` column")))
    };
    let (mr_col, ref_col) = (col("mr")?, col("ref")?);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(RawRow {
            mr: record.get(mr_col).unwrap_or_default().to_string(),
            text: record.get(ref_col).unwrap_or_default().to_string(),
        });
    }
    Ok(rows)
}

pub fn write_e2e_csv<W: Write>(writer: W, rows: &[RawRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["mr", "ref"])?;
    for row in rows {
        w.write_record([row.mr.as_str(), row.text.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Token ids framed by the begin and end markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    tokens: Vec<usize>,
}

impl Utterance {
    pub fn from_content(content: &[usize]) -> Self {
        let mut tokens = Vec::with_capacity(content.len() + 2);
        tokens.push(BOS);
        tokens.extend_from_slice(content);
        tokens.push(EOS);
        Self { tokens }
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn content(&self) -> &[usize] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    /// Content followed by the end marker: the per-step generation targets.
    pub fn targets(&self) -> &[usize] {
        &self.tokens[1..]
    }
}

#[derive(Clone, Debug)]
pub struct DataPair {
    pub frame: SemanticFrame,
    pub utterance: Utterance,
    pub raw_mr: String,
    pub raw_text: String,
    pub pairs: Vec<SlotValue>,
    /// Canonical MR key shared by co-references.
    pub key: String,
    /// Preprocessed words before vocabulary mapping (metrics use these).
    pub words: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataConfig {
    pub max_len: usize,
    pub min_freq: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            max_len: 60,
            min_freq: 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub truncated: usize,
    pub dropped_pairs: usize,
    pub skipped_empty: usize,
}

/// Reference token sequences grouped by canonical MR key.
pub type References = BTreeMap<String, Vec<Vec<String>>>;

#[derive(Clone, Debug)]
pub struct Corpus {
    pub labels: LabelSpace,
    pub vocab: Vocabulary,
    pub train: Vec<DataPair>,
    pub test: Vec<DataPair>,
    pub stats: CorpusStats,
}

struct Parsed {
    row: RawRow,
    pairs: Vec<SlotValue>,
    words: Vec<String>,
}

fn parse_rows(rows: &[RawRow]) -> Result<Vec<Parsed>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let pairs = parse_mr(&row.mr).map_err(|e| match e {
                Error::Parse { offset, message } => Error::Parse {
                    offset,
                    message: format!("row {}: {message}", i + 1),
                },
                other => other,
            })?;
            Ok(Parsed {
                row: row.clone(),
                pairs,
                words: preprocess_text(&row.text),
            })
        })
        .collect()
}

impl Corpus {
    /// Builds label space and vocabulary from the training rows and encodes
    /// both splits. Rows whose text is empty after preprocessing are skipped.
    pub fn build(train_rows: &[RawRow], test_rows: &[RawRow], cfg: &DataConfig) -> Result<Self> {
        if train_rows.is_empty() {
            return Err(Error::EmptyDataset("training split has no rows".into()));
        }
        let train = parse_rows(train_rows)?;
        let test = parse_rows(test_rows)?;
        let labels = LabelSpace::build(train.iter().map(|p| p.pairs.as_slice()))?;
        let vocab = Vocabulary::build(train.iter().map(|p| &p.words), cfg.min_freq);
        let mut stats = CorpusStats::default();
        let mut encode = |parsed: Vec<Parsed>| -> Vec<DataPair> {
            let mut out = Vec::with_capacity(parsed.len());
            for p in parsed {
                if p.words.is_empty() {
                    stats.skipped_empty += 1;
                    continue;
                }
                let (frame, dropped) = labels.encode_frame(&p.pairs);
                stats.dropped_pairs += dropped;
                let mut ids = vocab.encode(&p.words);
                if ids.len() > cfg.max_len {
                    ids.truncate(cfg.max_len);
                    stats.truncated += 1;
                }
                out.push(DataPair {
                    frame,
                    utterance: Utterance::from_content(&ids),
                    key: canonical_key(&p.pairs),
                    raw_mr: p.row.mr,
                    raw_text: p.row.text,
                    pairs: p.pairs,
                    words: p.words,
                });
            }
            out
        };
        let train = encode(train);
        let test = encode(test);
        if train.is_empty() {
            return Err(Error::EmptyDataset("no usable training rows".into()));
        }
        if stats.dropped_pairs > 0 {
            log::warn!("dropped {} slot-value pairs outside the label space", stats.dropped_pairs);
        }
        if stats.truncated > 0 {
            log::warn!("truncated {} utterances to {} tokens", stats.truncated, cfg.max_len);
        }
        if stats.skipped_empty > 0 {
            log::warn!("skipped {} rows with empty text", stats.skipped_empty);
        }
        Ok(Self {
            labels,
            vocab,
            train,
            test,
            stats,
        })
    }

    pub fn train_references(&self) -> References {
        group_references(&self.train)
    }

    pub fn test_references(&self) -> References {
        group_references(&self.test)
    }
}

/// Groups the preprocessed texts of all pairs that share an MR key.
pub fn group_references(pairs: &[DataPair]) -> References {
    let mut refs = References::new();
    for p in pairs {
        refs.entry(p.key.clone()).or_default().push(p.words.clone());
    }
    refs
}

/// A fixed-seed shuffle of the rows, truncated to `n`.
pub fn train_subset(rows: &[RawRow], n: usize) -> Vec<RawRow> {
    let mut rows = rows.to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed));
    rows.truncate(n);
    rows
}

/// All rows of the first `n_mrs` distinct MRs, in file order.
pub fn test_subset(rows: &[RawRow], n_mrs: usize) -> Result<Vec<RawRow>> {
    let mut keep = HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        let key = canonical_key(&parse_mr(&row.mr)?);
        if keep.contains(&key) {
            out.push(row.clone());
        } else if keep.len() < n_mrs {
            keep.insert(key);
            out.push(row.clone());
        }
    }
    Ok(out)
}
