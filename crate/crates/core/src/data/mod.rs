//! Dataset ingestion: MR parsing, text preprocessing, label space,
//! vocabulary, paired examples and batching.

mod batch;
mod dataset;
mod labels;
mod manifest;
mod mr;
pub mod synth;
mod text;
mod vocab;

pub use batch::{batch_iter, epoch_batches, Batch};
pub use dataset::{
    group_references, read_e2e_csv, read_e2e_csv_from, test_subset, train_subset, write_e2e_csv,
    Corpus, CorpusStats, DataConfig, DataPair, RawRow, References, Utterance,
};
pub use labels::{LabelSpace, SemanticFrame, SlotValueLabel};
pub use manifest::{corpus_manifest, git_blob_hash};
pub(crate) use manifest::sha1_hex;
pub use mr::{canonical_key, format_mr, parse_mr, SlotValue};
pub use text::{lemmatize, preprocess_text};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};
