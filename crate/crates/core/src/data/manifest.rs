use sha1::{Digest, Sha1};

use super::dataset::Corpus;

/// Line-oriented description of a loaded corpus: counts, the label space and
/// the vocabulary, one entry per line.
pub fn corpus_manifest(corpus: &Corpus) -> String {
    let mut out = String::new();
    let refs = corpus.test_references();
    out.push_str(&format!("train_pairs = {}\n", corpus.train.len()));
    out.push_str(&format!("test_pairs = {}\n", corpus.test.len()));
    out.push_str(&format!("test_mrs = {}\n", refs.len()));
    out.push_str(&format!("labels = {}\n", corpus.labels.len()));
    out.push_str(&format!("vocab = {}\n", corpus.vocab.len()));
    out.push_str(&format!("truncated = {}\n", corpus.stats.truncated));
    out.push_str(&format!("dropped_pairs = {}\n", corpus.stats.dropped_pairs));
    out.push_str(&format!("skipped_empty = {}\n", corpus.stats.skipped_empty));
    out.push_str("[labels]\n");
    for l in corpus.labels.labels() {
        out.push_str(&format!("{}\t{}\t{}\n", l.index, l.slot, l.value));
    }
    out.push_str("[vocab]\n");
    for (i, t) in corpus.vocab.tokens().iter().enumerate() {
        out.push_str(&format!("{i}\t{t}\n"));
    }
    out
}

/// Hash of `content` as git computes it for a blob object.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

pub(crate) fn sha1_hex(content: &[u8]) -> String {
    hex(&Sha1::digest(content))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
