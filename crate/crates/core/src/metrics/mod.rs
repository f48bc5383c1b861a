//! BLEU, ROUGE and micro-F1.
//!
//! Corpus BLEU (reporting) and smoothed sentence BLEU (reward) are separate
//! code paths; the corpus path never smooths.

mod report;

pub use report::EvalReport;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub type Tokens = [String];

/// Pooled TP/FP/FN over all samples. Zero when precision and recall are both zero.
pub fn micro_f1(predictions: &[BTreeSet<usize>], golds: &[BTreeSet<usize>]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} gold frames",
            predictions.len(),
            golds.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, g) in predictions.iter().zip(golds) {
        let hit = p.intersection(g).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    Ok(f1_from_counts(tp, fp, fn_))
}

/// F1 of a single prediction against its gold set.
pub fn sample_f1(prediction: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    let hit = prediction.intersection(gold).count();
    f1_from_counts(hit, prediction.len() - hit, gold.len() - hit)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

pub fn ngram_counts(tokens: &Tokens, n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Hypothesis n-grams clipped by the maximum count in any single reference,
/// and the total number of hypothesis n-grams.
fn clipped_matches(hyp: &Tokens, refs: &[Vec<String>], n: usize) -> (usize, usize) {
    let counts = ngram_counts(hyp, n);
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in refs {
        for (g, c) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = counts
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// Length of the reference closest to `len`; ties prefer the shorter one.
fn closest_ref_len(len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(len), r))
        .unwrap_or(0)
}

fn check_refs(refs: &[Vec<Vec<String>>], hyps: usize) -> Result<()> {
    if refs.len() != hyps {
        return Err(Error::contract(format!(
            "{} reference sets for {hyps} hypotheses",
            refs.len()
        )));
    }
    if refs.iter().any(Vec::is_empty) {
        return Err(Error::contract("empty reference set"));
    }
    Ok(())
}

/// Corpus BLEU: clipped n-gram precisions pooled over the corpus, geometric
/// mean over orders `1..=max_n`, brevity penalty against the closest
/// reference lengths. Orders for which the corpus has no hypothesis n-grams
/// at all are left out of the mean.
pub fn bleu(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>], max_n: usize) -> Result<f64> {
    check_refs(references, hypotheses.len())?;
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, refs) in hypotheses.iter().zip(references) {
        for n in 1..=max_n {
            let (m, t) = clipped_matches(h, refs, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
        hyp_len += h.len();
        ref_len += closest_ref_len(h.len(), refs);
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..max_n {
        if total[n] == 0 {
            continue;
        }
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[n] as f64 / total[n] as f64).ln();
        orders += 1;
    }
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(bp * (log_sum / orders as f64).exp())
}

/// Sentence BLEU with add-one smoothing on orders two and up.
pub fn sentence_bleu(hypothesis: &Tokens, references: &[Vec<String>], max_n: usize) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::contract("empty reference set"));
    }
    if hypothesis.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, t) = clipped_matches(hypothesis, references, n);
        let p = if n == 1 {
            m as f64 / t as f64
        } else {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    let c = hypothesis.len();
    let r = closest_ref_len(c, references);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * (log_sum / max_n as f64).exp())
}

fn f1(overlap: usize, hyp_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hyp_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

fn rouge_n_single(hyp: &Tokens, reference: &Tokens, n: usize) -> f64 {
    let hc = ngram_counts(hyp, n);
    let rc = ngram_counts(reference, n);
    let (ht, rt): (usize, usize) = (hc.values().sum(), rc.values().sum());
    if ht == 0 || rt == 0 {
        return if hyp == reference { 1.0 } else { 0.0 };
    }
    let overlap = hc
        .iter()
        .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    f1(overlap, ht, rt)
}

/// Best n-gram overlap F1 over the references.
pub fn rouge_n(hypothesis: &Tokens, references: &[Vec<String>], n: usize) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::contract("empty reference set"));
    }
    Ok(references
        .iter()
        .map(|r| rouge_n_single(hypothesis, r, n))
        .fold(0.0, f64::max))
}

pub fn lcs_len(a: &Tokens, b: &Tokens) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Best LCS-based F1 over the references.
pub fn rouge_l(hypothesis: &Tokens, references: &[Vec<String>]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::contract("empty reference set"));
    }
    Ok(references
        .iter()
        .map(|r| {
            if hypothesis.is_empty() || r.is_empty() {
                return if hypothesis == r.as_slice() { 1.0 } else { 0.0 };
            }
            f1(lcs_len(hypothesis, r), hypothesis.len(), r.len())
        })
        .fold(0.0, f64::max))
}

/// Sample means of ROUGE-1, ROUGE-2 and ROUGE-L.
pub fn corpus_rouge(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<(f64, f64, f64)> {
    check_refs(references, hypotheses.len())?;
    if hypotheses.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let (mut r1, mut r2, mut rl) = (0.0, 0.0, 0.0);
    for (h, refs) in hypotheses.iter().zip(references) {
        r1 += rouge_n(h, refs, 1)?;
        r2 += rouge_n(h, refs, 2)?;
        rl += rouge_l(h, refs)?;
    }
    let n = hypotheses.len() as f64;
    Ok((r1 / n, r2 / n, rl / n))
}
