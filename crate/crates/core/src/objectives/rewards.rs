use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::math::{Tensor, LOG_FLOOR};
use crate::metrics::{rouge_l, sample_f1, sentence_bleu};
use crate::models::{Made, RnnLm};

/// `Σ_d t log p + (1 - t) log(1 - p)` with the log floor applied.
pub fn bernoulli_loglik(probs: &[f64], target: &[f64]) -> f64 {
    probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| t * p.max(LOG_FLOOR).ln() + (1.0 - t) * (1.0 - p).max(LOG_FLOOR).ln())
        .sum()
}

/// Per-sample log-likelihood of the original frames under the predicted label
/// probabilities, both `[B x D]`.
pub fn reward_reconstruction_primal(probs: &Tensor, frames: &Tensor) -> Result<Vec<f64>> {
    if probs.shape() != frames.shape() {
        return Err(Error::shape(format!(
            "reconstruction: {:?} vs {:?}",
            probs.shape(),
            frames.shape()
        )));
    }
    Ok((0..probs.rows())
        .map(|r| bernoulli_loglik(probs.row(r), frames.row(r)))
        .collect())
}

/// Per-sample mean over live steps of `log p(target_t)` from per-step
/// distributions `[B x v]`.
pub fn reward_reconstruction_dual(step_probs: &[Tensor], targets: &[Vec<usize>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(targets.len());
    for (b, seq) in targets.iter().enumerate() {
        if seq.is_empty() || seq.len() > step_probs.len() {
            return Err(Error::Reward(format!(
                "target of {} tokens against {} steps",
                seq.len(),
                step_probs.len()
            )));
        }
        let total: f64 = seq
            .iter()
            .enumerate()
            .map(|(t, &tok)| step_probs[t].get(b, tok).max(LOG_FLOOR).ln())
            .sum();
        out.push(total / seq.len() as f64);
    }
    Ok(out)
}

/// Equal-weight mean of smoothed sentence BLEU and ROUGE-L F1.
pub fn reward_auto_metric_nlg(hypothesis: &[String], references: &[Vec<String>]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Reward("empty reference set".into()));
    }
    let b = sentence_bleu(hypothesis, references, 4)?;
    let r = rouge_l(hypothesis, references)?;
    Ok(0.5 * (b + r))
}

pub fn reward_auto_metric_nlu(prediction: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    sample_f1(prediction, gold)
}

/// Length-normalised language-model log-probability of each content sequence.
pub fn reward_lm(lm: &RnnLm, utterances: &[Vec<usize>]) -> Result<Vec<f64>> {
    if utterances.iter().any(Vec::is_empty) {
        return Err(Error::Reward("empty utterance".into()));
    }
    if utterances.is_empty() {
        return Ok(Vec::new());
    }
    lm.normalized_logprobs(utterances)
}

/// Ensemble-average MADE log-likelihood of each (binary) frame row.
pub fn reward_made(made: &Made, frames: &Tensor) -> Result<Vec<f64>> {
    made.logprobs(frames)
}
