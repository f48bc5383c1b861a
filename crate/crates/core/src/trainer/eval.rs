use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::cycle::DualModels;
use crate::coupling::THRESHOLD;
use crate::data::{format_mr, group_references, DataPair, LabelSpace, SemanticFrame, Vocabulary, EOS};
use crate::error::{Error, Result};
use crate::math::Tensor;
use crate::metrics::{bleu, corpus_rouge, micro_f1, EvalReport};
use crate::objectives::{bernoulli_loglik, reward_reconstruction_dual};

/// Anything that maps token sequences (content plus end marker) to frames.
pub trait Understand: Sync {
    fn understand(&self, seqs: &[Vec<usize>]) -> Result<Vec<SemanticFrame>>;
}

/// Anything that maps frames to word sequences.
pub trait Generate: Sync {
    fn generate(&self, frames: &[SemanticFrame]) -> Result<Vec<Vec<String>>>;
}

/// Trained models seen through the evaluation traits.
pub struct ModelPair<'a> {
    pub models: &'a DualModels,
    pub vocab: &'a Vocabulary,
    pub share_embeddings: bool,
    pub max_len: usize,
}

fn frames_tensor(frames: &[SemanticFrame]) -> Result<Tensor> {
    Tensor::from_rows(&frames.iter().map(SemanticFrame::to_vec).collect::<Vec<_>>())
}

impl Understand for ModelPair<'_> {
    fn understand(&self, seqs: &[Vec<usize>]) -> Result<Vec<SemanticFrame>> {
        let q = self.models.nlu_probs(seqs, self.share_embeddings)?;
        Ok((0..q.rows()).map(|r| SemanticFrame::from_probs(q.row(r), THRESHOLD)).collect())
    }
}

impl Generate for ModelPair<'_> {
    fn generate(&self, frames: &[SemanticFrame]) -> Result<Vec<Vec<String>>> {
        let tokens = self.models.nlg_greedy(&frames_tensor(frames)?, self.max_len)?;
        Ok(tokens.iter().map(|t| self.vocab.decode(t)).collect())
    }
}

/// Applies `f` to fixed-size batches of `items`, spreading batches over up to
/// `threads` workers. Batch boundaries do not depend on the thread count, so
/// the output is identical for any number of workers.
pub fn batched_map<T: Sync, U: Send>(
    items: &[T],
    batch_size: usize,
    threads: usize,
    f: impl Fn(&[T]) -> Result<Vec<U>> + Sync,
) -> Result<Vec<U>> {
    let batches: Vec<&[T]> = items.chunks(batch_size.max(1)).collect();
    let threads = threads.clamp(1, batches.len().max(1));
    if threads == 1 {
        let mut out = Vec::with_capacity(items.len());
        for b in batches {
            out.extend(f(b)?);
        }
        return Ok(out);
    }
    let per = batches.len().div_ceil(threads);
    let results: Vec<Result<Vec<U>>> = std::thread::scope(|s| {
        let handles: Vec<_> = batches
            .chunks(per)
            .map(|group| {
                let f = &f;
                s.spawn(move || {
                    let mut out = Vec::new();
                    for b in group {
                        out.extend(f(b)?);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Scores understanding over every test pair and generation once per distinct
/// MR, in first-occurrence order, against all references of that MR.
pub fn evaluate_with(
    nlu: &dyn Understand,
    nlg: &dyn Generate,
    test: &[DataPair],
    batch_size: usize,
    threads: usize,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("no test pairs to evaluate".into()));
    }
    let seqs: Vec<Vec<usize>> = test.iter().map(|p| p.utterance.targets().to_vec()).collect();
    let predicted = batched_map(&seqs, batch_size, threads, |c| nlu.understand(c))?;
    let pred_sets: Vec<BTreeSet<usize>> = predicted.iter().map(SemanticFrame::active).collect();
    let gold_sets: Vec<BTreeSet<usize>> = test.iter().map(|p| p.frame.active()).collect();
    let f1 = micro_f1(&pred_sets, &gold_sets)?;

    let refs = group_references(test);
    let mut seen = BTreeSet::new();
    let mut frames = Vec::new();
    let mut ref_sets = Vec::new();
    for p in test {
        if seen.insert(p.key.as_str()) {
            frames.push(p.frame.clone());
            ref_sets.push(refs[&p.key].clone());
        }
    }
    let hyps = batched_map(&frames, batch_size, threads, |c| nlg.generate(c))?;
    let b = bleu(&hyps, &ref_sets, 4)?;
    let (r1, r2, rl) = corpus_rouge(&hyps, &ref_sets)?;
    Ok(EvalReport {
        micro_f1: f1,
        bleu: b,
        rouge_1: r1,
        rouge_2: r2,
        rouge_l: rl,
        nlu_samples: test.len(),
        nlg_samples: frames.len(),
    })
}

pub fn evaluate(
    models: &DualModels,
    vocab: &Vocabulary,
    test: &[DataPair],
    share_embeddings: bool,
    max_len: usize,
    threads: usize,
) -> Result<EvalReport> {
    let pair = ModelPair {
        models,
        vocab,
        share_embeddings,
        max_len,
    };
    evaluate_with(&pair, &pair, test, 64, threads)
}

/// Both cycles run on one test sample with greedy decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub index: usize,
    /// Primal cycle: input frame, generated sentence, recovered frame.
    pub frame: String,
    pub generated: String,
    pub reconstructed_frame: String,
    pub primal_exact: bool,
    /// Mean per-label cross-entropy of the recovered frame against the input.
    pub primal_loss: f64,
    /// Log-likelihood of the input frame under the recovered label probabilities.
    pub primal_reconstruction: f64,
    /// Dual cycle: input sentence, predicted frame, regenerated sentence.
    pub utterance: String,
    pub predicted_frame: String,
    pub regenerated: String,
    pub dual_exact: bool,
    /// Mean per-token cross-entropy of the input sentence given the predicted frame.
    pub dual_loss: f64,
    /// Mean per-token log-likelihood of the input sentence given the predicted frame.
    pub dual_reconstruction: f64,
}

impl CycleTrace {
    pub fn render(&self) -> String {
        let mark = |exact: bool| if exact { "  [exact reconstruction]" } else { "" };
        format!(
            "sample {}\n  primal  x      : {}\n          f(x)   : {}\n          g(f(x)): {}{}\n          loss {:.4}  reconstruction log-lik {:.4}\n  dual    y      : {}\n          g(y)   : {}\n          f(g(y)): {}{}\n          loss {:.4}  reconstruction log-lik {:.4}\n",
            self.index,
            self.frame,
            self.generated,
            self.reconstructed_frame,
            mark(self.primal_exact),
            self.primal_loss,
            self.primal_reconstruction,
            self.utterance,
            self.predicted_frame,
            self.regenerated,
            mark(self.dual_exact),
            self.dual_loss,
            self.dual_reconstruction,
        )
    }
}

/// Traces for the first `count` test samples.
pub fn cycle_traces(
    models: &DualModels,
    labels: &LabelSpace,
    vocab: &Vocabulary,
    test: &[DataPair],
    count: usize,
    share_embeddings: bool,
    max_len: usize,
) -> Result<Vec<CycleTrace>> {
    let sample = &test[..count.min(test.len())];
    if sample.is_empty() {
        return Ok(Vec::new());
    }
    let show_frame = |f: &SemanticFrame| format_mr(&labels.decode_frame(f));
    let show_words = |t: &[usize]| vocab.decode(t).join(" ");
    let dim = labels.len() as f64;

    let frames: Vec<SemanticFrame> = sample.iter().map(|p| p.frame.clone()).collect();
    let x = frames_tensor(&frames)?;
    let generated = models.nlg_greedy(&x, max_len)?;
    let gen_seqs: Vec<Vec<usize>> = generated
        .iter()
        .map(|t| t.iter().copied().chain([EOS]).collect())
        .collect();
    let q_primal = models.nlu_probs(&gen_seqs, share_embeddings)?;

    let targets: Vec<Vec<usize>> = sample.iter().map(|p| p.utterance.targets().to_vec()).collect();
    let q_dual = models.nlu_probs(&targets, share_embeddings)?;
    let predicted: Vec<SemanticFrame> = (0..q_dual.rows())
        .map(|r| SemanticFrame::from_probs(q_dual.row(r), THRESHOLD))
        .collect();
    let pred_x = frames_tensor(&predicted)?;
    let regenerated = models.nlg_greedy(&pred_x, max_len)?;
    let tf = models.nlg_teacher_forced(&pred_x, &targets)?;
    let dual_ll = reward_reconstruction_dual(&tf, &targets)?;

    let mut out = Vec::with_capacity(sample.len());
    for (i, p) in sample.iter().enumerate() {
        let recon = SemanticFrame::from_probs(q_primal.row(i), THRESHOLD);
        let primal_ll = bernoulli_loglik(q_primal.row(i), x.row(i));
        let trace = CycleTrace {
            index: i,
            frame: show_frame(&p.frame),
            generated: show_words(&generated[i]),
            reconstructed_frame: show_frame(&recon),
            primal_exact: recon == p.frame,
            primal_loss: -primal_ll / dim,
            primal_reconstruction: primal_ll,
            utterance: show_words(p.utterance.content()),
            predicted_frame: show_frame(&predicted[i]),
            regenerated: show_words(&regenerated[i]),
            dual_exact: regenerated[i] == p.utterance.content(),
            dual_loss: -dual_ll[i],
            dual_reconstruction: dual_ll[i],
        };
        if !(trace.primal_loss.is_finite() && trace.dual_loss.is_finite()) {
            return Err(Error::contract(format!("non-finite trace loss for sample {i}")));
        }
        out.push(trace);
    }
    Ok(out)
}
