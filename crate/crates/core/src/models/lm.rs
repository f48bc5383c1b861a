use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_nonempty, embed, masked_update, zero_state, PretrainConfig, StepInput};
use crate::data::{epoch_batches, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::math::{GruCell, Graph, NodeId, ParamId, ParamStore, Tensor};

/// GRU language model over token ids.
#[derive(Clone, Debug)]
pub struct RnnLm {
    pub vocab: usize,
    pub store: ParamStore,
    emb: ParamId,
    gru: GruCell,
    w_out: ParamId,
    b_out: ParamId,
}

/// Per-step log-probabilities of the observed tokens.
struct Scored {
    /// `[B x 1]` per step.
    logp: Vec<NodeId>,
    /// Content positions only.
    content: Vec<Vec<f64>>,
    /// Content positions plus the end marker.
    full: Vec<Vec<f64>>,
}

impl RnnLm {
    pub fn new<R: rand::Rng>(vocab: usize, embed_size: usize, hidden: usize, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let emb = store.add_uniform("lm.embedding", &[vocab, embed_size], rng);
        let gru = GruCell::new(&mut store, "lm.gru", embed_size, hidden, rng);
        let w_out = store.add_uniform("lm.w_out", &[vocab, hidden], rng);
        let b_out = store.add_zeros("lm.b_out", &[vocab]);
        Self {
            vocab,
            store,
            emb,
            gru,
            w_out,
            b_out,
        }
    }

    pub fn output_bias(&self) -> ParamId {
        self.b_out
    }

    /// Distribution over the next token after the given prefix (begin marker implied).
    pub fn next_distribution(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut h = zero_state(&mut g, 1, self.gru.hidden_size);
        let mut probs = None;
        for &tok in std::iter::once(&BOS).chain(prefix) {
            let (h_new, p) = self.step(&mut g, tok_input(tok), h)?;
            h = h_new;
            probs = Some(p);
        }
        let p = probs.expect("at least the begin marker");
        Ok(g.value(p).data().to_vec())
    }

    fn step(&self, g: &mut Graph, input: StepInput, h: NodeId) -> Result<(NodeId, NodeId)> {
        let table = g.param(&self.store, self.emb);
        let x = embed(g, table, &input)?;
        let h = self.gru.step(g, &self.store, x, h)?;
        let w = g.param(&self.store, self.w_out);
        let b = g.param(&self.store, self.b_out);
        let logits = g.affine(h, w, Some(b))?;
        Ok((h, g.softmax(logits)))
    }

    fn score(&self, g: &mut Graph, seqs: &[Vec<usize>]) -> Result<Scored> {
        if seqs.is_empty() || seqs.iter().any(Vec::is_empty) {
            return Err(Error::contract("language model needs non-empty utterances"));
        }
        if let Some(bad) = seqs.iter().flatten().find(|&&t| t >= self.vocab) {
            return Err(Error::InvalidLabel(format!("token id {bad} >= {}", self.vocab)));
        }
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0) + 1;
        let mut h = zero_state(g, seqs.len(), self.gru.hidden_size);
        let mut out = Scored {
            logp: Vec::with_capacity(steps),
            content: Vec::with_capacity(steps),
            full: Vec::with_capacity(steps),
        };
        for t in 0..steps {
            let inputs: Vec<usize> = seqs
                .iter()
                .map(|s| match t {
                    0 => BOS,
                    _ => s.get(t - 1).copied().unwrap_or(PAD),
                })
                .collect();
            let targets: Vec<usize> = seqs
                .iter()
                .map(|s| match t.cmp(&s.len()) {
                    std::cmp::Ordering::Less => s[t],
                    std::cmp::Ordering::Equal => EOS,
                    std::cmp::Ordering::Greater => PAD,
                })
                .collect();
            let full: Vec<f64> = seqs.iter().map(|s| if t <= s.len() { 1.0 } else { 0.0 }).collect();
            let content: Vec<f64> = seqs.iter().map(|s| if t < s.len() { 1.0 } else { 0.0 }).collect();
            let (h_new, probs) = self.step(g, StepInput::Ids(inputs), h)?;
            h = masked_update(g, h, h_new, &full)?;
            let p = g.pick(probs, &targets)?;
            out.logp.push(g.log(p));
            out.content.push(content);
            out.full.push(full);
        }
        Ok(out)
    }

    /// Mean per-token negative log-likelihood (end marker included).
    pub fn nll_loss(&self, g: &mut Graph, seqs: &[Vec<usize>]) -> Result<NodeId> {
        let scored = self.score(g, seqs)?;
        let count: f64 = scored.full.iter().flatten().sum();
        let mut total = None;
        for (lp, mask) in scored.logp.iter().zip(&scored.full) {
            let m = g.input(Tensor::new(vec![mask.len(), 1], mask.clone())?);
            let term = g.mul(*lp, m)?;
            let s = g.sum(term);
            total = Some(match total {
                None => s,
                Some(acc) => g.add(acc, s)?,
            });
        }
        let total = total.expect("at least one step");
        Ok(g.scale(total, -1.0 / count))
    }

    /// Sum of `log p(token_i | prefix)` over the content tokens of each sequence.
    pub fn logprobs(&self, seqs: &[Vec<usize>]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let scored = self.score(&mut g, seqs)?;
        let mut out = vec![0.0; seqs.len()];
        for (lp, mask) in scored.logp.iter().zip(&scored.content) {
            for (b, v) in g.value(*lp).data().iter().enumerate() {
                out[b] += mask[b] * v;
            }
        }
        Ok(out)
    }

    pub fn logprob(&self, content: &[usize]) -> Result<f64> {
        Ok(self.logprobs(&[content.to_vec()])?[0])
    }

    /// Log-probability divided by the number of content tokens.
    pub fn normalized_logprobs(&self, seqs: &[Vec<usize>]) -> Result<Vec<f64>> {
        let lp = self.logprobs(seqs)?;
        Ok(lp.iter().zip(seqs).map(|(v, s)| v / s.len() as f64).collect())
    }
}

fn tok_input(tok: usize) -> StepInput {
    StepInput::Ids(vec![tok])
}

/// Trains a language model on content-token sequences. Returns the model and
/// the average per-token NLL of every epoch.
pub fn pretrain_lm(
    sentences: &[Vec<usize>],
    vocab: usize,
    embed_size: usize,
    hidden: usize,
    cfg: &PretrainConfig,
) -> Result<(RnnLm, Vec<f64>)> {
    check_nonempty(sentences, "language-model corpus")?;
    let usable: Vec<Vec<usize>> = sentences.iter().filter(|s| !s.is_empty()).cloned().collect();
    check_nonempty(&usable, "language-model corpus")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lm = RnnLm::new(vocab, embed_size, hidden, &mut rng);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let plan = epoch_batches(usable.len(), cfg.batch_size, cfg.seed.wrapping_add(epoch as u64))?;
        let (mut total, mut tokens) = (0.0, 0.0);
        for idx in plan {
            let batch: Vec<Vec<usize>> = idx.iter().map(|&i| usable[i].clone()).collect();
            let n: f64 = batch.iter().map(|s| s.len() as f64 + 1.0).sum();
            let mut g = Graph::new();
            let loss = lm.nll_loss(&mut g, &batch)?;
            let value = g.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: 0,
                    cycle: "lm-pretrain".into(),
                    detail: format!("loss {value}"),
                });
            }
            total += value * n;
            tokens += n;
            g.backward_into(loss, &mut [&mut lm.store])?;
            lm.store.clip_grad_norm(cfg.clip_norm);
            lm.store.adam_update(cfg.learning_rate, &cfg.adam)?;
        }
        curve.push(total / tokens);
    }
    Ok((lm, curve))
}
