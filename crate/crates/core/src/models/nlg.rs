use rand::Rng;

use super::{embed, masked_update, sample_index, ModelDims, StepInput};
use crate::coupling::st_onehot;
use crate::data::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::math::{argmax, GruCell, Graph, NodeId, ParamId, ParamStore};

/// Frame-conditioned GRU generator.
///
/// The frame (binary or a label distribution) is projected to the initial
/// hidden state; every step embeds the previous token, advances the GRU and
/// applies a softmax output layer over the vocabulary.
#[derive(Clone, Debug)]
pub struct NlgModel {
    pub dims: ModelDims,
    pub store: ParamStore,
    w_in: ParamId,
    b_in: ParamId,
    emb: ParamId,
    gru: GruCell,
    w_out: ParamId,
    b_out: ParamId,
}

/// Per-step output distributions of a teacher-forced pass.
#[derive(Clone, Debug)]
pub struct NlgSteps {
    /// `[B x v]` per step.
    pub probs: Vec<NodeId>,
    pub masks: Vec<Vec<f64>>,
}

/// What a free-running decoder feeds back into the next step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feedback {
    /// Argmax token id; no gradient through the choice.
    Greedy,
    /// Token sampled from the step distribution.
    Sample,
    /// Full step distribution, embedded as a weighted sum.
    Distribution,
    /// Argmax one-hot with identity backward.
    StraightThrough,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    /// `[B x v]` per step.
    pub probs: Vec<NodeId>,
    /// Emitted token per step and sample (`EOS` once a sample has finished).
    pub chosen: Vec<Vec<usize>>,
    /// 1 while the sample is live, including the step that emits `EOS`.
    pub masks: Vec<Vec<f64>>,
    /// Content tokens per sample, end marker excluded.
    pub tokens: Vec<Vec<usize>>,
}

impl NlgModel {
    pub fn new<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let w_in = store.add_uniform("nlg.w_in", &[dims.hidden, dims.labels], rng);
        let b_in = store.add_zeros("nlg.b_in", &[dims.hidden]);
        let emb = store.add_uniform("nlg.embedding", &[dims.vocab, dims.embed], rng);
        let gru = GruCell::new(&mut store, "nlg.gru", dims.embed, dims.hidden, rng);
        let w_out = store.add_uniform("nlg.w_out", &[dims.vocab, dims.hidden], rng);
        let b_out = store.add_zeros("nlg.b_out", &[dims.vocab]);
        Self {
            dims,
            store,
            w_in,
            b_in,
            emb,
            gru,
            w_out,
            b_out,
        }
    }

    pub fn embedding(&self) -> ParamId {
        self.emb
    }

    pub fn output_bias(&self) -> ParamId {
        self.b_out
    }

    /// `tanh(W_in · frame + b_in)` for a `[B x D]` frame node.
    pub fn init_hidden(&self, g: &mut Graph, frame: NodeId) -> Result<NodeId> {
        let w = g.param(&self.store, self.w_in);
        let b = g.param(&self.store, self.b_in);
        let a = g.affine(frame, w, Some(b))?;
        Ok(g.tanh(a))
    }

    fn step(&self, g: &mut Graph, input: &StepInput, h: NodeId) -> Result<(NodeId, NodeId)> {
        let table = g.param(&self.store, self.emb);
        let x = embed(g, table, input)?;
        let h = self.gru.step(g, &self.store, x, h)?;
        let w = g.param(&self.store, self.w_out);
        let b = g.param(&self.store, self.b_out);
        let logits = g.affine(h, w, Some(b))?;
        Ok((h, g.softmax(logits)))
    }

    fn check_frame(&self, g: &Graph, frame: NodeId) -> Result<usize> {
        let t = g.value(frame);
        if t.cols() != self.dims.labels {
            return Err(Error::shape(format!(
                "generator expects {} labels, frame has shape {:?}",
                self.dims.labels,
                t.shape()
            )));
        }
        Ok(t.rows())
    }

    /// Step `t` consumes the begin marker (t = 0) or gold token `t - 1` and
    /// predicts `targets[b][t]`. `targets` are content plus end marker.
    pub fn teacher_forced(
        &self,
        g: &mut Graph,
        frame: NodeId,
        targets: &[Vec<usize>],
    ) -> Result<NlgSteps> {
        let batch = self.check_frame(g, frame)?;
        if targets.len() != batch {
            return Err(Error::contract(format!(
                "{} targets for a batch of {batch}",
                targets.len()
            )));
        }
        if targets.iter().any(Vec::is_empty) {
            return Err(Error::contract("empty generation target"));
        }
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0);
        let mut h = self.init_hidden(g, frame)?;
        let mut out = NlgSteps {
            probs: Vec::with_capacity(steps),
            masks: Vec::with_capacity(steps),
        };
        for t in 0..steps {
            let ids: Vec<usize> = targets
                .iter()
                .map(|s| match t {
                    0 => BOS,
                    _ => s.get(t - 1).copied().unwrap_or(PAD),
                })
                .collect();
            let mask: Vec<f64> = targets
                .iter()
                .map(|s| if t < s.len() { 1.0 } else { 0.0 })
                .collect();
            let (h_new, probs) = self.step(g, &StepInput::Ids(ids), h)?;
            h = masked_update(g, h, h_new, &mask)?;
            out.probs.push(probs);
            out.masks.push(mask);
        }
        Ok(out)
    }

    /// Autoregressive decoding for at most `max_len` steps.
    pub fn decode<R: Rng>(
        &self,
        g: &mut Graph,
        frame: NodeId,
        feedback: Feedback,
        max_len: usize,
        rng: &mut R,
    ) -> Result<Decoded> {
        let batch = self.check_frame(g, frame)?;
        let mut h = self.init_hidden(g, frame)?;
        let mut input = StepInput::Ids(vec![BOS; batch]);
        let mut live = vec![true; batch];
        let mut out = Decoded {
            probs: Vec::new(),
            chosen: Vec::new(),
            masks: Vec::new(),
            tokens: vec![Vec::new(); batch],
        };
        for _ in 0..max_len {
            if !live.iter().any(|&l| l) {
                break;
            }
            let mask: Vec<f64> = live.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
            let (h_new, probs) = self.step(g, &input, h)?;
            h = masked_update(g, h, h_new, &mask)?;
            let pv = g.value(probs).clone();
            let mut chosen = Vec::with_capacity(batch);
            for (b, alive) in live.iter_mut().enumerate() {
                if !*alive {
                    chosen.push(EOS);
                    continue;
                }
                let tok = match feedback {
                    Feedback::Sample => sample_index(pv.row(b), rng),
                    _ => argmax(pv.row(b)),
                };
                if tok == EOS {
                    *alive = false;
                } else {
                    out.tokens[b].push(tok);
                }
                chosen.push(tok);
            }
            input = match feedback {
                Feedback::Greedy | Feedback::Sample => StepInput::Ids(chosen.clone()),
                Feedback::Distribution => StepInput::Dist(probs),
                Feedback::StraightThrough => StepInput::Dist(st_onehot(g, probs)),
            };
            out.probs.push(probs);
            out.chosen.push(chosen);
            out.masks.push(mask);
        }
        Ok(out)
    }
}
