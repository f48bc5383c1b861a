//! The generator, the understanding model, the RNN language model and the
//! MADE frame estimator, plus checkpoint files.

mod checkpoint;
mod lm;
mod made;
mod nlg;
mod nlu;

pub use checkpoint::{labels_hash, load_checkpoint, save_checkpoint, vocab_hash, CheckpointMeta};
pub use lm::{pretrain_lm, RnnLm};
pub use made::{made_build_masks, pretrain_made, Made, MaskSet};
pub use nlg::{Decoded, Feedback, NlgModel, NlgSteps};
pub use nlu::NluModel;

use rand::Rng;

use crate::coupling::embed_distribution;
use crate::data::PAD;
use crate::error::{Error, Result};
use crate::math::{AdamConfig, Graph, NodeId, Tensor};

/// Layer sizes shared by the sequence models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    /// Label-space size `D`.
    pub labels: usize,
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

/// One step of a batched token sequence.
#[derive(Clone, Debug)]
pub enum StepInput {
    Ids(Vec<usize>),
    /// Rows are distributions (or one-hot vectors) over the vocabulary.
    Dist(NodeId),
}

/// A padded batch of sequences; `masks[t][b]` is 1 while sample `b` is live.
#[derive(Clone, Debug, Default)]
pub struct SeqInput {
    pub steps: Vec<StepInput>,
    pub masks: Vec<Vec<f64>>,
}

impl SeqInput {
    pub fn from_sequences(seqs: &[Vec<usize>]) -> Self {
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = SeqInput::default();
        for t in 0..steps {
            out.steps.push(StepInput::Ids(
                seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect(),
            ));
            out.masks
                .push(seqs.iter().map(|s| if t < s.len() { 1.0 } else { 0.0 }).collect());
        }
        out
    }

    pub fn from_dists(steps: Vec<NodeId>, masks: Vec<Vec<f64>>) -> Self {
        Self {
            steps: steps.into_iter().map(StepInput::Dist).collect(),
            masks,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.masks.first().map_or(0, Vec::len)
    }

    /// Live length of every sample.
    pub fn lengths(&self) -> Vec<usize> {
        (0..self.batch_size())
            .map(|b| self.masks.iter().filter(|m| m[b] > 0.0).count())
            .collect()
    }
}

pub(crate) fn embed(g: &mut Graph, table: NodeId, input: &StepInput) -> Result<NodeId> {
    match input {
        StepInput::Ids(ids) => g.gather(table, ids),
        StepInput::Dist(d) => embed_distribution(g, *d, table),
    }
}

/// Keeps `h_old` where the mask is 0 and takes `h_new` where it is 1.
pub(crate) fn masked_update(
    g: &mut Graph,
    h_old: NodeId,
    h_new: NodeId,
    mask: &[f64],
) -> Result<NodeId> {
    if mask.iter().all(|&m| m == 1.0) {
        return Ok(h_new);
    }
    let h = g.value(h_new).cols();
    let data = mask.iter().flat_map(|&m| std::iter::repeat(m).take(h)).collect();
    let z = g.input(Tensor::matrix(mask.len(), h, data)?);
    g.blend(z, h_old, h_new)
}

pub(crate) fn zero_state(g: &mut Graph, batch: usize, hidden: usize) -> NodeId {
    g.input(Tensor::zeros(&[batch, hidden]))
}

/// Draws an index from a probability row.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Optimiser settings for reward-model pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed: 7,
            adam: AdamConfig::default(),
        }
    }
}

pub(crate) fn check_nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::EmptyDataset(format!("{what} is empty")));
    }
    Ok(())
}
