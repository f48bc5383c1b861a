use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::DataPair;
use super::labels::SemanticFrame;
use super::vocab::{BOS, PAD};
use crate::error::{Error, Result};
use crate::math::Tensor;

/// A padded mini-batch. Sequences are the generation targets (content then
/// end marker); step `t` of sample `i` is real when `t < lengths[i]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub frames: Tensor,
    pub gold: Vec<SemanticFrame>,
    pub targets: Vec<Vec<usize>>,
    pub keys: Vec<String>,
    pub steps: usize,
}

impl Batch {
    pub fn new(pairs: &[&DataPair], indices: Vec<usize>) -> Result<Self> {
        let dim = pairs.first().map_or(0, |p| p.frame.len());
        let rows: Vec<Vec<f64>> = pairs.iter().map(|p| p.frame.to_vec()).collect();
        let frames = if rows.is_empty() {
            Tensor::zeros(&[0, dim])
        } else {
            Tensor::from_rows(&rows)?
        };
        let targets: Vec<Vec<usize>> = pairs
            .iter()
            .map(|p| p.utterance.targets().to_vec())
            .collect();
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            indices,
            frames,
            gold: pairs.iter().map(|p| p.frame.clone()).collect(),
            targets,
            keys: pairs.iter().map(|p| p.key.clone()).collect(),
            steps,
        })
    }

    pub fn size(&self) -> usize {
        self.targets.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.targets.iter().map(Vec::len).collect()
    }

    /// Gold token at step `t` for each sample (`PAD` past the end).
    pub fn step_targets(&self, t: usize) -> Vec<usize> {
        self.targets
            .iter()
            .map(|s| s.get(t).copied().unwrap_or(PAD))
            .collect()
    }

    /// Teacher-forced input at step `t`: the begin marker, then the previous gold token.
    pub fn step_inputs(&self, t: usize) -> Vec<usize> {
        if t == 0 {
            return vec![BOS; self.size()];
        }
        self.step_targets(t - 1)
    }

    pub fn step_mask(&self, t: usize) -> Vec<f64> {
        self.targets
            .iter()
            .map(|s| if t < s.len() { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Shuffled index batches for one epoch; the last batch may be short.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Padded batches over `data` in a seeded shuffled order.
pub fn batch_iter(
    data: &[DataPair],
    batch_size: usize,
    seed: u64,
) -> Result<impl Iterator<Item = Result<Batch>> + '_> {
    let plan = epoch_batches(data.len(), batch_size, seed)?;
    Ok(plan.into_iter().map(move |idx| {
        let pairs: Vec<&DataPair> = idx.iter().map(|&i| &data[i]).collect();
        Batch::new(&pairs, idx)
    }))
}
