use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_nonempty, PretrainConfig};
use crate::data::{epoch_batches, SemanticFrame};
use crate::error::{Error, Result};
use crate::math::{Graph, NodeId, ParamId, ParamStore, Tensor};

/// Connectivity for one autoregressive ordering.
///
/// `ordering[d]` is the position of input `d` in the factorisation. A hidden
/// unit with degree `m` sees inputs whose position is at most `m`; output `d`
/// sees hidden units whose degree is strictly below `ordering[d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub ordering: Vec<usize>,
    pub hidden_degrees: Vec<usize>,
    /// `[hidden x D]`.
    pub hidden_mask: Tensor,
    /// `[D x hidden]`.
    pub output_mask: Tensor,
}

impl MaskSet {
    pub fn from_ordering(ordering: Vec<usize>, hidden_degrees: Vec<usize>) -> Self {
        let (d, h) = (ordering.len(), hidden_degrees.len());
        let mut hidden_mask = Tensor::zeros(&[h, d]);
        let mut output_mask = Tensor::zeros(&[d, h]);
        for (k, &m) in hidden_degrees.iter().enumerate() {
            for (i, &pos) in ordering.iter().enumerate() {
                if m >= pos {
                    hidden_mask.data_mut()[k * d + i] = 1.0;
                }
                if pos > m {
                    output_mask.data_mut()[i * h + k] = 1.0;
                }
            }
        }
        Self {
            ordering,
            hidden_degrees,
            hidden_mask,
            output_mask,
        }
    }

    /// Inputs that output `d` can reach through the masked network.
    pub fn conditioning_set(&self, d: usize) -> BTreeSet<usize> {
        let (dim, h) = (self.ordering.len(), self.hidden_degrees.len());
        (0..dim)
            .filter(|&i| {
                (0..h).any(|k| {
                    self.hidden_mask.data()[k * dim + i] == 1.0
                        && self.output_mask.data()[d * h + k] == 1.0
                })
            })
            .collect()
    }
}

/// Samples `n_orderings` mask sets. The first ordering is the identity; the
/// rest are random permutations. Hidden degrees are drawn from `0..=D-2`.
pub fn made_build_masks(dim: usize, hidden: usize, n_orderings: usize, seed: u64) -> Vec<MaskSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_orderings.max(1))
        .map(|k| {
            let mut ordering: Vec<usize> = (0..dim).collect();
            if k > 0 {
                ordering.shuffle(&mut rng);
            }
            let top = dim.saturating_sub(1).max(1);
            let degrees = (0..hidden).map(|_| rng.gen_range(0..top)).collect();
            MaskSet::from_ordering(ordering, degrees)
        })
        .collect()
}

/// Masked autoencoder with one hidden layer and an ensemble of orderings
/// sharing the same weights.
#[derive(Clone, Debug)]
pub struct Made {
    pub dim: usize,
    pub hidden: usize,
    pub store: ParamStore,
    pub masks: Vec<MaskSet>,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Made {
    pub fn new(dim: usize, hidden: usize, n_orderings: usize, seed: u64) -> Self {
        let masks = made_build_masks(dim, hidden, n_orderings, seed);
        Self::with_masks(dim, hidden, masks, seed)
    }

    pub fn with_masks(dim: usize, hidden: usize, masks: Vec<MaskSet>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d616465);
        let mut store = ParamStore::new();
        let w1 = store.add_uniform("made.w1", &[hidden, dim], &mut rng);
        let b1 = store.add_zeros("made.b1", &[hidden]);
        let w2 = store.add_uniform("made.w2", &[dim, hidden], &mut rng);
        let b2 = store.add_zeros("made.b2", &[dim]);
        Self {
            dim,
            hidden,
            store,
            masks,
            w1,
            b1,
            w2,
            b2,
        }
    }

    /// Zeroes the output layer so every conditional is 0.5.
    pub fn zero_head(&mut self) {
        for id in [self.w2, self.b2] {
            self.store.value_mut(id).data_mut().fill(0.0);
        }
    }

    /// Conditionals `p(x_d = 1 | S_d)` for a `[B x D]` input under mask set `k`.
    pub fn conditionals(&self, g: &mut Graph, x: NodeId, k: usize) -> Result<NodeId> {
        if g.value(x).cols() != self.dim {
            return Err(Error::shape(format!(
                "MADE expects {} inputs, got shape {:?}",
                self.dim,
                g.value(x).shape()
            )));
        }
        let set = &self.masks[k];
        let m1 = g.input(set.hidden_mask.clone());
        let m2 = g.input(set.output_mask.clone());
        let w1 = g.param(&self.store, self.w1);
        let w1 = g.mul(w1, m1)?;
        let b1 = g.param(&self.store, self.b1);
        let w2 = g.param(&self.store, self.w2);
        let w2 = g.mul(w2, m2)?;
        let b2 = g.param(&self.store, self.b2);
        let a = g.affine(x, w1, Some(b1))?;
        let hidden = g.relu(a);
        let logits = g.affine(hidden, w2, Some(b2))?;
        Ok(g.sigmoid(logits))
    }

    /// Per-row Bernoulli log-likelihood `[B x 1]` of `x` under mask set `k`.
    fn loglik(&self, g: &mut Graph, x: &Tensor, k: usize) -> Result<NodeId> {
        let xn = g.input(x.clone());
        let p = self.conditionals(g, xn, k)?;
        let not_x = g.input(x.map(|v| 1.0 - v));
        let lp = g.log(p);
        let q = g.one_minus(p);
        let lq = g.log(q);
        let a = g.mul(xn, lp)?;
        let b = g.mul(not_x, lq)?;
        let ll = g.add(a, b)?;
        Ok(g.row_sum(ll))
    }

    /// Ensemble-average log-likelihood of each row of `frames`.
    pub fn logprobs(&self, frames: &Tensor) -> Result<Vec<f64>> {
        if frames.cols() != self.dim {
            return Err(Error::shape(format!(
                "MADE expects {} inputs, got shape {:?}",
                self.dim,
                frames.shape()
            )));
        }
        let mut out = vec![0.0; frames.rows()];
        for k in 0..self.masks.len() {
            let mut g = Graph::new();
            let ll = self.loglik(&mut g, frames, k)?;
            for (o, v) in out.iter_mut().zip(g.value(ll).data()) {
                *o += v;
            }
        }
        let n = self.masks.len() as f64;
        Ok(out.into_iter().map(|v| v / n).collect())
    }

    pub fn logprob(&self, frame: &[f64]) -> Result<f64> {
        if frame.len() != self.dim {
            return Err(Error::shape(format!(
                "frame has {} labels, MADE expects {}",
                frame.len(),
                self.dim
            )));
        }
        Ok(self.logprobs(&Tensor::matrix(1, self.dim, frame.to_vec())?)?[0])
    }

    /// Mean negative log-likelihood of a batch under mask set `k`.
    pub fn nll_loss(&self, g: &mut Graph, frames: &Tensor, k: usize) -> Result<NodeId> {
        let ll = self.loglik(g, frames, k)?;
        let m = g.mean(ll);
        Ok(g.scale(m, -1.0))
    }
}

/// Trains a MADE ensemble on binary frames, cycling through the mask sets
/// one batch at a time. Returns the model and the mean per-frame NLL of
/// every epoch.
pub fn pretrain_made(
    frames: &[SemanticFrame],
    hidden: usize,
    n_orderings: usize,
    cfg: &PretrainConfig,
) -> Result<(Made, Vec<f64>)> {
    check_nonempty(frames, "MADE training set")?;
    let dim = frames[0].len();
    let mut made = Made::new(dim, hidden, n_orderings, cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut k = 0;
    for epoch in 0..cfg.epochs {
        let plan = epoch_batches(frames.len(), cfg.batch_size, cfg.seed.wrapping_add(epoch as u64))?;
        let (mut total, mut count) = (0.0, 0.0);
        for idx in plan {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| frames[i].to_vec()).collect();
            let x = Tensor::from_rows(&rows)?;
            let mut g = Graph::new();
            let loss = made.nll_loss(&mut g, &x, k)?;
            k = (k + 1) % made.masks.len();
            let value = g.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: 0,
                    cycle: "made-pretrain".into(),
                    detail: format!("loss {value}"),
                });
            }
            total += value * rows.len() as f64;
            count += rows.len() as f64;
            g.backward_into(loss, &mut [&mut made.store])?;
            made.store.clip_grad_norm(cfg.clip_norm);
            made.store.adam_update(cfg.learning_rate, &cfg.adam)?;
        }
        curve.push(total / count);
    }
    Ok((made, curve))
}
