//! Supervised losses, the REINFORCE estimator and the reward families.

mod rewards;

pub use rewards::{
    bernoulli_loglik, reward_auto_metric_nlg, reward_auto_metric_nlu, reward_lm, reward_made,
    reward_reconstruction_dual, reward_reconstruction_primal,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{binary_cross_entropy, masked_token_nll, Graph, NodeId, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RewardFamily {
    /// Log-likelihood of the cycle input after the round trip.
    Reconstruction,
    /// BLEU+ROUGE-L for sentences, F1 for frames.
    AutoMetric,
    /// Language model for sentences, MADE for frames.
    Estimator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Placement {
    /// The decision made halfway through a cycle.
    Mid,
    /// The decision made at the end of a cycle.
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RewardSpec {
    pub family: RewardFamily,
    pub placement: Placement,
}

impl fmt::Display for RewardFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardFamily::Reconstruction => "reconstruction",
            RewardFamily::AutoMetric => "auto_metric",
            RewardFamily::Estimator => "lm_made",
        })
    }
}

impl FromStr for RewardFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reconstruction" => Ok(RewardFamily::Reconstruction),
            "auto_metric" | "metric" => Ok(RewardFamily::AutoMetric),
            "lm_made" | "estimator" => Ok(RewardFamily::Estimator),
            other => Err(Error::Config(format!("unknown reward family {other:?}"))),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Mid => "mid",
            Placement::End => "end",
        })
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mid" => Ok(Placement::Mid),
            "end" => Ok(Placement::End),
            other => Err(Error::Config(format!("unknown reward placement {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    BinaryCrossEntropy,
    Reinforce,
    Hybrid,
}

/// One cycle loss: a supervised term, a reward term, or both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub reward: Option<RewardSpec>,
    /// Weight of the supervised term.
    pub weight: f64,
    /// Weight of the reward term.
    pub reward_weight: f64,
}

impl LossSpec {
    pub fn supervised(kind: LossKind) -> Self {
        Self {
            kind,
            reward: None,
            weight: 1.0,
            reward_weight: 0.0,
        }
    }

    pub fn hybrid(reward: RewardSpec, weight: f64, reward_weight: f64) -> Result<Self> {
        if weight < 0.0 || reward_weight < 0.0 {
            return Err(Error::Config("hybrid loss weights must be non-negative".into()));
        }
        Ok(Self {
            kind: LossKind::Hybrid,
            reward: Some(reward),
            weight,
            reward_weight,
        })
    }
}

/// A per-sample reward and its baseline-adjusted value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardSignal {
    pub value: f64,
    pub adjusted: f64,
    pub family: RewardFamily,
}

/// Exponential running mean of batch-mean rewards, seeded by the first batch.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningBaseline {
    pub decay: f64,
    pub enabled: bool,
    value: Option<f64>,
}

impl RunningBaseline {
    pub fn new(decay: f64, enabled: bool) -> Self {
        Self {
            decay,
            enabled,
            value: None,
        }
    }

    pub fn value(&self) -> f64 {
        if self.enabled {
            self.value.unwrap_or(0.0)
        } else {
            0.0
        }
    }

    /// Adjusts `rewards` by the current baseline, then folds their mean in.
    pub fn signals(&mut self, family: RewardFamily, rewards: &[f64]) -> Result<Vec<RewardSignal>> {
        if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::Reward(format!("non-finite {family} reward {bad}")));
        }
        if rewards.is_empty() {
            return Ok(Vec::new());
        }
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        if self.enabled && self.value.is_none() {
            self.value = Some(mean);
        }
        let b = self.value();
        let out = rewards
            .iter()
            .map(|&value| RewardSignal {
                value,
                adjusted: value - b,
                family,
            })
            .collect();
        if let Some(v) = self.value.as_mut() {
            *v = self.decay * *v + (1.0 - self.decay) * mean;
        }
        Ok(out)
    }
}

/// Cross-entropy averaged over each sample's live steps, then over the batch.
pub fn supervised_loss_nlg(
    g: &mut Graph,
    step_probs: &[NodeId],
    targets: &[Vec<usize>],
) -> Result<NodeId> {
    let steps = targets.iter().map(Vec::len).max().unwrap_or(0);
    if steps != step_probs.len() || targets.iter().any(Vec::is_empty) {
        return Err(Error::contract(format!(
            "{} step distributions for targets of up to {steps} tokens",
            step_probs.len()
        )));
    }
    let batch = targets.len() as f64;
    let mut total = None;
    for (t, &p) in step_probs.iter().enumerate() {
        if g.value(p).rows() != targets.len() {
            return Err(Error::contract("step distribution batch size differs from targets"));
        }
        let ids: Vec<usize> = targets.iter().map(|s| s.get(t).copied().unwrap_or(0)).collect();
        let w: Vec<f64> = targets
            .iter()
            .map(|s| if t < s.len() { 1.0 / (s.len() as f64 * batch) } else { 0.0 })
            .collect();
        let term = masked_token_nll(g, p, &ids, &w)?;
        total = Some(match total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok(total.expect("at least one step"))
}

/// Binary cross-entropy of label probabilities against gold frames.
pub fn supervised_loss_nlu(g: &mut Graph, probs: NodeId, gold: &Tensor) -> Result<NodeId> {
    binary_cross_entropy(g, probs, gold)
}

/// Surrogate whose gradient is the REINFORCE estimate:
/// `-(1/B) Σ_b adjusted_b · logp_b`. `log_probs` is `[B x 1]`.
pub fn reinforce_grad(g: &mut Graph, log_probs: NodeId, signals: &[RewardSignal]) -> Result<NodeId> {
    if g.value(log_probs).len() != signals.len() {
        return Err(Error::contract(format!(
            "{} log-prob terms for {} rewards",
            g.value(log_probs).len(),
            signals.len()
        )));
    }
    if let Some(bad) = signals.iter().find(|s| !s.adjusted.is_finite()) {
        return Err(Error::Reward(format!("non-finite reward {}", bad.adjusted)));
    }
    let n = signals.len().max(1) as f64;
    let w: Vec<f64> = signals.iter().map(|s| -s.adjusted / n).collect();
    let wn = g.input(Tensor::new(vec![w.len(), 1], w)?);
    let weighted = g.mul(log_probs, wn)?;
    Ok(g.sum(weighted))
}

/// `Σ_t mask · log p_t[chosen_t]` per sample, as `[B x 1]`.
pub fn token_log_probs(
    g: &mut Graph,
    step_probs: &[NodeId],
    chosen: &[Vec<usize>],
    masks: &[Vec<f64>],
) -> Result<NodeId> {
    if step_probs.is_empty() || step_probs.len() != chosen.len() || chosen.len() != masks.len() {
        return Err(Error::contract("token log-probs need aligned, non-empty steps"));
    }
    let mut total = None;
    for ((&p, ids), mask) in step_probs.iter().zip(chosen).zip(masks) {
        let picked = g.pick(p, ids)?;
        let lp = g.log(picked);
        let m = g.input(Tensor::new(vec![mask.len(), 1], mask.clone())?);
        let term = g.mul(lp, m)?;
        total = Some(match total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok(total.expect("non-empty"))
}

/// `Σ_d a log p + (1 - a) log(1 - p)` per row of `probs`, as `[B x 1]`.
pub fn bernoulli_log_probs(g: &mut Graph, probs: NodeId, actions: &Tensor) -> Result<NodeId> {
    let shape = g.value(probs).shape().to_vec();
    let a = Tensor::new(shape, actions.data().to_vec())?;
    let an = g.input(a.clone());
    let not_a = g.input(a.map(|v| 1.0 - v));
    let lp = g.log(probs);
    let q = g.one_minus(probs);
    let lq = g.log(q);
    let x = g.mul(an, lp)?;
    let y = g.mul(not_a, lq)?;
    let s = g.add(x, y)?;
    Ok(g.row_sum(s))
}

/// Independent Bernoulli draws, one per entry of `probs`.
pub fn sample_bernoulli<R: Rng>(probs: &Tensor, rng: &mut R) -> Tensor {
    let data = probs
        .data()
        .iter()
        .map(|&p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(probs.shape().to_vec(), data).expect("same shape")
}
