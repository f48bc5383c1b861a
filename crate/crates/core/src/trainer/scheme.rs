use std::fmt;

use crate::coupling::{CouplingMode, JointOutput};
use crate::error::{Error, Result};
use crate::objectives::{LossKind, LossSpec, Placement, RewardFamily, RewardSpec};

/// One row of the scheme table: whether the two models are trained through
/// the joint, how each joint is coupled, and an optional reward term.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningScheme {
    pub id: String,
    /// `false` trains each model only on its own supervised loss.
    pub joint: bool,
    pub coupling: CouplingMode,
    pub reward: Option<RewardSpec>,
}

const ST: JointOutput = JointOutput::StraightThrough;
const DIST: JointOutput = JointOutput::Distribution;

impl LearningScheme {
    pub const IDS: [&'static str; 11] = ["a", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"];

    pub fn from_id(id: &str) -> Result<Self> {
        let coupling = |nlg_output, nlu_output| CouplingMode {
            nlg_output,
            nlu_output,
        };
        let rl = |family, placement| Some(RewardSpec { family, placement });
        let (joint, c, reward) = match id {
            "a" => (false, coupling(ST, ST), None),
            "c" => (true, coupling(ST, ST), None),
            "d" => (true, coupling(DIST, ST), None),
            "e" => (true, coupling(ST, DIST), None),
            "f" => (true, coupling(DIST, DIST), None),
            "g" => (true, coupling(DIST, DIST), rl(RewardFamily::Reconstruction, Placement::Mid)),
            "h" => (true, coupling(DIST, DIST), rl(RewardFamily::Reconstruction, Placement::End)),
            "i" => (true, coupling(DIST, DIST), rl(RewardFamily::AutoMetric, Placement::Mid)),
            "j" => (true, coupling(DIST, DIST), rl(RewardFamily::AutoMetric, Placement::End)),
            "k" => (true, coupling(DIST, DIST), rl(RewardFamily::Estimator, Placement::Mid)),
            "l" => (true, coupling(DIST, DIST), rl(RewardFamily::Estimator, Placement::End)),
            "b" => {
                return Err(Error::Config(
                    "scheme b (dual supervised learning) is not implemented".into(),
                ))
            }
            other => return Err(Error::Config(format!("unknown scheme {other:?}"))),
        };
        Ok(Self {
            id: id.to_string(),
            joint,
            coupling: c,
            reward,
        })
    }

    pub fn custom(coupling: CouplingMode, reward: Option<RewardSpec>) -> Self {
        Self {
            id: "custom".into(),
            joint: true,
            coupling,
            reward,
        }
    }

    /// Generator loss.
    pub fn l1(&self, supervised_weight: f64, reward_weight: f64) -> LossSpec {
        self.loss(LossKind::CrossEntropy, supervised_weight, reward_weight)
    }

    /// Understanding loss.
    pub fn l2(&self, supervised_weight: f64, reward_weight: f64) -> LossSpec {
        self.loss(LossKind::BinaryCrossEntropy, supervised_weight, reward_weight)
    }

    fn loss(&self, kind: LossKind, w: f64, rw: f64) -> LossSpec {
        match self.reward {
            Some(r) => LossSpec {
                kind: LossKind::Hybrid,
                reward: Some(r),
                weight: w,
                reward_weight: rw,
            },
            None => LossSpec {
                weight: w,
                ..LossSpec::supervised(kind)
            },
        }
    }

    pub fn needs_lm(&self) -> bool {
        self.reward.is_some_and(|r| r.family == RewardFamily::Estimator)
    }

    pub fn needs_made(&self) -> bool {
        self.needs_lm()
    }
}

impl fmt::Display for LearningScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.joint {
            return write!(f, "({}) iterative supervised training", self.id);
        }
        write!(
            f,
            "({}) joint training, generator output {}, understanding output {}",
            self.id, self.coupling.nlg_output, self.coupling.nlu_output
        )?;
        if let Some(r) = self.reward {
            write!(f, ", reward {} at {}", r.family, r.placement)?;
        }
        Ok(())
    }
}
