use std::fmt;
use std::str::FromStr;

use super::scheme::LearningScheme;
use crate::error::{Error, Result};
use crate::math::AdamConfig;

/// Which generator outputs reach the understanding model in a supervised
/// primal cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointInput {
    /// Step distributions of the teacher-forced pass on the gold sentence.
    TeacherForced,
    /// Step distributions of a free-running decode.
    FreeRunning,
}

impl fmt::Display for JointInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JointInput::TeacherForced => "teacher_forced",
            JointInput::FreeRunning => "free_running",
        })
    }
}

impl FromStr for JointInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher_forced" => Ok(JointInput::TeacherForced),
            "free_running" => Ok(JointInput::FreeRunning),
            other => Err(Error::Config(format!("unknown joint input {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub scheme: LearningScheme,
    /// Generator learning rate.
    pub lr_nlg: f64,
    /// Understanding learning rate.
    pub lr_nlu: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub embed: usize,
    pub hidden: usize,
    pub share_embeddings: bool,
    pub clip_norm: f64,
    pub adam: AdamConfig,
    pub joint_input: JointInput,
    /// Step cap for free-running decodes (evaluation, sampling, unsupervised cycles).
    pub decode_max_len: usize,
    pub supervised_weight: f64,
    pub rl_weight: f64,
    pub baseline: bool,
    pub baseline_decay: f64,
    /// Supervised-only epochs before reward terms switch on.
    pub warm_start_epochs: usize,
    pub trace_count: usize,
    pub eval_threads: usize,
    /// Evaluate after every epoch rather than only after the last one.
    pub eval_every_epoch: bool,
    /// Drop the mid-cycle supervised losses and train only through the joint.
    pub unsupervised: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scheme: LearningScheme::from_id("f").expect("built-in scheme"),
            lr_nlg: 1e-3,
            lr_nlu: 1e-3,
            batch_size: 64,
            epochs: 10,
            seed: 13,
            embed: 50,
            hidden: 200,
            share_embeddings: false,
            clip_norm: 5.0,
            adam: AdamConfig::default(),
            joint_input: JointInput::TeacherForced,
            decode_max_len: 60,
            supervised_weight: 1.0,
            rl_weight: 0.1,
            baseline: true,
            baseline_decay: 0.95,
            warm_start_epochs: 2,
            trace_count: 5,
            eval_threads: 1,
            eval_every_epoch: true,
            unsupervised: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr_nlg > 0.0 && self.lr_nlu > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.embed == 0 || self.hidden == 0 || self.decode_max_len == 0 {
            return bad("model sizes and decode length must be positive");
        }
        if self.supervised_weight < 0.0 || self.rl_weight < 0.0 {
            return bad("loss weights must be non-negative");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline decay must lie in [0, 1)");
        }
        if self.unsupervised && !self.scheme.joint {
            return bad("unsupervised cycles need a joint scheme");
        }
        Ok(())
    }
}
