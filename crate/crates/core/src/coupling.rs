//! Differentiable joints between the two models.
//!
//! A joint either discretises with a straight-through estimator (forward is
//! exactly one-hot or binary, backward is the identity) or passes the raw
//! distribution on unchanged.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{Graph, NodeId};

/// Decision threshold for turning label probabilities into a frame.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JointOutput {
    StraightThrough,
    Distribution,
}

impl fmt::Display for JointOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JointOutput::StraightThrough => "straight_through",
            JointOutput::Distribution => "distribution",
        })
    }
}

impl FromStr for JointOutput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight_through" | "st" => Ok(JointOutput::StraightThrough),
            "distribution" | "dist" => Ok(JointOutput::Distribution),
            other => Err(Error::Config(format!("unknown joint output mode {other:?}"))),
        }
    }
}

/// How each model's output is handed to the other one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CouplingMode {
    /// Generator output fed to the understanding model.
    pub nlg_output: JointOutput,
    /// Understanding output fed to the generator.
    pub nlu_output: JointOutput,
}

impl CouplingMode {
    pub const STRAIGHT_THROUGH: Self = Self {
        nlg_output: JointOutput::StraightThrough,
        nlu_output: JointOutput::StraightThrough,
    };
    pub const DISTRIBUTION: Self = Self {
        nlg_output: JointOutput::Distribution,
        nlu_output: JointOutput::Distribution,
    };

    /// Converts generator step distributions `[B x v]` for the understanding model.
    pub fn couple_nlg(&self, g: &mut Graph, dist: NodeId) -> NodeId {
        match self.nlg_output {
            JointOutput::StraightThrough => st_onehot(g, dist),
            JointOutput::Distribution => dist,
        }
    }

    /// Converts label probabilities `[B x D]` for the generator.
    pub fn couple_nlu(&self, g: &mut Graph, probs: NodeId) -> NodeId {
        match self.nlu_output {
            JointOutput::StraightThrough => st_threshold(g, probs, THRESHOLD),
            JointOutput::Distribution => frame_distribution_input(g, probs),
        }
    }
}

/// Argmax one-hot forward, identity backward. Ties go to the lowest index.
pub fn st_onehot(g: &mut Graph, dist: NodeId) -> NodeId {
    g.st_onehot(dist)
}

/// Binarises at `threshold` (values equal to it map to 1), identity backward.
pub fn st_threshold(g: &mut Graph, probs: NodeId, threshold: f64) -> NodeId {
    g.st_threshold(probs, threshold)
}

/// Probability-weighted sum of embedding rows: `dist · table`.
pub fn embed_distribution(g: &mut Graph, dist: NodeId, table: NodeId) -> Result<NodeId> {
    g.matmul(dist, table)
}

/// Label probabilities used directly as the generator's frame input.
pub fn frame_distribution_input(_g: &mut Graph, probs: NodeId) -> NodeId {
    probs
}
