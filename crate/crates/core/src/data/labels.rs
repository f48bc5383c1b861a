use std::collections::{BTreeSet, HashMap};

use super::mr::SlotValue;
use crate::error::{Error, Result};
use crate::math::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotValueLabel {
    pub slot: String,
    pub value: String,
    pub index: usize,
}

/// Binary multi-label vector over the slot-value label space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SemanticFrame {
    bits: Vec<bool>,
}

impl SemanticFrame {
    pub fn empty(dim: usize) -> Self {
        Self {
            bits: vec![false; dim],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Thresholds probabilities; values at or above `threshold` become active.
    pub fn from_probs(probs: &[f64], threshold: f64) -> Self {
        Self {
            bits: probs.iter().map(|&p| p >= threshold).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn set(&mut self, index: usize) {
        self.bits[index] = true;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn active(&self) -> BTreeSet<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.to_vec())
    }
}

/// Ordered slot-value labels; index is a bijection onto `0..len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSpace {
    labels: Vec<SlotValueLabel>,
    index: HashMap<(String, String), usize>,
}

impl LabelSpace {
    /// Collects the distinct pairs of all frames, sorted by slot then value.
    pub fn build<'a, I>(frames: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [SlotValue]>,
    {
        let mut set = BTreeSet::new();
        let mut seen_any = false;
        for frame in frames {
            seen_any = true;
            for pair in frame {
                set.insert(pair.clone());
            }
        }
        if !seen_any || set.is_empty() {
            return Err(Error::EmptyDataset("no slot-value pairs to build labels from".into()));
        }
        Ok(Self::from_pairs(set.into_iter().collect()))
    }

    /// Rebuilds from an already ordered list of pairs.
    pub fn from_pairs(pairs: Vec<SlotValue>) -> Self {
        let labels: Vec<SlotValueLabel> = pairs
            .into_iter()
            .enumerate()
            .map(|(index, (slot, value))| SlotValueLabel { slot, value, index })
            .collect();
        let index = labels
            .iter()
            .map(|l| ((l.slot.clone(), l.value.clone()), l.index))
            .collect();
        Self { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[SlotValueLabel] {
        &self.labels
    }

    pub fn get(&self, slot: &str, value: &str) -> Option<usize> {
        self.index.get(&(slot.to_string(), value.to_string())).copied()
    }

    /// Sets one bit per known pair. Returns the frame and the number of
    /// pairs that were not in the label space.
    pub fn encode_frame(&self, pairs: &[SlotValue]) -> (SemanticFrame, usize) {
        let mut frame = SemanticFrame::empty(self.len());
        let mut dropped = 0;
        for (slot, value) in pairs {
            match self.get(slot, value) {
                Some(i) => frame.set(i),
                None => dropped += 1,
            }
        }
        (frame, dropped)
    }

    pub fn decode_frame(&self, frame: &SemanticFrame) -> Vec<SlotValue> {
        frame
            .active()
            .into_iter()
            .map(|i| (self.labels[i].slot.clone(), self.labels[i].value.clone()))
            .collect()
    }
}
