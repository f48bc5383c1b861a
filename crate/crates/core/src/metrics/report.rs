use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores in `[0, 1]` for one evaluation pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub bleu: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    /// Utterances scored by the understanding model.
    pub nlu_samples: usize,
    /// Distinct frames decoded by the generator.
    pub nlg_samples: usize,
}

impl EvalReport {
    /// Score columns in table order.
    pub const COLUMNS: [&'static str; 5] = ["micro_f1", "bleu", "rouge_1", "rouge_2", "rouge_l"];

    pub fn scores(&self) -> [f64; 5] {
        [self.micro_f1, self.bleu, self.rouge_1, self.rouge_2, self.rouge_l]
    }

    /// Flat `key = value` block; floats use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in Self::COLUMNS.iter().zip(self.scores()) {
            out.push_str(&format!("{k} = {v:?}\n"));
        }
        out.push_str(&format!("nlu_samples = {}\n", self.nlu_samples));
        out.push_str(&format!("nlg_samples = {}\n", self.nlg_samples));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = EvalReport::default();
        let mut seen = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("report line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let float = || {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("report key {k}: bad number {v:?}")))
            };
            let int = || {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("report key {k}: bad count {v:?}")))
            };
            match k {
                "micro_f1" => r.micro_f1 = float()?,
                "bleu" => r.bleu = float()?,
                "rouge_1" => r.rouge_1 = float()?,
                "rouge_2" => r.rouge_2 = float()?,
                "rouge_l" => r.rouge_l = float()?,
                "nlu_samples" => r.nlu_samples = int()?,
                "nlg_samples" => r.nlg_samples = int()?,
                other => return Err(Error::Config(format!("unknown report key {other:?}"))),
            }
            seen += 1;
        }
        if seen < 7 {
            return Err(Error::Config("report is missing fields".into()));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
