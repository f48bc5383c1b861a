use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::EvalReport;

/// Header labels in table order.
pub const HEADERS: [&str; 5] = ["Micro-F1", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L"];

/// Fraction to percent with two decimals, ties to even on the scaled value.
pub fn percent(v: f64) -> f64 {
    (v * 10_000.0).round_ties_even() / 100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub micro_f1: f64,
    pub bleu: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
}

impl SummaryRow {
    /// Percent row from unrounded fractional scores.
    pub fn from_scores(label: impl Into<String>, s: [f64; 5]) -> Self {
        Self {
            label: label.into(),
            micro_f1: percent(s[0]),
            bleu: percent(s[1]),
            rouge_1: percent(s[2]),
            rouge_2: percent(s[3]),
            rouge_l: percent(s[4]),
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.micro_f1, self.bleu, self.rouge_1, self.rouge_2, self.rouge_l]
    }
}

/// Seed-averaged scores of one run, with the configuration echo and the
/// content hash of the dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheme: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SummaryRow>,
    pub mean: SummaryRow,
    pub dataset_hash: String,
    pub config: String,
}

impl Summary {
    pub fn from_reports(
        scheme: &str,
        reports: &[(u64, EvalReport)],
        dataset_hash: &str,
        config: &str,
    ) -> Self {
        let n = reports.len().max(1) as f64;
        let mut mean = [0.0; 5];
        for (_, r) in reports {
            for (m, v) in mean.iter_mut().zip(r.scores()) {
                *m += v / n;
            }
        }
        Self {
            scheme: scheme.to_string(),
            seeds: reports.iter().map(|(s, _)| *s).collect(),
            per_seed: reports
                .iter()
                .map(|(s, r)| SummaryRow::from_scores(format!("seed {s}"), r.scores()))
                .collect(),
            mean: SummaryRow::from_scores("mean", mean),
            dataset_hash: dataset_hash.to_string(),
            config: config.to_string(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scheme {}", self.scheme);
        let _ = writeln!(s, "dataset manifest {}", self.dataset_hash);
        let _ = write!(s, "{:<12}", "");
        for h in HEADERS {
            let _ = write!(s, "{h:>10}");
        }
        s.push('\n');
        for row in self.per_seed.iter().chain([&self.mean]) {
            let _ = write!(s, "{:<12}", row.label);
            for v in row.values() {
                let _ = write!(s, "{v:>10.2}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\n# configuration\n{}", self.config.trim_end());
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
