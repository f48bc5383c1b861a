//! The demo operations as plain Rust, so they can be tested natively.

use serde::Serialize;

use dualcycle::data::synth::{generate, SynthConfig};
use dualcycle::data::{batch_iter, format_mr, parse_mr, preprocess_text, Corpus, DataConfig, SemanticFrame};
use dualcycle::metrics::{rouge_l, rouge_n, sentence_bleu};
use dualcycle::models::{made_build_masks, ModelDims};
use dualcycle::trainer::{CycleOptions, DualModels, DualTrainer, LearningScheme, RewardModels, TrainConfig};

pub type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Scores {
    pub tokens: Vec<String>,
    pub bleu: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
}

/// Scores one sentence against references given one per line. Both sides go
/// through the same preprocessing as the training data.
pub fn score_sentence(hypothesis: &str, references: &str) -> Result<Scores> {
    let hyp = preprocess_text(hypothesis);
    let refs: Vec<Vec<String>> = references
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(preprocess_text)
        .collect();
    if refs.is_empty() {
        return Err("give at least one reference line".into());
    }
    Ok(Scores {
        bleu: sentence_bleu(&hyp, &refs, 4).map_err(err)?,
        rouge_1: rouge_n(&hyp, &refs, 1).map_err(err)?,
        rouge_2: rouge_n(&hyp, &refs, 2).map_err(err)?,
        rouge_l: rouge_l(&hyp, &refs).map_err(err)?,
        tokens: hyp,
    })
}

#[derive(Debug, Serialize)]
pub struct Connectivity {
    pub ordering: Vec<usize>,
    /// `reach[d][i]` is true when output `d` can see input `i`.
    pub reach: Vec<Vec<bool>>,
}

/// Which inputs each MADE output can see, for every ordering in an ensemble.
pub fn made_connectivity(dim: usize, hidden: usize, orderings: usize, seed: u64) -> Result<Vec<Connectivity>> {
    if !(2..=16).contains(&dim) || hidden == 0 || hidden > 256 || !(1..=8).contains(&orderings) {
        return Err("need 2 <= D <= 16, 1 <= hidden <= 256, 1 <= orderings <= 8".into());
    }
    Ok(made_build_masks(dim, hidden, orderings, seed)
        .into_iter()
        .map(|set| {
            let reach = (0..dim)
                .map(|d| {
                    let seen = set.conditioning_set(d);
                    (0..dim).map(|i| seen.contains(&i)).collect()
                })
                .collect();
            Connectivity { ordering: set.ordering, reach }
        })
        .collect())
}

#[derive(Debug, Serialize, Clone, Copy)]
pub struct EpochLoss {
    pub epoch: usize,
    pub primal: f64,
    pub dual: f64,
}

/// A small joint trainer over synthetic data, stepped an epoch at a time.
pub struct ToyCycle {
    corpus: Corpus,
    trainer: DualTrainer,
    epoch: usize,
}

impl ToyCycle {
    /// Schemes needing pretrained reward models are not offered here.
    pub fn new(scheme: &str, seed: u64) -> Result<Self> {
        let scheme = LearningScheme::from_id(scheme).map_err(err)?;
        if scheme.needs_lm() {
            return Err(format!("scheme ({}) needs pretrained reward models", scheme.id));
        }
        let (train, test) = generate(&SynthConfig {
            seed,
            train_mrs: 24,
            test_mrs: 4,
            ..Default::default()
        });
        let corpus = Corpus::build(&train, &test, &DataConfig { max_len: 40, min_freq: 1 }).map_err(err)?;
        let cfg = TrainConfig {
            scheme,
            seed,
            embed: 16,
            hidden: 32,
            batch_size: 16,
            lr_nlg: 1e-2,
            lr_nlu: 1e-2,
            warm_start_epochs: 1,
            decode_max_len: 40,
            ..Default::default()
        };
        let dims = ModelDims {
            labels: corpus.labels.len(),
            vocab: corpus.vocab.len(),
            embed: cfg.embed,
            hidden: cfg.hidden,
        };
        let models = DualModels::new(dims, seed);
        let trainer = DualTrainer::new(cfg, models, RewardModels::default(), corpus.vocab.clone(), corpus.train_references())
            .map_err(err)?;
        Ok(Self { corpus, trainer, epoch: 0 })
    }

    pub fn scheme(&self) -> String {
        self.trainer.cfg.scheme.to_string()
    }

    /// MRs seen in training, in corpus order without repeats.
    pub fn example_mrs(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.corpus.train {
            let mr = format_mr(&p.pairs);
            if !out.contains(&mr) {
                out.push(mr);
            }
        }
        out
    }

    /// Runs `n` epochs; returns mean supervised losses per epoch.
    pub fn train(&mut self, n: usize) -> Result<Vec<EpochLoss>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let t = &mut self.trainer;
            t.epoch = self.epoch;
            t.rl_active = t.cfg.scheme.reward.is_some() && self.epoch >= t.cfg.warm_start_epochs;
            let (mut primal, mut dual, mut batches) = (0.0, 0.0, 0.0);
            let seed = t.cfg.seed.wrapping_mul(1_000_003).wrapping_add(self.epoch as u64);
            for (i, batch) in batch_iter(&self.corpus.train, t.cfg.batch_size, seed).map_err(err)?.enumerate() {
                let b = batch.map_err(err)?;
                t.batch = i;
                let p = t.primal_step(&b.frames, &b.targets, &b.keys, CycleOptions::default()).map_err(err)?;
                let d = t.dual_step(&b.frames, &b.targets, &b.keys, CycleOptions::default()).map_err(err)?;
                primal += p.l1.unwrap_or(0.0);
                dual += d.l2.unwrap_or(0.0);
                batches += 1.0;
            }
            out.push(EpochLoss {
                epoch: self.epoch,
                primal: primal / batches,
                dual: dual / batches,
            });
            self.epoch += 1;
        }
        Ok(out)
    }

    /// Greedy sentence for an MR written as `slot[value], ...`.
    pub fn generate(&self, mr: &str) -> Result<String> {
        let pairs = parse_mr(mr).map_err(err)?;
        let (frame, dropped) = self.corpus.labels.encode_frame(&pairs);
        if dropped > 0 {
            return Err(format!("{dropped} slot-value pair(s) are outside the label space"));
        }
        let ids = self
            .trainer
            .models
            .nlg_greedy(&frame.to_tensor(), self.trainer.cfg.decode_max_len)
            .map_err(err)?;
        Ok(self.corpus.vocab.decode(&ids[0]).join(" "))
    }

    /// Frame predicted for free text, formatted as an MR.
    pub fn understand(&self, text: &str) -> Result<String> {
        let mut ids = self.corpus.vocab.encode(&preprocess_text(text));
        if ids.is_empty() {
            return Err("empty sentence".into());
        }
        ids.push(dualcycle::data::EOS);
        let q = self.trainer.models.nlu_probs(&[ids], self.trainer.cfg.share_embeddings).map_err(err)?;
        let frame = SemanticFrame::from_probs(q.row(0), 0.5);
        Ok(format_mr(&self.corpus.labels.decode_frame(&frame)))
    }
}
