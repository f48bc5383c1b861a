use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::cycle::{CycleOptions, DualModels, DualTrainer, RewardModels, StepReport};
use super::eval::{cycle_traces, evaluate, CycleTrace};
use crate::data::{batch_iter, Corpus};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::models::{save_checkpoint, CheckpointMeta, ModelDims};

/// Mean losses of one epoch, plus the evaluation if one ran.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub primal_l1: Option<f64>,
    pub primal_l2: Option<f64>,
    pub dual_l1: Option<f64>,
    pub dual_l2: Option<f64>,
    pub primal_rl: Option<f64>,
    pub dual_rl: Option<f64>,
    pub report: Option<EvalReport>,
}

pub struct TrainOutcome {
    pub trainer: DualTrainer,
    pub history: Vec<EpochRecord>,
    pub final_report: EvalReport,
    pub traces: Vec<CycleTrace>,
}

#[derive(Default)]
struct Means {
    sums: [f64; 6],
    counts: [usize; 6],
}

impl Means {
    fn push(&mut self, i: usize, v: Option<f64>) {
        if let Some(v) = v {
            self.sums[i] += v;
            self.counts[i] += 1;
        }
    }

    fn get(&self, i: usize) -> Option<f64> {
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }
}

pub fn epoch_dir(root: &Path, epoch: usize) -> PathBuf {
    root.join(format!("epoch-{epoch:02}"))
}

/// Trains from a fresh initialisation and evaluates on the test split.
/// With `out`, each epoch writes checkpoints, losses, the report and traces
/// under `out/epoch-XX/`.
pub fn train(cfg: &TrainConfig, corpus: &Corpus, rewards: RewardModels, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.test.is_empty() {
        return Err(Error::EmptyDataset("test split has no pairs".into()));
    }
    let dims = ModelDims {
        labels: corpus.labels.len(),
        vocab: corpus.vocab.len(),
        embed: cfg.embed,
        hidden: cfg.hidden,
    };
    let models = DualModels::new(dims, cfg.seed);
    let mut trainer = DualTrainer::new(
        cfg.clone(),
        models,
        rewards,
        corpus.vocab.clone(),
        corpus.train_references(),
    )?;
    let frozen = trainer.reward_hashes();
    let meta = CheckpointMeta::new(&corpus.labels, &corpus.vocab);
    let opts = CycleOptions::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut final_report = None;

    for epoch in 0..cfg.epochs {
        trainer.epoch = epoch;
        trainer.rl_active = cfg.scheme.reward.is_some() && epoch >= cfg.warm_start_epochs;
        let mut means = Means::default();
        let shuffle = cfg.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64);
        for (i, batch) in batch_iter(&corpus.train, cfg.batch_size, shuffle)?.enumerate() {
            let batch = batch?;
            trainer.batch = i;
            let p: StepReport = trainer.primal_step(&batch.frames, &batch.targets, &batch.keys, opts)?;
            let d: StepReport = trainer.dual_step(&batch.frames, &batch.targets, &batch.keys, opts)?;
            means.push(0, p.l1);
            means.push(1, p.l2);
            means.push(2, d.l1);
            means.push(3, d.l2);
            means.push(4, p.rl);
            means.push(5, d.rl);
        }
        trainer.check_frozen(&frozen)?;
        let last = epoch + 1 == cfg.epochs;
        let report = if cfg.eval_every_epoch || last {
            Some(evaluate(
                &trainer.models,
                &corpus.vocab,
                &corpus.test,
                cfg.share_embeddings,
                cfg.decode_max_len,
                cfg.eval_threads,
            )?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            primal_l1: means.get(0),
            primal_l2: means.get(1),
            dual_l1: means.get(2),
            dual_l2: means.get(3),
            primal_rl: means.get(4),
            dual_rl: means.get(5),
            report: report.clone(),
        };
        log::info!(
            "epoch {epoch}: primal l1 {:?} l2 {:?}, dual l1 {:?} l2 {:?}",
            record.primal_l1,
            record.primal_l2,
            record.dual_l1,
            record.dual_l2
        );
        if let Some(root) = out {
            let dir = epoch_dir(root, epoch);
            save_checkpoint(&dir, "nlg", &trainer.models.nlg.store, &meta)?;
            save_checkpoint(&dir, "nlu", &trainer.models.nlu.store, &meta)?;
            fs::write(dir.join("losses.json"), serde_json::to_string_pretty(&record)?)?;
            if let Some(r) = &report {
                fs::write(dir.join("report.txt"), r.to_text())?;
                fs::write(dir.join("report.json"), r.to_json()?)?;
                let traces = cycle_traces(
                    &trainer.models,
                    &corpus.labels,
                    &corpus.vocab,
                    &corpus.test,
                    cfg.trace_count,
                    cfg.share_embeddings,
                    cfg.decode_max_len,
                )?;
                fs::write(dir.join("traces.json"), serde_json::to_string_pretty(&traces)?)?;
            }
        }
        if report.is_some() {
            final_report = report;
        }
        history.push(record);
    }
    let final_report = final_report.ok_or_else(|| Error::Config("training ran for zero epochs".into()))?;
    let traces = cycle_traces(
        &trainer.models,
        &corpus.labels,
        &corpus.vocab,
        &corpus.test,
        cfg.trace_count,
        cfg.share_embeddings,
        cfg.decode_max_len,
    )?;
    Ok(TrainOutcome {
        trainer,
        history,
        final_report,
        traces,
    })
}
