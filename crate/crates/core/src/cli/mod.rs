//! Experiment driver: configuration, data loading, per-seed runs, summary
//! export and trace rendering.

mod config;
mod summary;

pub use config::{
    parse_ini, threads_from_env, DataSource, ExperimentConfig, IniEntry, PretrainSettings,
    DEFAULT_SEEDS,
};
pub use summary::{percent, Summary, SummaryRow, HEADERS};

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{
    corpus_manifest, git_blob_hash, read_e2e_csv, synth, test_subset, train_subset, Corpus,
    RawRow,
};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::models::{
    load_checkpoint, pretrain_lm, pretrain_made, save_checkpoint, CheckpointMeta, ModelDims,
    PretrainConfig,
};
use crate::trainer::{epoch_dir, evaluate, train, CycleTrace, DualModels, RewardModels};

pub const CONFIG_FILE: &str = "config.ini";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SUMMARY_TEXT: &str = "summary.txt";
pub const SUMMARY_JSON: &str = "summary.json";

/// Flag values that take precedence over the configuration file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub scheme: Option<String>,
    pub seeds: Vec<u64>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub subset: Option<usize>,
    pub no_warm_start: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(id) = &self.scheme {
            cfg.train.scheme = crate::trainer::LearningScheme::from_id(id)?;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(d) = &self.data_dir {
            cfg.data = DataSource::Dir(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(n) = self.subset {
            cfg.subset = Some(n);
        }
        if self.no_warm_start {
            cfg.train.warm_start_epochs = 0;
        }
        Ok(())
    }
}

fn read_rows(cfg: &ExperimentConfig) -> Result<(Vec<RawRow>, Vec<RawRow>)> {
    match &cfg.data {
        DataSource::Dir(d) => Ok((read_e2e_csv(&d.join("trainset.csv"))?, read_e2e_csv(&d.join("testset.csv"))?)),
        DataSource::Files { train, test } => Ok((read_e2e_csv(train)?, read_e2e_csv(test)?)),
        DataSource::Synthetic(s) => Ok(synth::generate(s)),
    }
}

/// Reads (or generates) both splits, applies the subset caps and encodes them.
pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let (mut train_rows, mut test_rows) = read_rows(cfg)?;
    if let Some(n) = cfg.subset {
        train_rows = train_subset(&train_rows, n);
    }
    if let Some(n) = cfg.test_mrs {
        test_rows = test_subset(&test_rows, n)?;
    }
    Corpus::build(&train_rows, &test_rows, &cfg.data_cfg)
}

fn pretrain_cfg(cfg: &ExperimentConfig, seed: u64) -> PretrainConfig {
    PretrainConfig {
        seed,
        ..cfg.pretrain.cfg.clone()
    }
}

/// Pretrains the language model and MADE on the training split and writes
/// their checkpoints and loss curves to `dir`.
pub fn pretrain_reward_models(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    seed: u64,
    dir: &Path,
) -> Result<RewardModels> {
    let lm = pretrain_language_model(cfg, corpus, seed, dir)?;
    let made = pretrain_frame_estimator(cfg, corpus, seed, dir)?;
    Ok(RewardModels {
        lm: Some(lm),
        made: Some(made),
    })
}

pub fn pretrain_language_model(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    seed: u64,
    dir: &Path,
) -> Result<crate::models::RnnLm> {
    let sentences: Vec<Vec<usize>> = corpus.train.iter().map(|p| p.utterance.content().to_vec()).collect();
    let p = &cfg.pretrain;
    let (lm, curve) = pretrain_lm(&sentences, corpus.vocab.len(), p.lm_embed, p.lm_hidden, &pretrain_cfg(cfg, seed))?;
    let meta = CheckpointMeta::new(&corpus.labels, &corpus.vocab);
    save_checkpoint(dir, "lm", &lm.store, &meta)?;
    fs::write(dir.join("lm_curve.json"), serde_json::to_string_pretty(&curve)?)?;
    Ok(lm)
}

pub fn pretrain_frame_estimator(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    seed: u64,
    dir: &Path,
) -> Result<crate::models::Made> {
    let frames: Vec<_> = corpus.train.iter().map(|p| p.frame.clone()).collect();
    let p = &cfg.pretrain;
    let (made, curve) = pretrain_made(&frames, p.made_hidden, p.made_orderings, &pretrain_cfg(cfg, seed))?;
    let meta = CheckpointMeta::new(&corpus.labels, &corpus.vocab);
    save_checkpoint(dir, "made", &made.store, &meta)?;
    fs::write(dir.join("made_curve.json"), serde_json::to_string_pretty(&curve)?)?;
    Ok(made)
}

pub fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed-{seed}"))
}

/// Trains every seed, writes per-seed artifacts and the seed-averaged summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.train.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let corpus = load_corpus(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let manifest = corpus_manifest(&corpus);
    fs::write(cfg.out.join(MANIFEST_FILE), &manifest)?;
    fs::write(cfg.out.join(CONFIG_FILE), cfg.to_ini())?;
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.out, seed);
        fs::create_dir_all(&dir)?;
        let rewards = if cfg.train.scheme.needs_lm() {
            pretrain_reward_models(cfg, &corpus, seed, &dir)?
        } else {
            RewardModels::default()
        };
        let tc = crate::trainer::TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        log::info!("seed {seed}: training scheme {}", tc.scheme);
        let outcome = train(&tc, &corpus, rewards, Some(&dir))?;
        fs::write(dir.join("report.txt"), outcome.final_report.to_text())?;
        fs::write(dir.join("report.json"), outcome.final_report.to_json()?)?;
        fs::write(dir.join("traces.json"), serde_json::to_string_pretty(&outcome.traces)?)?;
        fs::write(dir.join("history.json"), serde_json::to_string_pretty(&outcome.history)?)?;
    }
    export_report(&cfg.out)
}

fn require(dir: &Path, names: &[PathBuf]) -> Result<()> {
    let missing: Vec<String> = names
        .iter()
        .filter(|p| !dir.join(p).is_file())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing,
        })
    }
}

/// Rebuilds `summary.txt` and `summary.json` from the per-seed reports of a
/// finished run.
pub fn export_report(run: &Path) -> Result<Summary> {
    require(run, &[CONFIG_FILE.into(), MANIFEST_FILE.into()])?;
    let config_text = fs::read_to_string(run.join(CONFIG_FILE))?;
    let cfg = ExperimentConfig::parse(&config_text)?;
    let seed_files: Vec<PathBuf> = cfg
        .seeds
        .iter()
        .map(|&s| PathBuf::from(format!("seed-{s}")).join("report.txt"))
        .collect();
    require(run, &seed_files)?;
    let manifest = fs::read(run.join(MANIFEST_FILE))?;
    let mut reports = Vec::with_capacity(cfg.seeds.len());
    for (&seed, file) in cfg.seeds.iter().zip(&seed_files) {
        reports.push((seed, EvalReport::from_text(&fs::read_to_string(run.join(file))?)?));
    }
    let summary = Summary::from_reports(&cfg.train.scheme.id, &reports, &git_blob_hash(&manifest), &config_text);
    fs::write(run.join(SUMMARY_TEXT), summary.to_text())?;
    fs::write(run.join(SUMMARY_JSON), summary.to_json()?)?;
    Ok(summary)
}

/// Re-evaluates the last-epoch checkpoints of every seed.
pub fn evaluate_run(run: &Path) -> Result<Vec<(u64, EvalReport)>> {
    require(run, &[CONFIG_FILE.into(), MANIFEST_FILE.into()])?;
    let cfg = ExperimentConfig::parse(&fs::read_to_string(run.join(CONFIG_FILE))?)?;
    let corpus = load_corpus(&cfg)?;
    if fs::read_to_string(run.join(MANIFEST_FILE))? != corpus_manifest(&corpus) {
        return Err(Error::Checkpoint("dataset differs from the one the run was trained on".into()));
    }
    let meta = CheckpointMeta::new(&corpus.labels, &corpus.vocab);
    let dims = ModelDims {
        labels: corpus.labels.len(),
        vocab: corpus.vocab.len(),
        embed: cfg.train.embed,
        hidden: cfg.train.hidden,
    };
    let last = cfg.train.epochs.checked_sub(1).ok_or_else(|| Error::Config("zero epochs".into()))?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let dir = epoch_dir(&seed_dir(run, seed), last);
        require(&dir, &["nlg.manifest".into(), "nlg.bin".into(), "nlu.manifest".into(), "nlu.bin".into()])?;
        let mut models = DualModels::new(dims, seed);
        load_checkpoint(&dir, "nlg", &mut models.nlg.store, &meta)?;
        load_checkpoint(&dir, "nlu", &mut models.nlu.store, &meta)?;
        let report = evaluate(
            &models,
            &corpus.vocab,
            &corpus.test,
            cfg.train.share_embeddings,
            cfg.train.decode_max_len,
            threads_from_env(),
        )?;
        out.push((seed, report));
    }
    Ok(out)
}

/// Renders up to `count` recorded traces of the first seed.
pub fn show_cycle_examples(run: &Path, count: usize) -> Result<String> {
    let cfg = ExperimentConfig::parse(&fs::read_to_string(run.join(CONFIG_FILE))?)?;
    let seed = *cfg.seeds.first().ok_or_else(|| Error::Config("no seeds".into()))?;
    let path = seed_dir(run, seed).join("traces.json");
    require(run, &[PathBuf::from(format!("seed-{seed}")).join("traces.json")])?;
    let traces: Vec<CycleTrace> = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(render_traces(&traces, count))
}

pub fn render_traces(traces: &[CycleTrace], count: usize) -> String {
    traces.iter().take(count).map(CycleTrace::render).collect::<Vec<_>>().join("\n")
}

/// Single-line error for scripts: `error kind=<tag> message=<json string>`.
pub fn error_line(e: &Error) -> String {
    format!(
        "error kind={} message={}",
        e.kind(),
        serde_json::to_string(&e.to_string()).unwrap_or_else(|_| "\"?\"".into())
    )
}
