//! Line-oriented `key = value` configuration with `[section]` headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coupling::{CouplingMode, JointOutput};
use crate::data::synth::SynthConfig;
use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::models::PretrainConfig;
use crate::objectives::{Placement, RewardFamily, RewardSpec};
use crate::trainer::{JointInput, LearningScheme, TrainConfig};

pub const DEFAULT_SEEDS: [u64; 3] = [13, 42, 1337];

/// One `key = value` line with its section and the byte offset of the line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IniEntry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub offset: usize,
}

/// Comments start with `#` or `;` at the beginning of a line.
pub fn parse_ini(text: &str) -> Result<Vec<IniEntry>> {
    let mut out = Vec::new();
    let mut section = String::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim();
        let here = offset;
        offset += raw.len();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                offset: here,
                message: format!("unterminated section header {line:?}"),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            offset: here,
            message: format!("expected key = value, found {line:?}"),
        })?;
        out.push(IniEntry {
            section: section.clone(),
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            offset: here,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// A directory holding `trainset.csv` and `testset.csv`.
    Dir(PathBuf),
    Files { train: PathBuf, test: PathBuf },
    Synthetic(SynthConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainSettings {
    pub cfg: PretrainConfig,
    pub lm_embed: usize,
    pub lm_hidden: usize,
    pub made_hidden: usize,
    pub made_orderings: usize,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        Self {
            cfg: PretrainConfig::default(),
            lm_embed: 50,
            lm_hidden: 200,
            made_hidden: 200,
            made_orderings: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub data_cfg: DataConfig,
    /// Training pairs kept after a fixed shuffle.
    pub subset: Option<usize>,
    /// Distinct test MRs kept, in file order.
    pub test_mrs: Option<usize>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub pretrain: PretrainSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SynthConfig::default()),
            data_cfg: DataConfig::default(),
            subset: None,
            test_mrs: None,
            train: TrainConfig {
                eval_threads: threads_from_env(),
                ..TrainConfig::default()
            },
            seeds: DEFAULT_SEEDS.to_vec(),
            out: PathBuf::from("runs/default"),
            pretrain: PretrainSettings::default(),
        }
    }
}

/// `DUALCYCLE_THREADS`, defaulting to one evaluation worker.
pub fn threads_from_env() -> usize {
    std::env::var("DUALCYCLE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(1)
}

fn parse_value<T: std::str::FromStr>(e: &IniEntry) -> Result<T> {
    e.value.parse().map_err(|_| Error::Parse {
        offset: e.offset,
        message: format!("[{}] {}: cannot parse {:?}", e.section, e.key, e.value),
    })
}

fn parse_bool(e: &IniEntry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse {
            offset: e.offset,
            message: format!("[{}] {}: expected a boolean, found {:?}", e.section, e.key, e.value),
        }),
    }
}

fn parse_with<T>(e: &IniEntry, f: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    f(&e.value).map_err(|err| Error::Parse {
        offset: e.offset,
        message: format!("[{}] {}: {err}", e.section, e.key),
    })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_ini(text)?;
        let mut cfg = ExperimentConfig::default();
        let mut dir = None;
        let mut train_file = None;
        let mut test_file = None;
        let mut synth = SynthConfig::default();
        let mut synthetic = None;
        let mut scheme_id = String::from("f");
        let mut custom: BTreeMap<&str, &IniEntry> = BTreeMap::new();
        let t = &mut cfg.train;
        let p = &mut cfg.pretrain;
        for e in &entries {
            match (e.section.as_str(), e.key.as_str()) {
                ("data", "dir") => dir = Some(PathBuf::from(&e.value)),
                ("data", "train_file") => train_file = Some(PathBuf::from(&e.value)),
                ("data", "test_file") => test_file = Some(PathBuf::from(&e.value)),
                ("data", "synthetic") => synthetic = Some(parse_bool(e)?),
                ("data", "synthetic_seed") => synth.seed = parse_value(e)?,
                ("data", "synthetic_train_mrs") => synth.train_mrs = parse_value(e)?,
                ("data", "synthetic_test_mrs") => synth.test_mrs = parse_value(e)?,
                ("data", "subset") => cfg.subset = Some(parse_value(e)?),
                ("data", "test_mrs") => cfg.test_mrs = Some(parse_value(e)?),
                ("data", "max_len") => cfg.data_cfg.max_len = parse_value(e)?,
                ("data", "min_freq") => cfg.data_cfg.min_freq = parse_value(e)?,
                ("experiment", "scheme") => scheme_id = e.value.clone(),
                ("experiment", "seeds") => {
                    cfg.seeds = e
                        .value
                        .split(',')
                        .map(|s| {
                            s.trim().parse().map_err(|_| Error::Parse {
                                offset: e.offset,
                                message: format!("bad seed {s:?}"),
                            })
                        })
                        .collect::<Result<_>>()?
                }
                ("experiment", "out") => cfg.out = PathBuf::from(&e.value),
                ("train", "lr_nlg") => t.lr_nlg = parse_value(e)?,
                ("train", "lr_nlu") => t.lr_nlu = parse_value(e)?,
                ("train", "batch_size") => t.batch_size = parse_value(e)?,
                ("train", "epochs") => t.epochs = parse_value(e)?,
                ("train", "embed") => t.embed = parse_value(e)?,
                ("train", "hidden") => t.hidden = parse_value(e)?,
                ("train", "share_embeddings") => t.share_embeddings = parse_bool(e)?,
                ("train", "clip_norm") => t.clip_norm = parse_value(e)?,
                ("train", "joint_input") => t.joint_input = parse_with(e, str::parse::<JointInput>)?,
                ("train", "decode_max_len") => t.decode_max_len = parse_value(e)?,
                ("train", "supervised_weight") => t.supervised_weight = parse_value(e)?,
                ("train", "rl_weight") => t.rl_weight = parse_value(e)?,
                ("train", "baseline") => t.baseline = parse_bool(e)?,
                ("train", "baseline_decay") => t.baseline_decay = parse_value(e)?,
                ("train", "warm_start_epochs") => t.warm_start_epochs = parse_value(e)?,
                ("train", "trace_count") => t.trace_count = parse_value(e)?,
                ("train", "eval_every_epoch") => t.eval_every_epoch = parse_bool(e)?,
                ("train", "unsupervised") => t.unsupervised = parse_bool(e)?,
                ("train", k @ ("nlg_output" | "nlu_output" | "reward_family" | "reward_placement")) => {
                    custom.insert(k, e);
                }
                ("pretrain", "epochs") => p.cfg.epochs = parse_value(e)?,
                ("pretrain", "batch_size") => p.cfg.batch_size = parse_value(e)?,
                ("pretrain", "learning_rate") => p.cfg.learning_rate = parse_value(e)?,
                ("pretrain", "lm_embed") => p.lm_embed = parse_value(e)?,
                ("pretrain", "lm_hidden") => p.lm_hidden = parse_value(e)?,
                ("pretrain", "made_hidden") => p.made_hidden = parse_value(e)?,
                ("pretrain", "made_orderings") => p.made_orderings = parse_value(e)?,
                _ => {
                    return Err(Error::Parse {
                        offset: e.offset,
                        message: format!("unknown key [{}] {}", e.section, e.key),
                    })
                }
            }
        }
        cfg.data = match (synthetic, dir, train_file, test_file) {
            (Some(true), ..) => DataSource::Synthetic(synth),
            (_, _, Some(train), Some(test)) => DataSource::Files { train, test },
            (_, Some(d), None, None) => DataSource::Dir(d),
            (_, _, Some(_), None) | (_, _, None, Some(_)) => {
                return Err(Error::Config("train_file and test_file must be given together".into()))
            }
            _ => DataSource::Synthetic(synth),
        };
        cfg.train.scheme = resolve_scheme(&scheme_id, &custom)?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Canonical rendering that [`ExperimentConfig::parse`] reads back. The
    /// output directory is left out so that runs differing only in where
    /// they write produce identical echoes.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let t = &self.train;
        let p = &self.pretrain;
        let _ = writeln!(s, "[data]");
        match &self.data {
            DataSource::Dir(d) => {
                let _ = writeln!(s, "dir = {}", d.display());
            }
            DataSource::Files { train, test } => {
                let _ = writeln!(s, "train_file = {}", train.display());
                let _ = writeln!(s, "test_file = {}", test.display());
            }
            DataSource::Synthetic(c) => {
                let _ = writeln!(s, "synthetic = true");
                let _ = writeln!(s, "synthetic_seed = {}", c.seed);
                let _ = writeln!(s, "synthetic_train_mrs = {}", c.train_mrs);
                let _ = writeln!(s, "synthetic_test_mrs = {}", c.test_mrs);
            }
        }
        if let Some(n) = self.subset {
            let _ = writeln!(s, "subset = {n}");
        }
        if let Some(n) = self.test_mrs {
            let _ = writeln!(s, "test_mrs = {n}");
        }
        let _ = writeln!(s, "max_len = {}", self.data_cfg.max_len);
        let _ = writeln!(s, "min_freq = {}", self.data_cfg.min_freq);
        let _ = writeln!(s, "\n[experiment]");
        let _ = writeln!(s, "scheme = {}", t.scheme.id);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(", "));
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "lr_nlg = {:?}", t.lr_nlg);
        let _ = writeln!(s, "lr_nlu = {:?}", t.lr_nlu);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "embed = {}", t.embed);
        let _ = writeln!(s, "hidden = {}", t.hidden);
        let _ = writeln!(s, "share_embeddings = {}", t.share_embeddings);
        let _ = writeln!(s, "clip_norm = {:?}", t.clip_norm);
        let _ = writeln!(s, "joint_input = {}", t.joint_input);
        let _ = writeln!(s, "decode_max_len = {}", t.decode_max_len);
        let _ = writeln!(s, "supervised_weight = {:?}", t.supervised_weight);
        let _ = writeln!(s, "rl_weight = {:?}", t.rl_weight);
        let _ = writeln!(s, "baseline = {}", t.baseline);
        let _ = writeln!(s, "baseline_decay = {:?}", t.baseline_decay);
        let _ = writeln!(s, "warm_start_epochs = {}", t.warm_start_epochs);
        let _ = writeln!(s, "trace_count = {}", t.trace_count);
        let _ = writeln!(s, "eval_every_epoch = {}", t.eval_every_epoch);
        let _ = writeln!(s, "unsupervised = {}", t.unsupervised);
        if t.scheme.id == "custom" {
            let _ = writeln!(s, "nlg_output = {}", t.scheme.coupling.nlg_output);
            let _ = writeln!(s, "nlu_output = {}", t.scheme.coupling.nlu_output);
            if let Some(r) = t.scheme.reward {
                let _ = writeln!(s, "reward_family = {}", r.family);
                let _ = writeln!(s, "reward_placement = {}", r.placement);
            }
        }
        let _ = writeln!(s, "\n[pretrain]");
        let _ = writeln!(s, "epochs = {}", p.cfg.epochs);
        let _ = writeln!(s, "batch_size = {}", p.cfg.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", p.cfg.learning_rate);
        let _ = writeln!(s, "lm_embed = {}", p.lm_embed);
        let _ = writeln!(s, "lm_hidden = {}", p.lm_hidden);
        let _ = writeln!(s, "made_hidden = {}", p.made_hidden);
        let _ = writeln!(s, "made_orderings = {}", p.made_orderings);
        s
    }
}

fn resolve_scheme(id: &str, custom: &BTreeMap<&str, &IniEntry>) -> Result<LearningScheme> {
    if id != "custom" {
        if let Some(e) = custom.values().next() {
            return Err(Error::Parse {
                offset: e.offset,
                message: format!("{} only applies to scheme = custom", e.key),
            });
        }
        return LearningScheme::from_id(id);
    }
    let output = |k: &str| -> Result<JointOutput> {
        custom
            .get(k)
            .map(|e| parse_with(e, str::parse::<JointOutput>))
            .unwrap_or(Ok(JointOutput::Distribution))
    };
    let coupling = CouplingMode {
        nlg_output: output("nlg_output")?,
        nlu_output: output("nlu_output")?,
    };
    let reward = match (custom.get("reward_family"), custom.get("reward_placement")) {
        (None, None) => None,
        (Some(f), Some(p)) => Some(RewardSpec {
            family: parse_with(f, str::parse::<RewardFamily>)?,
            placement: parse_with(p, str::parse::<Placement>)?,
        }),
        _ => {
            return Err(Error::Config(
                "reward_family and reward_placement must be given together".into(),
            ))
        }
    };
    Ok(LearningScheme::custom(coupling, reward))
}
