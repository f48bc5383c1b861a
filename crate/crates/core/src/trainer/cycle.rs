use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{JointInput, TrainConfig};
use crate::coupling::JointOutput;
use crate::data::{References, Vocabulary, EOS};
use crate::error::{Error, Result};
use crate::math::{Graph, NodeId, ParamStore, Tensor};
use crate::metrics::sample_f1;
use crate::models::{Decoded, Feedback, Made, ModelDims, NlgModel, NluModel, RnnLm, SeqInput};
use crate::objectives::{
    bernoulli_log_probs, reinforce_grad, reward_auto_metric_nlg, reward_lm, reward_made,
    reward_reconstruction_dual, reward_reconstruction_primal, sample_bernoulli,
    supervised_loss_nlg, supervised_loss_nlu, token_log_probs, Placement, RewardFamily, RewardSpec,
    RunningBaseline,
};

/// The generator and the understanding model, initialised from one seed.
#[derive(Clone, Debug)]
pub struct DualModels {
    pub nlg: NlgModel,
    pub nlu: NluModel,
}

impl DualModels {
    pub fn new(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nlg = NlgModel::new(dims, &mut rng);
        let nlu = NluModel::new(dims, &mut rng);
        Self { nlg, nlu }
    }

    /// The table the understanding model embeds tokens with.
    pub(crate) fn nlu_table(&self, g: &mut Graph, share: bool) -> Option<NodeId> {
        share.then(|| g.param(&self.nlg.store, self.nlg.embedding()))
    }

    /// Label probabilities for token sequences, value only.
    pub fn nlu_probs(&self, seqs: &[Vec<usize>], share: bool) -> Result<Tensor> {
        let mut g = Graph::new();
        let table = self.nlu_table(&mut g, share);
        let q = self.nlu.forward(&mut g, &SeqInput::from_sequences(seqs), table)?;
        Ok(g.value(q).clone())
    }

    /// Per-step distributions of a teacher-forced pass, value only.
    pub fn nlg_teacher_forced(&self, frames: &Tensor, targets: &[Vec<usize>]) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let x = g.input(frames.clone());
        let steps = self.nlg.teacher_forced(&mut g, x, targets)?;
        Ok(steps.probs.iter().map(|&p| g.value(p).clone()).collect())
    }

    /// Greedy decode, value only; returns content tokens per frame.
    pub fn nlg_greedy(&self, frames: &Tensor, max_len: usize) -> Result<Vec<Vec<usize>>> {
        let mut g = Graph::new();
        let x = g.input(frames.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.nlg.decode(&mut g, x, Feedback::Greedy, max_len, &mut rng)?.tokens)
    }
}

/// Frozen reward estimators for the language-model / MADE reward family.
#[derive(Clone, Debug, Default)]
pub struct RewardModels {
    pub lm: Option<RnnLm>,
    pub made: Option<Made>,
}

impl RewardModels {
    fn hashes(&self) -> (Option<String>, Option<String>) {
        (
            self.lm.as_ref().map(|m| m.store.content_hash()),
            self.made.as_ref().map(|m| m.store.content_hash()),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleOptions {
    /// Stop gradients at the coupled joint output.
    pub detach_joint: bool,
    /// Apply the optimiser step; when false gradients stay in the stores.
    pub update: bool,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            detach_joint: false,
            update: true,
        }
    }
}

/// Loss values and gradient norms of one cycle step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub rl: Option<f64>,
    pub reward_mean: Option<f64>,
    /// Pre-clipping gradient norms; zero for a model the step left alone.
    pub nlg_grad_norm: f64,
    pub nlu_grad_norm: f64,
    pub nlg_updated: bool,
    pub nlu_updated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cycle {
    Primal,
    Dual,
}

impl Cycle {
    fn name(self) -> &'static str {
        match self {
            Cycle::Primal => "primal",
            Cycle::Dual => "dual",
        }
    }
}

/// Runs primal and dual cycles on mini-batches.
#[derive(Clone, Debug)]
pub struct DualTrainer {
    pub cfg: TrainConfig,
    pub models: DualModels,
    pub rewards: RewardModels,
    vocab: Vocabulary,
    /// Training references by MR key, for the metric rewards.
    refs: References,
    primal_baseline: RunningBaseline,
    dual_baseline: RunningBaseline,
    rng: ChaCha8Rng,
    /// Whether reward terms are applied (false during warm start).
    pub rl_active: bool,
    /// Coordinates reported with non-finite losses.
    pub epoch: usize,
    pub batch: usize,
}

struct Terms {
    total: Option<NodeId>,
}

impl Terms {
    fn add(&mut self, g: &mut Graph, node: NodeId, weight: f64) -> Result<()> {
        let term = if weight == 1.0 { node } else { g.scale(node, weight) };
        self.total = Some(match self.total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
        Ok(())
    }
}

fn feedback_for(output: JointOutput) -> Feedback {
    match output {
        JointOutput::Distribution => Feedback::Distribution,
        JointOutput::StraightThrough => Feedback::StraightThrough,
    }
}

fn with_eos(content: &[usize]) -> Vec<usize> {
    let mut v = content.to_vec();
    v.push(EOS);
    v
}

fn active_set(row: &[f64]) -> std::collections::BTreeSet<usize> {
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.5)
        .map(|(i, _)| i)
        .collect()
}

impl DualTrainer {
    pub fn new(
        cfg: TrainConfig,
        models: DualModels,
        rewards: RewardModels,
        vocab: Vocabulary,
        refs: References,
    ) -> Result<Self> {
        if cfg.unsupervised && !cfg.scheme.joint {
            return Err(Error::Config("unsupervised cycles need a joint scheme".into()));
        }
        if cfg.scheme.needs_lm() && (rewards.lm.is_none() || rewards.made.is_none()) {
            return Err(Error::Config(format!(
                "scheme {} needs a pretrained language model and MADE",
                cfg.scheme.id
            )));
        }
        let seed = cfg.seed;
        Ok(Self {
            primal_baseline: RunningBaseline::new(cfg.baseline_decay, cfg.baseline),
            dual_baseline: RunningBaseline::new(cfg.baseline_decay, cfg.baseline),
            rl_active: cfg.scheme.reward.is_some() && cfg.warm_start_epochs == 0,
            cfg,
            models,
            rewards,
            vocab,
            refs,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe),
            epoch: 0,
            batch: 0,
        })
    }

    pub fn baselines(&self) -> (f64, f64) {
        (self.primal_baseline.value(), self.dual_baseline.value())
    }

    fn zero_grads(&mut self) {
        self.models.nlg.store.zero_grad();
        self.models.nlu.store.zero_grad();
    }

    /// Supervised primal cycle on paired data: frame → sentence → frame.
    pub fn primal_step(
        &mut self,
        frames: &Tensor,
        targets: &[Vec<usize>],
        keys: &[String],
        opts: CycleOptions,
    ) -> Result<StepReport> {
        let sup = !self.cfg.unsupervised;
        self.run_primal(frames, sup.then_some(targets), Some(keys), opts)
    }

    /// Supervised dual cycle on paired data: sentence → frame → sentence.
    pub fn dual_step(
        &mut self,
        frames: &Tensor,
        targets: &[Vec<usize>],
        keys: &[String],
        opts: CycleOptions,
    ) -> Result<StepReport> {
        let sup = !self.cfg.unsupervised;
        self.run_dual(Some(frames), sup, targets, Some(keys), opts)
    }

    /// Primal cycle on frames alone; trains through the joint only.
    pub fn unsupervised_primal_step(&mut self, frames: &Tensor, opts: CycleOptions) -> Result<StepReport> {
        if !self.cfg.scheme.joint {
            return Err(Error::Config("unsupervised cycles need a joint scheme".into()));
        }
        self.run_primal(frames, None, None, opts)
    }

    /// Dual cycle on sentences alone (content plus end marker).
    pub fn unsupervised_dual_step(&mut self, targets: &[Vec<usize>], opts: CycleOptions) -> Result<StepReport> {
        if !self.cfg.scheme.joint {
            return Err(Error::Config("unsupervised cycles need a joint scheme".into()));
        }
        self.run_dual(None, false, targets, None, opts)
    }

    fn run_primal(
        &mut self,
        frames: &Tensor,
        targets: Option<&[Vec<usize>]>,
        keys: Option<&[String]>,
        opts: CycleOptions,
    ) -> Result<StepReport> {
        self.zero_grads();
        let joint = self.cfg.scheme.joint;
        let coupling = self.cfg.scheme.coupling;
        let mut report = StepReport::default();
        let mut g = Graph::new();
        let x = g.input(frames.clone());
        let mut terms = Terms { total: None };

        let tf = match targets {
            Some(t) => Some(self.models.nlg.teacher_forced(&mut g, x, t)?),
            None => None,
        };
        if let (Some(tf), Some(t)) = (&tf, targets) {
            let l1 = supervised_loss_nlg(&mut g, &tf.probs, t)?;
            report.l1 = Some(g.value(l1).item()?);
            terms.add(&mut g, l1, self.cfg.supervised_weight)?;
        }
        if joint {
            let (dists, masks) = match (&tf, self.cfg.joint_input) {
                (Some(tf), JointInput::TeacherForced) => (tf.probs.clone(), tf.masks.clone()),
                _ => {
                    let fb = feedback_for(coupling.nlg_output);
                    let d = self.models.nlg.decode(&mut g, x, fb, self.cfg.decode_max_len, &mut self.rng)?;
                    (d.probs, d.masks)
                }
            };
            let coupled: Vec<NodeId> = dists
                .iter()
                .map(|&p| {
                    let c = coupling.couple_nlg(&mut g, p);
                    if opts.detach_joint {
                        g.detach(c)
                    } else {
                        c
                    }
                })
                .collect();
            let table = self.models.nlu_table(&mut g, self.cfg.share_embeddings);
            let q = self.models.nlu.forward(&mut g, &SeqInput::from_dists(coupled, masks), table)?;
            let l2 = supervised_loss_nlu(&mut g, q, frames)?;
            report.l2 = Some(g.value(l2).item()?);
            let w = if targets.is_some() { self.cfg.supervised_weight } else { 1.0 };
            terms.add(&mut g, l2, w)?;
            if let (Some(spec), true) = (self.cfg.scheme.reward, self.rl_active) {
                let (rl, mean) = self.primal_rl(&mut g, spec, x, frames, keys, q)?;
                report.rl = Some(g.value(rl).item()?);
                report.reward_mean = Some(mean);
                terms.add(&mut g, rl, self.cfg.rl_weight)?;
            }
        }
        let nlu_active = joint;
        self.finish(g, terms, Cycle::Primal, true, nlu_active, opts, &mut report)?;
        Ok(report)
    }

    fn run_dual(
        &mut self,
        frames: Option<&Tensor>,
        supervised: bool,
        targets: &[Vec<usize>],
        keys: Option<&[String]>,
        opts: CycleOptions,
    ) -> Result<StepReport> {
        self.zero_grads();
        let joint = self.cfg.scheme.joint;
        let coupling = self.cfg.scheme.coupling;
        let mut report = StepReport::default();
        let mut g = Graph::new();
        let mut terms = Terms { total: None };

        let table = self.models.nlu_table(&mut g, self.cfg.share_embeddings);
        let q = self.models.nlu.forward(&mut g, &SeqInput::from_sequences(targets), table)?;
        if let (true, Some(x)) = (supervised, frames) {
            let l2 = supervised_loss_nlu(&mut g, q, x)?;
            report.l2 = Some(g.value(l2).item()?);
            terms.add(&mut g, l2, self.cfg.supervised_weight)?;
        }
        if joint {
            let c = coupling.couple_nlu(&mut g, q);
            let c = if opts.detach_joint { g.detach(c) } else { c };
            let tf = self.models.nlg.teacher_forced(&mut g, c, targets)?;
            let l1 = supervised_loss_nlg(&mut g, &tf.probs, targets)?;
            report.l1 = Some(g.value(l1).item()?);
            let w = if supervised { self.cfg.supervised_weight } else { 1.0 };
            terms.add(&mut g, l1, w)?;
            if let (Some(spec), true) = (self.cfg.scheme.reward, self.rl_active) {
                let (rl, mean) = self.dual_rl(&mut g, spec, q, c, &tf.probs, frames, targets, keys)?;
                report.rl = Some(g.value(rl).item()?);
                report.reward_mean = Some(mean);
                terms.add(&mut g, rl, self.cfg.rl_weight)?;
            }
        }
        let nlg_active = joint || self.cfg.share_embeddings;
        self.finish(g, terms, Cycle::Dual, nlg_active, true, opts, &mut report)?;
        Ok(report)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &mut self,
        g: Graph,
        terms: Terms,
        cycle: Cycle,
        nlg_active: bool,
        nlu_active: bool,
        opts: CycleOptions,
        report: &mut StepReport,
    ) -> Result<()> {
        let loss = terms.total.ok_or_else(|| Error::contract("cycle produced no loss term"))?;
        let value = g.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                batch: self.batch,
                cycle: cycle.name().into(),
                detail: format!("total loss {value}"),
            });
        }
        g.backward_into(loss, &mut [&mut self.models.nlg.store, &mut self.models.nlu.store])?;
        report.nlg_grad_norm = if nlg_active { self.models.nlg.store.grad_norm() } else { 0.0 };
        report.nlu_grad_norm = if nlu_active { self.models.nlu.store.grad_norm() } else { 0.0 };
        for (norm, model) in [(report.nlg_grad_norm, "generator"), (report.nlu_grad_norm, "understanding")] {
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: self.batch,
                    cycle: cycle.name().into(),
                    detail: format!("{model} gradient norm {norm}"),
                });
            }
        }
        if !opts.update {
            return Ok(());
        }
        let (clip, adam) = (self.cfg.clip_norm, self.cfg.adam);
        if nlg_active {
            self.models.nlg.store.clip_grad_norm(clip);
            self.models.nlg.store.adam_update(self.cfg.lr_nlg, &adam)?;
            report.nlg_updated = true;
        }
        if nlu_active {
            self.models.nlu.store.clip_grad_norm(clip);
            self.models.nlu.store.adam_update(self.cfg.lr_nlu, &adam)?;
            report.nlu_updated = true;
        }
        self.zero_grads();
        Ok(())
    }

    fn references(&self, keys: Option<&[String]>, b: usize) -> Result<&[Vec<String>]> {
        let key = keys
            .and_then(|k| k.get(b))
            .ok_or_else(|| Error::Reward("metric reward needs paired references".into()))?;
        self.refs
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Reward(format!("no training references for {key:?}")))
    }

    fn sentence_metric(&self, decoded: &Decoded, keys: Option<&[String]>) -> Result<Vec<f64>> {
        decoded
            .tokens
            .iter()
            .enumerate()
            .map(|(b, toks)| reward_auto_metric_nlg(&self.vocab.decode(toks), self.references(keys, b)?))
            .collect()
    }

    /// Language-model reward; an empty sentence scores the probability of
    /// ending straight away.
    fn sentence_lm(&self, decoded: &Decoded) -> Result<Vec<f64>> {
        let lm = self.rewards.lm.as_ref().ok_or_else(|| Error::Reward("no language model".into()))?;
        let mut out = vec![0.0; decoded.tokens.len()];
        let nonempty: Vec<usize> = (0..out.len()).filter(|&b| !decoded.tokens[b].is_empty()).collect();
        let seqs: Vec<Vec<usize>> = nonempty.iter().map(|&b| decoded.tokens[b].clone()).collect();
        for (&b, r) in nonempty.iter().zip(reward_lm(lm, &seqs)?) {
            out[b] = r;
        }
        if nonempty.len() < out.len() {
            let p_end = lm.next_distribution(&[])?[EOS].max(crate::math::LOG_FLOOR).ln();
            for (b, r) in out.iter_mut().enumerate() {
                if decoded.tokens[b].is_empty() {
                    *r = p_end;
                }
            }
        }
        Ok(out)
    }

    fn frame_made(&self, actions: &Tensor) -> Result<Vec<f64>> {
        let made = self.rewards.made.as_ref().ok_or_else(|| Error::Reward("no MADE estimator".into()))?;
        reward_made(made, actions)
    }

    fn primal_rl(
        &mut self,
        g: &mut Graph,
        spec: RewardSpec,
        x: NodeId,
        frames: &Tensor,
        keys: Option<&[String]>,
        q: NodeId,
    ) -> Result<(NodeId, f64)> {
        let (log_probs, rewards) = match spec.placement {
            Placement::Mid => {
                let d = self.models.nlg.decode(g, x, Feedback::Sample, self.cfg.decode_max_len, &mut self.rng)?;
                let lp = token_log_probs(g, &d.probs, &d.chosen, &d.masks)?;
                let rewards = match spec.family {
                    RewardFamily::Reconstruction => {
                        let seqs: Vec<Vec<usize>> = d.tokens.iter().map(|t| with_eos(t)).collect();
                        let probs = self.models.nlu_probs(&seqs, self.cfg.share_embeddings)?;
                        reward_reconstruction_primal(&probs, frames)?
                    }
                    RewardFamily::AutoMetric => self.sentence_metric(&d, keys)?,
                    RewardFamily::Estimator => self.sentence_lm(&d)?,
                };
                (lp, rewards)
            }
            Placement::End => {
                let qv = g.value(q).clone();
                let a = sample_bernoulli(&qv, &mut self.rng);
                let lp = bernoulli_log_probs(g, q, &a)?;
                let rewards = match spec.family {
                    RewardFamily::Reconstruction => reward_reconstruction_primal(&qv, frames)?,
                    RewardFamily::AutoMetric => (0..a.rows())
                        .map(|b| sample_f1(&active_set(a.row(b)), &active_set(frames.row(b))))
                        .collect(),
                    RewardFamily::Estimator => self.frame_made(&a)?,
                };
                (lp, rewards)
            }
        };
        let signals = self.primal_baseline.signals(spec.family, &rewards)?;
        let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
        Ok((reinforce_grad(g, log_probs, &signals)?, mean))
    }

    #[allow(clippy::too_many_arguments)]
    fn dual_rl(
        &mut self,
        g: &mut Graph,
        spec: RewardSpec,
        q: NodeId,
        coupled: NodeId,
        step_probs: &[NodeId],
        frames: Option<&Tensor>,
        targets: &[Vec<usize>],
        keys: Option<&[String]>,
    ) -> Result<(NodeId, f64)> {
        let gold = || frames.ok_or_else(|| Error::Reward("frame F1 reward needs gold frames".into()));
        let (log_probs, rewards) = match spec.placement {
            Placement::Mid => {
                let qv = g.value(q).clone();
                let a = sample_bernoulli(&qv, &mut self.rng);
                let lp = bernoulli_log_probs(g, q, &a)?;
                let rewards = match spec.family {
                    RewardFamily::Reconstruction => {
                        let probs = self.models.nlg_teacher_forced(&a, targets)?;
                        reward_reconstruction_dual(&probs, targets)?
                    }
                    RewardFamily::AutoMetric => {
                        let x = gold()?;
                        (0..a.rows())
                            .map(|b| sample_f1(&active_set(a.row(b)), &active_set(x.row(b))))
                            .collect()
                    }
                    RewardFamily::Estimator => self.frame_made(&a)?,
                };
                (lp, rewards)
            }
            Placement::End => {
                let d = self.models.nlg.decode(g, coupled, Feedback::Sample, self.cfg.decode_max_len, &mut self.rng)?;
                let lp = token_log_probs(g, &d.probs, &d.chosen, &d.masks)?;
                let rewards = match spec.family {
                    RewardFamily::Reconstruction => {
                        let probs: Vec<Tensor> = step_probs.iter().map(|&p| g.value(p).clone()).collect();
                        reward_reconstruction_dual(&probs, targets)?
                    }
                    RewardFamily::AutoMetric => self.sentence_metric(&d, keys)?,
                    RewardFamily::Estimator => self.sentence_lm(&d)?,
                };
                (lp, rewards)
            }
        };
        let signals = self.dual_baseline.signals(spec.family, &rewards)?;
        let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
        Ok((reinforce_grad(g, log_probs, &signals)?, mean))
    }

    /// Fails when a reward model's parameters moved since `before`.
    pub(crate) fn check_frozen(&self, before: &(Option<String>, Option<String>)) -> Result<()> {
        if &self.rewards.hashes() != before {
            return Err(Error::contract("reward model parameters changed during training"));
        }
        Ok(())
    }

    pub(crate) fn reward_hashes(&self) -> (Option<String>, Option<String>) {
        self.rewards.hashes()
    }
}

impl DualTrainer {
    /// Both parameter stores, e.g. to read gradients left by `update: false`.
    pub fn stores(&self) -> (&ParamStore, &ParamStore) {
        (&self.models.nlg.store, &self.models.nlu.store)
    }
}
