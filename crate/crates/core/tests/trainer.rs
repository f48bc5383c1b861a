mod common;

use std::collections::BTreeSet;

use dualcycle::data::synth::{generate, SynthConfig};
use dualcycle::data::{Batch, Corpus, DataConfig, SemanticFrame};
use dualcycle::math::{Graph, ParamStore};
use dualcycle::metrics::EvalReport;
use dualcycle::models::{ModelDims, SeqInput};
use dualcycle::objectives::{supervised_loss_nlg, supervised_loss_nlu};
use dualcycle::trainer::*;
use dualcycle::Error;

fn tiny_corpus(train_mrs: usize) -> Corpus {
    let (train, test) = generate(&SynthConfig {
        seed: 5,
        train_mrs,
        test_mrs: 6,
        ..Default::default()
    });
    Corpus::build(&train, &test, &DataConfig { max_len: 40, min_freq: 1 }).unwrap()
}

fn small_config(scheme: &str) -> TrainConfig {
    TrainConfig {
        scheme: LearningScheme::from_id(scheme).unwrap(),
        embed: 8,
        hidden: 12,
        batch_size: 8,
        epochs: 1,
        decode_max_len: 25,
        warm_start_epochs: 0,
        ..Default::default()
    }
}

fn dims(corpus: &Corpus, cfg: &TrainConfig) -> ModelDims {
    ModelDims {
        labels: corpus.labels.len(),
        vocab: corpus.vocab.len(),
        embed: cfg.embed,
        hidden: cfg.hidden,
    }
}

fn trainer(corpus: &Corpus, cfg: TrainConfig) -> DualTrainer {
    let models = DualModels::new(dims(corpus, &cfg), cfg.seed);
    DualTrainer::new(cfg, models, RewardModels::default(), corpus.vocab.clone(), corpus.train_references()).unwrap()
}

fn first_batch(corpus: &Corpus, n: usize) -> Batch {
    let pairs: Vec<_> = corpus.train.iter().take(n).collect();
    Batch::new(&pairs, (0..n).collect()).unwrap()
}

fn grads(store: &ParamStore) -> Vec<f64> {
    store.ids().flat_map(|id| store.grad(id).unwrap().data().to_vec()).collect()
}

fn step(store: &mut ParamStore, lr: f64, cfg: &TrainConfig) {
    store.clip_grad_norm(cfg.clip_norm);
    store.adam_update(lr, &cfg.adam).unwrap();
}

#[test]
fn iterative_scheme_matches_two_isolated_learners() {
    let corpus = tiny_corpus(12);
    let cfg = small_config("a");
    let batch = first_batch(&corpus, 6);
    let mut t = trainer(&corpus, cfg.clone());
    t.primal_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();
    t.dual_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();

    let mut alone = DualModels::new(dims(&corpus, &cfg), cfg.seed);
    let mut g = Graph::new();
    let x = g.input(batch.frames.clone());
    let steps = alone.nlg.teacher_forced(&mut g, x, &batch.targets).unwrap();
    let l1 = supervised_loss_nlg(&mut g, &steps.probs, &batch.targets).unwrap();
    g.backward_into(l1, &mut [&mut alone.nlg.store]).unwrap();
    step(&mut alone.nlg.store, cfg.lr_nlg, &cfg);
    let mut g = Graph::new();
    let q = alone.nlu.forward(&mut g, &SeqInput::from_sequences(&batch.targets), None).unwrap();
    let l2 = supervised_loss_nlu(&mut g, q, &batch.frames).unwrap();
    g.backward_into(l2, &mut [&mut alone.nlu.store]).unwrap();
    step(&mut alone.nlu.store, cfg.lr_nlu, &cfg);

    assert_eq!(t.models.nlg.store.content_hash(), alone.nlg.store.content_hash());
    assert_eq!(t.models.nlu.store.content_hash(), alone.nlu.store.content_hash());
}

#[test]
fn zero_generator_rate_leaves_the_generator_untouched() {
    let corpus = tiny_corpus(12);
    let cfg = TrainConfig {
        lr_nlg: 0.0,
        ..small_config("f")
    };
    let batch = first_batch(&corpus, 6);
    let mut t = trainer(&corpus, cfg);
    let before = t.models.nlg.store.content_hash();
    let nlu_before = t.models.nlu.store.content_hash();
    let r = t.primal_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();
    assert!(r.nlg_updated && r.nlu_updated);
    assert_eq!(t.models.nlg.store.content_hash(), before);
    assert_ne!(t.models.nlu.store.content_hash(), nlu_before);
}

#[test]
fn primal_cycle_routes_the_cross_term_to_the_generator_only() {
    let corpus = tiny_corpus(12);
    let batch = first_batch(&corpus, 5);
    let probe = |detach| {
        let mut t = trainer(&corpus, small_config("f"));
        let opts = CycleOptions { detach_joint: detach, update: false };
        t.primal_step(&batch.frames, &batch.targets, &batch.keys, opts).unwrap();
        (grads(&t.models.nlg.store), grads(&t.models.nlu.store))
    };
    let (g_full, u_full) = probe(false);
    let (g_cut, u_cut) = probe(true);
    assert_eq!(u_full, u_cut, "understanding gradient must not depend on the cut");
    assert_ne!(g_full, g_cut);

    // Independent accounting: l1 alone, and l2 alone through the generator.
    let cfg = small_config("f");
    let mut m = DualModels::new(dims(&corpus, &cfg), cfg.seed);
    let mut g = Graph::new();
    let x = g.input(batch.frames.clone());
    let steps = m.nlg.teacher_forced(&mut g, x, &batch.targets).unwrap();
    let l1 = supervised_loss_nlg(&mut g, &steps.probs, &batch.targets).unwrap();
    g.backward_into(l1, &mut [&mut m.nlg.store]).unwrap();
    let only_l1 = grads(&m.nlg.store);
    m.nlg.store.zero_grad();
    for (a, b) in g_cut.iter().zip(&only_l1) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
    let mut g = Graph::new();
    let x = g.input(batch.frames.clone());
    let steps = m.nlg.teacher_forced(&mut g, x, &batch.targets).unwrap();
    let q = m.nlu.forward(&mut g, &SeqInput::from_dists(steps.probs, steps.masks), None).unwrap();
    let l2 = supervised_loss_nlu(&mut g, q, &batch.frames).unwrap();
    g.backward_into(l2, &mut [&mut m.nlg.store]).unwrap();
    let cross = grads(&m.nlg.store);
    for ((full, cut), c) in g_full.iter().zip(&g_cut).zip(&cross) {
        assert!((full - cut - c).abs() <= 1e-10 * (1.0 + c.abs()));
    }
}

#[test]
fn dual_cycle_routes_the_cross_term_to_the_understanding_model_only() {
    let corpus = tiny_corpus(12);
    let batch = first_batch(&corpus, 5);
    let probe = |detach| {
        let mut t = trainer(&corpus, small_config("f"));
        let opts = CycleOptions { detach_joint: detach, update: false };
        t.dual_step(&batch.frames, &batch.targets, &batch.keys, opts).unwrap();
        (grads(&t.models.nlg.store), grads(&t.models.nlu.store))
    };
    let (g_full, u_full) = probe(false);
    let (g_cut, u_cut) = probe(true);
    assert_eq!(g_full, g_cut, "generator gradient must not depend on the cut");
    assert_ne!(u_full, u_cut);
}

#[test]
fn unsupervised_primal_loss_equals_the_supervised_cross_term() {
    let corpus = tiny_corpus(12);
    let batch = first_batch(&corpus, 6);
    let cfg = TrainConfig {
        joint_input: JointInput::FreeRunning,
        ..small_config("f")
    };
    let no_update = CycleOptions { detach_joint: false, update: false };
    let sup = trainer(&corpus, cfg.clone())
        .primal_step(&batch.frames, &batch.targets, &batch.keys, no_update)
        .unwrap();
    let unsup = trainer(&corpus, cfg).unsupervised_primal_step(&batch.frames, no_update).unwrap();
    assert_eq!(unsup.l1, None);
    assert_eq!(unsup.l2.unwrap().to_bits(), sup.l2.unwrap().to_bits());
}

#[test]
fn unsupervised_cycles_need_a_joint_scheme() {
    let corpus = tiny_corpus(12);
    let batch = first_batch(&corpus, 4);
    let mut t = trainer(&corpus, small_config("a"));
    let err = t.unsupervised_primal_step(&batch.frames, CycleOptions::default());
    assert!(matches!(err, Err(Error::Config(_))));
    let err = t.unsupervised_dual_step(&batch.targets, CycleOptions::default());
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn non_finite_losses_abort_with_coordinates() {
    let corpus = tiny_corpus(12);
    let batch = first_batch(&corpus, 4);
    let mut t = trainer(&corpus, small_config("f"));
    let id = t.models.nlu.store.find("nlu.b_out").unwrap();
    t.models.nlu.store.value_mut(id).data_mut()[0] = f64::NAN;
    t.epoch = 3;
    t.batch = 7;
    match t.primal_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()) {
        Err(Error::NonFiniteLoss { epoch: 3, batch: 7, .. }) => {}
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn estimator_rewards_need_pretrained_models() {
    let corpus = tiny_corpus(12);
    let cfg = small_config("k");
    let models = DualModels::new(dims(&corpus, &cfg), 1);
    let r = DualTrainer::new(cfg, models, RewardModels::default(), corpus.vocab.clone(), corpus.train_references());
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn every_reward_row_runs_and_reports_its_term() {
    let corpus = tiny_corpus(12);
    let batch = first_batch(&corpus, 4);
    let lm = dualcycle::models::RnnLm::new(corpus.vocab.len(), 6, 8, &mut common::rng(1));
    let made = dualcycle::models::Made::new(corpus.labels.len(), 16, 2, 1);
    for id in ["g", "h", "i", "j", "k", "l"] {
        let cfg = small_config(id);
        let models = DualModels::new(dims(&corpus, &cfg), 1);
        let rewards = RewardModels { lm: Some(lm.clone()), made: Some(made.clone()) };
        let mut t = DualTrainer::new(cfg, models, rewards, corpus.vocab.clone(), corpus.train_references()).unwrap();
        let before = (t.rewards.lm.as_ref().unwrap().store.content_hash(), t.rewards.made.as_ref().unwrap().store.content_hash());
        for _ in 0..2 {
            let p = t.primal_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();
            let d = t.dual_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();
            assert!(p.rl.is_some() && d.rl.is_some(), "scheme {id}");
            assert!(p.reward_mean.unwrap().is_finite() && d.reward_mean.unwrap().is_finite());
        }
        let after = (t.rewards.lm.as_ref().unwrap().store.content_hash(), t.rewards.made.as_ref().unwrap().store.content_hash());
        assert_eq!(before, after, "reward models stay frozen under scheme {id}");
    }
}

#[test]
fn warm_start_delays_reward_terms() {
    let corpus = tiny_corpus(10);
    let cfg = TrainConfig {
        epochs: 2,
        warm_start_epochs: 1,
        eval_every_epoch: false,
        ..small_config("j")
    };
    let out = train(&cfg, &corpus, RewardModels::default(), None).unwrap();
    assert_eq!(out.history[0].primal_rl, None);
    assert!(out.history[1].primal_rl.is_some());
    assert!(out.history[0].report.is_none() && out.history[1].report.is_some());
}

#[test]
fn training_writes_epoch_artifacts() {
    let corpus = tiny_corpus(10);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { epochs: 2, trace_count: 3, ..small_config("c") };
    let out = train(&cfg, &corpus, RewardModels::default(), Some(dir.path())).unwrap();
    for epoch in 0..2 {
        let d = epoch_dir(dir.path(), epoch);
        for f in ["nlg.manifest", "nlg.bin", "nlu.manifest", "nlu.bin", "report.txt", "report.json", "traces.json", "losses.json"] {
            assert!(d.join(f).is_file(), "{f} missing in epoch {epoch}");
        }
    }
    assert_eq!(out.traces.len(), 3);
    for t in &out.traces {
        assert!(t.primal_loss.is_finite() && t.dual_loss.is_finite());
        let text = t.render();
        for stage in ["x ", "f(x)", "g(f(x))", "y ", "g(y)", "f(g(y))"] {
            assert!(text.contains(stage));
        }
    }
    let saved = EvalReport::from_text(&std::fs::read_to_string(epoch_dir(dir.path(), 1).join("report.txt")).unwrap()).unwrap();
    assert_eq!(saved, out.final_report);
}

struct Echo<'a>(&'a Corpus);

impl Understand for Echo<'_> {
    fn understand(&self, seqs: &[Vec<usize>]) -> dualcycle::Result<Vec<SemanticFrame>> {
        Ok(seqs
            .iter()
            .map(|s| self.0.test.iter().find(|p| p.utterance.targets() == s.as_slice()).unwrap().frame.clone())
            .collect())
    }
}

impl Generate for Echo<'_> {
    fn generate(&self, frames: &[SemanticFrame]) -> dualcycle::Result<Vec<Vec<String>>> {
        Ok(frames
            .iter()
            .map(|f| self.0.test.iter().find(|p| &p.frame == f).unwrap().words.clone())
            .collect())
    }
}

struct Constant;

impl Generate for Constant {
    fn generate(&self, frames: &[SemanticFrame]) -> dualcycle::Result<Vec<Vec<String>>> {
        Ok(frames.iter().map(|_| vec!["there".to_string(), "is".to_string(), "a".to_string(), "pub".to_string()]).collect())
    }
}

#[test]
fn gold_echo_scores_perfectly_and_constant_output_does_not() {
    let corpus = tiny_corpus(10);
    let echo = Echo(&corpus);
    let r = evaluate_with(&echo, &echo, &corpus.test, 4, 1).unwrap();
    assert_eq!(r.scores(), [1.0; 5]);
    let distinct: BTreeSet<_> = corpus.test.iter().map(|p| &p.key).collect();
    assert_eq!(r.nlg_samples, distinct.len());
    assert_eq!(r.nlu_samples, corpus.test.len());
    let r = evaluate_with(&echo, &Constant, &corpus.test, 4, 1).unwrap();
    assert!(r.bleu < 1.0 && r.rouge_l < 1.0);
}

#[test]
fn evaluation_does_not_depend_on_thread_count() {
    let corpus = tiny_corpus(10);
    let cfg = small_config("f");
    let m = DualModels::new(dims(&corpus, &cfg), 3);
    let one = evaluate(&m, &corpus.vocab, &corpus.test, false, 20, 1).unwrap();
    let three = evaluate(&m, &corpus.vocab, &corpus.test, false, 20, 3).unwrap();
    assert_eq!(one, three);
    let squares = batched_map(&(0..50).collect::<Vec<u64>>(), 7, 4, |c| Ok(c.iter().map(|v| v * v).collect())).unwrap();
    assert_eq!(squares, (0..50).map(|v| v * v).collect::<Vec<_>>());
}

#[test]
fn evaluation_rejects_an_empty_test_set() {
    let corpus = tiny_corpus(10);
    let echo = Echo(&corpus);
    assert!(matches!(evaluate_with(&echo, &echo, &[], 4, 1), Err(Error::EmptyDataset(_))));
}

#[test]
fn joint_training_overfits_a_single_pair() {
    let corpus = tiny_corpus(3);
    let batch = first_batch(&corpus, 1);
    let cfg = TrainConfig { embed: 16, hidden: 32, lr_nlg: 1e-2, lr_nlu: 1e-2, ..small_config("f") };
    let mut t = trainer(&corpus, cfg);
    let mut last = StepReport::default();
    for _ in 0..300 {
        last = t.primal_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();
    }
    assert!(last.l1.unwrap() < 0.05 && last.l2.unwrap() < 0.05, "{last:?}");
}

#[test]
fn unsupervised_autoencoding_of_one_frame() {
    let corpus = tiny_corpus(3);
    let batch = first_batch(&corpus, 1);
    let cfg = TrainConfig { lr_nlg: 1e-2, lr_nlu: 1e-2, unsupervised: true, ..small_config("f") };
    let mut t = trainer(&corpus, cfg);
    let probe = t
        .unsupervised_primal_step(&batch.frames, CycleOptions { detach_joint: false, update: false })
        .unwrap();
    assert!(probe.nlg_grad_norm > 0.0 && probe.nlu_grad_norm > 0.0);
    let probe = t
        .unsupervised_dual_step(&batch.targets, CycleOptions { detach_joint: false, update: false })
        .unwrap();
    assert!(probe.nlg_grad_norm > 0.0 && probe.nlu_grad_norm > 0.0);
    let mut steps = 0;
    let mut loss = f64::INFINITY;
    while steps < 500 && loss >= 0.05 {
        loss = t.unsupervised_primal_step(&batch.frames, CycleOptions::default()).unwrap().l2.unwrap();
        steps += 1;
    }
    assert!(loss < 0.05, "reconstruction loss {loss} after {steps} steps");
}

#[test]
fn reward_placement_moves_the_reward_gradient() {
    let corpus = tiny_corpus(12);
    let batch = first_batch(&corpus, 6);
    let norms = |scheme: &str| {
        let cfg = TrainConfig { supervised_weight: 0.0, rl_weight: 1.0, baseline: false, ..small_config(scheme) };
        let mut t = trainer(&corpus, cfg);
        t.rl_active = true;
        let opts = CycleOptions { detach_joint: false, update: false };
        let r = t.primal_step(&batch.frames, &batch.targets, &batch.keys, opts).unwrap();
        (r.nlg_grad_norm, r.nlu_grad_norm)
    };
    let (mid_nlg, mid_nlu) = norms("i");
    let (end_nlg, end_nlu) = norms("j");
    assert!(mid_nlg > mid_nlu, "mid: {mid_nlg} vs {mid_nlu}");
    assert!(end_nlu > end_nlg, "end: {end_nlg} vs {end_nlu}");
}
