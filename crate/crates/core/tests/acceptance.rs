//! End-to-end acceptance checks, run in order by a plain `main` so every
//! `criterion N: PASS|FAIL` line reaches the output. Arguments filter criteria
//! by function name.
//!
//! The subset replication runs (criteria 3 and 4) are shared through a cache,
//! so scheme (f) is trained once per seed.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::panic::catch_unwind;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, OnceLock};

use common::*;
use dualcycle::cli::{run_experiment, ExperimentConfig, Summary};
use dualcycle::data::synth::{generate, SynthConfig};
use dualcycle::data::{Batch, Corpus, DataConfig, SemanticFrame, EOS};
use dualcycle::math::{Graph, GruCell, ParamStore, Tensor};
use dualcycle::metrics::{bleu, lcs_len, micro_f1, ngram_counts, rouge_l, rouge_n};
use dualcycle::models::{Made, ModelDims, NlgModel, NluModel, SeqInput};
use dualcycle::objectives::{
    bernoulli_log_probs, reinforce_grad, sample_bernoulli, supervised_loss_nlg, supervised_loss_nlu, RewardFamily,
    RunningBaseline,
};
use dualcycle::trainer::*;
use rand::Rng;

static REPORTED: AtomicBool = AtomicBool::new(false);

fn report(n: u32, pass: bool, detail: &str) {
    REPORTED.store(true, Ordering::SeqCst);
    println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

// ---------------------------------------------------------------- criterion 1

fn both(s: &mut (NlgModel, NluModel)) -> Vec<&mut ParamStore> {
    vec![&mut s.0.store, &mut s.1.store]
}

fn randomize(store: &mut ParamStore, r: &mut impl Rng, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let shape = store.value(id).shape().to_vec();
        *store.value_mut(id) = random_tensor(r, &shape, scale);
    }
}

fn c1_gradients_match_finite_differences() {
    let mut worst: f64 = 0.0;
    let mut worst_name = "";
    let mut note = |name: &'static str, err: f64| {
        if err > worst {
            worst = err;
            worst_name = name;
        }
    };
    for (name, mut inputs, build) in op_cases() {
        note(name, input_grad_error(&mut inputs, build));
    }

    let mut r = rng(31);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 4, 6, &mut r);
    randomize(&mut store, &mut r, 0.8);
    let x = random_tensor(&mut r, &[3, 4], 1.0);
    let h = random_tensor(&mut r, &[3, 6], 1.0);
    let mut state = (store, cell);
    note(
        "gru",
        param_grad_error(
            &mut state,
            |s| vec![&mut s.0],
            |s, g| {
                let (xi, hi) = (g.input(x.clone()), g.input(h.clone()));
                let out = s.1.step(g, &s.0, xi, hi).unwrap();
                probe_loss(g, out, 3)
            },
            200,
        ),
    );

    let dims = ModelDims { labels: 6, vocab: 20, embed: 5, hidden: 8 };
    let frames = Tensor::from_rows(&[
        vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0],
        vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0],
    ])
    .unwrap();
    let targets = vec![vec![5, 9, 4, EOS], vec![7, EOS], vec![12, 6, 19, 11, 8, EOS]];
    let mut models = (NlgModel::new(dims, &mut r), NluModel::new(dims, &mut r));
    randomize(&mut models.0.store, &mut r, 0.5);
    randomize(&mut models.1.store, &mut r, 0.5);

    // f alone: understanding loss on gold sentences.
    note(
        "nlu",
        param_grad_error(
            &mut models,
            both,
            |s, g| {
                let q = s.1.forward(g, &SeqInput::from_sequences(&targets), None).unwrap();
                supervised_loss_nlu(g, q, &frames).unwrap()
            },
            40,
        ),
    );
    // g alone: teacher-forced generation loss.
    note(
        "nlg",
        param_grad_error(
            &mut models,
            both,
            |s, g| {
                let x = g.input(frames.clone());
                let steps = s.0.teacher_forced(g, x, &targets).unwrap();
                supervised_loss_nlg(g, &steps.probs, &targets).unwrap()
            },
            40,
        ),
    );
    // Frame -> distributions -> frame, both losses, through the joint.
    note(
        "primal composite",
        param_grad_error(
            &mut models,
            both,
            |s, g| {
                let x = g.input(frames.clone());
                let steps = s.0.teacher_forced(g, x, &targets).unwrap();
                let l1 = supervised_loss_nlg(g, &steps.probs, &targets).unwrap();
                let q = s.1.forward(g, &SeqInput::from_dists(steps.probs, steps.masks), None).unwrap();
                let l2 = supervised_loss_nlu(g, q, &frames).unwrap();
                g.add(l1, l2).unwrap()
            },
            40,
        ),
    );
    // Sentence -> label probabilities -> sentence.
    note(
        "dual composite",
        param_grad_error(
            &mut models,
            both,
            |s, g| {
                let q = s.1.forward(g, &SeqInput::from_sequences(&targets), None).unwrap();
                let l1 = supervised_loss_nlu(g, q, &frames).unwrap();
                let steps = s.0.teacher_forced(g, q, &targets).unwrap();
                let l2 = supervised_loss_nlg(g, &steps.probs, &targets).unwrap();
                g.add(l1, l2).unwrap()
            },
            40,
        ),
    );
    report(
        1,
        worst <= FD_REL_TOL,
        &format!("worst relative error {worst:.2e} at {worst_name}"),
    );
}

// ---------------------------------------------------------------- criterion 2

fn c2_supervised_training_overfits_eight_pairs() {
    let (train, test) = generate(&SynthConfig { train_mrs: 8, test_mrs: 2, ..Default::default() });
    let corpus = Corpus::build(&train, &test, &DataConfig { max_len: 60, min_freq: 1 }).unwrap();
    let cfg = TrainConfig {
        scheme: LearningScheme::from_id("a").unwrap(),
        ..Default::default()
    };
    let dims = ModelDims {
        labels: corpus.labels.len(),
        vocab: corpus.vocab.len(),
        embed: cfg.embed,
        hidden: cfg.hidden,
    };
    let models = DualModels::new(dims, cfg.seed);
    let mut t = DualTrainer::new(cfg, models, RewardModels::default(), corpus.vocab.clone(), corpus.train_references()).unwrap();
    // One reference per MR: a frame seen with two sentences cannot decode to both.
    let mut seen = BTreeSet::new();
    let pairs: Vec<_> = corpus.train.iter().filter(|p| seen.insert(p.key.clone())).collect();
    assert_eq!(pairs.len(), 8);
    let batch = Batch::new(&pairs, (0..pairs.len()).collect()).unwrap();
    let gold: Vec<BTreeSet<usize>> = pairs.iter().map(|p| p.frame.active()).collect();
    let content: Vec<Vec<usize>> = pairs.iter().map(|p| p.utterance.content().to_vec()).collect();

    let (mut f1, mut exact, mut steps) = (0.0, 0, 0);
    while steps < 500 {
        t.primal_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();
        t.dual_step(&batch.frames, &batch.targets, &batch.keys, CycleOptions::default()).unwrap();
        steps += 1;
        if steps % 25 == 0 {
            let q = t.models.nlu_probs(&batch.targets, false).unwrap();
            let pred: Vec<_> = (0..q.rows()).map(|r| SemanticFrame::from_probs(q.row(r), 0.5).active()).collect();
            f1 = micro_f1(&pred, &gold).unwrap();
            let decoded = t.models.nlg_greedy(&batch.frames, 60).unwrap();
            exact = decoded.iter().zip(&content).filter(|(d, c)| d == c).count();
            if f1 >= 0.95 && exact >= 7 {
                break;
            }
        }
    }
    report(
        2,
        f1 >= 0.95 && exact >= 7,
        &format!("after {steps} steps micro-F1 {f1:.3}, exact decodes {exact}/8"),
    );
}

// ------------------------------------------------------------ criteria 3 and 4

const SUBSET_SEEDS: [u64; 3] = [13, 42, 1337];

/// The subset protocol: 1000 training pairs, 200 test MRs, 10 epochs. Both
/// learning rates are raised to 1e-2 for every scheme alike: at 16 updates
/// per epoch the default rate leaves the understanding model on its
/// label-frequency plateau for the whole run.
fn subset_config(scheme: &str) -> ExperimentConfig {
    let seeds = SUBSET_SEEDS.map(|s| s.to_string()).join(", ");
    ExperimentConfig::parse(&format!(
        "[data]\nsynthetic = true\nsubset = 1000\ntest_mrs = 200\n\n\
         [experiment]\nscheme = {scheme}\nseeds = {seeds}\n\n\
         [train]\nepochs = 10\nlr_nlg = 0.01\nlr_nlu = 0.01\neval_every_epoch = false\n"
    ))
    .unwrap()
}

fn subset_summary(scheme: &str) -> Summary {
    static CACHE: OnceLock<Mutex<HashMap<String, Summary>>> = OnceLock::new();
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if let Some(s) = cache.get(scheme) {
        return s.clone();
    }
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = subset_config(scheme);
    cfg.out = dir.path().join(scheme);
    let started = std::time::Instant::now();
    let summary = run_experiment(&cfg).unwrap();
    println!(
        "subset run {scheme}: {:.0}s for {} seeds\n{}",
        started.elapsed().as_secs_f64(),
        SUBSET_SEEDS.len(),
        summary.to_text()
    );
    cache.insert(scheme.to_string(), summary.clone());
    summary
}

fn c3_joint_distribution_coupling_helps_understanding() {
    let a = subset_summary("a");
    let f = subset_summary("f");
    let gap = f.mean.micro_f1 - a.mean.micro_f1;
    let wins = f.per_seed.iter().zip(&a.per_seed).filter(|(f, a)| f.micro_f1 > a.micro_f1).count();
    report(
        3,
        gap >= 2.0,
        &format!(
            "mean micro-F1 (a) {:.2}, (f) {:.2}, gap {gap:.2} points; (f) ahead in {wins} of {} seeds",
            a.mean.micro_f1,
            f.mean.micro_f1,
            SUBSET_SEEDS.len()
        ),
    );
}

fn c4_end_metric_reward_does_not_hurt() {
    let f = subset_summary("f");
    let j = subset_summary("j");
    let pass = j.mean.bleu >= f.mean.bleu - 0.5 && j.mean.micro_f1 >= f.mean.micro_f1 - 1.0;
    report(
        4,
        pass,
        &format!(
            "BLEU (f) {:.2}, (j) {:.2}; micro-F1 (f) {:.2}, (j) {:.2}",
            f.mean.bleu, j.mean.bleu, f.mean.micro_f1, j.mean.micro_f1
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

fn words(r: &mut impl Rng, max_len: usize) -> Vec<String> {
    let n = r.gen_range(0..=max_len);
    (0..n).map(|_| ["a", "b", "c", "d"][r.gen_range(0..4)].to_string()).collect()
}

fn naive_count(tokens: &[String], gram: &[String]) -> usize {
    let n = gram.len();
    if tokens.len() < n {
        return 0;
    }
    (0..=tokens.len() - n).filter(|&i| tokens[i..i + n] == *gram).count()
}

fn distinct_grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for i in 0..tokens.len() {
        if i + n <= tokens.len() && !out.iter().any(|g| g[..] == tokens[i..i + n]) {
            out.push(tokens[i..i + n].to_vec());
        }
    }
    out
}

fn naive_bleu(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> f64 {
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    for (h, rs) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        let mut best = rs[0].len();
        for r in rs {
            let (dr, db) = (r.len().abs_diff(h.len()), best.abs_diff(h.len()));
            if dr < db || (dr == db && r.len() < best) {
                best = r.len();
            }
        }
        ref_len += best;
        for n in 1..=4 {
            if h.len() >= n {
                total[n - 1] += h.len() - n + 1;
            }
            for gram in distinct_grams(h, n) {
                let cap = rs.iter().map(|r| naive_count(r, &gram)).max().unwrap();
                matched[n - 1] += naive_count(h, &gram).min(cap);
            }
        }
    }
    if hyp_len == 0 {
        return 0.0;
    }
    let mut logs = Vec::new();
    for n in 0..4 {
        if total[n] > 0 {
            if matched[n] == 0 {
                return 0.0;
            }
            logs.push((matched[n] as f64 / total[n] as f64).ln());
        }
    }
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

fn naive_rouge_n(h: &[String], rs: &[Vec<String>], n: usize) -> f64 {
    rs.iter()
        .map(|r| {
            let ht = h.len().saturating_sub(n - 1);
            let rt = r.len().saturating_sub(n - 1);
            if ht == 0 || rt == 0 {
                return if h == r.as_slice() { 1.0 } else { 0.0 };
            }
            let overlap: usize = distinct_grams(h, n)
                .iter()
                .map(|g| naive_count(h, g).min(naive_count(r, g)))
                .sum();
            if overlap == 0 {
                return 0.0;
            }
            let (p, q) = (overlap as f64 / ht as f64, overlap as f64 / rt as f64);
            2.0 * p * q / (p + q)
        })
        .fold(0.0, f64::max)
}

fn table_lcs(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t[a.len()][b.len()]
}

fn naive_rouge_l(h: &[String], rs: &[Vec<String>]) -> f64 {
    rs.iter()
        .map(|r| {
            if h.is_empty() || r.is_empty() {
                return if h == r.as_slice() { 1.0 } else { 0.0 };
            }
            let l = table_lcs(h, r);
            if l == 0 {
                return 0.0;
            }
            let (p, q) = (l as f64 / h.len() as f64, l as f64 / r.len() as f64);
            2.0 * p * q / (p + q)
        })
        .fold(0.0, f64::max)
}

fn naive_micro_f1(pred: &[BTreeSet<usize>], gold: &[BTreeSet<usize>], dim: usize) -> (usize, usize, usize, f64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        for d in 0..dim {
            match (p.contains(&d), g.contains(&d)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    (tp, fp, fn_, f1)
}

fn c5_metrics_match_brute_force_oracles() {
    let mut r = rng(55);
    let mut failures = Vec::new();
    for case in 0..200 {
        let n_hyps = r.gen_range(1..4);
        let hyps: Vec<Vec<String>> = (0..n_hyps).map(|_| words(&mut r, 7)).collect();
        let refs: Vec<Vec<Vec<String>>> = (0..n_hyps)
            .map(|_| (0..r.gen_range(1..4)).map(|_| words(&mut r, 7)).collect())
            .collect();
        for h in &hyps {
            for n in 1..=4 {
                for (gram, c) in ngram_counts(h, n) {
                    if c != naive_count(h, gram) {
                        failures.push(format!("case {case}: count of {gram:?}"));
                    }
                }
                let total: usize = ngram_counts(h, n).values().sum();
                if total != h.len().saturating_sub(n - 1) {
                    failures.push(format!("case {case}: {n}-gram total"));
                }
            }
        }
        let got = bleu(&hyps, &refs, 4).unwrap();
        let want = naive_bleu(&hyps, &refs);
        if (got - want).abs() > 1e-9 {
            failures.push(format!("case {case}: bleu {got} vs {want}"));
        }
        for (h, rs) in hyps.iter().zip(&refs) {
            for n in 1..=2 {
                let (got, want) = (rouge_n(h, rs, n).unwrap(), naive_rouge_n(h, rs, n));
                if (got - want).abs() > 1e-9 {
                    failures.push(format!("case {case}: rouge-{n} {got} vs {want}"));
                }
            }
            for rf in rs {
                if lcs_len(h, rf) != table_lcs(h, rf) {
                    failures.push(format!("case {case}: lcs"));
                }
            }
            let (got, want) = (rouge_l(h, rs).unwrap(), naive_rouge_l(h, rs));
            if (got - want).abs() > 1e-9 {
                failures.push(format!("case {case}: rouge-l {got} vs {want}"));
            }
        }

        let dim = r.gen_range(1..8);
        let rows = r.gen_range(1..6);
        let set = |r: &mut rand_chacha::ChaCha8Rng| (0..dim).filter(|_| r.gen_bool(0.4)).collect::<BTreeSet<usize>>();
        let pred: Vec<_> = (0..rows).map(|_| set(&mut r)).collect();
        let gold: Vec<_> = (0..rows).map(|_| set(&mut r)).collect();
        let (_, _, _, want) = naive_micro_f1(&pred, &gold, dim);
        let got = micro_f1(&pred, &gold).unwrap();
        if (got - want).abs() > 1e-9 {
            failures.push(format!("case {case}: micro-F1 {got} vs {want}"));
        }
    }
    report(
        5,
        failures.is_empty(),
        &match failures.first() {
            None => "200 randomized cases per metric".to_string(),
            Some(f) => format!("{} mismatches, first: {f}", failures.len()),
        },
    );
}

// ---------------------------------------------------------------- criterion 6

/// Per-sample REINFORCE estimates of d E[a] / d theta for `a ~ Bernoulli(sigmoid(theta))`
/// at theta = 0, computed through the library surrogate.
fn reinforce_estimates(samples: usize, baseline: &mut RunningBaseline, r: &mut impl Rng) -> Vec<f64> {
    let mut store = ParamStore::new();
    let theta = store.add("theta", Tensor::zeros(&[1, 1]));
    let chunk = 100;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples / chunk {
        let actions = sample_bernoulli(&Tensor::full(&[chunk, 1], 0.5), r).data().to_vec();
        let signals = baseline.signals(RewardFamily::AutoMetric, &actions).unwrap();
        for (a, s) in actions.iter().zip(&signals) {
            let mut g = Graph::new();
            let t = g.param(&store, theta);
            let p = g.sigmoid(t);
            let lp = bernoulli_log_probs(&mut g, p, &Tensor::from_rows(&[vec![*a]]).unwrap()).unwrap();
            let loss = reinforce_grad(&mut g, lp, std::slice::from_ref(s)).unwrap();
            let grads = g.backward(loss).unwrap();
            // The surrogate is minimised, so the ascent direction is its negative gradient.
            out.push(-grads.get(t).unwrap()[0]);
        }
    }
    out
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn c6_reinforce_is_unbiased() {
    let mut r = rng(66);
    let mut plain = RunningBaseline::new(0.99, false);
    let (m0, se0) = mean_and_se(&reinforce_estimates(100_000, &mut plain, &mut r));
    let mut warm = RunningBaseline::new(0.99, true);
    reinforce_estimates(20_000, &mut warm, &mut r);
    let converged = warm.value();
    let (m1, se1) = mean_and_se(&reinforce_estimates(100_000, &mut warm, &mut r));
    let ok0 = (m0 - 0.25).abs() <= 2.0 * se0;
    let ok1 = (m1 - 0.25).abs() <= 2.0 * se1;
    report(
        6,
        ok0 && ok1,
        &format!(
            "no baseline {m0:.4} +- {se0:.4}; baseline {converged:.3}: {m1:.4} +- {se1:.4}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

fn c7_made_is_autoregressive() {
    let dim = 10;
    let made = Made::new(dim, 40, 5, 77);
    let mut r = rng(7);
    let mut leaks = Vec::new();
    let mut checked = 0;
    for (k, set) in made.masks.iter().enumerate() {
        let out = |x: &[f64]| {
            let mut g = Graph::new();
            let xn = g.input(Tensor::matrix(1, dim, x.to_vec()).unwrap());
            let p = made.conditionals(&mut g, xn, k).unwrap();
            g.value(p).data().to_vec()
        };
        for _ in 0..4 {
            let base: Vec<f64> = (0..dim).map(|_| f64::from(r.gen_range(0..2u8))).collect();
            let p0 = out(&base);
            for i in 0..dim {
                let mut flipped = base.clone();
                flipped[i] = 1.0 - flipped[i];
                let p1 = out(&flipped);
                for d in 0..dim {
                    checked += 1;
                    // Input i may only reach output d when it comes earlier in the ordering.
                    if set.ordering[i] >= set.ordering[d] && p0[d] != p1[d] {
                        leaks.push((k, i, d));
                    }
                }
            }
        }
    }
    let mut zero = made.clone();
    zero.zero_head();
    let frames = [vec![1.0; dim], vec![0.0; dim], (0..dim).map(|i| (i % 2) as f64).collect()];
    let worst = frames
        .iter()
        .map(|f| (zero.logprob(f).unwrap() + dim as f64 * 2f64.ln()).abs())
        .fold(0.0, f64::max);
    report(
        7,
        leaks.is_empty() && made.masks.len() == 5 && worst <= 1e-9,
        &format!("{checked} (input, output) probes, {} leaks; zero-head error {worst:.1e}", leaks.len()),
    );
}

// ---------------------------------------------------------------- criterion 8

fn probe_corpus() -> Corpus {
    let (train, test) = generate(&SynthConfig { seed: 5, train_mrs: 12, test_mrs: 4, ..Default::default() });
    Corpus::build(&train, &test, &DataConfig { max_len: 40, min_freq: 1 }).unwrap()
}

fn probe_config() -> TrainConfig {
    TrainConfig {
        scheme: LearningScheme::from_id("f").unwrap(),
        embed: 8,
        hidden: 12,
        warm_start_epochs: 0,
        ..Default::default()
    }
}

fn flat_grads(store: &ParamStore) -> Vec<f64> {
    store.ids().flat_map(|id| store.grad(id).unwrap().data().to_vec()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn c8_cycle_updates_route_to_the_right_model() {
    let corpus = probe_corpus();
    let pairs: Vec<_> = corpus.train.iter().take(6).collect();
    let batch = Batch::new(&pairs, (0..6).collect()).unwrap();
    let cfg = probe_config();
    let dims = ModelDims { labels: corpus.labels.len(), vocab: corpus.vocab.len(), embed: cfg.embed, hidden: cfg.hidden };
    let probe = |detach: bool, primal: bool| {
        let models = DualModels::new(dims, cfg.seed);
        let mut t = DualTrainer::new(cfg.clone(), models, RewardModels::default(), corpus.vocab.clone(), corpus.train_references()).unwrap();
        let opts = CycleOptions { detach_joint: detach, update: false };
        if primal {
            t.primal_step(&batch.frames, &batch.targets, &batch.keys, opts).unwrap();
        } else {
            t.dual_step(&batch.frames, &batch.targets, &batch.keys, opts).unwrap();
        }
        (flat_grads(&t.models.nlg.store), flat_grads(&t.models.nlu.store))
    };
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();

    // Primal: the cut removes generator gradient only.
    let (pg_full, pu_full) = probe(false, true);
    let (pg_cut, pu_cut) = probe(true, true);
    let primal_extra_nlg = norm(&diff(&pg_full, &pg_cut));
    let primal_extra_nlu = norm(&diff(&pu_full, &pu_cut));
    // Dual: the cut removes understanding gradient only.
    let (dg_full, du_full) = probe(false, false);
    let (dg_cut, du_cut) = probe(true, false);
    let dual_extra_nlg = norm(&diff(&dg_full, &dg_cut));
    let dual_extra_nlu = norm(&diff(&du_full, &du_cut));

    // The generator's extra primal gradient is exactly the cross term alone.
    let mut m = DualModels::new(dims, cfg.seed);
    let mut g = Graph::new();
    let x = g.input(batch.frames.clone());
    let steps = m.nlg.teacher_forced(&mut g, x, &batch.targets).unwrap();
    let q = m.nlu.forward(&mut g, &SeqInput::from_dists(steps.probs, steps.masks), None).unwrap();
    let l2 = supervised_loss_nlu(&mut g, q, &batch.frames).unwrap();
    g.backward_into(l2, &mut [&mut m.nlg.store]).unwrap();
    let cross = flat_grads(&m.nlg.store);
    let mismatch = norm(&diff(&diff(&pg_full, &pg_cut), &cross)) / norm(&cross).max(1e-300);

    let pass = primal_extra_nlu == 0.0
        && primal_extra_nlg > 0.0
        && dual_extra_nlg == 0.0
        && dual_extra_nlu > 0.0
        && mismatch < 1e-9;
    report(
        8,
        pass,
        &format!(
            "primal extra |nlg| {primal_extra_nlg:.3e} |nlu| {primal_extra_nlu:.1e}; \
             dual extra |nlg| {dual_extra_nlg:.1e} |nlu| {dual_extra_nlu:.3e}; cross-term mismatch {mismatch:.1e}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 9

fn c9_unsupervised_cycles_reduce_reconstruction_loss() {
    let (train, test) = generate(&SynthConfig { seed: 9, train_mrs: 40, test_mrs: 4, ..Default::default() });
    let corpus = Corpus::build(&train, &test, &DataConfig { max_len: 40, min_freq: 1 }).unwrap();
    // Frames and sentences come from disjoint pairs so nothing is paired.
    let frame_pairs: Vec<_> = corpus.train.iter().take(32).collect();
    let sentence_pairs: Vec<_> = corpus.train.iter().skip(32).take(32).collect();
    assert_eq!(sentence_pairs.len(), 32, "need 64 training pairs");
    let frames = Batch::new(&frame_pairs, (0..32).collect()).unwrap().frames;
    let sentences = Batch::new(&sentence_pairs, (0..32).collect()).unwrap().targets;
    let cfg = TrainConfig {
        scheme: LearningScheme::from_id("f").unwrap(),
        joint_input: JointInput::FreeRunning,
        unsupervised: true,
        embed: 16,
        hidden: 32,
        lr_nlg: 5e-3,
        lr_nlu: 5e-3,
        decode_max_len: 30,
        ..Default::default()
    };
    let dims = ModelDims { labels: corpus.labels.len(), vocab: corpus.vocab.len(), embed: cfg.embed, hidden: cfg.hidden };
    let models = DualModels::new(dims, cfg.seed);
    let mut t = DualTrainer::new(cfg, models, RewardModels::default(), corpus.vocab.clone(), corpus.train_references()).unwrap();
    let (mut p0, mut d0) = (None, None);
    let (mut p_last, mut d_last) = (f64::NAN, f64::NAN);
    let mut steps = 0;
    while steps < 2000 {
        // Any non-finite loss aborts here with its coordinates.
        let p = t.unsupervised_primal_step(&frames, CycleOptions::default()).unwrap().l2.unwrap();
        let d = t.unsupervised_dual_step(&sentences, CycleOptions::default()).unwrap().l1.unwrap();
        p0.get_or_insert(p);
        d0.get_or_insert(d);
        (p_last, d_last) = (p, d);
        steps += 1;
        if p <= 0.5 * p0.unwrap() && d <= 0.5 * d0.unwrap() {
            break;
        }
    }
    let (p0, d0) = (p0.unwrap(), d0.unwrap());
    report(
        9,
        p_last <= 0.5 * p0 && d_last <= 0.5 * d0,
        &format!("after {steps} steps primal {p0:.4} -> {p_last:.4}, dual {d0:.4} -> {d_last:.4}"),
    );
}

// --------------------------------------------------------------- criterion 10

fn c10_identical_runs_give_identical_summaries() {
    let text = "[data]\nsynthetic = true\nsynthetic_train_mrs = 40\nsynthetic_test_mrs = 6\nsubset = 120\nmin_freq = 1\n\n\
                [experiment]\nscheme = j\nseeds = 3, 4\n\n\
                [train]\nepochs = 2\nwarm_start_epochs = 1\nembed = 8\nhidden = 12\nbatch_size = 16\ndecode_max_len = 20\n";
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in ["first", "second"] {
        let mut cfg = ExperimentConfig::parse(text).unwrap();
        cfg.out = dir.path().join(run);
        run_experiment(&cfg).unwrap();
        bytes.push((
            fs::read(cfg.out.join("summary.txt")).unwrap(),
            fs::read(cfg.out.join("summary.json")).unwrap(),
        ));
    }
    report(
        10,
        bytes[0] == bytes[1],
        &format!("summary.txt {} bytes, summary.json {} bytes", bytes[0].0.len(), bytes[0].1.len()),
    );
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn()); 10] = [
        (1, "c1_gradients_match_finite_differences", c1_gradients_match_finite_differences),
        (2, "c2_supervised_training_overfits_eight_pairs", c2_supervised_training_overfits_eight_pairs),
        (3, "c3_joint_distribution_coupling_helps_understanding", c3_joint_distribution_coupling_helps_understanding),
        (4, "c4_end_metric_reward_does_not_hurt", c4_end_metric_reward_does_not_hurt),
        (5, "c5_metrics_match_brute_force_oracles", c5_metrics_match_brute_force_oracles),
        (6, "c6_reinforce_is_unbiased", c6_reinforce_is_unbiased),
        (7, "c7_made_is_autoregressive", c7_made_is_autoregressive),
        (8, "c8_cycle_updates_route_to_the_right_model", c8_cycle_updates_route_to_the_right_model),
        (9, "c9_unsupervised_cycles_reduce_reconstruction_loss", c9_unsupervised_cycles_reduce_reconstruction_loss),
        (10, "c10_identical_runs_give_identical_summaries", c10_identical_runs_give_identical_summaries),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        REPORTED.store(false, Ordering::SeqCst);
        if catch_unwind(check).is_err() {
            if !REPORTED.load(Ordering::SeqCst) {
                println!("criterion {n}: FAIL (panicked before reporting)");
            }
            failed.push(n);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
