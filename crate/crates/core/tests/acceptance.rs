//! Acceptance criteria 1 to 10, run in order from one test so the timed
//! criteria do not share the CPU with other tests. Each criterion prints one
//! `criterion N  PASS|FAIL|SKIP` line; the test fails if any gating criterion fails.
//!
//! `DSALM_ACCEPTANCE_ONLY=1,2,5` restricts the run to the listed criteria.
//! `DSALM_ACCEPTANCE_DESK_CONFIG=FILE` runs criteria 6 to 9 on another config;
//! the setup check of criterion 6 still demands the desk-scale shape.
//! Desk artifacts are kept under `$CARGO_TARGET_TMPDIR/acceptance-desk`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsalm::autodiff::{finite_diff_check, log_softmax, softmax, GradCheckReport, NodeId, Tape, TensorError};
use dsalm::corpus::{
    parse_bracketed, sample_corpus, SampleOptions, Tree, Vocabulary, WeightedGrammar, AGREEMENT_GRAMMAR,
};
use dsalm::distill::{
    build_cache, entropy, interpolated_loss, kl_divergence, mixed_target, teacher_next_word_dist, train_distilled,
    DistillConfig, Teacher, TeacherCache,
};
use dsalm::eval::aggregate;
use dsalm::experiment::{comparison_table, run_desk, DeskRun, ExperimentConfig, Variant};
use dsalm::inference::{enumerate_derivations, exact_marginal, marginal_lower_bound, BeamConfig, EXACT_BUDGET};
use dsalm::lstm::{train_lm, LstmLm, TrainConfig};
use dsalm::rnng::{collect_labels, Limits, Rnng, RnngConfig};
use dsalm::Error;

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
const NORM_TOLERANCE: f64 = 1e-6;
const BOUND_SLACK: f64 = 1e-12;
const BOUND_EQUALITY: f64 = 1e-9;
const DECOMPOSITION_TOLERANCE: f64 = 1e-10;
const MIXED_GRAD_TOLERANCE: f64 = 1e-6;
const CACHE_TOLERANCE: f64 = 1e-6;
const ACCURACY_GAP: f64 = 0.02;
const PPL_NON_GATING_GAP: f64 = 0.005;
const SIGN_ALPHA: f64 = 0.05;
const DESK_BUDGET: Duration = Duration::from_secs(2 * 3600);

const TINY: Limits = Limits {
    max_open: 2,
    max_len: 3,
};

const SMOKE_CONFIG: &str = include_str!("../../../configs/smoke.cfg");

struct Verdict {
    id: u8,
    title: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
    elapsed: Duration,
}

fn verdict(id: u8, title: &'static str, gating: bool, pass: bool, detail: String, start: Instant) -> Verdict {
    Verdict {
        id,
        title,
        pass,
        gating,
        detail,
        elapsed: start.elapsed(),
    }
}

fn print(v: &Verdict) {
    let status = match (v.pass, v.gating) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "FAIL (non-gating)",
    };
    println!(
        "criterion {:<2} {status:<17} {} [{:.1}s]: {}",
        v.id,
        v.title,
        v.elapsed.as_secs_f64(),
        v.detail
    );
}

fn tensor_err(e: Error) -> TensorError {
    match e {
        Error::Tensor(t) => t,
        e => panic!("{e}"),
    }
}

fn worst(reports: &[GradCheckReport]) -> &GradCheckReport {
    reports
        .iter()
        .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .expect("at least one report")
}

fn describe(r: &GradCheckReport) -> String {
    format!(
        "max rel {:.2e} at {:?} (analytic {:.3e}, numeric {:.3e}), max abs {:.2e}",
        r.max_relative_error, r.worst, r.worst_values.0, r.worst_values.1, r.max_abs_error
    )
}

fn vocab(words: &str) -> Vocabulary {
    Vocabulary::build(&[words.split(' ').collect::<Vec<_>>()], 1).unwrap()
}

fn five_dim_lstm(seed: u64) -> LstmLm {
    let cfg = TrainConfig {
        hidden: 5,
        embed: 5,
        dropout: 0.0,
        seed,
        ..Default::default()
    };
    let mut m = LstmLm::new(vocab("a b c"), cfg).unwrap();
    m.store.reinit_uniform(1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    m
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut lstm = Vec::new();
    let mut rnng = Vec::new();
    let mut soft = Vec::new();
    for seed in 0..10 {
        let m = five_dim_lstm(seed);
        let ids = [0, 1, 2];
        lstm.push(
            finite_diff_check(
                |tape: &mut Tape| m.sentence_loss(tape, &ids, None, None).map_err(tensor_err),
                &m.store,
                GRAD_EPS,
            )
            .unwrap(),
        );

        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let teacher: Vec<Vec<f64>> = (0..=ids.len())
            .map(|_| softmax(&(0..m.vocab.len()).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>()))
            .collect();
        for alpha in [0.0, 0.5, 1.0] {
            soft.push(
                finite_diff_check(
                    |tape: &mut Tape| {
                        m.sentence_loss(tape, &ids, None, Some((alpha, &teacher)))
                            .map_err(tensor_err)
                    },
                    &m.store,
                    GRAD_EPS,
                )
                .unwrap(),
            );
        }

        let tree = parse_bracketed("(S (NP the hawk) (VP flies))").unwrap();
        let cfg = RnngConfig {
            hidden: 5,
            embed: 5,
            dropout: 0.0,
            seed,
            ..Default::default()
        };
        let mut r = Rnng::new(
            vocab("the hawk flies"),
            collect_labels(std::slice::from_ref(&tree)),
            cfg,
        )
        .unwrap();
        r.store.reinit_uniform(0.7, &mut ChaCha8Rng::seed_from_u64(seed));
        let actions = r.actions_of(&r.prepare_tree(&tree)).unwrap();
        rnng.push(
            finite_diff_check(
                |tape: &mut Tape| -> Result<NodeId, TensorError> {
                    r.derivation_loss(tape, &actions, None).map_err(tensor_err)
                },
                &r.store,
                GRAD_EPS,
            )
            .unwrap(),
        );
    }
    let (a, b, c) = (worst(&lstm), worst(&rnng), worst(&soft));
    let pass =
        [a, b, c].iter().all(|r| r.max_relative_error < GRAD_TOLERANCE) && start.elapsed() < Duration::from_secs(60);
    verdict(
        1,
        "gradient correctness",
        true,
        pass,
        format!(
            "lstm nll: {}; rnng joint: {}; interpolated α∈{{0,0.5,1}}: {}",
            describe(a),
            describe(b),
            describe(c)
        ),
        start,
    )
}

fn tiny_rnng(seed: u64) -> Rnng {
    let cfg = RnngConfig {
        hidden: 5,
        embed: 5,
        dropout: 0.0,
        seed,
        eos: true,
        limits: TINY,
        ..Default::default()
    };
    let mut m = Rnng::new(vocab("a"), vec!["X".into()], cfg).unwrap();
    m.store.reinit_uniform(1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    m
}

/// Every string over `symbols` of length at most `max`, the empty one included.
fn strings(symbols: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut layer: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max {
        layer = layer
            .iter()
            .flat_map(|s| {
                symbols.iter().map(move |&w| {
                    let mut t = s.clone();
                    t.push(w);
                    t
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut worst_joint: f64 = 0.0;
    let mut worst_marginal: f64 = 0.0;
    let mut derivations = 0;
    for seed in 0..10 {
        let m = tiny_rnng(seed);
        let all = enumerate_derivations(&m, TINY, EXACT_BUDGET).unwrap();
        derivations = all.len();
        let joint: f64 = all.iter().map(|(_, lp)| lp.exp()).sum();
        worst_joint = worst_joint.max((joint - 1.0).abs());
        let symbols = [m.vocab.encode("a"), m.vocab.unk()];
        // <eos> takes the last slot, so sentences have at most max_len − 1 words
        let marginal: f64 = strings(&symbols, TINY.max_len - 1)
            .iter()
            .map(|x| exact_marginal(&m, x, TINY).unwrap().exp())
            .sum();
        worst_marginal = worst_marginal.max((marginal - 1.0).abs());
    }
    let pass =
        worst_joint < NORM_TOLERANCE && worst_marginal < NORM_TOLERANCE && start.elapsed() < Duration::from_secs(60);
    verdict(
        2,
        "joint normalisation",
        true,
        pass,
        format!(
            "10 seeds, {derivations} derivations each: max |Σ p(x,y) − 1| = {worst_joint:.2e}, max |Σ p(x) − 1| = {worst_marginal:.2e}"
        ),
        start,
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut checks = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_equality: f64 = 0.0;
    for i in 0..200 {
        let m = tiny_rnng(10_000 + i);
        let symbols = [m.vocab.encode("a"), m.vocab.unk()];
        let len = rng.gen_range(1..TINY.max_len);
        let x: Vec<usize> = (0..len).map(|_| symbols[rng.gen_range(0..2)]).collect();
        let exact = exact_marginal(&m, &x, TINY).unwrap();
        for k in [1, 2, 3] {
            let lb = marginal_lower_bound(&m, &x, &BeamConfig::with_action_beam(k, k)).unwrap();
            checks += 1;
            worst_excess = worst_excess.max(lb - exact);
            if lb > exact + BOUND_SLACK {
                violations += 1;
            }
        }
        let total = enumerate_derivations(&m, TINY, EXACT_BUDGET).unwrap().len() + 1;
        let lb = marginal_lower_bound(&m, &x, &BeamConfig::with_action_beam(total, total)).unwrap();
        worst_equality = worst_equality.max((lb - exact).abs());
    }
    let pass = violations == 0 && worst_equality < BOUND_EQUALITY && start.elapsed() < Duration::from_secs(300);
    verdict(
        3,
        "beam lower bound",
        true,
        pass,
        format!(
            "200 sentences, {checks} small-beam bounds: {violations} violations (max lb − exact {worst_excess:.2e}); beam > derivation count: max |lb − exact| = {worst_equality:.2e}"
        ),
        start,
    )
}

fn grammar() -> WeightedGrammar {
    WeightedGrammar::parse(AGREEMENT_GRAMMAR).unwrap()
}

fn corpus(seed: u64, n: usize) -> (Vec<Tree>, Vocabulary) {
    let trees = sample_corpus(&grammar(), seed, n, &SampleOptions::default()).unwrap();
    let sents: Vec<Vec<String>> = trees.iter().map(Tree::sentence).collect();
    let v = Vocabulary::build(&sents, 1).unwrap();
    (trees, v)
}

fn teacher(trees: &[Tree], v: &Vocabulary, seed: u64) -> Rnng {
    let cfg = RnngConfig {
        hidden: 8,
        embed: 8,
        dropout: 0.0,
        seed,
        ..Default::default()
    };
    Rnng::new(v.clone(), collect_labels(trees), cfg).unwrap()
}

fn random_teacher_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let mut t = softmax(&z);
    // a third of the draws have zero-probability words
    if rng.gen_bool(1.0 / 3.0) {
        for p in t.iter_mut() {
            if rng.gen_bool(0.3) {
                *p = 0.0;
            }
        }
        let keep = rng.gen_range(0..n);
        t[keep] += 1.0;
        let s: f64 = t.iter().sum();
        t.iter_mut().for_each(|p| *p /= s);
    }
    t
}

fn criterion_4() -> Verdict {
    let start = Instant::now();

    let (trees, v) = corpus(41, 40);
    let ids: Vec<Vec<usize>> = trees.iter().map(|t| v.encode_sentence(&t.leaves())).collect();
    let cache = build_cache(&teacher(&trees, &v, 4), &trees, 1).unwrap();
    let student = TrainConfig {
        hidden: 8,
        embed: 8,
        batch: 4,
        epochs: 3,
        seed: 7,
        ..Default::default()
    };
    let cfg = DistillConfig {
        alpha: 0.0,
        student: student.clone(),
        ..Default::default()
    };
    let kd = train_distilled(&cfg, &v, &trees, &ids[..10], Teacher::Cache(&cache)).unwrap();
    let plain = train_lm(&student, &v, &ids, &ids[..10]).unwrap();
    let bits = |o: &dsalm::train::Outcome<LstmLm>| {
        o.log
            .iter()
            .map(|e| (e.train_loss.to_bits(), e.valid.to_bits()))
            .collect::<Vec<_>>()
    };
    let bitwise = kd.best.to_checkpoint().to_bytes() == plain.best.to_checkpoint().to_bytes()
        && bits(&kd) == bits(&plain)
        && kd.log.len() == 3;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_identity: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..60);
        let t = random_teacher_dist(&mut rng, n);
        let log_q = log_softmax(&(0..n).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<_>>());
        let alpha: f64 = rng.gen();
        let y = rng.gen_range(0..n);
        let loss = interpolated_loss(alpha, &t, &log_q, y).unwrap();
        let rhs = loss - (1.0 - alpha) * -log_q[y] - alpha * entropy(&t);
        worst_identity = worst_identity.max((alpha * kl_divergence(&t, &log_q) - rhs).abs());
    }

    let mut worst_grad: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..1000 {
        let n = rng.gen_range(2..20);
        let t = random_teacher_dist(&mut rng, n);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let alpha: f64 = rng.gen();
        let y = rng.gen_range(0..n);
        let target = mixed_target(alpha, &t, y);
        let q = softmax(&z);
        for k in 0..n {
            let at = |d: f64| {
                let mut zz = z.clone();
                zz[k] += d;
                interpolated_loss(alpha, &t, &log_softmax(&zz), y).unwrap()
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            worst_grad = worst_grad.max((q[k] - target[k] - numeric).abs());
        }
    }

    let pass = bitwise && worst_identity < DECOMPOSITION_TOLERANCE && worst_grad < MIXED_GRAD_TOLERANCE;
    verdict(
        4,
        "distillation identities",
        true,
        pass,
        format!(
            "α=0 vs plain over 3 epochs bitwise equal: {bitwise}; decomposition over 10⁴ triples max err {worst_identity:.2e}; mixed-target gradient max err {worst_grad:.2e}"
        ),
        start,
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let (trees, v) = corpus(51, 60);
    let m = teacher(&trees, &v, 5);
    let cache = build_cache(&m, &trees, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.gen_range(0..trees.len());
        let j = rng.gen_range(1..=trees[i].leaves().len() + 1);
        let direct = teacher_next_word_dist(&m, &trees[i].sentence(), &trees[i], j).unwrap();
        let cached = &cache.distributions(i).unwrap()[j - 1];
        for (a, b) in direct.iter().zip(cached) {
            worst = worst.max((a - b).abs());
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("teacher.cache");
    cache.save(&path).unwrap();
    let back = TeacherCache::load(&path, &v.content_hash()).unwrap();
    let round_trip = back.to_bytes() == cache.to_bytes()
        && back == cache
        && TeacherCache::from_bytes(&cache.to_bytes()).unwrap() == cache;
    verdict(
        5,
        "teacher cache fidelity",
        true,
        worst < CACHE_TOLERANCE && round_trip,
        format!("100 positions max |cached − direct| = {worst:.2e}; bit-exact round trip: {round_trip}"),
        start,
    )
}

/// One-sided sign test: wins, losses and P(at least `wins` successes among
/// the untied seeds under a fair coin).
fn sign_test(diffs: &[f64]) -> (usize, usize, f64) {
    let wins = diffs.iter().filter(|d| **d > 0.0).count();
    let losses = diffs.iter().filter(|d| **d < 0.0).count();
    let n = wins + losses;
    let choose = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let p = (wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32);
    (wins, losses, p)
}

fn desk_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk")
}

fn print_desk(desk: &DeskRun) {
    let aggs: Vec<_> = Variant::TABLE
        .iter()
        .map(|&v| aggregate(&desk.suites(v)).unwrap())
        .collect();
    println!("{}", comparison_table(&aggs).unwrap().to_markdown());
    println!("{}", desk.summary_tsv());
}

fn desk_verdicts(cfg: &ExperimentConfig, desk: &DeskRun, elapsed: Duration) -> Vec<Verdict> {
    let now = Instant::now();
    let mut out = Vec::new();
    let per_seed = |f: &dyn Fn(&dsalm::experiment::SeedRun) -> f64| desk.runs.iter().map(f).collect::<Vec<_>>();

    let constructions = desk.runs[0].suites[&Variant::FullLstm].constructions.len();
    let has_orc = desk.runs[0].suites[&Variant::FullLstm]
        .constructions
        .iter()
        .any(|c| c.name == "across_object_rc");
    let widths: Vec<usize> = ["lstm.hidden", "rnng.hidden"]
        .iter()
        .map(|k| cfg.get(k).unwrap())
        .collect();
    let setup = constructions >= 8
        && has_orc
        && widths.iter().all(|w| *w <= 128)
        && desk.runs.len() == 5
        && cfg.raw("teacher.subset") == "0.2"
        && elapsed <= DESK_BUDGET;

    let gap_diffs = per_seed(&|r| r.aggregate(Variant::DsaLstm) - r.aggregate(Variant::FullLstm));
    let gap = desk.mean(|r| r.aggregate(Variant::DsaLstm)) - desk.mean(|r| r.aggregate(Variant::FullLstm));
    let (w, l, p) = sign_test(&gap_diffs);
    let rnng = desk.mean(|r| r.agreement(Variant::Rnng));
    let small = desk.mean(|r| r.agreement(Variant::SmallLstm));
    let (rw, rl, rp) = sign_test(&per_seed(&|r| {
        r.agreement(Variant::Rnng) - r.agreement(Variant::SmallLstm)
    }));
    let dsa_gap_ok = gap >= ACCURACY_GAP && p <= SIGN_ALPHA;
    let small_ok = rnng >= small;
    out.push(verdict(
        6,
        "desk comparison direction",
        true,
        setup && dsa_gap_ok && small_ok,
        format!(
            "{constructions} constructions, {} seeds, {:.1} min; DSA − Full aggregate {:+.4} (need ≥ {ACCURACY_GAP}), sign {w}/{l} p = {p:.4} (need ≤ {SIGN_ALPHA}): {}; RNNG vs Small agreement {rnng:.4} vs {small:.4}, sign {rw}/{rl} p = {rp:.4}: {}",
            desk.runs.len(),
            elapsed.as_secs_f64() / 60.0,
            gap,
            if dsa_gap_ok { "met" } else { "not met" },
            if small_ok { "met" } else { "not met" },
        ),
        now,
    ));

    let dsa_ppl = desk.mean(|r| r.ppl[&Variant::DsaLstm]);
    let full_ppl = desk.mean(|r| r.ppl[&Variant::FullLstm]);
    let rel = (dsa_ppl - full_ppl) / full_ppl;
    let ppl_direction = dsa_ppl >= full_ppl;
    out.push(verdict(
        7,
        "perplexity trade-off",
        !ppl_direction && rel.abs() >= PPL_NON_GATING_GAP,
        ppl_direction,
        format!(
            "DSA {dsa_ppl:.3} vs Full {full_ppl:.3} ({:+.2}%){}",
            100.0 * rel,
            if !ppl_direction && rel.abs() < PPL_NON_GATING_GAP {
                ", gap under 0.5% so non-gating"
            } else {
                ""
            }
        ),
        now,
    ));

    let probe_dsa = desk.mean(|r| r.probe_dsa);
    let probe_plain = desk.mean(|r| r.probe_plain);
    let c = &desk.control;
    let control_ok = (c.accuracy - c.majority).abs() <= 3.0 * c.sigma;
    let probe_ok = probe_dsa - probe_plain >= ACCURACY_GAP;
    out.push(verdict(
        8,
        "probe direction",
        true,
        probe_ok && control_ok,
        format!(
            "DSA {probe_dsa:.4} vs Full {probe_plain:.4} ({:+.4}, need ≥ {ACCURACY_GAP}); shuffled control {:.4} vs majority {:.4} ± 3·{:.4}: {}",
            probe_dsa - probe_plain,
            c.accuracy,
            c.majority,
            c.sigma,
            if control_ok { "within" } else { "outside" }
        ),
        now,
    ));

    let mc_ppl = desk.mean(|r| r.ppl[&Variant::McLstm]);
    out.push(verdict(
        9,
        "sampled-string distillation is worse",
        false,
        mc_ppl > dsa_ppl,
        format!("MC {mc_ppl:.3} vs DSA {dsa_ppl:.3} validation perplexity"),
        now,
    ));
    out
}

fn criteria_6_to_9() -> Vec<Verdict> {
    let cfg = match std::env::var("DSALM_ACCEPTANCE_DESK_CONFIG") {
        Ok(path) => ExperimentConfig::parse(&std::fs::read_to_string(path).unwrap()).unwrap(),
        Err(_) => ExperimentConfig::default(),
    };
    let dir = desk_dir();
    let _ = std::fs::remove_dir_all(&dir);
    let start = Instant::now();
    let desk = run_desk(&cfg, &grammar(), Some(&dir)).unwrap();
    let elapsed = start.elapsed();
    print_desk(&desk);
    let mut out = desk_verdicts(&cfg, &desk, elapsed);
    out[0].elapsed = elapsed;
    out
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_10() -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::parse(SMOKE_CONFIG).unwrap();
    let g = grammar();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_desk(&cfg, &g, Some(a.path())).unwrap();
    let snapshot = std::fs::read_to_string(a.path().join("config.snapshot")).unwrap();
    let reparsed = ExperimentConfig::parse(&snapshot).unwrap();
    let second = run_desk(&reparsed, &g, Some(b.path())).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    let differing: Vec<_> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let pass = reparsed == cfg && first == second && differing.is_empty();
    verdict(
        10,
        "determinism",
        true,
        pass,
        format!(
            "smoke run and rerun from its snapshot: {} files, {} differ{}; snapshot re-parses equal: {}",
            fa.len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" {differing:?}")
            },
            reparsed == cfg
        ),
        start,
    )
}

fn selected() -> Option<Vec<u8>> {
    std::env::var("DSALM_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
}

#[test]
fn acceptance_criteria() {
    let only = selected();
    let wanted = |ids: &[u8]| only.as_ref().is_none_or(|o| ids.iter().any(|i| o.contains(i)));
    let mut verdicts = Vec::new();
    let mut run = |ids: &[u8], f: &dyn Fn() -> Vec<Verdict>| {
        if wanted(ids) {
            for v in f() {
                print(&v);
                verdicts.push(v);
            }
        } else {
            for id in ids {
                println!("criterion {id:<2} SKIP");
            }
        }
    };
    run(&[1], &|| vec![criterion_1()]);
    run(&[2], &|| vec![criterion_2()]);
    run(&[3], &|| vec![criterion_3()]);
    run(&[4], &|| vec![criterion_4()]);
    run(&[5], &|| vec![criterion_5()]);
    run(&[10], &|| vec![criterion_10()]);
    run(&[6, 7, 8, 9], &criteria_6_to_9);

    verdicts.sort_by_key(|v| v.id);
    println!("\nsummary:");
    for v in &verdicts {
        print(v);
    }
    let failed: Vec<u8> = verdicts.iter().filter(|v| v.gating && !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "gating criteria failed: {failed:?}");
}
