use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::log_softmax;
use crate::corpus::{parse_bracketed, Tree, Vocabulary};
use crate::lstm::{train_lm, TrainConfig};
use crate::rnng::{collect_labels, train_rnng, Rnng, RnngConfig};

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

fn random_logq(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    log_softmax(&z)
}

fn treebank() -> Vec<Tree> {
    [
        "(S (NP the hawk) (VP flies))",
        "(S (NP the hawks) (VP fly (PP over (NP the river))))",
        "(S (NP the river) (VP flows))",
        "(S (NP the hawk (PP near (NP the rivers))) (VP flies))",
    ]
    .iter()
    .map(|s| parse_bracketed(s).unwrap())
    .collect()
}

fn vocab_of(trees: &[Tree]) -> Vocabulary {
    let s: Vec<Vec<String>> = trees.iter().map(Tree::sentence).collect();
    Vocabulary::build(&s, 1).unwrap()
}

fn teacher(trees: &[Tree], seed: u64) -> Rnng {
    let cfg = RnngConfig {
        hidden: 6,
        embed: 6,
        dropout: 0.0,
        seed,
        ..Default::default()
    };
    Rnng::new(vocab_of(trees), collect_labels(trees), cfg).unwrap()
}

fn student_config() -> TrainConfig {
    TrainConfig {
        hidden: 6,
        embed: 6,
        dropout: 0.1,
        batch: 2,
        epochs: 3,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn kd_term_reduces_to_nll_for_one_hot_teacher() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let lq = random_logq(&mut rng, 6);
    let mut t = vec![0.0; 6];
    t[2] = 1.0;
    assert_eq!(kd_term(&t, &lq).unwrap(), -lq[2]);
}

#[test]
fn kd_term_of_identical_distributions_is_the_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = random_dist(&mut rng, 7);
    let lq: Vec<f64> = t.iter().map(|p| p.ln()).collect();
    assert!((kd_term(&t, &lq).unwrap() - entropy(&t)).abs() < 1e-12);
}

#[test]
fn kd_term_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let t = random_dist(&mut rng, 5);
        let lq = random_logq(&mut rng, 5);
        let mut oracle = 0.0;
        for w in 0..5 {
            oracle -= t[w] * lq[w];
        }
        assert!((kd_term(&t, &lq).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn unnormalised_inputs_are_rejected() {
    let lq = log_softmax(&[0.0, 1.0, 2.0]);
    assert!(kd_term(&[0.5, 0.5, 0.1], &lq).is_err());
    assert!(kd_term(&[0.5, 0.5, 0.0], &[0.0, 0.0, 0.0]).is_err());
    assert!(kd_term(&[-0.5, 1.5, 0.0], &lq).is_err());
    assert!(kd_term(&[1.0], &lq).is_err());
}

#[test]
fn interpolated_loss_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = random_dist(&mut rng, 5);
    let lq = random_logq(&mut rng, 5);
    assert_eq!(
        interpolated_loss(0.0, &t, &lq, 1).unwrap().to_bits(),
        (-lq[1]).to_bits()
    );
    let mut onehot = vec![0.0; 5];
    onehot[4] = 1.0;
    assert_eq!(interpolated_loss(1.0, &onehot, &lq, 4).unwrap(), -lq[4]);
    assert!(interpolated_loss(1.5, &t, &lq, 1).is_err());
    assert!(interpolated_loss(-0.1, &t, &lq, 1).is_err());
    assert!(interpolated_loss(0.5, &t, &lq, 9).is_err());
}

#[test]
fn half_mixed_target_puts_half_plus_teacher_share_on_the_truth() {
    let t = [0.1, 0.6, 0.3];
    let m = mixed_target(0.5, &t, 2);
    assert!((m[2] - (0.5 + 0.5 * 0.3)).abs() < 1e-15);
    assert!((m[0] - 0.05).abs() < 1e-15);
    assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn mixed_target_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let n = 6;
        let alpha: f64 = rng.gen_range(0.0..1.0);
        let t = random_dist(&mut rng, n);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target = rng.gen_range(0..n);
        let loss = |z: &[f64]| interpolated_loss(alpha, &t, &log_softmax(z), target).unwrap();
        let q: Vec<f64> = log_softmax(&z).iter().map(|l| l.exp()).collect();
        let mixed = mixed_target(alpha, &t, target);
        let h = 1e-6;
        for w in 0..n {
            let (mut up, mut down) = (z.clone(), z.clone());
            up[w] += h;
            down[w] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            let analytic = q[w] - mixed[w];
            assert!((fd - analytic).abs() < 1e-6, "{fd} vs {analytic}");
        }
    }
}

proptest! {
    #[test]
    fn decomposition_identity(
        seed in any::<u64>(),
        n in 2usize..12,
        alpha in 0.0f64..=1.0,
        pick in any::<prop::sample::Index>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_dist(&mut rng, n);
        let lq = random_logq(&mut rng, n);
        let target = pick.index(n);
        let loss = interpolated_loss(alpha, &t, &lq, target).unwrap();
        let kl = kl_divergence(&t, &lq);
        prop_assert!(kl >= -1e-12);
        let residual = loss - (1.0 - alpha) * -lq[target] - alpha * entropy(&t);
        prop_assert!((residual - alpha * kl).abs() < 1e-10);
        let mixed = mixed_target(alpha, &t, target);
        let ce: f64 = -mixed.iter().zip(&lq).map(|(p, l)| p * l).sum::<f64>();
        prop_assert!((ce - loss).abs() < 1e-10);
        prop_assert!(kd_term(&t, &lq).unwrap() >= entropy(&t) - 1e-12);
    }
}

#[test]
fn teacher_distributions_are_normalised_and_bounded() {
    let trees = treebank();
    let m = teacher(&trees, 0);
    let t = &trees[1];
    let words = t.sentence();
    for j in 1..=words.len() + 1 {
        let d = teacher_next_word_dist(&m, &words, t, j).unwrap();
        assert_eq!(d.len(), m.vocab.len());
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
    assert!(teacher_next_word_dist(&m, &words, t, 0).is_err());
    assert!(teacher_next_word_dist(&m, &words, t, words.len() + 2).is_err());
    assert!(teacher_next_word_dist(&m, &["the", "river"], t, 1).is_err());
}

#[test]
fn first_position_depends_only_on_the_opening_nonterminals() {
    let trees = treebank();
    let m = teacher(&trees, 1);
    // both open (S (NP before the first word
    let a = teacher_next_word_dist(&m, &trees[0].sentence(), &trees[0], 1).unwrap();
    let b = teacher_next_word_dist(&m, &trees[2].sentence(), &trees[2], 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn memorised_teacher_is_confident_everywhere() {
    let tree = parse_bracketed("(S (NP the hawks) (VP fly (PP over (NP the river))))").unwrap();
    let trees = vec![tree.clone(); 4];
    let cfg = RnngConfig {
        hidden: 16,
        embed: 16,
        dropout: 0.0,
        batch: 1,
        epochs: 200,
        lr: 0.1,
        decay: 1.0,
        ..Default::default()
    };
    let m = train_rnng(&cfg, &vocab_of(&trees), collect_labels(&trees), &trees, &trees)
        .unwrap()
        .best;
    let words = tree.sentence();
    let ids = m.vocab.encode_sentence(&words);
    for j in 1..=words.len() + 1 {
        let gold = ids.get(j - 1).copied().unwrap_or(m.vocab.eos());
        let p = teacher_next_word_dist(&m, &words, &tree, j).unwrap()[gold];
        assert!(p > 0.99, "position {j}: {p}");
    }
}

#[test]
fn cache_has_one_state_per_target() {
    let trees = treebank();
    let m = teacher(&trees, 2);
    let cache = build_cache(&m, &trees, 2).unwrap();
    assert_eq!(cache.records.len(), trees.len());
    for (i, (r, t)) in cache.records.iter().zip(&trees).enumerate() {
        assert_eq!(r.index, i);
        assert_eq!(r.states.len(), t.leaves().len() + 1);
        assert!(r.states.iter().all(|h| h.len() == m.hidden()));
    }
    let tokens: usize = cache.records.iter().map(|r| r.states.len()).sum();
    let payload = 8 * (tokens * m.hidden() + cache.vocab_size() * (m.hidden() + 1));
    let header = cache.to_bytes().len() - payload;
    assert!(header < 300 + 16 * trees.len(), "header {header}");
}

#[test]
fn cache_reconstruction_matches_direct_teacher() {
    let trees = treebank();
    let m = teacher(&trees, 3);
    let cache = build_cache(&m, &trees, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let i = rng.gen_range(0..trees.len());
        let j = rng.gen_range(1..=trees[i].leaves().len() + 1);
        let direct = teacher_next_word_dist(&m, &trees[i].sentence(), &trees[i], j).unwrap();
        let cached = &cache.distributions(i).unwrap()[j - 1];
        for (a, b) in direct.iter().zip(cached) {
            assert!((a - b).abs() < 1e-6);
        }
    }
    assert!(cache.verify(&m, &trees, 1000, 1).unwrap() < 1e-6);
}

#[test]
fn cache_round_trips_bit_exactly() {
    let trees = treebank();
    let m = teacher(&trees, 4);
    let cache = build_cache(&m, &trees, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("teacher.cache");
    cache.save(&path).unwrap();
    let back = TeacherCache::load(&path, &m.vocab.content_hash()).unwrap();
    assert_eq!(back.to_bytes(), cache.to_bytes());
    assert_eq!(back, cache);
    assert!(TeacherCache::load(&path, "0000").is_err());
    let bytes = cache.to_bytes();
    assert!(TeacherCache::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(TeacherCache::from_bytes(b"not a cache").is_err());
}

#[test]
fn fingerprint_tracks_the_treebank() {
    let trees = treebank();
    let mut other = trees.clone();
    other.swap(0, 1);
    assert_ne!(corpus_fingerprint(&trees), corpus_fingerprint(&other));
    assert_eq!(corpus_fingerprint(&trees), corpus_fingerprint(&treebank()));
}

#[test]
fn zero_alpha_reproduces_plain_training_bitwise() {
    let trees = treebank();
    let m = teacher(&trees, 5);
    let cache = build_cache(&m, &trees, 1).unwrap();
    let vocab = m.vocab.clone();
    let ids: Vec<Vec<usize>> = trees.iter().map(|t| vocab.encode_sentence(&t.leaves())).collect();
    let cfg = DistillConfig {
        alpha: 0.0,
        student: student_config(),
        ..Default::default()
    };
    let kd = train_distilled(&cfg, &vocab, &trees, &ids, Teacher::Cache(&cache)).unwrap();
    let plain = train_lm(&student_config(), &vocab, &ids, &ids).unwrap();
    assert_eq!(
        kd.best.to_checkpoint().to_bytes(),
        plain.best.to_checkpoint().to_bytes()
    );
    let bits = |o: &crate::train::Outcome<crate::lstm::LstmLm>| {
        o.log
            .iter()
            .map(|e| (e.train_loss.to_bits(), e.valid.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&kd), bits(&plain));
}

#[test]
fn distillation_rejects_a_foreign_cache() {
    let trees = treebank();
    let m = teacher(&trees, 6);
    let cache = build_cache(&m, &trees[..3], 1).unwrap();
    let vocab = m.vocab.clone();
    let ids: Vec<Vec<usize>> = trees.iter().map(|t| vocab.encode_sentence(&t.leaves())).collect();
    let cfg = DistillConfig {
        student: student_config(),
        ..Default::default()
    };
    assert!(train_distilled(&cfg, &vocab, &trees, &ids, Teacher::Cache(&cache)).is_err());
    let wrong_kind = DistillConfig {
        kind: TeacherKind::BornAgain,
        ..cfg.clone()
    };
    let full = build_cache(&m, &trees, 1).unwrap();
    assert!(train_distilled(&wrong_kind, &vocab, &trees, &ids, Teacher::Cache(&full)).is_err());
    let bad_alpha = DistillConfig { alpha: 1.2, ..cfg };
    assert!(train_distilled(&bad_alpha, &vocab, &trees, &ids, Teacher::Cache(&full)).is_err());
}

#[test]
fn distillation_moves_the_student_towards_the_teacher() {
    let trees = treebank();
    let m = teacher(&trees, 7);
    let cache = build_cache(&m, &trees, 1).unwrap();
    let vocab = m.vocab.clone();
    let ids: Vec<Vec<usize>> = trees.iter().map(|t| vocab.encode_sentence(&t.leaves())).collect();
    let cfg = |alpha| DistillConfig {
        alpha,
        student: TrainConfig {
            dropout: 0.0,
            epochs: 30,
            decay: 1.0,
            ..student_config()
        },
        ..Default::default()
    };
    let gap = |alpha: f64| -> f64 {
        let s = train_distilled(&cfg(alpha), &vocab, &trees, &ids, Teacher::Cache(&cache))
            .unwrap()
            .best;
        let mut total = 0.0;
        for (i, x) in ids.iter().enumerate() {
            let t = cache.distributions(i).unwrap();
            for (tj, lq) in t.iter().zip(s.position_logprobs(x).unwrap()) {
                total += kl_divergence(tj, &lq);
            }
        }
        total
    };
    let (plain, distilled) = (gap(0.0), gap(1.0));
    assert!(distilled < plain, "KL to teacher: α=1 {distilled}, α=0 {plain}");
}

#[test]
fn born_again_and_sampling_modes_train() {
    let trees = treebank();
    let vocab = vocab_of(&trees);
    let ids: Vec<Vec<usize>> = trees.iter().map(|t| vocab.encode_sentence(&t.leaves())).collect();
    let lm = train_lm(&student_config(), &vocab, &ids, &ids).unwrap().best;
    let ba = DistillConfig {
        kind: TeacherKind::BornAgain,
        student: student_config(),
        ..Default::default()
    };
    let out = train_distilled(&ba, &vocab, &trees, &ids, Teacher::Lstm(&lm)).unwrap();
    assert_eq!(out.log.len(), 3);
    let rnng = teacher(&trees, 8);
    let mc = DistillConfig {
        kind: TeacherKind::McSamples,
        samples: 20,
        student: student_config(),
        ..Default::default()
    };
    let out = train_distilled(&mc, &vocab, &trees, &ids, Teacher::Samples(&rnng)).unwrap();
    assert!(out.log.iter().all(|e| e.valid.is_finite()));
}

#[test]
fn teacher_kind_names_round_trip() {
    for k in [TeacherKind::RnngCache, TeacherKind::BornAgain, TeacherKind::McSamples] {
        assert_eq!(k.name().parse::<TeacherKind>().unwrap(), k);
    }
    assert!("berkeley".parse::<TeacherKind>().is_err());
}
