use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{parse_bracketed, Vocabulary};
use crate::rnng::{Limits, RnngConfig};

fn tiny(seed: u64, eos: bool, limits: Limits) -> Rnng {
    let vocab = Vocabulary::build(&[vec!["a"]], 1).unwrap();
    let cfg = RnngConfig {
        hidden: 5,
        embed: 5,
        dropout: 0.0,
        seed,
        eos,
        limits,
        ..Default::default()
    };
    let mut m = Rnng::new(vocab, vec!["X".into()], cfg).unwrap();
    m.store.reinit_uniform(1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    m
}

const TINY: Limits = Limits {
    max_open: 2,
    max_len: 3,
};

/// All strings over the non-`<eos>` symbols up to `max` words.
fn strings(symbols: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max {
        layer = layer
            .iter()
            .flat_map(|s: &Vec<usize>| {
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

#[test]
fn derivations_sum_to_one() {
    for seed in 0..5 {
        let m = tiny(seed, true, TINY);
        let all = enumerate_derivations(&m, TINY, EXACT_BUDGET).unwrap();
        let total: f64 = all.iter().map(|(_, lp)| lp.exp()).sum();
        assert!(
            (total - 1.0).abs() < 1e-6,
            "seed {seed}: {total} over {} derivations",
            all.len()
        );
    }
}

#[test]
fn sentence_marginals_sum_to_one() {
    for seed in 0..5 {
        let m = tiny(seed, true, TINY);
        let a = m.vocab.encode("a");
        let unk = m.vocab.unk();
        let total: f64 = strings(&[a, unk], TINY.max_len - 1)
            .iter()
            .map(|x| exact_marginal(&m, x, TINY).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "seed {seed}: {total}");
    }
}

#[test]
fn two_derivation_case_by_hand() {
    // without <eos> and one word allowed, "a" has exactly (X a) and (X (X a))
    let limits = Limits {
        max_open: 2,
        max_len: 1,
    };
    let m = tiny(3, false, limits);
    let a = m.vocab.encode("a");
    let step = |acts: &[Action]| -> f64 {
        let mut g = Eager::new(&m.store);
        let mut st = m.initial_state_with(&mut g, limits);
        let mut total = 0.0;
        for &act in acts {
            let sc = m.step_scores(&mut g, &st, None).unwrap();
            let i = sc.legal.iter().position(|&k| k == act.kind()).unwrap();
            total += sc.kinds.as_ref().map_or(0.0, |k| k.data()[i]);
            total += match act {
                Action::Nt(n) => m.nt_logprobs(&mut g, &sc.h).unwrap().data()[n],
                Action::Gen(w) => m.word_logprobs(&mut g, &sc.h).unwrap().data()[w],
                Action::Reduce => 0.0,
            };
            st = m.apply(&mut g, &st, act, None).unwrap();
        }
        assert!(st.is_finished());
        total
    };
    let d1 = step(&[Action::Nt(0), Action::Gen(a), Action::Reduce]);
    let d2 = step(&[
        Action::Nt(0),
        Action::Nt(0),
        Action::Gen(a),
        Action::Reduce,
        Action::Reduce,
    ]);
    let hand = (d1.exp() + d2.exp()).ln();
    let exact = exact_marginal(&m, &[a], limits).unwrap();
    assert!((exact - hand).abs() < 1e-12, "{exact} vs {hand}");
    assert_eq!(exact_marginal(&m, &[a, a], limits).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn exhaustive_search_respects_the_budget() {
    let m = tiny(0, true, TINY);
    let err = enumerate_derivations(&m, TINY, 3).unwrap_err();
    assert!(err.to_string().contains("budget"), "{err}");
}

#[test]
fn single_derivation_decodes_to_gold() {
    let limits = Limits {
        max_open: 1,
        max_len: 4,
    };
    let m = tiny(1, true, limits);
    let x = m.vocab.encode_sentence(&["a", "a"]);
    let parses = beam_decode(&m, &x, &BeamConfig::new(1)).unwrap();
    assert_eq!(parses.len(), 1);
    assert_eq!(parses[0].tree, parse_bracketed("(X a a)").unwrap());
}

#[test]
fn beam_scores_match_rescoring() {
    let m = tiny(
        2,
        true,
        Limits {
            max_open: 3,
            max_len: 6,
        },
    );
    let x = m.vocab.encode_sentence(&["a", "<unk>", "a"]);
    let parses = beam_decode(&m, &x, &BeamConfig::new(5)).unwrap();
    assert!(parses.windows(2).all(|w| w[0].logprob >= w[1].logprob));
    for p in &parses {
        let mut g = Eager::new(&m.store);
        let re = m.derivation_logprob(&mut g, &p.actions, None).unwrap().data()[0];
        assert!((re - p.logprob).abs() < 1e-10);
        let words = ["a", "<unk>", "a"];
        let eos_at_root =
            matches!(p.actions[p.actions.len() - 2], Action::Gen(w) if w == m.vocab.eos()) && p.tree.leaves() == words;
        if eos_at_root {
            if let Ok(j) = m.joint_logprob(&words, &p.tree) {
                assert!((j - p.logprob).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn lower_bound_properties() {
    let limits = Limits {
        max_open: 3,
        max_len: 5,
    };
    let m = tiny(4, true, limits);
    let x = m.vocab.encode_sentence(&["a", "a", "<unk>"]);
    let exact = exact_marginal(&m, &x, limits).unwrap();
    let top = beam_decode(&m, &x, &BeamConfig::new(1)).unwrap()[0].logprob;
    assert_eq!(marginal_lower_bound(&m, &x, &BeamConfig::new(1)).unwrap(), top);
    let mut prev = f64::NEG_INFINITY;
    for k in [1, 2, 4, 8, 16, 32] {
        let lb = marginal_lower_bound(&m, &x, &BeamConfig::with_action_beam(k, 10 * k)).unwrap();
        assert!(lb >= prev - 1e-12, "k={k}: {lb} < {prev}");
        assert!(lb <= exact + 1e-12);
        prev = lb;
    }
    let big = BeamConfig::with_action_beam(100_000, 100_000);
    let lb = marginal_lower_bound(&m, &x, &big).unwrap();
    assert!((lb - exact).abs() < 1e-9, "{lb} vs {exact}");
}

#[test]
fn top_parse_is_at_most_the_best_derivation() {
    let limits = Limits {
        max_open: 3,
        max_len: 5,
    };
    for seed in 0..5 {
        let m = tiny(seed, true, limits);
        let x = m.vocab.encode_sentence(&["a", "<unk>"]);
        let mut best = f64::NEG_INFINITY;
        for (acts, lp) in enumerate_derivations(&m, limits, EXACT_BUDGET).unwrap() {
            let words: Vec<usize> = acts
                .iter()
                .filter_map(|a| match a {
                    Action::Gen(w) if *w != m.vocab.eos() => Some(*w),
                    _ => None,
                })
                .collect();
            if words == x {
                best = best.max(lp);
            }
        }
        let top = beam_decode(&m, &x, &BeamConfig::new(2)).unwrap()[0].logprob;
        assert!(top <= best + 1e-12);
        let wide = beam_decode(&m, &x, &BeamConfig::with_action_beam(1000, 1000)).unwrap()[0].logprob;
        assert!((wide - best).abs() < 1e-12);
    }
}

#[test]
fn too_long_sentence_is_a_beam_failure() {
    let m = tiny(0, true, TINY);
    let x = m.vocab.encode_sentence(&["a", "a", "a", "a"]);
    assert!(matches!(
        beam_decode(&m, &x, &BeamConfig::new(3)),
        Err(crate::Error::Inference(InferenceError::BeamFailure { .. }))
    ));
    assert_eq!(
        marginal_lower_bound(&m, &x, &BeamConfig::new(3)).unwrap(),
        f64::NEG_INFINITY
    );
    assert!(beam_decode(&m, &[], &BeamConfig::new(3)).is_err());
    assert!(beam_decode(&m, &[99], &BeamConfig::new(3)).is_err());
}

#[test]
fn beam_config_validation() {
    assert!(BeamConfig::new(50).validate().is_ok());
    assert_eq!(BeamConfig::new(50).fast_track, 5);
    assert_eq!(BeamConfig::new(10).action_beam, 100);
    assert!(BeamConfig::with_action_beam(10, 5).validate().is_err());
    assert!(BeamConfig::with_action_beam(0, 5).validate().is_err());
}

#[test]
fn decoding_is_deterministic() {
    // zeroed parameters make every competing derivation tie
    let mut m = tiny(
        0,
        true,
        Limits {
            max_open: 3,
            max_len: 6,
        },
    );
    for id in m.store.ids().collect::<Vec<_>>() {
        m.store.value_mut(id).fill(0.0);
    }
    let x = m.vocab.encode_sentence(&["a", "a", "a"]);
    let cfg = BeamConfig::new(3);
    let a = beam_decode(&m, &x, &cfg).unwrap();
    let b = beam_decode(&m, &x, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fast_tracking_findings() {
    // violations are recorded, not failures: pruning can interact with promotion
    let limits = Limits {
        max_open: 3,
        max_len: 6,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worse = 0;
    for seed in 0..200 {
        let m = tiny(seed, true, limits);
        let n = rng.gen_range(1..=4);
        let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let on = BeamConfig::with_action_beam(2, 4);
        let off = BeamConfig { fast_track: 0, ..on };
        let a = beam_decode(&m, &x, &on).unwrap()[0].logprob;
        let b = beam_decode(&m, &x, &off).unwrap()[0].logprob;
        worse += usize::from(a < b - 1e-12);
    }
    log::info!("fast-tracking lowered the top-1 score on {worse}/200 sentences");
}

#[test]
fn single_derivation_model_always_samples_it() {
    let limits = Limits {
        max_open: 1,
        max_len: 1,
    };
    let m = tiny(5, true, limits);
    for seed in 0..20 {
        let s = sample_joint(&m, seed, limits).unwrap();
        assert!(s.sentence.is_empty());
        assert_eq!(
            s.parse.actions,
            vec![Action::Nt(0), Action::Gen(m.vocab.eos()), Action::Reduce]
        );
        assert_eq!(s.resamples, 0);
    }
}

#[test]
fn samples_are_seeded() {
    let m = tiny(
        6,
        true,
        Limits {
            max_open: 3,
            max_len: 8,
        },
    );
    let limits = m.config.limits;
    assert_eq!(
        sample_joint(&m, 17, limits).unwrap(),
        sample_joint(&m, 17, limits).unwrap()
    );
}

#[test]
fn sample_frequencies_match_exact_marginals() {
    let m = tiny(7, true, TINY);
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
    for _ in 0..n {
        let s = sample_joint_with(&m, &mut rng, TINY).unwrap();
        *counts.entry(s.sentence).or_default() += 1;
    }
    let a = m.vocab.encode("a");
    let unk = m.vocab.unk();
    for x in strings(&[a, unk], TINY.max_len - 1) {
        let p = exact_marginal(&m, &x, TINY).unwrap().exp();
        let words: Vec<String> = x.iter().map(|&w| m.vocab.word(w).to_string()).collect();
        let c = *counts.get(&words).unwrap_or(&0) as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (c - n as f64 * p).abs() <= 3.0 * sd,
            "{words:?}: {c} vs {}",
            n as f64 * p
        );
    }
}
