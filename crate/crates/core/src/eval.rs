//! Minimal-pair evaluation and multi-seed aggregation.
//!
//! A pair succeeds iff the grammatical member scores strictly higher. Ties
//! and scoring failures (beam failures, unscoreable input) count against
//! the model and are tallied separately.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::corpus::MinimalPair;
use crate::error::{Error, Result};
use crate::inference::{marginal_lower_bound, BeamConfig};
use crate::lstm::LstmLm;
use crate::rnng::Rnng;

const MODULE: &str = "eval";
/// Name of the summary row in suite tables.
pub const AGGREGATE_ROW: &str = "aggregate";

#[derive(Clone, Copy)]
pub enum Scorer<'a> {
    Lstm(&'a LstmLm),
    RnngBeam { model: &'a Rnng, beam: BeamConfig },
}

impl Scorer<'_> {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lstm(_) => "lstm",
            Self::RnngBeam { .. } => "rnng-beam",
        }
    }

    /// Sentence log score, `None` when the model cannot score it.
    pub fn score<S: AsRef<str>>(&self, words: &[S]) -> Option<f64> {
        let r = match self {
            Self::Lstm(m) => m.sentence_nll_words(words).map(|nll| -nll),
            Self::RnngBeam { model, beam } => marginal_lower_bound(model, &model.vocab.encode_sentence(words), beam),
        };
        match r {
            Ok(s) if s.is_finite() => Some(s),
            Ok(_) => None,
            Err(e) => {
                log::warn!("scoring failed: {e}");
                None
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairOutcome {
    Success,
    /// Scored, but the grammatical member was not strictly preferred.
    Failure,
    /// At least one member could not be scored.
    ScoringFailure,
}

pub fn judge(grammatical: Option<f64>, ungrammatical: Option<f64>) -> PairOutcome {
    match (grammatical, ungrammatical) {
        (Some(g), Some(u)) if g > u => PairOutcome::Success,
        (Some(_), Some(_)) => PairOutcome::Failure,
        _ => PairOutcome::ScoringFailure,
    }
}

pub fn evaluate_pair_detailed(scorer: &Scorer<'_>, pair: &MinimalPair) -> PairOutcome {
    judge(scorer.score(&pair.grammatical), scorer.score(&pair.ungrammatical))
}

pub fn evaluate_pair(scorer: &Scorer<'_>, pair: &MinimalPair) -> bool {
    evaluate_pair_detailed(scorer, pair) == PairOutcome::Success
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstructionResult {
    pub name: String,
    pub count: usize,
    pub successes: usize,
    pub scoring_failures: usize,
}

impl ConstructionResult {
    pub fn accuracy(&self) -> f64 {
        self.successes as f64 / self.count as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub model: String,
    pub seed: u64,
    /// Sorted by construction name.
    pub constructions: Vec<ConstructionResult>,
}

impl SuiteResult {
    /// Unweighted mean of the construction accuracies.
    pub fn aggregate(&self) -> f64 {
        self.mean_over(|_| true).unwrap_or(f64::NAN)
    }

    /// Unweighted mean over the constructions selected by `keep`.
    pub fn mean_over(&self, keep: impl Fn(&str) -> bool) -> Option<f64> {
        let accs: Vec<f64> = self
            .constructions
            .iter()
            .filter(|c| keep(&c.name))
            .map(ConstructionResult::accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    pub fn accuracy(&self, construction: &str) -> Option<f64> {
        self.constructions
            .iter()
            .find(|c| c.name == construction)
            .map(ConstructionResult::accuracy)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# model\t{}\n# seed\t{}\n", self.model, self.seed);
        out.push_str("construction\tn\tcorrect\tscore_failures\taccuracy\n");
        for c in &self.constructions {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}",
                c.name,
                c.count,
                c.successes,
                c.scoring_failures,
                c.accuracy()
            );
        }
        let n: usize = self.constructions.iter().map(|c| c.count).sum();
        let ok: usize = self.constructions.iter().map(|c| c.successes).sum();
        let bad: usize = self.constructions.iter().map(|c| c.scoring_failures).sum();
        let _ = writeln!(out, "{AGGREGATE_ROW}\t{n}\t{ok}\t{bad}\t{:.6}", self.aggregate());
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut model = None;
        let mut seed = None;
        let mut constructions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |m: &str| Error::module(MODULE, format!("suite table line {}: {m}", i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            match cols[0] {
                "" => {}
                "# model" => model = cols.get(1).map(|s| s.to_string()),
                "# seed" => {
                    seed = Some(
                        cols.get(1)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad("bad seed"))?,
                    )
                }
                "construction" | AGGREGATE_ROW => {}
                name => {
                    if cols.len() != 5 {
                        return Err(bad("expected 5 columns"));
                    }
                    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad count"));
                    let c = ConstructionResult {
                        name: name.to_string(),
                        count: num(cols[1])?,
                        successes: num(cols[2])?,
                        scoring_failures: num(cols[3])?,
                    };
                    if c.count == 0 || c.successes > c.count {
                        return Err(bad("inconsistent counts"));
                    }
                    constructions.push(c);
                }
            }
        }
        if constructions.is_empty() {
            return Err(Error::module(MODULE, "suite table has no constructions"));
        }
        constructions.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(Self {
            model: model.ok_or_else(|| Error::module(MODULE, "suite table lacks a model line"))?,
            seed: seed.ok_or_else(|| Error::module(MODULE, "suite table lacks a seed line"))?,
            constructions,
        })
    }
}

/// Constructions testing subject-verb agreement, as opposed to reflexives and NPIs.
pub fn is_agreement_construction(name: &str) -> bool {
    !name.starts_with("reflexive") && !name.starts_with("npi")
}

/// Scores every pair on `jobs` threads and tallies by construction.
pub fn run_suite(
    scorer: &Scorer<'_>,
    pairs: &[MinimalPair],
    jobs: usize,
    model: &str,
    seed: u64,
) -> Result<SuiteResult> {
    if pairs.is_empty() {
        return Err(Error::module(MODULE, "empty evaluation suite"));
    }
    let chunk = pairs.len().div_ceil(jobs.max(1));
    let outcomes: Vec<PairOutcome> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|p| evaluate_pair_detailed(scorer, p))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut by: BTreeMap<&str, ConstructionResult> = BTreeMap::new();
    for (p, o) in pairs.iter().zip(outcomes) {
        let c = by.entry(&p.construction).or_insert_with(|| ConstructionResult {
            name: p.construction.clone(),
            count: 0,
            successes: 0,
            scoring_failures: 0,
        });
        c.count += 1;
        c.successes += usize::from(o == PairOutcome::Success);
        c.scoring_failures += usize::from(o == PairOutcome::ScoringFailure);
    }
    let failures: usize = by.values().map(|c| c.scoring_failures).sum();
    if failures > 0 {
        log::warn!("{model} seed {seed}: {failures} pairs could not be scored");
    }
    Ok(SuiteResult {
        model: model.to_string(),
        seed,
        constructions: by.into_values().collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub stdev: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            mean,
            stdev: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub model: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<(String, MeanStd)>,
    pub aggregate: MeanStd,
}

impl Aggregate {
    pub fn row(&self, construction: &str) -> Option<&MeanStd> {
        if construction == AGGREGATE_ROW {
            return Some(&self.aggregate);
        }
        self.rows.iter().find(|(n, _)| n == construction).map(|(_, m)| m)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# model\t{}\n# seeds\t{}\n", self.model, self.seeds.len());
        out.push_str("construction\tmean\tstdev\n");
        for (name, m) in self
            .rows
            .iter()
            .chain(std::iter::once(&(AGGREGATE_ROW.to_string(), self.aggregate.clone())))
        {
            let _ = writeln!(out, "{name}\t{:.6}\t{:.6}", m.mean, m.stdev);
        }
        out
    }
}

fn names(r: &SuiteResult) -> BTreeSet<&str> {
    r.constructions.iter().map(|c| c.name.as_str()).collect()
}

/// Per-construction mean and population stdev across seeds of one model.
pub fn aggregate(results: &[SuiteResult]) -> Result<Aggregate> {
    let first = results
        .first()
        .ok_or_else(|| Error::module(MODULE, "nothing to aggregate"))?;
    let expected = names(first);
    for r in &results[1..] {
        let got = names(r);
        if got != expected {
            let missing: Vec<_> = expected.difference(&got).collect();
            let extra: Vec<_> = got.difference(&expected).collect();
            return Err(Error::module(
                MODULE,
                format!(
                    "seed {} has different constructions: missing {missing:?}, extra {extra:?}",
                    r.seed
                ),
            ));
        }
    }
    let rows = first
        .constructions
        .iter()
        .map(|c| {
            let accs: Vec<f64> = results.iter().map(|r| r.accuracy(&c.name).unwrap()).collect();
            (c.name.clone(), MeanStd::of(&accs))
        })
        .collect();
    let aggs: Vec<f64> = results.iter().map(SuiteResult::aggregate).collect();
    Ok(Aggregate {
        model: first.model.clone(),
        seeds: results.iter().map(|r| r.seed).collect(),
        rows,
        aggregate: MeanStd::of(&aggs),
    })
}

/// `exp(−Σ lower bound / tokens)`: an upper bound on the RNNG's perplexity,
/// counting `<eos>` as a token. Infinite if any sentence falls off the beam.
pub fn rnng_perplexity_bound(model: &Rnng, corpus: &[Vec<usize>], beam: &BeamConfig) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::module(MODULE, "perplexity of an empty corpus"));
    }
    let mut total = 0.0;
    let mut tokens = 0;
    for s in corpus {
        total += marginal_lower_bound(model, s, beam)?;
        tokens += s.len() + usize::from(model.eos().is_some());
    }
    Ok((-total / tokens as f64).exp())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{parse_bracketed, Vocabulary};
    use crate::lstm::{train_lm, TrainConfig};
    use crate::rnng::{collect_labels, RnngConfig};

    fn pair(c: &str, g: &str, u: &str) -> MinimalPair {
        let w = |s: &str| s.split_whitespace().map(str::to_string).collect();
        MinimalPair {
            construction: c.into(),
            grammatical: w(g),
            ungrammatical: w(u),
        }
    }

    fn lm(text: &str, epochs: usize) -> LstmLm {
        let sents: Vec<Vec<String>> = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        let vocab = Vocabulary::build(&sents, 1).unwrap();
        let ids: Vec<_> = sents.iter().map(|s| vocab.encode_sentence(s)).collect();
        let cfg = TrainConfig {
            hidden: 8,
            embed: 8,
            dropout: 0.0,
            batch: 1,
            epochs,
            decay: 1.0,
            lr: 0.5,
            ..Default::default()
        };
        train_lm(&cfg, &vocab, &ids, &ids).unwrap().best
    }

    #[test]
    fn identical_sentences_fail() {
        let m = lm("the dog runs", 1);
        let p = pair("x", "the dog runs", "the dog runs");
        assert!(!evaluate_pair(&Scorer::Lstm(&m), &p));
    }

    #[test]
    fn uniform_model_ties_and_fails() {
        let mut m = lm("the dog runs\nthe dogs run", 1);
        m.zero_output();
        let p = pair("x", "the dog runs", "the dog run");
        assert_eq!(evaluate_pair_detailed(&Scorer::Lstm(&m), &p), PairOutcome::Failure);
    }

    #[test]
    fn memorised_model_passes_its_training_pairs() {
        let m = lm("the dog runs\nthe dogs run\nthe cat sleeps\nthe cats sleep", 200);
        let pairs = [
            pair("sv", "the dog runs", "the dog run"),
            pair("sv", "the dogs run", "the dogs runs"),
            pair("sv", "the cat sleeps", "the cat sleep"),
            pair("sv", "the cats sleep", "the cats sleeps"),
        ];
        let r = run_suite(&Scorer::Lstm(&m), &pairs, 2, "toy", 0).unwrap();
        assert_eq!(r.aggregate(), 1.0);
        assert!(run_suite(&Scorer::Lstm(&m), &[], 1, "toy", 0).is_err());
    }

    #[test]
    fn unscoreable_pairs_are_failures() {
        assert_eq!(judge(None, Some(-1.0)), PairOutcome::ScoringFailure);
        assert_eq!(judge(Some(-1.0), None), PairOutcome::ScoringFailure);
        assert_eq!(judge(Some(-1.0), Some(-1.0)), PairOutcome::Failure);
        assert_eq!(judge(Some(-1.0), Some(-2.0)), PairOutcome::Success);
    }

    #[test]
    fn rnng_scorer_reports_beam_failures() {
        let t = parse_bracketed("(S (NP the dog) (VP runs))").unwrap();
        let vocab = Vocabulary::build(&[t.sentence()], 1).unwrap();
        let cfg = RnngConfig {
            hidden: 5,
            embed: 5,
            limits: crate::rnng::Limits {
                max_open: 3,
                max_len: 4,
            },
            ..Default::default()
        };
        let m = Rnng::new(vocab, collect_labels(&[t]), cfg).unwrap();
        let s = Scorer::RnngBeam {
            model: &m,
            beam: BeamConfig::new(4),
        };
        assert!(s.score(&["the", "dog", "runs"]).is_some());
        let long = pair("x", "the dog runs runs", "the dog run");
        assert_eq!(evaluate_pair_detailed(&s, &long), PairOutcome::ScoringFailure);
        let r = run_suite(&s, &[long], 1, "rnng", 0).unwrap();
        assert_eq!(r.constructions[0].scoring_failures, 1);
    }

    fn result(seed: u64, accs: &[(&str, usize, usize)]) -> SuiteResult {
        SuiteResult {
            model: "m".into(),
            seed,
            constructions: accs
                .iter()
                .map(|&(n, c, s)| ConstructionResult {
                    name: n.into(),
                    count: c,
                    successes: s,
                    scoring_failures: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn aggregate_is_the_unweighted_construction_mean() {
        let r = result(0, &[("a", 10, 10), ("b", 1000, 0)]);
        assert_eq!(r.aggregate(), 0.5);
        assert!(r.to_tsv().contains("aggregate\t1010\t10\t0\t0.500000"));
    }

    #[test]
    fn identical_seeds_have_zero_spread() {
        let rs: Vec<_> = (0..10).map(|s| result(s, &[("a", 4, 3), ("b", 5, 1)])).collect();
        let a = aggregate(&rs).unwrap();
        assert_eq!(a.row("a").unwrap().stdev, 0.0);
        assert_eq!(a.aggregate.stdev, 0.0);
        assert_eq!(a.row("a").unwrap().mean, 0.75);
    }

    #[test]
    fn population_stdev_matches_recomputation() {
        let rs = [
            result(0, &[("a", 4, 1)]),
            result(1, &[("a", 4, 2)]),
            result(2, &[("a", 4, 4)]),
        ];
        let a = aggregate(&rs).unwrap();
        let xs = [0.25, 0.5, 1.0];
        let mean = (0.25 + 0.5 + 1.0) / 3.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
        assert!((a.row("a").unwrap().mean - mean).abs() < 1e-15);
        assert!((a.row("a").unwrap().stdev - var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_constructions_are_named() {
        let err = aggregate(&[result(0, &[("a", 1, 1)]), result(1, &[("b", 1, 1)])]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"a\"") && msg.contains("\"b\""), "{msg}");
    }

    #[test]
    fn suite_tables_round_trip() {
        let r = result(7, &[("across_pp", 40, 31), ("npi_simple", 12, 12)]);
        assert_eq!(SuiteResult::from_tsv(&r.to_tsv()).unwrap(), r);
        assert!(SuiteResult::from_tsv("construction\tn\n").is_err());
    }

    #[test]
    fn agreement_constructions() {
        assert!(is_agreement_construction("across_object_rc"));
        assert!(!is_agreement_construction("reflexive_simple"));
        assert!(!is_agreement_construction("npi_across_rc"));
    }

    proptest! {
        // dyadic values keep the shifted comparison exact
        #[test]
        fn shifting_both_scores_keeps_the_verdict(g in -4096i32..0, u in -4096i32..0, c in -4096i32..4096) {
            let (g, u, c) = (g as f64 / 64.0, u as f64 / 64.0, c as f64 / 64.0);
            prop_assert_eq!(judge(Some(g), Some(u)), judge(Some(g + c), Some(u + c)));
        }
    }
}
