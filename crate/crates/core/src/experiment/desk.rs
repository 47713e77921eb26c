use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::data::DeskData;
use crate::corpus::{format_treebank, WeightedGrammar};
use crate::distill::{build_cache, train_distilled, Teacher, TeacherKind};
use crate::error::{Error, Result};
use crate::eval::{is_agreement_construction, rnng_perplexity_bound, run_suite, Scorer, SuiteResult};
use crate::fsutil::write_atomic;
use crate::lstm::{perplexity, train_lm, LstmLm};
use crate::probe::{probe_accuracy, train_probe, ProbeDataset, Split};
use crate::rnng::{collect_labels, train_rnng};

/// Model variants, in comparison-table order; `McLstm` is reported separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    SmallLstm,
    SDsaLstm,
    Rnng,
    FullLstm,
    BaLstm,
    DsaLstm,
    McLstm,
}

impl Variant {
    pub const TABLE: [Variant; 6] = [
        Variant::SmallLstm,
        Variant::SDsaLstm,
        Variant::Rnng,
        Variant::FullLstm,
        Variant::BaLstm,
        Variant::DsaLstm,
    ];
    pub const ALL: [Variant; 7] = [
        Variant::SmallLstm,
        Variant::SDsaLstm,
        Variant::Rnng,
        Variant::FullLstm,
        Variant::BaLstm,
        Variant::DsaLstm,
        Variant::McLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SmallLstm => "Small LSTM",
            Variant::SDsaLstm => "S-DSA-LSTM",
            Variant::Rnng => "RNNG",
            Variant::FullLstm => "Full LSTM",
            Variant::BaLstm => "BA-LSTM",
            Variant::DsaLstm => "DSA-LSTM",
            Variant::McLstm => "MC-LSTM",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Variant::SmallLstm => "small-lstm",
            Variant::SDsaLstm => "s-dsa-lstm",
            Variant::Rnng => "rnng",
            Variant::FullLstm => "full-lstm",
            Variant::BaLstm => "ba-lstm",
            Variant::DsaLstm => "dsa-lstm",
            Variant::McLstm => "mc-lstm",
        }
    }

    /// Accepts either the display name or the slug.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s || v.slug() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub suites: BTreeMap<Variant, SuiteResult>,
    /// Validation perplexity; for the RNNG the beam-bound estimate.
    pub ppl: BTreeMap<Variant, f64>,
    pub probe_plain: f64,
    pub probe_dsa: f64,
}

impl SeedRun {
    pub fn aggregate(&self, v: Variant) -> f64 {
        self.suites[&v].aggregate()
    }

    pub fn agreement(&self, v: Variant) -> f64 {
        self.suites[&v].mean_over(is_agreement_construction).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeControl {
    pub accuracy: f64,
    pub majority: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeskRun {
    pub runs: Vec<SeedRun>,
    pub control: ProbeControl,
}

fn timed<T>(what: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    log::info!("{what}: {:.1}s", start.elapsed().as_secs_f64());
    Ok(out)
}

fn save_suite(out: Option<&Path>, dir: &str, r: &SuiteResult, v: Variant) -> Result<()> {
    match out {
        Some(o) => write_atomic(
            &o.join(dir).join(format!("{}.suite.tsv", v.slug())),
            r.to_tsv().as_bytes(),
        ),
        None => Ok(()),
    }
}

fn save_lstm(out: Option<&Path>, dir: &str, m: &LstmLm, v: Variant) -> Result<()> {
    match out {
        Some(o) => m.save(&o.join(dir).join(format!("{}.ckpt", v.slug()))),
        None => Ok(()),
    }
}

/// All variants for one model seed, plus the probe comparison.
pub fn run_seed(
    cfg: &ExperimentConfig,
    data: &DeskData,
    seed: u64,
    out: Option<&Path>,
) -> Result<(SeedRun, ProbeDataset)> {
    let jobs = cfg.jobs()?;
    let dir = format!("seed-{seed}");
    let vocab = &data.vocab;
    let full_ids = data.ids(&data.train);
    let subset_ids = data.ids(&data.subset);
    let valid_ids = data.ids(&data.valid);
    let lstm_cfg = cfg.lstm(seed)?;
    let mut lms: BTreeMap<Variant, LstmLm> = BTreeMap::new();

    lms.insert(
        Variant::SmallLstm,
        timed("small lstm", || {
            Ok(train_lm(&lstm_cfg, vocab, &subset_ids, &valid_ids)?.best)
        })?,
    );
    let rnng = timed("rnng", || {
        Ok(train_rnng(
            &cfg.rnng(seed)?,
            vocab,
            collect_labels(&data.train),
            &data.subset,
            &data.valid,
        )?
        .best)
    })?;
    let sub_cache = timed("subset cache", || build_cache(&rnng, &data.subset, jobs))?;
    lms.insert(
        Variant::SDsaLstm,
        timed("s-dsa student", || {
            let c = cfg.distill(seed, TeacherKind::RnngCache)?;
            Ok(train_distilled(&c, vocab, &data.subset, &valid_ids, Teacher::Cache(&sub_cache))?.best)
        })?,
    );
    drop(sub_cache);
    let full = timed("full lstm", || {
        Ok(train_lm(&lstm_cfg, vocab, &full_ids, &valid_ids)?.best)
    })?;
    lms.insert(
        Variant::BaLstm,
        timed("born-again student", || {
            let c = cfg.distill(seed, TeacherKind::BornAgain)?;
            Ok(train_distilled(&c, vocab, &data.train, &valid_ids, Teacher::Lstm(&full))?.best)
        })?,
    );
    lms.insert(Variant::FullLstm, full);
    let cache = timed("full cache", || build_cache(&rnng, &data.train, jobs))?;
    if let Some(o) = out {
        cache.save(&o.join(&dir).join("teacher.cache"))?;
        rnng.save(&o.join(&dir).join("rnng.ckpt"))?;
    }
    lms.insert(
        Variant::DsaLstm,
        timed("dsa student", || {
            let c = cfg.distill(seed, TeacherKind::RnngCache)?;
            Ok(train_distilled(&c, vocab, &data.train, &valid_ids, Teacher::Cache(&cache))?.best)
        })?,
    );
    drop(cache);
    lms.insert(
        Variant::McLstm,
        timed("mc-samples student", || {
            let c = cfg.distill(seed, TeacherKind::McSamples)?;
            Ok(train_distilled(&c, vocab, &data.train, &valid_ids, Teacher::Samples(&rnng))?.best)
        })?,
    );

    let mut suites = BTreeMap::new();
    let mut ppl = BTreeMap::new();
    for (&v, m) in &lms {
        save_lstm(out, &dir, m, v)?;
        let r = run_suite(&Scorer::Lstm(m), &data.pairs, jobs, v.name(), seed)?;
        save_suite(out, &dir, &r, v)?;
        suites.insert(v, r);
        ppl.insert(v, perplexity(m, &valid_ids)?);
    }
    let beam = cfg.beam()?;
    let r = timed("rnng suite", || {
        run_suite(
            &Scorer::RnngBeam { model: &rnng, beam },
            &data.pairs,
            jobs,
            Variant::Rnng.name(),
            seed,
        )
    })?;
    save_suite(out, &dir, &r, Variant::Rnng)?;
    suites.insert(Variant::Rnng, r);
    ppl.insert(
        Variant::Rnng,
        timed("rnng ppl", || rnng_perplexity_bound(&rnng, &valid_ids, &beam))?,
    );

    let probe_cfg = cfg.probe()?;
    let plain_data = ProbeDataset::build(&lms[&Variant::FullLstm], &data.probe, jobs)?;
    let dsa_data = ProbeDataset::build(&lms[&Variant::DsaLstm], &data.probe, jobs)?;
    let probe_plain = timed("probe plain", || {
        Ok(probe_accuracy(
            &train_probe(&plain_data, &probe_cfg)?.probe,
            &plain_data,
            Split::Test,
        ))
    })?;
    let probe_dsa = timed("probe dsa", || {
        Ok(probe_accuracy(
            &train_probe(&dsa_data, &probe_cfg)?.probe,
            &dsa_data,
            Split::Test,
        ))
    })?;
    let run = SeedRun {
        seed,
        suites,
        ppl,
        probe_plain,
        probe_dsa,
    };
    log::info!(
        "seed {seed}: aggregate full {:.3} dsa {:.3}; ppl full {:.3} dsa {:.3}; probe full {:.3} dsa {:.3}",
        run.aggregate(Variant::FullLstm),
        run.aggregate(Variant::DsaLstm),
        run.ppl[&Variant::FullLstm],
        run.ppl[&Variant::DsaLstm],
        probe_plain,
        probe_dsa
    );
    Ok((run, plain_data))
}

/// Probe on label-shuffled features of the plain student.
pub fn probe_control(cfg: &ExperimentConfig, data: &ProbeDataset) -> Result<ProbeControl> {
    let shuffled = data.shuffled(cfg.seed()?);
    let fit = train_probe(&shuffled, &cfg.probe()?)?;
    let (_, majority) = shuffled.majority_baseline(Split::Test);
    let n = shuffled.count(Split::Test) as f64;
    Ok(ProbeControl {
        accuracy: probe_accuracy(&fit.probe, &shuffled, Split::Test),
        majority,
        sigma: (majority * (1.0 - majority) / n).sqrt(),
    })
}

/// Data generation, every variant for every model seed, and the probe
/// control. With `out`, all artifacts and a resolved-config snapshot are
/// written there.
pub fn run_desk(cfg: &ExperimentConfig, grammar: &WeightedGrammar, out: Option<&Path>) -> Result<DeskRun> {
    let data = timed("data", || DeskData::generate(grammar, cfg))?;
    if let Some(o) = out {
        write_atomic(&o.join("config.snapshot"), cfg.snapshot().as_bytes())?;
        write_atomic(&o.join("data/train.trees"), format_treebank(&data.train).as_bytes())?;
        write_atomic(&o.join("data/teacher.trees"), format_treebank(&data.subset).as_bytes())?;
        write_atomic(&o.join("data/valid.trees"), format_treebank(&data.valid).as_bytes())?;
        write_atomic(
            &o.join("data/pairs.tsv"),
            crate::corpus::format_pairs(&data.pairs).as_bytes(),
        )?;
    }
    log::info!(
        "desk data: {} train, {} teacher, {} valid sentences, {} pairs, {} probe sentences, |V| = {}",
        data.train.len(),
        data.subset.len(),
        data.valid.len(),
        data.pairs.len(),
        data.probe.len(),
        data.vocab.len()
    );
    let mut runs = Vec::new();
    let mut control = None;
    for seed in cfg.model_seeds()? {
        let (run, plain) = run_seed(cfg, &data, seed, out)?;
        if control.is_none() {
            control = Some(timed("probe control", || probe_control(cfg, &plain))?);
        }
        runs.push(run);
    }
    let desk = DeskRun {
        runs,
        control: control.ok_or_else(|| Error::module("experiment", "no model seeds"))?,
    };
    if let Some(o) = out {
        write_atomic(&o.join("summary.tsv"), desk.summary_tsv().as_bytes())?;
    }
    Ok(desk)
}

impl DeskRun {
    /// One row per seed and variant: aggregate and agreement accuracy, perplexity.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("seed\tmodel\taggregate\tagreement\tppl\n");
        for r in &self.runs {
            for v in Variant::ALL {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                    r.seed,
                    v.name(),
                    r.aggregate(v),
                    r.agreement(v),
                    r.ppl[&v]
                );
            }
        }
        out.push_str("\nseed\tprobe_full_lstm\tprobe_dsa_lstm\n");
        for r in &self.runs {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}", r.seed, r.probe_plain, r.probe_dsa);
        }
        let c = &self.control;
        let _ = writeln!(
            out,
            "\nshuffled_control\t{:.6}\tmajority\t{:.6}\tsigma\t{:.6}",
            c.accuracy, c.majority, c.sigma
        );
        out
    }

    pub fn suites(&self, v: Variant) -> Vec<SuiteResult> {
        self.runs.iter().map(|r| r.suites[&v].clone()).collect()
    }

    pub fn mean(&self, f: impl Fn(&SeedRun) -> f64) -> f64 {
        self.runs.iter().map(&f).sum::<f64>() / self.runs.len() as f64
    }
}
