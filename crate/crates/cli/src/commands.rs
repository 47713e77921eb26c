use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use dsalm::checkpoint::Checkpoint;
use dsalm::corpus::{
    format_pairs, format_treebank, parse_plain, parse_treebank, print_bracketed, read_pairs, read_treebank,
    sample_corpus, SampleOptions, Tree, Vocabulary, WeightedGrammar, AGREEMENT_GRAMMAR,
};
use dsalm::distill::{build_cache, train_distilled, Teacher, TeacherCache, TeacherKind};
use dsalm::eval::{aggregate, rnng_perplexity_bound, run_suite, Scorer, SuiteResult};
use dsalm::experiment::{comparison_table, pair_suite, teacher_subset, ExperimentConfig};
use dsalm::fsutil::{read_to_string, write_atomic};
use dsalm::inference::beam_decode;
use dsalm::lstm::{perplexity, train_lm, LstmLm};
use dsalm::probe::{probe_accuracy, train_probe, ProbeDataset, Split};
use dsalm::rnng::{collect_labels, train_rnng, Rnng};
use dsalm::train::{format_log, Outcome};

use crate::Common;

/// Bad settings; reported like a bad flag.
#[derive(Debug)]
pub struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl Common {
    /// Defaults, then the config file, then `--set`, then `flags`, then `--seed` and `--jobs`.
    fn resolve(&self, flags: &[(&str, Option<String>)]) -> Result<ExperimentConfig> {
        self.try_resolve(flags)
            .map_err(|e| UsageError(crate::message(&e)).into())
    }

    fn try_resolve(&self, flags: &[(&str, Option<String>)]) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::parse(&read_to_string(p)?).with_context(|| format!("{}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("config: --set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(k.trim(), v.trim())?;
        }
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(j) = self.jobs {
            cfg.set("jobs", &j.to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn flag<T: ToString>(key: &'static str, v: &Option<T>) -> (&'static str, Option<String>) {
    (key, v.as_ref().map(ToString::to_string))
}

/// Writes `bytes` to `out` and the resolved settings to `out.config`.
fn emit(out: &Path, bytes: &[u8], cfg: &ExperimentConfig) -> Result<()> {
    write_atomic(out, bytes)?;
    write_atomic(&sidecar(out, "config"), cfg.snapshot().as_bytes())?;
    log::info!("wrote {}", out.display());
    Ok(())
}

fn sidecar(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes to `out` (with its snapshot) or to stdout.
fn emit_or_print(out: Option<&Path>, text: &str, cfg: &ExperimentConfig) -> Result<()> {
    match out {
        Some(o) => emit(o, text.as_bytes(), cfg),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_grammar(path: Option<&Path>) -> Result<WeightedGrammar> {
    let text = match path {
        Some(p) => read_to_string(p)?,
        None => AGREEMENT_GRAMMAR.to_string(),
    };
    Ok(WeightedGrammar::parse(&text)?)
}

/// A treebank if the first non-blank character opens a bracket, otherwise
/// plain text with each sentence under a flat `S` node.
fn read_corpus(path: &Path) -> Result<Vec<Tree>> {
    let text = read_to_string(path)?;
    if text.trim_start().starts_with('(') {
        return parse_treebank(&text).with_context(|| format!("{}", path.display()));
    }
    Ok(parse_plain(&text)
        .into_iter()
        .map(|s| Tree::node("S", s.into_iter().map(Tree::leaf).collect()))
        .collect())
}

fn read_trees(path: &Path) -> Result<Vec<Tree>> {
    read_treebank(path).with_context(|| format!("reading {}", path.display()))
}

fn build_vocab(trees: &[Tree]) -> Result<Vocabulary> {
    let sents: Vec<Vec<String>> = trees.iter().map(Tree::sentence).collect();
    Ok(Vocabulary::build(&sents, 1)?)
}

fn encode(vocab: &Vocabulary, trees: &[Tree]) -> Vec<Vec<usize>> {
    trees.iter().map(|t| vocab.encode_sentence(&t.leaves())).collect()
}

enum Model {
    Lstm(LstmLm),
    Rnng(Rnng),
}

impl Model {
    fn load(path: &Path) -> Result<(Self, u64)> {
        let ck = Checkpoint::load(path)?;
        let m = match ck.hyper("model")? {
            "lstm" => Model::Lstm(LstmLm::from_checkpoint(&ck)?),
            "rnng" => Model::Rnng(Rnng::from_checkpoint(&ck)?),
            other => bail!("checkpoint: {} holds an unknown model kind `{other}`", path.display()),
        };
        Ok((m, ck.seed))
    }

    fn vocab(&self) -> &Vocabulary {
        match self {
            Model::Lstm(m) => &m.vocab,
            Model::Rnng(m) => &m.vocab,
        }
    }
}

fn save_outcome<M>(
    out: &Path,
    outcome: &Outcome<M>,
    ck: Checkpoint,
    metric: &str,
    cfg: &ExperimentConfig,
) -> Result<()> {
    emit(out, &ck.to_bytes(), cfg)?;
    write_atomic(&sidecar(out, "log"), format_log(metric, &outcome.log).as_bytes())?;
    log::info!("best epoch {} of {}", outcome.best_epoch, outcome.log.len());
    Ok(())
}

#[derive(Args)]
pub struct GenCorpus {
    /// Grammar file; the built-in agreement grammar by default.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Number of sentences [config: data.train].
    #[arg(long)]
    n: Option<usize>,
    /// Take the teacher subset of this treebank instead of sampling.
    #[arg(long, value_name = "TREES")]
    from: Option<PathBuf>,
    /// Subset fraction for --from [config: teacher.subset].
    #[arg(long, requires = "from")]
    fraction: Option<f64>,
    /// Keep a preterminal layer above each word.
    #[arg(long, conflicts_with = "from")]
    preterminals: bool,
    #[arg(long)]
    out: PathBuf,
}

impl GenCorpus {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[flag("data.train", &self.n), flag("teacher.subset", &self.fraction)])?;
        let trees = match &self.from {
            Some(src) => teacher_subset(&read_trees(src)?, cfg.get("teacher.subset")?, cfg.seed()?),
            None => {
                let g = load_grammar(self.grammar.as_deref())?;
                let opts = SampleOptions {
                    preterminals: self.preterminals,
                    max_depth: cfg.get("data.max_depth")?,
                };
                sample_corpus(&g, cfg.seed()?, cfg.get("data.train")?, &opts)?
            }
        };
        emit(&self.out, format_treebank(&trees).as_bytes(), &cfg)
    }
}

#[derive(Args)]
pub struct GenPairs {
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Pairs per construction [config: data.pairs].
    #[arg(long)]
    n: Option<usize>,
    /// Restrict to these constructions; all of the grammar's by default.
    #[arg(long)]
    construction: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

impl GenPairs {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[flag("data.pairs", &self.n)])?;
        let g = load_grammar(self.grammar.as_deref())?;
        let tags: Vec<&str> = if self.construction.is_empty() {
            g.construction_tags()
        } else {
            self.construction.iter().map(String::as_str).collect()
        };
        let pairs = pair_suite(&g, &tags, cfg.seed()?, cfg.get("data.pairs")?)?;
        emit(&self.out, format_pairs(&pairs).as_bytes(), &cfg)
    }
}

#[derive(Args)]
pub struct TrainLstm {
    /// Training corpus: a treebank or plain text.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    /// Build the vocabulary from this corpus instead of --train.
    #[arg(long)]
    vocab_from: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

impl TrainLstm {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let train = read_corpus(&self.train)?;
        let vocab = build_vocab(&match &self.vocab_from {
            Some(p) => read_corpus(p)?,
            None => train.clone(),
        })?;
        let valid = encode(&vocab, &read_corpus(&self.valid)?);
        let r = train_lm(&cfg.lstm(cfg.seed()?)?, &vocab, &encode(&vocab, &train), &valid)?;
        save_outcome(&self.out, &r, r.best.to_checkpoint(), "valid_ppl", &cfg)
    }
}

#[derive(Args)]
pub struct TrainRnng {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    /// Build the vocabulary and label set from this treebank instead of --train.
    #[arg(long)]
    vocab_from: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

impl TrainRnng {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let train = read_trees(&self.train)?;
        let source = match &self.vocab_from {
            Some(p) => read_trees(p)?,
            None => train.clone(),
        };
        let vocab = build_vocab(&source)?;
        let valid = read_trees(&self.valid)?;
        let r = train_rnng(&cfg.rnng(cfg.seed()?)?, &vocab, collect_labels(&source), &train, &valid)?;
        save_outcome(&self.out, &r, r.best.to_checkpoint(), "valid_nll", &cfg)
    }
}

#[derive(Args)]
pub struct CacheTeacher {
    /// RNNG checkpoint.
    #[arg(long)]
    teacher: PathBuf,
    /// The treebank the student will train on.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

impl CacheTeacher {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let teacher = Rnng::load(&self.teacher)?;
        let cache = build_cache(&teacher, &read_trees(&self.train)?, cfg.jobs()?)?;
        emit(&self.out, &cache.to_bytes(), &cfg)
    }
}

#[derive(Args)]
pub struct TrainDistill {
    /// Student training treebank (plain text is accepted for lstm and mc-samples teachers).
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[arg(long)]
    vocab_from: Option<PathBuf>,
    /// rnng-cache, lstm (born-again) or mc-samples.
    #[arg(long, default_value = "rnng-cache")]
    kind: TeacherKind,
    /// Teacher cache for rnng-cache.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Teacher checkpoint for lstm and mc-samples.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Recompute this many cached distributions from an RNNG before training.
    #[arg(long, value_name = "RNNG")]
    verify_teacher: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    verify_positions: usize,
    /// Weight of the distillation term [config: distill.alpha].
    #[arg(long)]
    alpha: Option<f64>,
    /// Strings drawn for mc-samples [config: distill.samples].
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Largest tolerated gap between a cached and a recomputed teacher probability.
const VERIFY_TOLERANCE: f64 = 1e-6;

impl TrainDistill {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[
            flag("distill.alpha", &self.alpha),
            flag("distill.samples", &self.samples),
        ])?;
        let dcfg = cfg.distill(cfg.seed()?, self.kind)?;
        let train = read_corpus(&self.train)?;
        let vocab = build_vocab(&match &self.vocab_from {
            Some(p) => read_corpus(p)?,
            None => train.clone(),
        })?;
        let valid = encode(&vocab, &read_corpus(&self.valid)?);
        let need = |p: &Option<PathBuf>, flag: &str| {
            p.clone()
                .with_context(|| format!("distill: a {} teacher needs --{flag}", self.kind))
        };
        let r = match self.kind {
            TeacherKind::RnngCache => {
                let cache = TeacherCache::load(&need(&self.cache, "cache")?, &vocab.content_hash())?;
                if let Some(p) = &self.verify_teacher {
                    let diff = cache.verify(&Rnng::load(p)?, &train, self.verify_positions, cfg.seed()?)?;
                    if diff > VERIFY_TOLERANCE {
                        bail!("distill: cache differs from {} by {diff:e}", p.display());
                    }
                    log::info!("cache agrees with {} to {diff:e}", p.display());
                }
                train_distilled(&dcfg, &vocab, &train, &valid, Teacher::Cache(&cache))?
            }
            TeacherKind::BornAgain => {
                let lm = LstmLm::load(&need(&self.teacher, "teacher")?)?;
                train_distilled(&dcfg, &vocab, &train, &valid, Teacher::Lstm(&lm))?
            }
            TeacherKind::McSamples => {
                let rnng = Rnng::load(&need(&self.teacher, "teacher")?)?;
                train_distilled(&dcfg, &vocab, &train, &valid, Teacher::Samples(&rnng))?
            }
        };
        save_outcome(&self.out, &r, r.best.to_checkpoint(), "valid_ppl", &cfg)
    }
}

#[derive(Args)]
pub struct Decode {
    /// RNNG checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Sentences: plain text or a treebank whose trees are ignored.
    #[arg(long)]
    input: PathBuf,
    /// Parses to print per sentence.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Decode {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let beam = cfg.beam()?;
        let model = Rnng::load(&self.model)?;
        let mut out = String::from("id\trank\tlogprob\ttree\n");
        for (i, ids) in encode(&model.vocab, &read_corpus(&self.input)?).iter().enumerate() {
            let parses = beam_decode(&model, ids, &beam)?;
            if parses.is_empty() {
                log::warn!("sentence {i}: no complete parse in the beam");
            }
            for (rank, p) in parses.iter().take(self.k).enumerate() {
                let _ = writeln!(out, "{i}\t{}\t{}\t{}", rank + 1, p.logprob, print_bracketed(&p.tree));
            }
        }
        emit_or_print(self.out.as_deref(), &out, &cfg)
    }
}

#[derive(Args)]
pub struct Ppl {
    /// LSTM or RNNG checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Ppl {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let (model, _) = Model::load(&self.model)?;
        let ids = encode(model.vocab(), &read_corpus(&self.input)?);
        let (kind, ppl) = match &model {
            Model::Lstm(m) => ("lstm", perplexity(m, &ids)?),
            Model::Rnng(m) => ("rnng-beam-bound", rnng_perplexity_bound(m, &ids, &cfg.beam()?)?),
        };
        let tokens: usize = ids.iter().map(|s| s.len() + 1).sum();
        let text = format!(
            "model\tsentences\ttokens\tppl\n{kind}\t{}\t{tokens}\t{ppl:.6}\n",
            ids.len()
        );
        emit_or_print(self.out.as_deref(), &text, &cfg)
    }
}

#[derive(Args)]
pub struct EvalSuite {
    /// LSTM or RNNG checkpoint; an RNNG is scored by its beam lower bound.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    /// Model name in the results; the checkpoint's file stem by default.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

impl EvalSuite {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let (model, seed) = Model::load(&self.model)?;
        let pairs = read_pairs(&self.pairs)?;
        let name = match self.name {
            Some(n) => n,
            None => self
                .model
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into()),
        };
        let scorer = match &model {
            Model::Lstm(m) => Scorer::Lstm(m),
            Model::Rnng(m) => Scorer::RnngBeam {
                model: m,
                beam: cfg.beam()?,
            },
        };
        let r = run_suite(&scorer, &pairs, cfg.jobs()?, &name, seed)?;
        log::info!("{name}: aggregate accuracy {:.3}", r.aggregate());
        emit(&self.out, r.to_tsv().as_bytes(), &cfg)
    }
}

#[derive(Args)]
pub struct Probe {
    /// LSTM checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Treebanks with a preterminal layer.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Shuffle the labels within each split first (control task).
    #[arg(long)]
    control: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Probe {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let lm = LstmLm::load(&self.model)?;
        let mut trees = Vec::new();
        for (split, path) in [
            (Split::Train, &self.train),
            (Split::Valid, &self.valid),
            (Split::Test, &self.test),
        ] {
            trees.extend(read_trees(path)?.into_iter().map(|t| (split, t)));
        }
        let mut data = ProbeDataset::build(&lm, &trees, cfg.jobs()?)?;
        if self.control {
            data = data.shuffled(cfg.seed()?);
        }
        let fit = train_probe(&data, &cfg.probe()?)?;
        let mut out = format!(
            "# iterations {}\n# converged {}\nsplit\tn\taccuracy\tmajority\n",
            fit.iterations, fit.converged
        );
        for split in [Split::Train, Split::Valid, Split::Test] {
            let (_, majority) = data.majority_baseline(split);
            let _ = writeln!(
                out,
                "{split}\t{}\t{:.6}\t{majority:.6}",
                data.count(split),
                probe_accuracy(&fit.probe, &data, split)
            );
        }
        emit_or_print(self.out.as_deref(), &out, &cfg)
    }
}

#[derive(Args)]
pub struct Report {
    /// Directory searched recursively for `*.suite.tsv` files.
    #[arg(long)]
    results: PathBuf,
    /// Writes PREFIX.md and PREFIX.tsv as well as printing the markdown.
    #[arg(long, value_name = "PREFIX")]
    out: Option<PathBuf>,
}

fn suite_files(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("report: reading {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            suite_files(&p, found)?;
        } else if p.to_string_lossy().ends_with(".suite.tsv") {
            found.push(p);
        }
    }
    Ok(())
}

impl Report {
    pub fn run(self, common: &Common) -> Result<()> {
        let cfg = common.resolve(&[])?;
        let mut files = Vec::new();
        suite_files(&self.results, &mut files)?;
        if files.is_empty() {
            bail!("report: no *.suite.tsv files under {}", self.results.display());
        }
        let mut by_model: BTreeMap<String, Vec<SuiteResult>> = BTreeMap::new();
        for f in &files {
            let r = SuiteResult::from_tsv(&read_to_string(f)?).with_context(|| format!("{}", f.display()))?;
            by_model.entry(r.model.clone()).or_default().push(r);
        }
        let aggs = by_model
            .values()
            .map(|runs| aggregate(runs))
            .collect::<dsalm::Result<Vec<_>>>()?;
        let table = comparison_table(&aggs)?;
        let md = table.to_markdown();
        if let Some(prefix) = &self.out {
            emit(&sidecar(prefix, "md"), md.as_bytes(), &cfg)?;
            write_atomic(&sidecar(prefix, "tsv"), table.to_tsv().as_bytes())?;
        }
        print!("{md}");
        Ok(())
    }
}
