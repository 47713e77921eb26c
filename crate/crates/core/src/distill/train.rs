use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cache::TeacherCache;
use super::MODULE;
use crate::corpus::{Tree, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::sample_joint_with;
use crate::lstm::{train_lm, train_with, LstmLm, TrainConfig};
use crate::rnng::Rnng;
use crate::train::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TeacherKind {
    RnngCache,
    /// Born-again: an LSTM LM teaching a fresh copy of itself.
    BornAgain,
    /// Plain LM training on strings sampled from the RNNG.
    McSamples,
}

impl TeacherKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RnngCache => "rnng-cache",
            Self::BornAgain => "lstm",
            Self::McSamples => "mc-samples",
        }
    }
}

impl fmt::Display for TeacherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TeacherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnng-cache" => Ok(Self::RnngCache),
            "lstm" | "born-again" => Ok(Self::BornAgain),
            "mc-samples" => Ok(Self::McSamples),
            _ => Err(Error::module(
                MODULE,
                format!("unknown teacher kind `{s}` (expected rnng-cache, lstm or mc-samples)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    pub alpha: f64,
    pub kind: TeacherKind,
    pub student: TrainConfig,
    /// Number of sampled strings in mc-samples mode.
    pub samples: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            kind: TeacherKind::RnngCache,
            student: TrainConfig {
                lr: 0.4,
                ..Default::default()
            },
            samples: 10_000,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::module(MODULE, format!("α = {} is outside [0, 1]", self.alpha)));
        }
        if self.kind == TeacherKind::McSamples && self.samples == 0 {
            return Err(Error::module(MODULE, "mc-samples mode needs at least one sample"));
        }
        self.student.validate()
    }
}

pub enum Teacher<'a> {
    Cache(&'a TeacherCache),
    Lstm(&'a LstmLm),
    Samples(&'a Rnng),
}

impl Teacher<'_> {
    fn kind(&self) -> TeacherKind {
        match self {
            Self::Cache(_) => TeacherKind::RnngCache,
            Self::Lstm(_) => TeacherKind::BornAgain,
            Self::Samples(_) => TeacherKind::McSamples,
        }
    }
}

/// Trains a student LSTM on the sentences of `train` against `teacher` and
/// returns the checkpoint with the best validation perplexity.
pub fn train_distilled(
    config: &DistillConfig,
    vocab: &Vocabulary,
    train: &[Tree],
    valid: &[Vec<usize>],
    teacher: Teacher<'_>,
) -> Result<Outcome<LstmLm>> {
    config.validate()?;
    if teacher.kind() != config.kind {
        return Err(Error::module(
            MODULE,
            format!("configured for a {} teacher but given {}", config.kind, teacher.kind()),
        ));
    }
    let ids: Vec<Vec<usize>> = train.iter().map(|t| vocab.encode_sentence(&t.leaves())).collect();
    let alpha = config.alpha;
    match teacher {
        Teacher::Cache(cache) => {
            cache.require_vocab(&vocab.content_hash())?;
            cache.require_corpus(train)?;
            let mut soft = |i: usize, _: &[usize]| cache.distributions(i);
            train_with(&config.student, vocab, &ids, valid, Some((alpha, &mut soft)))
        }
        Teacher::Lstm(lm) => {
            if lm.vocab.content_hash() != vocab.content_hash() {
                return Err(Error::module(MODULE, "born-again teacher uses a different vocabulary"));
            }
            let mut soft = |_: usize, x: &[usize]| -> Result<Vec<Vec<f64>>> {
                Ok(lm
                    .position_logprobs(x)?
                    .into_iter()
                    .map(|lp| lp.into_iter().map(f64::exp).collect())
                    .collect())
            };
            train_with(&config.student, vocab, &ids, valid, Some((alpha, &mut soft)))
        }
        Teacher::Samples(rnng) => {
            if rnng.vocab.content_hash() != vocab.content_hash() {
                return Err(Error::module(MODULE, "sampling teacher uses a different vocabulary"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.student.seed);
            let limits = rnng.config.limits;
            let sampled = (0..config.samples)
                .map(|_| sample_joint_with(rnng, &mut rng, limits).map(|s| vocab.encode_sentence(&s.sentence)))
                .collect::<Result<Vec<_>>>()?;
            log::info!("mc-samples: drew {} strings from the teacher", sampled.len());
            train_lm(&config.student, vocab, &sampled, valid)
        }
    }
}
