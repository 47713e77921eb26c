//! Incremental decoding for the RNNG: word-synchronous beam search, exact
//! enumeration over derivations, and ancestral sampling from the joint.

mod beam;
mod exact;
mod sample;

use thiserror::Error;

use crate::autodiff::{Eager, Tensor};
use crate::corpus::Tree;
use crate::error::Result;
use crate::rnng::{Action, ActionKind, ParserState, Rnng};

pub use beam::{beam_decode, marginal_lower_bound, BeamConfig, BeamItem};
pub use exact::{enumerate_derivations, exact_marginal, EXACT_BUDGET};
pub use sample::{sample_joint, sample_joint_with, JointSample, MAX_RESAMPLES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("beam failure: no hypothesis reaches word {position}")]
    BeamFailure { position: usize },
    #[error("cannot decode an empty sentence")]
    EmptySentence,
    #[error("word id {id} is outside the vocabulary of {len}")]
    UnknownWord { id: usize, len: usize },
    #[error("derivation budget exceeded: {count} derivations enumerated, budget {budget}")]
    BudgetExceeded { count: usize, budget: usize },
    #[error("sampling failed after {0} attempts")]
    SamplingFailed(usize),
    #[error("invalid beam configuration: {0}")]
    BadConfig(String),
}

/// One complete derivation with its joint log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Parse {
    /// Tree without the `<eos>` terminal.
    pub tree: Tree,
    pub logprob: f64,
    pub actions: Vec<Action>,
}

impl Parse {
    pub(crate) fn from_state(model: &Rnng, state: &ParserState<Tensor>, logprob: f64, actions: Vec<Action>) -> Self {
        let full = state
            .tree()
            .expect("finished derivation")
            .to_tree(&model.labels, &model.vocab);
        let tree = match model.eos() {
            Some(e) => full
                .strip_leaf(model.vocab.word(e))
                .unwrap_or_else(|| Tree::node(full.label(), Vec::new())),
            None => full,
        };
        Self { tree, logprob, actions }
    }
}

/// Successor log-probabilities of one state, computed from a single summary.
pub(crate) struct Expansion {
    kind: [Option<f64>; 3],
    nt: Option<Vec<f64>>,
    words: Option<Vec<f64>>,
    forced: Option<usize>,
}

impl Expansion {
    pub(crate) fn new(model: &Rnng, g: &mut Eager, state: &ParserState<Tensor>) -> Result<Self> {
        let sc = model.step_scores(g, state, None)?;
        let mut kind = [None; 3];
        for (i, &k) in sc.legal.iter().enumerate() {
            kind[k as usize] = Some(sc.kinds.as_ref().map_or(0.0, |t| t.data()[i]));
        }
        let nt = match kind[ActionKind::Nt as usize] {
            Some(_) => Some(model.nt_logprobs(g, &sc.h)?.into_data()),
            None => None,
        };
        let forced = state.forced_word();
        let words = match kind[ActionKind::Gen as usize] {
            Some(_) if forced.is_none() => Some(model.word_logprobs(g, &sc.h)?.into_data()),
            _ => None,
        };
        Ok(Self {
            kind,
            nt,
            words,
            forced,
        })
    }

    pub(crate) fn legal(&self, kind: ActionKind) -> bool {
        self.kind[kind as usize].is_some()
    }

    pub(crate) fn num_labels(&self) -> usize {
        self.nt.as_ref().map_or(0, Vec::len)
    }

    /// Log-probability of `action`, `None` when it is illegal here.
    pub(crate) fn score(&self, action: Action) -> Option<f64> {
        let k = self.kind[action.kind() as usize]?;
        match action {
            Action::Nt(n) => self.nt.as_ref()?.get(n).map(|lp| k + lp),
            Action::Gen(w) => match self.forced {
                Some(f) => (f == w).then_some(k),
                None => self.words.as_ref()?.get(w).map(|lp| k + lp),
            },
            Action::Reduce => Some(k),
        }
    }

    /// Every legal action with its log-probability.
    pub(crate) fn all(&self, vocab: usize) -> Vec<(Action, f64)> {
        let mut out = Vec::new();
        for n in 0..self.num_labels() {
            out.extend(self.score(Action::Nt(n)).map(|s| (Action::Nt(n), s)));
        }
        if self.legal(ActionKind::Gen) {
            match self.forced {
                Some(f) => out.extend(self.score(Action::Gen(f)).map(|s| (Action::Gen(f), s))),
                None => {
                    for w in 0..vocab {
                        out.extend(self.score(Action::Gen(w)).map(|s| (Action::Gen(w), s)));
                    }
                }
            }
        }
        out.extend(self.score(Action::Reduce).map(|s| (Action::Reduce, s)));
        out
    }
}

/// Sentence ids followed by `<eos>` when the model generates it.
pub(crate) fn targets(model: &Rnng, sentence: &[usize]) -> Result<Vec<usize>> {
    let len = model.vocab.len();
    if let Some(&id) = sentence.iter().find(|&&id| id >= len) {
        return Err(InferenceError::UnknownWord { id, len }.into());
    }
    let mut t = sentence.to_vec();
    t.extend(model.eos());
    Ok(t)
}

#[cfg(test)]
mod tests;
