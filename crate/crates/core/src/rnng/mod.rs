//! Generative recurrent neural network grammar over NT / GEN / REDUCE actions.
//!
//! The state summary is a stack LSTM over the stack elements only. Each of
//! the three softmax heads (action kind, word, nonterminal) reads the same
//! summary, and the action head is renormalised over the legal kinds so that
//! the model is a proper distribution over complete derivations.

mod model;
mod state;

use thiserror::Error;

pub use model::{collect_labels, mean_nll, train_rnng, Rnng, RnngConfig, StepScores};
pub use state::{Action, ActionKind, IdTree, Limits, ParserState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RnngError {
    #[error("the derivation is already finished")]
    Finished,
    #[error("illegal action {action}: {reason}")]
    Illegal { action: String, reason: &'static str },
    #[error("composition needs at least one child")]
    EmptyComposition,
    #[error("unknown nonterminal label {0:?}")]
    UnknownLabel(String),
    #[error("sentence does not match the leaves of the tree")]
    LeafMismatch,
    #[error("action sequence ends before the derivation is complete")]
    Incomplete,
}
