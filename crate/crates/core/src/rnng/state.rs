use std::fmt;
use std::rc::Rc;

use super::RnngError;
use crate::corpus::{Tree, Vocabulary};
use crate::nn::LstmState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Nt = 0,
    Gen = 1,
    Reduce = 2,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::Nt, ActionKind::Gen, ActionKind::Reduce];
}

/// Generative action with an id payload: nonterminal label for `Nt`, word for `Gen`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Nt(usize),
    Gen(usize),
    Reduce,
}

impl Action {
    pub fn kind(self) -> ActionKind {
        match self {
            Action::Nt(_) => ActionKind::Nt,
            Action::Gen(_) => ActionKind::Gen,
            Action::Reduce => ActionKind::Reduce,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Nt(n) => write!(f, "NT#{n}"),
            Action::Gen(w) => write!(f, "GEN#{w}"),
            Action::Reduce => f.write_str("REDUCE"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_open: usize,
    pub max_len: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_open: 40,
            max_len: 120,
        }
    }
}

/// Subtree over label and word ids, shared between beam items.
#[derive(Debug, PartialEq)]
pub enum IdTree {
    Leaf(usize),
    Node(usize, Vec<Rc<IdTree>>),
}

impl IdTree {
    pub fn to_tree(&self, labels: &[String], vocab: &Vocabulary) -> Tree {
        match self {
            IdTree::Leaf(w) => Tree::leaf(vocab.word(*w)),
            IdTree::Node(n, children) => Tree::node(
                labels[*n].clone(),
                children.iter().map(|c| c.to_tree(labels, vocab)).collect(),
            ),
        }
    }
}

pub(crate) enum Elem<V> {
    Open(usize),
    Done { repr: V, tree: Rc<IdTree> },
}

/// Persistent stack cell: the element plus the encoder states after pushing it.
pub(crate) struct Cell<V> {
    pub(crate) elem: Elem<V>,
    pub(crate) enc: Rc<[LstmState<V>]>,
    pub(crate) below: Option<Rc<Cell<V>>>,
}

/// Parser configuration. Cloning is O(1): the stack is shared structure.
pub struct ParserState<V> {
    pub(crate) top: Option<Rc<Cell<V>>>,
    pub(crate) base: Rc<[LstmState<V>]>,
    open: usize,
    emitted: usize,
    eos_emitted: bool,
    eos: Option<usize>,
    limits: Limits,
}

impl<V> Clone for ParserState<V> {
    fn clone(&self) -> Self {
        Self {
            top: self.top.clone(),
            base: self.base.clone(),
            open: self.open,
            emitted: self.emitted,
            eos_emitted: self.eos_emitted,
            eos: self.eos,
            limits: self.limits,
        }
    }
}

impl<V> fmt::Debug for ParserState<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParserState")
            .field("open", &self.open)
            .field("emitted", &self.emitted)
            .field("eos_emitted", &self.eos_emitted)
            .finish_non_exhaustive()
    }
}

impl<V: Clone> ParserState<V> {
    pub(crate) fn initial(base: Vec<LstmState<V>>, eos: Option<usize>, limits: Limits) -> Self {
        Self {
            top: None,
            base: base.into(),
            open: 0,
            emitted: 0,
            eos_emitted: false,
            eos,
            limits,
        }
    }

    pub fn open_count(&self) -> usize {
        self.open
    }

    /// Terminals generated so far (including `<eos>`).
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn eos_emitted(&self) -> bool {
        self.eos_emitted
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn is_finished(&self) -> bool {
        self.open == 0 && matches!(&self.top, Some(c) if c.below.is_none() && matches!(c.elem, Elem::Done { .. }))
    }

    /// Encoder states summarising the current stack.
    pub(crate) fn encoding(&self) -> &[LstmState<V>] {
        match &self.top {
            Some(c) => &c.enc,
            None => &self.base,
        }
    }

    /// The completed tree of a finished derivation.
    pub fn tree(&self) -> Option<Rc<IdTree>> {
        if !self.is_finished() {
            return None;
        }
        match &self.top.as_ref()?.elem {
            Elem::Done { tree, .. } => Some(tree.clone()),
            Elem::Open(_) => None,
        }
    }

    fn top_is_open(&self) -> bool {
        matches!(&self.top, Some(c) if matches!(c.elem, Elem::Open(_)))
    }

    /// Why `kind` is illegal here, or `None` when it is legal.
    pub fn violation(&self, kind: ActionKind) -> Option<&'static str> {
        if self.is_finished() {
            return Some("the derivation is already finished");
        }
        let l = self.limits;
        match kind {
            ActionKind::Nt => {
                if self.eos_emitted {
                    Some("only REDUCE may follow <eos>")
                } else if self.open >= l.max_open {
                    Some("open nonterminal limit reached")
                } else if self.emitted >= l.max_len {
                    Some("sentence length limit reached")
                } else if self.open == 0 && self.top.is_some() {
                    Some("a second root cannot be opened")
                } else {
                    None
                }
            }
            ActionKind::Gen => {
                if self.eos_emitted {
                    Some("only REDUCE may follow <eos>")
                } else if self.open == 0 {
                    Some("no open constituent to generate into")
                } else if self.emitted >= l.max_len {
                    Some("sentence length limit reached")
                } else {
                    None
                }
            }
            ActionKind::Reduce => {
                if self.open == 0 {
                    Some("no open constituent to close")
                } else if self.top_is_open() {
                    Some("the open constituent on top of the stack is empty")
                } else if self.eos.is_some() && self.open == 1 && !self.eos_emitted {
                    Some("the root cannot close before <eos>")
                } else {
                    None
                }
            }
        }
    }

    /// Legal action kinds in NT, GEN, REDUCE order.
    pub fn legal_actions(&self) -> Result<Vec<ActionKind>, RnngError> {
        if self.is_finished() {
            return Err(RnngError::Finished);
        }
        let legal: Vec<ActionKind> = ActionKind::ALL
            .into_iter()
            .filter(|&k| self.violation(k).is_none())
            .collect();
        debug_assert!(!legal.is_empty(), "reachable state with no legal action");
        Ok(legal)
    }

    /// The only word that may be generated here, if the choice is forced:
    /// `<eos>` when one more terminal would reach the length limit.
    pub fn forced_word(&self) -> Option<usize> {
        self.eos.filter(|_| self.emitted + 1 == self.limits.max_len)
    }

    pub(crate) fn check(&self, action: Action) -> Result<(), RnngError> {
        if let Some(reason) = self.violation(action.kind()) {
            return Err(RnngError::Illegal {
                action: action.to_string(),
                reason,
            });
        }
        if let (Action::Gen(w), Some(forced)) = (action, self.forced_word()) {
            if w != forced {
                return Err(RnngError::Illegal {
                    action: action.to_string(),
                    reason: "only <eos> fits within the length limit",
                });
            }
        }
        Ok(())
    }

    /// Bookkeeping shared by every transition; the caller supplies the new top.
    pub(crate) fn advance(&self, action: Action, top: Rc<Cell<V>>) -> Self {
        let mut next = self.clone();
        match action {
            Action::Nt(_) => next.open += 1,
            Action::Gen(w) => {
                next.emitted += 1;
                if Some(w) == self.eos {
                    next.eos_emitted = true;
                }
            }
            Action::Reduce => next.open -= 1,
        }
        next.top = Some(top);
        next
    }
}
