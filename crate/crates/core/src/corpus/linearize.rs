use std::fmt;

use super::{CorpusError, Tree};

/// One step of a top-down, left-to-right derivation, with symbolic payloads.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TreeAction {
    Nt(String),
    Gen(String),
    Reduce,
}

impl fmt::Display for TreeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeAction::Nt(l) => write!(f, "NT({l})"),
            TreeAction::Gen(w) => write!(f, "GEN({w})"),
            TreeAction::Reduce => f.write_str("REDUCE"),
        }
    }
}

impl std::str::FromStr for TreeAction {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::InvalidTree(format!("bad action {s:?}"));
        if s == "REDUCE" {
            return Ok(TreeAction::Reduce);
        }
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .filter(|r| !r.is_empty())
                .map(str::to_string)
        };
        if let Some(l) = inner("NT(") {
            Ok(TreeAction::Nt(l))
        } else if let Some(w) = inner("GEN(") {
            Ok(TreeAction::Gen(w))
        } else {
            Err(bad())
        }
    }
}

/// Depth-first, left-to-right: `NT` on entering a constituent, `GEN` at each
/// leaf, `REDUCE` on leaving.
pub fn linearize(tree: &Tree) -> Vec<TreeAction> {
    let mut out = Vec::new();
    fn go(t: &Tree, out: &mut Vec<TreeAction>) {
        match t {
            Tree::Leaf(w) => out.push(TreeAction::Gen(w.clone())),
            Tree::Node { label, children } => {
                out.push(TreeAction::Nt(label.clone()));
                children.iter().for_each(|c| go(c, out));
                out.push(TreeAction::Reduce);
            }
        }
    }
    go(tree, &mut out);
    out
}

/// Inverse of [`linearize`].
pub fn delinearize(actions: &[TreeAction]) -> Result<Tree, CorpusError> {
    let mut stack: Vec<(String, Vec<Tree>)> = Vec::new();
    let mut done: Option<Tree> = None;
    for (i, a) in actions.iter().enumerate() {
        if done.is_some() {
            return Err(CorpusError::InvalidTree(format!(
                "action {i} ({a}) after the root was closed"
            )));
        }
        match a {
            TreeAction::Nt(l) => stack.push((l.clone(), Vec::new())),
            TreeAction::Gen(w) => stack
                .last_mut()
                .ok_or_else(|| CorpusError::InvalidTree(format!("action {i}: GEN outside a constituent")))?
                .1
                .push(Tree::leaf(w.clone())),
            TreeAction::Reduce => {
                let (label, children) = stack
                    .pop()
                    .ok_or_else(|| CorpusError::InvalidTree(format!("action {i}: REDUCE with nothing open")))?;
                if children.is_empty() {
                    return Err(CorpusError::InvalidTree(format!(
                        "action {i}: REDUCE of empty constituent {label}"
                    )));
                }
                let t = Tree::node(label, children);
                match stack.last_mut() {
                    Some(parent) => parent.1.push(t),
                    None => done = Some(t),
                }
            }
        }
    }
    done.ok_or_else(|| CorpusError::InvalidTree("derivation is incomplete".into()))
}
