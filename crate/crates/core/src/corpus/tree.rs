use std::fmt;

use super::CorpusError;

/// Phrase-structure tree: nonterminal-labelled internal nodes over terminal leaves.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Tree {
    Node { label: String, children: Vec<Tree> },
    Leaf(String),
}

impl Tree {
    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Self {
        Tree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn leaf(word: impl Into<String>) -> Self {
        Tree::Leaf(word.into())
    }

    pub fn label(&self) -> &str {
        match self {
            Tree::Node { label, .. } => label,
            Tree::Leaf(w) => w,
        }
    }

    pub fn children(&self) -> &[Tree] {
        match self {
            Tree::Node { children, .. } => children,
            Tree::Leaf(_) => &[],
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf(_))
    }

    /// Left-to-right terminal sequence.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Tree::Leaf(w) => out.push(w),
            Tree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn sentence(&self) -> Vec<String> {
        self.leaves().into_iter().map(str::to_string).collect()
    }

    /// Checks the structural invariants: nonterminal root, no empty constituents.
    pub fn validate(&self) -> Result<(), CorpusError> {
        match self {
            Tree::Leaf(w) => Err(CorpusError::InvalidTree(format!(
                "root must be a nonterminal, found terminal {w:?}"
            ))),
            Tree::Node { .. } => self.validate_inner(),
        }
    }

    fn validate_inner(&self) -> Result<(), CorpusError> {
        if let Tree::Node { label, children } = self {
            if children.is_empty() {
                return Err(CorpusError::InvalidTree(format!(
                    "constituent {label:?} has no children"
                )));
            }
            children.iter().try_for_each(Tree::validate_inner)?;
        }
        Ok(())
    }

    /// Same tree with `eos` appended as the final child of the root.
    pub fn with_eos(&self, eos: &str) -> Tree {
        match self {
            Tree::Node { label, children } => {
                let mut children = children.clone();
                children.push(Tree::leaf(eos));
                Tree::node(label.clone(), children)
            }
            Tree::Leaf(_) => self.clone(),
        }
    }

    /// Removes every leaf equal to `word`, dropping constituents left empty.
    /// `None` when nothing remains.
    pub fn strip_leaf(&self, word: &str) -> Option<Tree> {
        match self {
            Tree::Leaf(w) => (w != word).then(|| self.clone()),
            Tree::Node { label, children } => {
                let kept: Vec<Tree> = children.iter().filter_map(|c| c.strip_leaf(word)).collect();
                (!kept.is_empty()).then(|| Tree::node(label.clone(), kept))
            }
        }
    }

    /// Number of nonterminal nodes.
    pub fn num_nonterminals(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Node { children, .. } => 1 + children.iter().map(Tree::num_nonterminals).sum::<usize>(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Node { children, .. } => 1 + children.iter().map(Tree::depth).max().unwrap_or(0),
        }
    }

    /// Removes preterminal layers (a nonterminal whose only child is a leaf
    /// and which itself has a parent).
    pub fn strip_preterminals(&self) -> Tree {
        fn strip(t: &Tree) -> Tree {
            match t {
                Tree::Leaf(_) => t.clone(),
                Tree::Node { label, children } => Tree::node(
                    label.clone(),
                    children
                        .iter()
                        .map(|c| match c {
                            Tree::Node { children: cc, .. } if cc.len() == 1 && cc[0].is_leaf() => cc[0].clone(),
                            other => strip(other),
                        })
                        .collect(),
                ),
            }
        }
        strip(self)
    }
}

impl fmt::Display for Tree {
    /// Canonical bracketed form: single spaces, no padding inside brackets.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf(w) => f.write_str(w),
            Tree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub fn print_bracketed(tree: &Tree) -> String {
    tree.to_string()
}

/// Parses one bracketed tree such as `(S (NP the hawk) (VP flies))`.
///
/// Error offsets are 1-based character positions; an unexpected end of
/// input is reported one past the last character.
pub fn parse_bracketed(text: &str) -> Result<Tree, CorpusError> {
    let chars: Vec<char> = text.chars().collect();
    let mut p = Parser { chars, pos: 0 };
    p.skip_ws();
    let tree = p.tree()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.err("trailing input after the root constituent"));
    }
    Ok(tree)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn err(&self, msg: &str) -> CorpusError {
        CorpusError::Parse {
            offset: self.pos + 1,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn tree(&mut self) -> Result<Tree, CorpusError> {
        if self.pos >= self.chars.len() {
            return Err(self.err("unexpected end of input, expected '('"));
        }
        if self.chars[self.pos] != '(' {
            return Err(self.err("expected '('"));
        }
        self.pos += 1;
        let label = self.token();
        if label.is_empty() {
            return Err(self.err("missing constituent label"));
        }
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.chars.get(self.pos) {
                None => return Err(self.err("unbalanced brackets: missing ')'")),
                Some(')') => {
                    if children.is_empty() {
                        return Err(self.err(&format!("empty constituent ({label})")));
                    }
                    self.pos += 1;
                    return Ok(Tree::node(label, children));
                }
                Some('(') => children.push(self.tree()?),
                Some(_) => {
                    let word = self.token();
                    if self.chars.get(self.pos) == Some(&'(') {
                        return Err(self.err(&format!("terminal {word:?} cannot have children")));
                    }
                    children.push(Tree::leaf(word));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_leaves() {
        let t = parse_bracketed("(S (NP a) (VP b))").unwrap();
        assert_eq!(t.leaves(), vec!["a", "b"]);
        assert_eq!(t.to_string(), "(S (NP a) (VP b))");
    }

    #[test]
    fn unbalanced_reports_offset() {
        let err = parse_bracketed("(S (NP a) (VP b)").unwrap_err();
        assert_eq!(
            err,
            CorpusError::Parse {
                offset: 17,
                message: "unbalanced brackets: missing ')'".into()
            }
        );
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(matches!(
            parse_bracketed("(S (NP) b)"),
            Err(CorpusError::Parse { offset: 7, .. })
        ));
        assert!(parse_bracketed("(S a))").is_err());
        assert!(parse_bracketed("(S hawk(NP a))").is_err());
        assert!(parse_bracketed("((S a))").is_err());
        assert!(parse_bracketed("a").is_err());
        assert!(parse_bracketed("").is_err());
    }

    #[test]
    fn whitespace_is_canonicalised() {
        let t = parse_bracketed("  (S\n (NP   the hawk )\t(VP flies) ) ").unwrap();
        assert_eq!(t.to_string(), "(S (NP the hawk) (VP flies))");
    }

    #[test]
    fn strips_preterminals() {
        let t = parse_bracketed("(S (NP (D the) (N hawk)) (VP (V flies)))").unwrap();
        assert_eq!(t.strip_preterminals().to_string(), "(S (NP the hawk) (VP flies))");
    }
}
