use std::collections::BTreeMap;
use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::state::{Cell, Elem, IdTree};
use super::{Action, ActionKind, Limits, ParserState, RnngError};
use crate::autodiff::{Eager, Graph, NodeId, ParamId, ParameterStore, Tape};
use crate::checkpoint::Checkpoint;
use crate::corpus::{linearize, Tree, TreeAction, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{DropoutMasks, LstmLayer, StackedLstm, INIT_SCALE};
use crate::train::{self, Outcome, Schedule, Trainable};

const MODULE: &str = "rnng";

#[derive(Clone, Debug, PartialEq)]
pub struct RnngConfig {
    /// Stack-encoder hidden size M.
    pub hidden: usize,
    /// Word, nonterminal and composed-constituent dimension.
    pub embed: usize,
    pub layers: usize,
    pub lr: f64,
    pub decay: f64,
    pub decay_start: usize,
    pub dropout: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub limits: Limits,
    /// Require every derivation to end in `<eos>` before the root closes.
    pub eos: bool,
}

impl Default for RnngConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            embed: 128,
            layers: 2,
            lr: 0.3,
            decay: 0.92,
            decay_start: 10,
            dropout: 0.3,
            batch: 10,
            epochs: 40,
            seed: 1,
            limits: Limits::default(),
            eos: true,
        }
    }
}

impl RnngConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::module(MODULE, m.to_string()));
        if self.hidden == 0 || self.embed == 0 || self.layers == 0 {
            return bad("sizes must be positive");
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("learning rate and decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if self.limits.max_open == 0 || self.limits.max_len == 0 {
            return bad("limits must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            lr: self.lr,
            decay: self.decay,
            decay_start: self.decay_start,
            batch: self.batch,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

/// Generative RNNG with a stack-only state summary.
#[derive(Clone, Debug)]
pub struct Rnng {
    pub store: ParameterStore,
    pub vocab: Vocabulary,
    pub labels: Vec<String>,
    pub config: RnngConfig,
    word_emb: ParamId,
    nt_emb: ParamId,
    stack: StackedLstm,
    comp_fwd: LstmLayer,
    comp_bwd: LstmLayer,
    comp_w: ParamId,
    comp_b: ParamId,
    act_w: ParamId,
    act_b: ParamId,
    word_w: ParamId,
    word_b: ParamId,
    nt_w: ParamId,
    nt_b: ParamId,
}

impl Trainable for Rnng {
    fn store(&self) -> &ParameterStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }
}

/// Log-probability of one action at a state, split into its parts.
pub struct StepScores<V> {
    pub h: V,
    pub legal: Vec<ActionKind>,
    /// Log-probabilities over `legal`, `None` when only one kind is legal.
    pub kinds: Option<V>,
}

impl Rnng {
    pub fn new(vocab: Vocabulary, labels: Vec<String>, config: RnngConfig) -> Result<Self> {
        config.validate()?;
        if labels.is_empty() {
            return Err(Error::module(MODULE, "no nonterminal labels"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (v, n, e, m) = (vocab.len(), labels.len(), config.embed, config.hidden);
        let mut s = ParameterStore::new();
        let word_emb = s.add_uniform("rnng.word_emb", vec![v, e], INIT_SCALE, &mut rng)?;
        let nt_emb = s.add_uniform("rnng.nt_emb", vec![n, e], INIT_SCALE, &mut rng)?;
        let stack = StackedLstm::new(&mut s, "rnng.stack", e, m, config.layers, &mut rng)?;
        let comp_fwd = LstmLayer::new(&mut s, "rnng.comp.fwd", e, e, &mut rng)?;
        let comp_bwd = LstmLayer::new(&mut s, "rnng.comp.bwd", e, e, &mut rng)?;
        let comp_w = s.add_uniform("rnng.comp.w", vec![e, 2 * e], INIT_SCALE, &mut rng)?;
        let comp_b = s.add_uniform("rnng.comp.b", vec![e], INIT_SCALE, &mut rng)?;
        let act_w = s.add_uniform("rnng.act.w", vec![3, m], INIT_SCALE, &mut rng)?;
        let act_b = s.add_uniform("rnng.act.b", vec![3], INIT_SCALE, &mut rng)?;
        let word_w = s.add_uniform("rnng.word.w", vec![v, m], INIT_SCALE, &mut rng)?;
        let word_b = s.add_uniform("rnng.word.b", vec![v], INIT_SCALE, &mut rng)?;
        let nt_w = s.add_uniform("rnng.nt.w", vec![n, m], INIT_SCALE, &mut rng)?;
        let nt_b = s.add_uniform("rnng.nt.b", vec![n], INIT_SCALE, &mut rng)?;
        Ok(Self {
            store: s,
            vocab,
            labels,
            config,
            word_emb,
            nt_emb,
            stack,
            comp_fwd,
            comp_bwd,
            comp_w,
            comp_b,
            act_w,
            act_b,
            word_w,
            word_b,
            nt_w,
            nt_b,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn word_projection(&self) -> (ParamId, ParamId) {
        (self.word_w, self.word_b)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn eos(&self) -> Option<usize> {
        self.config.eos.then(|| self.vocab.eos())
    }

    pub fn initial_state<G: Graph>(&self, g: &mut G) -> ParserState<G::Var> {
        self.initial_state_with(g, self.config.limits)
    }

    /// Initial state under limits other than the configured ones.
    pub fn initial_state_with<G: Graph>(&self, g: &mut G, limits: Limits) -> ParserState<G::Var> {
        ParserState::initial(self.stack.zero_state(g), self.eos(), limits)
    }

    pub fn sample_masks(&self, rng: &mut ChaCha8Rng) -> Option<DropoutMasks> {
        (self.config.dropout > 0.0).then(|| self.stack.sample_masks(self.config.dropout, rng))
    }

    /// Stack summary h_t for a state.
    pub fn summary<G: Graph>(
        &self,
        g: &mut G,
        state: &ParserState<G::Var>,
        masks: Option<&DropoutMasks>,
    ) -> Result<G::Var> {
        Ok(self.stack.output(g, state.encoding(), masks)?)
    }

    /// Action-kind scores at a state, renormalised over the legal kinds.
    pub fn step_scores<G: Graph>(
        &self,
        g: &mut G,
        state: &ParserState<G::Var>,
        masks: Option<&DropoutMasks>,
    ) -> Result<StepScores<G::Var>> {
        let legal = state.legal_actions()?;
        let h = self.summary(g, state, masks)?;
        let kinds = if legal.len() > 1 {
            let logits = g.affine(self.act_w, self.act_b, &h)?;
            let idx: Vec<usize> = legal.iter().map(|&k| k as usize).collect();
            let sub = g.gather(&logits, &idx)?;
            Some(g.log_softmax(&sub)?)
        } else {
            None
        };
        Ok(StepScores { h, legal, kinds })
    }

    pub fn word_logprobs<G: Graph>(&self, g: &mut G, h: &G::Var) -> Result<G::Var> {
        let logits = g.affine(self.word_w, self.word_b, h)?;
        Ok(g.log_softmax(&logits)?)
    }

    pub fn nt_logprobs<G: Graph>(&self, g: &mut G, h: &G::Var) -> Result<G::Var> {
        let logits = g.affine(self.nt_w, self.nt_b, h)?;
        Ok(g.log_softmax(&logits)?)
    }

    /// Bidirectional composition of a completed constituent.
    pub fn compose<G: Graph>(&self, g: &mut G, nt: usize, children: &[G::Var]) -> Result<G::Var> {
        if children.is_empty() {
            return Err(RnngError::EmptyComposition.into());
        }
        let e = g.lookup(self.nt_emb, nt)?;
        let mut f = self.comp_fwd.zero_state(g);
        f = self.comp_fwd.step(g, &e, &f)?;
        for c in children {
            f = self.comp_fwd.step(g, c, &f)?;
        }
        let mut b = self.comp_bwd.zero_state(g);
        b = self.comp_bwd.step(g, &e, &b)?;
        for c in children.iter().rev() {
            b = self.comp_bwd.step(g, c, &b)?;
        }
        let both = g.concat(&[f.h, b.h])?;
        let z = g.affine(self.comp_w, self.comp_b, &both)?;
        Ok(g.tanh(&z)?)
    }

    fn push<G: Graph>(
        &self,
        g: &mut G,
        below: Option<Rc<Cell<G::Var>>>,
        base: &[crate::nn::LstmState<G::Var>],
        elem: Elem<G::Var>,
        x: G::Var,
        masks: Option<&DropoutMasks>,
    ) -> Result<Rc<Cell<G::Var>>> {
        let prev: &[crate::nn::LstmState<G::Var>] = match &below {
            Some(c) => &c.enc,
            None => base,
        };
        let enc = self.stack.step(g, &x, prev, masks)?;
        Ok(Rc::new(Cell {
            elem,
            enc: enc.into(),
            below,
        }))
    }

    /// Applies a legal action, updating the stack encoder incrementally.
    pub fn apply<G: Graph>(
        &self,
        g: &mut G,
        state: &ParserState<G::Var>,
        action: Action,
        masks: Option<&DropoutMasks>,
    ) -> Result<ParserState<G::Var>> {
        state.check(action)?;
        let top = match action {
            Action::Nt(n) => {
                if n >= self.labels.len() {
                    return Err(RnngError::UnknownLabel(n.to_string()).into());
                }
                let x = g.lookup(self.nt_emb, n)?;
                self.push(g, state.top.clone(), &state.base, Elem::Open(n), x, masks)?
            }
            Action::Gen(w) => {
                let x = g.lookup(self.word_emb, w)?;
                let elem = Elem::Done {
                    repr: x.clone(),
                    tree: Rc::new(IdTree::Leaf(w)),
                };
                self.push(g, state.top.clone(), &state.base, elem, x, masks)?
            }
            Action::Reduce => {
                let mut reprs = Vec::new();
                let mut trees = Vec::new();
                let mut cur = state.top.clone();
                let (nt, below) = loop {
                    let cell = cur.expect("open count guarantees an open marker");
                    match &cell.elem {
                        Elem::Done { repr, tree } => {
                            reprs.push(repr.clone());
                            trees.push(tree.clone());
                            cur = cell.below.clone();
                        }
                        Elem::Open(n) => break (*n, cell.below.clone()),
                    }
                };
                reprs.reverse();
                trees.reverse();
                let composed = self.compose(g, nt, &reprs)?;
                let elem = Elem::Done {
                    repr: composed.clone(),
                    tree: Rc::new(IdTree::Node(nt, trees)),
                };
                self.push(g, below, &state.base, elem, composed, masks)?
            }
        };
        Ok(state.advance(action, top))
    }

    /// Log-probability terms of one action at `state`.
    fn action_terms<G: Graph>(
        &self,
        g: &mut G,
        state: &ParserState<G::Var>,
        action: Action,
        masks: Option<&DropoutMasks>,
        terms: &mut Vec<G::Var>,
    ) -> Result<()> {
        let scores = self.step_scores(g, state, masks)?;
        let pos = scores
            .legal
            .iter()
            .position(|&k| k == action.kind())
            .ok_or_else(|| RnngError::Illegal {
                action: action.to_string(),
                reason: state.violation(action.kind()).unwrap_or("illegal"),
            })?;
        if let Some(kinds) = &scores.kinds {
            terms.push(g.pick(kinds, pos)?);
        }
        match action {
            Action::Nt(n) => {
                let lp = self.nt_logprobs(g, &scores.h)?;
                terms.push(g.pick(&lp, n)?);
            }
            Action::Gen(w) if state.forced_word().is_none() => {
                let lp = self.word_logprobs(g, &scores.h)?;
                terms.push(g.pick(&lp, w)?);
            }
            _ => {}
        }
        Ok(())
    }

    /// `log t(x, y)` of a complete derivation, as a scalar graph node.
    pub fn derivation_logprob<G: Graph>(
        &self,
        g: &mut G,
        actions: &[Action],
        masks: Option<&DropoutMasks>,
    ) -> Result<G::Var> {
        let mut state = self.initial_state(g);
        let mut terms = Vec::with_capacity(2 * actions.len());
        for &a in actions {
            self.action_terms(g, &state, a, masks, &mut terms)?;
            state = self.apply(g, &state, a, masks)?;
        }
        if !state.is_finished() {
            return Err(RnngError::Incomplete.into());
        }
        if terms.is_empty() {
            return Ok(g.constant(crate::autodiff::Tensor::scalar(0.0)));
        }
        let all = g.concat(&terms)?;
        Ok(g.sum(&all)?)
    }

    /// Id-level actions of a tree. The tree must already carry `<eos>` when
    /// the model requires it.
    pub fn actions_of(&self, tree: &Tree) -> Result<Vec<Action>> {
        linearize(tree)
            .into_iter()
            .map(|a| match a {
                TreeAction::Nt(l) => self
                    .label_id(&l)
                    .map(Action::Nt)
                    .ok_or_else(|| RnngError::UnknownLabel(l).into()),
                TreeAction::Gen(w) => Ok(Action::Gen(self.vocab.encode(&w))),
                TreeAction::Reduce => Ok(Action::Reduce),
            })
            .collect()
    }

    /// Adds `<eos>` as the last child of the root when the model uses it.
    pub fn prepare_tree(&self, tree: &Tree) -> Tree {
        if self.config.eos {
            tree.with_eos(self.vocab.word(self.vocab.eos()))
        } else {
            tree.clone()
        }
    }

    /// `log t(x, y)`; `x` is checked against the leaves of `y`.
    pub fn joint_logprob<S: AsRef<str>>(&self, sentence: &[S], tree: &Tree) -> Result<f64> {
        let leaves = tree.leaves();
        if leaves.len() != sentence.len() || leaves.iter().zip(sentence).any(|(a, b)| *a != b.as_ref()) {
            return Err(RnngError::LeafMismatch.into());
        }
        let actions = self.actions_of(&self.prepare_tree(tree))?;
        let mut g = Eager::new(&self.store);
        let lp = self.derivation_logprob(&mut g, &actions, None)?;
        Ok(lp.data()[0])
    }

    /// Negative log-probability of a derivation on a tape (training loss).
    pub fn derivation_loss(&self, tape: &mut Tape, actions: &[Action], masks: Option<&DropoutMasks>) -> Result<NodeId> {
        let lp = self.derivation_logprob(tape, actions, masks)?;
        Ok(tape.scale(&lp, -1.0)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut hyper: BTreeMap<String, String> = [
            ("model", "rnng".to_string()),
            ("hidden", c.hidden.to_string()),
            ("embed", c.embed.to_string()),
            ("layers", c.layers.to_string()),
            ("lr", c.lr.to_string()),
            ("decay", c.decay.to_string()),
            ("decay_start", c.decay_start.to_string()),
            ("dropout", c.dropout.to_string()),
            ("batch", c.batch.to_string()),
            ("epochs", c.epochs.to_string()),
            ("max_open", c.limits.max_open.to_string()),
            ("max_len", c.limits.max_len.to_string()),
            ("eos", c.eos.to_string()),
            ("labels", self.labels.join(" ")),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        hyper.insert("vocab".into(), self.vocab.to_tsv());
        Checkpoint::from_store(&self.store, c.seed, hyper, &self.vocab.content_hash())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.hyper("model")? != "rnng" {
            return Err(Error::module(MODULE, "checkpoint does not hold an RNNG"));
        }
        let vocab = Vocabulary::from_tsv(ck.hyper("vocab")?)?;
        ck.require_vocab(&vocab.content_hash())?;
        let config = RnngConfig {
            hidden: ck.hyper_parse("hidden")?,
            embed: ck.hyper_parse("embed")?,
            layers: ck.hyper_parse("layers")?,
            lr: ck.hyper_parse("lr")?,
            decay: ck.hyper_parse("decay")?,
            decay_start: ck.hyper_parse("decay_start")?,
            dropout: ck.hyper_parse("dropout")?,
            batch: ck.hyper_parse("batch")?,
            epochs: ck.hyper_parse("epochs")?,
            seed: ck.seed,
            limits: Limits {
                max_open: ck.hyper_parse("max_open")?,
                max_len: ck.hyper_parse("max_len")?,
            },
            eos: ck.hyper_parse("eos")?,
        };
        let labels = ck.hyper("labels")?.split(' ').map(str::to_string).collect();
        let mut model = Self::new(vocab, labels, config)?;
        model.store.load_named(&ck.tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Sorted distinct nonterminal labels of a treebank.
pub fn collect_labels(trees: &[Tree]) -> Vec<String> {
    fn go(t: &Tree, out: &mut std::collections::BTreeSet<String>) {
        if let Tree::Node { label, children } = t {
            out.insert(label.clone());
            children.iter().for_each(|c| go(c, out));
        }
    }
    let mut set = std::collections::BTreeSet::new();
    trees.iter().for_each(|t| go(t, &mut set));
    set.into_iter().collect()
}

/// Mean `−log t(x, y)` per tree.
pub fn mean_nll(model: &Rnng, derivations: &[Vec<Action>]) -> Result<f64> {
    if derivations.is_empty() {
        return Err(Error::module(MODULE, "empty treebank"));
    }
    let mut total = 0.0;
    for d in derivations {
        let mut g = Eager::new(&model.store);
        total -= model.derivation_logprob(&mut g, d, None)?.data()[0];
    }
    Ok(total / derivations.len() as f64)
}

/// Trains on a treebank (trees without `<eos>`; it is added here) and returns
/// the snapshot with the lowest mean validation joint NLL.
pub fn train_rnng(
    config: &RnngConfig,
    vocab: &Vocabulary,
    labels: Vec<String>,
    train: &[Tree],
    valid: &[Tree],
) -> Result<Outcome<Rnng>> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::module(
            MODULE,
            "training and validation treebanks must be non-empty",
        ));
    }
    let model = Rnng::new(vocab.clone(), labels, config.clone())?;
    let encode = |trees: &[Tree]| -> Result<Vec<Vec<Action>>> {
        trees
            .iter()
            .map(|t| {
                t.validate()?;
                model.actions_of(&model.prepare_tree(t))
            })
            .collect()
    };
    let train_d = encode(train)?;
    let valid_d = encode(valid)?;
    train::run(
        MODULE,
        model,
        train_d.len(),
        &config.schedule(),
        |m, tape, i, rng| {
            let masks = m.sample_masks(rng);
            let loss = m.derivation_loss(tape, &train_d[i], masks.as_ref())?;
            Ok((loss, train_d[i].len()))
        },
        |m| mean_nll(m, &valid_d),
    )
}
