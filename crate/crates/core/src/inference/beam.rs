use std::cmp::Ordering;

use super::{targets, Expansion, InferenceError, Parse};
use crate::autodiff::{logsumexp, Eager, Tensor};
use crate::error::Result;
use crate::rnng::{Action, ActionKind, ParserState, Rnng};

/// Beam widths: `word_beam` hypotheses survive each word, `action_beam`
/// bound the structural expansion between words, and the best
/// `fast_track` word-generating candidates skip structural pruning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamConfig {
    pub word_beam: usize,
    pub action_beam: usize,
    pub fast_track: usize,
}

impl BeamConfig {
    /// Action beam ten times the word beam, fast-track `ceil(word_beam / 10)`.
    pub fn new(word_beam: usize) -> Self {
        Self::with_action_beam(word_beam, word_beam * 10)
    }

    pub fn with_action_beam(word_beam: usize, action_beam: usize) -> Self {
        Self {
            word_beam,
            action_beam,
            fast_track: word_beam.div_ceil(10),
        }
    }

    /// `fast_track = 0` is accepted and disables fast-tracking.
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.word_beam == 0 || self.action_beam < self.word_beam || self.fast_track > self.word_beam {
            return Err(InferenceError::BadConfig(format!(
                "need action_beam >= word_beam >= fast_track and word_beam >= 1, got {}/{}/{}",
                self.action_beam, self.word_beam, self.fast_track
            )));
        }
        Ok(())
    }
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self::new(10)
    }
}

#[derive(Clone, Debug)]
pub struct BeamItem {
    pub state: ParserState<Tensor>,
    pub logprob: f64,
    pub actions: Vec<Action>,
    /// Creation order; breaks score ties.
    pub serial: u64,
}

/// A scored but not yet materialised successor.
struct Candidate {
    parent: usize,
    action: Action,
    score: f64,
}

fn by_score(a: &Candidate, b: &Candidate, items: &[BeamItem]) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(items[a.parent].serial.cmp(&items[b.parent].serial))
        .then(a.action.cmp(&b.action))
}

fn item_order(a: &BeamItem, b: &BeamItem) -> Ordering {
    b.logprob.total_cmp(&a.logprob).then(a.serial.cmp(&b.serial))
}

struct Search<'m> {
    model: &'m Rnng,
    g: Eager<'m>,
    serial: u64,
}

impl Search<'_> {
    fn materialise(&mut self, parent: &BeamItem, action: Action, score: f64) -> Result<BeamItem> {
        let state = self.model.apply(&mut self.g, &parent.state, action, None)?;
        let mut actions = parent.actions.clone();
        actions.push(action);
        self.serial += 1;
        Ok(BeamItem {
            state,
            logprob: score,
            actions,
            serial: self.serial,
        })
    }

    /// Structural expansion until every surviving hypothesis has generated `word`.
    fn advance(&mut self, words: Vec<BeamItem>, word: usize, cfg: &BeamConfig) -> Result<Vec<BeamItem>> {
        let mut next: Vec<BeamItem> = Vec::new();
        let mut frontier = words;
        while !frontier.is_empty() {
            if next.len() >= cfg.word_beam {
                next.sort_by(item_order);
                let kth = next[cfg.word_beam - 1].logprob;
                let best = frontier.iter().map(|i| i.logprob).fold(f64::NEG_INFINITY, f64::max);
                // descendants only lose probability and get later serials
                if best <= kth {
                    break;
                }
            }
            let mut gens = Vec::new();
            let mut structural = Vec::new();
            for (p, item) in frontier.iter().enumerate() {
                let ex = Expansion::new(self.model, &mut self.g, &item.state)?;
                let base = item.logprob;
                if let Some(s) = ex.score(Action::Gen(word)) {
                    gens.push(Candidate {
                        parent: p,
                        action: Action::Gen(word),
                        score: base + s,
                    });
                }
                for n in 0..ex.num_labels() {
                    if let Some(s) = ex.score(Action::Nt(n)) {
                        structural.push(Candidate {
                            parent: p,
                            action: Action::Nt(n),
                            score: base + s,
                        });
                    }
                }
                if ex.legal(ActionKind::Reduce) {
                    if let Some(s) = ex.score(Action::Reduce) {
                        structural.push(Candidate {
                            parent: p,
                            action: Action::Reduce,
                            score: base + s,
                        });
                    }
                }
            }
            gens.sort_by(|a, b| by_score(a, b, &frontier));
            let fast: Vec<bool> = (0..gens.len()).map(|i| i < cfg.fast_track).collect();

            // pool GEN and structural successors under the action beam
            let mut pooled: Vec<(bool, usize)> = (0..gens.len())
                .map(|i| (true, i))
                .chain((0..structural.len()).map(|i| (false, i)))
                .collect();
            let cand = |&(is_gen, i): &(bool, usize)| if is_gen { &gens[i] } else { &structural[i] };
            pooled.sort_by(|a, b| by_score(cand(a), cand(b), &frontier));
            pooled.truncate(cfg.action_beam);

            let mut keep_gen = fast;
            let mut keep_struct = Vec::new();
            for &(is_gen, i) in &pooled {
                if is_gen {
                    keep_gen[i] = true;
                } else {
                    keep_struct.push(i);
                }
            }
            for (i, c) in gens.iter().enumerate() {
                if keep_gen[i] {
                    next.push(self.materialise(&frontier[c.parent], c.action, c.score)?);
                }
            }
            let mut advanced = Vec::with_capacity(keep_struct.len());
            for i in keep_struct {
                let c = &structural[i];
                advanced.push(self.materialise(&frontier[c.parent], c.action, c.score)?);
            }
            frontier = advanced;
        }
        next.sort_by(item_order);
        next.truncate(cfg.word_beam);
        Ok(next)
    }

    /// Closes the remaining constituents with REDUCE, scored by the action head.
    fn close(&mut self, mut item: BeamItem) -> Result<Option<BeamItem>> {
        while !item.state.is_finished() {
            let ex = Expansion::new(self.model, &mut self.g, &item.state)?;
            let Some(s) = ex.score(Action::Reduce) else {
                return Ok(None);
            };
            let lp = item.logprob + s;
            item = self.materialise(&item, Action::Reduce, lp)?;
        }
        Ok(Some(item))
    }
}

/// Word-synchronous beam search. Returns at most `word_beam` complete parses
/// in descending joint log-probability; the final word is `<eos>` when the
/// model generates it.
pub fn beam_decode(model: &Rnng, sentence: &[usize], cfg: &BeamConfig) -> Result<Vec<Parse>> {
    cfg.validate()?;
    if sentence.is_empty() {
        return Err(InferenceError::EmptySentence.into());
    }
    let targets = targets(model, sentence)?;
    let mut search = Search {
        model,
        g: Eager::new(&model.store),
        serial: 0,
    };
    let initial = model.initial_state(&mut search.g);
    let mut beam = vec![BeamItem {
        state: initial,
        logprob: 0.0,
        actions: Vec::new(),
        serial: 0,
    }];
    for (position, &w) in targets.iter().enumerate() {
        beam = search.advance(beam, w, cfg)?;
        if beam.is_empty() {
            return Err(InferenceError::BeamFailure { position }.into());
        }
    }
    let mut done = Vec::with_capacity(beam.len());
    for item in beam {
        if let Some(item) = search.close(item)? {
            done.push(item);
        }
    }
    if done.is_empty() {
        return Err(InferenceError::BeamFailure {
            position: targets.len(),
        }
        .into());
    }
    done.sort_by(item_order);
    Ok(done
        .into_iter()
        .map(|i| Parse::from_state(model, &i.state, i.logprob, i.actions))
        .collect())
}

/// `log Σ_k t(x, y_k)` over the beam's parses; `-inf` on beam failure.
pub fn marginal_lower_bound(model: &Rnng, sentence: &[usize], cfg: &BeamConfig) -> Result<f64> {
    match beam_decode(model, sentence, cfg) {
        Ok(parses) => {
            let scores: Vec<f64> = parses.iter().map(|p| p.logprob).collect();
            Ok(logsumexp(&scores))
        }
        Err(crate::Error::Inference(e @ InferenceError::BeamFailure { .. })) => {
            log::warn!("{e}; marginal bound is -inf");
            Ok(f64::NEG_INFINITY)
        }
        Err(e) => Err(e),
    }
}
