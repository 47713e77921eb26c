use super::{targets, Expansion, InferenceError};
use crate::autodiff::{logsumexp, Eager, Tensor};
use crate::error::Result;
use crate::rnng::{Action, Limits, ParserState, Rnng};

/// Largest number of complete derivations an exhaustive search may visit.
pub const EXACT_BUDGET: usize = 1_000_000;

struct Dfs<'m, F> {
    model: &'m Rnng,
    g: Eager<'m>,
    targets: Option<Vec<usize>>,
    budget: usize,
    count: usize,
    path: Vec<Action>,
    visit: F,
}

impl<F: FnMut(&[Action], f64)> Dfs<'_, F> {
    fn go(&mut self, state: &ParserState<Tensor>, lp: f64) -> Result<()> {
        if state.is_finished() {
            if self.targets.as_ref().is_none_or(|t| t.len() == state.emitted()) {
                self.count += 1;
                if self.count > self.budget {
                    return Err(InferenceError::BudgetExceeded {
                        count: self.count,
                        budget: self.budget,
                    }
                    .into());
                }
                (self.visit)(&self.path, lp);
            }
            return Ok(());
        }
        let ex = Expansion::new(self.model, &mut self.g, state)?;
        let successors: Vec<(Action, f64)> = match &self.targets {
            None => ex.all(self.model.vocab.len()),
            Some(t) => {
                let pos = state.emitted();
                let mut out = Vec::new();
                if pos < t.len() {
                    for n in 0..ex.num_labels() {
                        out.extend(ex.score(Action::Nt(n)).map(|s| (Action::Nt(n), s)));
                    }
                    out.extend(ex.score(Action::Gen(t[pos])).map(|s| (Action::Gen(t[pos]), s)));
                }
                out.extend(ex.score(Action::Reduce).map(|s| (Action::Reduce, s)));
                out
            }
        };
        for (a, s) in successors {
            let next = self.model.apply(&mut self.g, state, a, None)?;
            self.path.push(a);
            let r = self.go(&next, lp + s);
            self.path.pop();
            r?;
        }
        Ok(())
    }
}

fn run<F: FnMut(&[Action], f64)>(
    model: &Rnng,
    limits: Limits,
    targets: Option<Vec<usize>>,
    budget: usize,
    visit: F,
) -> Result<usize> {
    let mut dfs = Dfs {
        model,
        g: Eager::new(&model.store),
        targets,
        budget,
        count: 0,
        path: Vec::new(),
        visit,
    };
    let init = model.initial_state_with(&mut dfs.g, limits);
    dfs.go(&init, 0.0)?;
    Ok(dfs.count)
}

/// Every complete derivation under `limits` with its joint log-probability,
/// in depth-first order.
pub fn enumerate_derivations(model: &Rnng, limits: Limits, budget: usize) -> Result<Vec<(Vec<Action>, f64)>> {
    let mut out = Vec::new();
    run(model, limits, None, budget, |path, lp| out.push((path.to_vec(), lp)))?;
    Ok(out)
}

/// `log Σ_y t(x, y)` by exhaustive enumeration; `-inf` when no derivation
/// under `limits` yields `sentence`.
pub fn exact_marginal(model: &Rnng, sentence: &[usize], limits: Limits) -> Result<f64> {
    let mut scores = Vec::new();
    run(model, limits, Some(targets(model, sentence)?), EXACT_BUDGET, |_, lp| {
        scores.push(lp)
    })?;
    Ok(if scores.is_empty() {
        f64::NEG_INFINITY
    } else {
        logsumexp(&scores)
    })
}
