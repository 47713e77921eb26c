use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Expansion, InferenceError, Parse};
use crate::autodiff::Eager;
use crate::error::Result;
use crate::rnng::{Limits, Rnng};

/// Attempts allowed before sampling gives up.
pub const MAX_RESAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct JointSample {
    /// Terminals without `<eos>`.
    pub sentence: Vec<String>,
    pub parse: Parse,
    /// Draws discarded before this one.
    pub resamples: usize,
}

/// Ancestral sample `(x, y) ~ t(x, y)` seeded by `seed`.
pub fn sample_joint(model: &Rnng, seed: u64, limits: Limits) -> Result<JointSample> {
    sample_joint_with(model, &mut ChaCha8Rng::seed_from_u64(seed), limits)
}

/// Same as [`sample_joint`] but advances a caller-owned generator, for
/// drawing many samples from one stream.
pub fn sample_joint_with(model: &Rnng, rng: &mut ChaCha8Rng, limits: Limits) -> Result<JointSample> {
    let mut g = Eager::new(&model.store);
    for attempt in 0..=MAX_RESAMPLES {
        let mut state = model.initial_state_with(&mut g, limits);
        let mut lp = 0.0;
        let mut actions = Vec::new();
        let mut stuck = false;
        while !state.is_finished() {
            let succ = Expansion::new(model, &mut g, &state)?.all(model.vocab.len());
            if succ.is_empty() {
                stuck = true;
                break;
            }
            let weights: Vec<f64> = succ.iter().map(|(_, s)| s.exp()).collect();
            let pick = WeightedIndex::new(&weights)
                .map_err(|e| crate::Error::module("inference", format!("bad action distribution: {e}")))?
                .sample(rng);
            let (a, s) = succ[pick];
            state = model.apply(&mut g, &state, a, None)?;
            lp += s;
            actions.push(a);
        }
        if stuck {
            log::debug!("sample {attempt} reached a state with no legal action; resampling");
            continue;
        }
        let parse = Parse::from_state(model, &state, lp, actions);
        return Ok(JointSample {
            sentence: parse.tree.sentence(),
            parse,
            resamples: attempt,
        });
    }
    Err(InferenceError::SamplingFailed(MAX_RESAMPLES + 1).into())
}
