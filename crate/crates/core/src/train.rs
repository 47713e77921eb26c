//! Minibatch SGD loop shared by the LSTM LM, the RNNG and distillation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, ParameterStore, Tape, TensorError};
use crate::error::{Error, Result};

/// Global L2 norm at which gradients are clipped before every update.
pub const CLIP_NORM: f64 = 5.0;

/// Optimisation schedule: `lr · decay^(epoch − decay_start)` once past
/// `decay_start`, constant before.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub lr: f64,
    pub decay: f64,
    pub decay_start: usize,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Schedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi(epoch.saturating_sub(self.decay_start) as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss per predicted token.
    pub train_loss: f64,
    /// Validation metric (lower is better), e.g. perplexity.
    pub valid: f64,
    pub lr: f64,
}

pub fn format_log(header: &str, log: &[EpochLog]) -> String {
    let mut out = format!("epoch\ttrain_loss\t{header}\tlr\n");
    for e in log {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\n",
            e.epoch, e.train_loss, e.valid, e.lr
        ));
    }
    out
}

pub trait Trainable: Clone {
    fn store(&self) -> &ParameterStore;
    fn store_mut(&mut self) -> &mut ParameterStore;
}

pub struct Outcome<M> {
    pub best: M,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Runs `sched.epochs` epochs over `n` examples in a freshly shuffled order
/// each epoch and returns the snapshot with the lowest validation metric.
///
/// `loss(model, tape, example, rng)` builds one example's scalar loss and
/// reports how many tokens it covers. Gradients of a batch are summed and
/// scaled by `1 / batch_len`, so the objective is the mean per-example loss.
pub fn run<M, L, V>(
    module: &'static str,
    mut model: M,
    n: usize,
    sched: &Schedule,
    mut loss: L,
    mut validate: V,
) -> Result<Outcome<M>>
where
    M: Trainable,
    L: FnMut(&M, &mut Tape, usize, &mut ChaCha8Rng) -> Result<(NodeId, usize)>,
    V: FnMut(&M) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::module(module, "empty training set"));
    }
    if sched.batch == 0 || sched.epochs == 0 {
        return Err(Error::module(module, "batch size and epochs must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, usize, M)> = None;
    let mut log = Vec::with_capacity(sched.epochs);
    let mut grads = model.store().zero_gradients();
    for epoch in 1..=sched.epochs {
        let lr = sched.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for (b, batch) in order.chunks(sched.batch).enumerate() {
            grads.zero();
            for &ex in batch {
                let mut tape = Tape::new(model.store());
                let nonfinite =
                    |e: TensorError| Error::module(module, format!("epoch {epoch}, batch {b}, example {ex}: {e}"));
                let (l, t) = loss(&model, &mut tape, ex, &mut rng).map_err(|e| match e {
                    Error::Tensor(te) => nonfinite(te),
                    other => other,
                })?;
                let value = tape.value(l)[0];
                if !value.is_finite() {
                    return Err(Error::module(
                        module,
                        format!("non-finite loss at epoch {epoch}, batch {b}"),
                    ));
                }
                total += value;
                tokens += t;
                tape.backward_into(l, &mut grads).map_err(nonfinite)?;
            }
            if !grads.is_finite() {
                return Err(Error::module(
                    module,
                    format!("non-finite gradient at epoch {epoch}, batch {b}"),
                ));
            }
            let store = model.store_mut();
            store.accumulate(&grads);
            store.sgd_update(lr, 1.0 / batch.len() as f64, Some(CLIP_NORM));
        }
        let valid = validate(&model)?;
        let train_loss = total / tokens.max(1) as f64;
        log::info!("{module}: epoch {epoch} train {train_loss:.4} valid {valid:.4} lr {lr:.4}");
        log.push(EpochLog {
            epoch,
            train_loss,
            valid,
            lr,
        });
        if best.as_ref().is_none_or(|(v, _, _)| valid < *v) {
            best = Some((valid, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(Outcome { best, best_epoch, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_starts_after_the_given_epoch() {
        let s = Schedule {
            lr: 0.45,
            decay: 0.9,
            decay_start: 10,
            batch: 20,
            epochs: 40,
            seed: 0,
        };
        assert_eq!(s.lr_at(1), 0.45);
        assert_eq!(s.lr_at(10), 0.45);
        assert!((s.lr_at(11) - 0.405).abs() < 1e-15);
        assert!((s.lr_at(12) - 0.45 * 0.81).abs() < 1e-15);
    }
}
