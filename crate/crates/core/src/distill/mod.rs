//! Distillation of an RNNG teacher into an LSTM student.
//!
//! The teacher's next-word distribution at position `j` is read off the
//! word head after forcing the gold action prefix up to `GEN(x_j)`. The
//! student minimises, per position,
//! `α·H(t_j, q) + (1 − α)·(−log q(x_j))`, summed over the sentence and
//! averaged over sentences.

mod cache;
mod teacher;
mod train;

use crate::error::{Error, Result};

pub use cache::{build_cache, corpus_fingerprint, CacheRecord, TeacherCache, CACHE_VERSION};
pub use teacher::{teacher_next_word_dist, teacher_states, word_distribution};
pub use train::{train_distilled, DistillConfig, Teacher, TeacherKind};

const MODULE: &str = "distill";

/// Tolerance on the normalisation of distributions handed to the losses.
pub const NORM_TOLERANCE: f64 = 1e-8;

fn check_inputs(t: &[f64], log_q: &[f64]) -> Result<()> {
    if t.len() != log_q.len() || t.is_empty() {
        return Err(Error::module(
            MODULE,
            format!("teacher has {} entries, student {}", t.len(), log_q.len()),
        ));
    }
    if t.iter().any(|&p| p.is_nan() || p < 0.0) {
        return Err(Error::module(MODULE, "teacher distribution has negative or NaN mass"));
    }
    let st: f64 = t.iter().sum();
    if (st - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::module(MODULE, format!("teacher distribution sums to {st}")));
    }
    let sq: f64 = log_q.iter().map(|l| l.exp()).sum();
    if (sq - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::module(MODULE, format!("student distribution sums to {sq}")));
    }
    Ok(())
}

/// Cross-entropy `H(t, q) = −Σ_w t(w)·log q(w)`.
pub fn kd_term(t: &[f64], log_q: &[f64]) -> Result<f64> {
    check_inputs(t, log_q)?;
    Ok(-t
        .iter()
        .zip(log_q)
        .map(|(p, l)| if *p == 0.0 { 0.0 } else { p * l })
        .sum::<f64>())
}

/// `α·H(t, q) + (1 − α)·(−log q(target))`.
pub fn interpolated_loss(alpha: f64, t: &[f64], log_q: &[f64], target: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::module(MODULE, format!("α = {alpha} is outside [0, 1]")));
    }
    let kd = kd_term(t, log_q)?;
    let nll = -*log_q
        .get(target)
        .ok_or_else(|| Error::module(MODULE, format!("target {target} out of range")))?;
    if alpha == 0.0 {
        return Ok(nll);
    }
    Ok(alpha * kd + (1.0 - alpha) * nll)
}

/// `α·t + (1 − α)·onehot(target)`: the distribution the interpolated loss
/// is the cross-entropy against.
pub fn mixed_target(alpha: f64, t: &[f64], target: usize) -> Vec<f64> {
    t.iter()
        .enumerate()
        .map(|(w, p)| alpha * p + if w == target { 1.0 - alpha } else { 0.0 })
        .collect()
}

/// Shannon entropy in nats.
pub fn entropy(t: &[f64]) -> f64 {
    -t.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `KL(t ‖ q)` with `q` given as log-probabilities.
pub fn kl_divergence(t: &[f64], log_q: &[f64]) -> f64 {
    t.iter()
        .zip(log_q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| p * (p.ln() - l))
        .sum()
}

#[cfg(test)]
mod tests;
