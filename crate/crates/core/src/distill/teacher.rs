use super::MODULE;
use crate::autodiff::{softmax, Eager, Tensor};
use crate::corpus::Tree;
use crate::error::{Error, Result};
use crate::rnng::{Action, Rnng};

/// Teacher summaries `h` just before each `GEN` of the gold derivation:
/// `len + 1` vectors when the teacher generates `<eos>`, `len` otherwise.
pub fn teacher_states<S: AsRef<str>>(teacher: &Rnng, sentence: &[S], tree: &Tree) -> Result<Vec<Vec<f64>>> {
    let leaves = tree.leaves();
    if leaves.len() != sentence.len() || leaves.iter().zip(sentence).any(|(a, b)| *a != b.as_ref()) {
        return Err(Error::module(MODULE, "sentence does not match the leaves of its tree"));
    }
    let actions = teacher.actions_of(&teacher.prepare_tree(tree))?;
    let mut g = Eager::new(&teacher.store);
    let mut state = teacher.initial_state(&mut g);
    let mut out = Vec::with_capacity(sentence.len() + 1);
    for (i, &a) in actions.iter().enumerate() {
        if let Action::Gen(_) = a {
            out.push(teacher.summary(&mut g, &state, None)?.into_data());
        }
        state = teacher
            .apply(&mut g, &state, a, None)
            .map_err(|e| Error::module(MODULE, format!("forcing action {i} ({a}) failed: {e}")))?;
    }
    Ok(out)
}

/// `softmax(W_x·h + b_x)` evaluated directly from flat copies of the word head.
pub fn word_distribution(w: &Tensor, b: &Tensor, h: &[f64]) -> Result<Vec<f64>> {
    if w.shape() != [b.len(), h.len()] {
        return Err(Error::module(
            MODULE,
            format!(
                "word head {:?} does not fit bias {} and state {}",
                w.shape(),
                b.len(),
                h.len()
            ),
        ));
    }
    let logits: Vec<f64> = (0..b.len())
        .map(|r| b.data()[r] + w.row(r).iter().zip(h).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    Ok(softmax(&logits))
}

/// `t(· | x_<j, y_<j)` for 1-based `j`, `j = len + 1` being the `<eos>` position.
pub fn teacher_next_word_dist<S: AsRef<str>>(
    teacher: &Rnng,
    sentence: &[S],
    tree: &Tree,
    j: usize,
) -> Result<Vec<f64>> {
    let limit = sentence.len() + usize::from(teacher.eos().is_some());
    if j == 0 || j > limit {
        return Err(Error::module(MODULE, format!("position {j} outside 1..={limit}")));
    }
    let leaves = tree.leaves();
    if leaves.len() != sentence.len() || leaves.iter().zip(sentence).any(|(a, b)| *a != b.as_ref()) {
        return Err(Error::module(MODULE, "sentence does not match the leaves of its tree"));
    }
    let actions = teacher.actions_of(&teacher.prepare_tree(tree))?;
    let mut g = Eager::new(&teacher.store);
    let mut state = teacher.initial_state(&mut g);
    let mut gens = 0;
    for (i, &a) in actions.iter().enumerate() {
        if let Action::Gen(_) = a {
            gens += 1;
            if gens == j {
                let h = teacher.summary(&mut g, &state, None)?;
                let lp = teacher.word_logprobs(&mut g, &h)?;
                return Ok(lp.data().iter().map(|l| l.exp()).collect());
            }
        }
        state = teacher
            .apply(&mut g, &state, a, None)
            .map_err(|e| Error::module(MODULE, format!("forcing action {i} ({a}) failed: {e}")))?;
    }
    unreachable!("position checked against the number of terminals")
}
