//! Forward kernels shared by the eager evaluator and the tape, so that both
//! produce bit-identical values.

use super::tensor::sigmoid;

pub(crate) fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    m.chunks_exact(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub(crate) fn affine(w: &[f64], rows: usize, cols: usize, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = matvec(w, rows, cols, x);
    for (o, bi) in out.iter_mut().zip(b) {
        *o += bi;
    }
    out
}

pub(crate) fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn sigmoid_vec(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&x| sigmoid(x)).collect()
}

pub(crate) fn tanh_vec(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&x| x.tanh()).collect()
}

pub(crate) fn log_softmax(a: &[f64]) -> Vec<f64> {
    super::tensor::log_softmax(a)
}

pub(crate) fn weighted_sum(a: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(w).map(|(x, y)| x * y).sum()
}

pub(crate) fn sum(a: &[f64]) -> f64 {
    a.iter().sum()
}
