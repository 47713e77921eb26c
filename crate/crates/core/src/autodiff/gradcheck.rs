use super::{Gradients, NodeId, ParameterStore, Tape, TensorError};

/// Outcome of a central finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_values: (f64, f64),
    /// Largest `|analytic − numeric|` over all entries.
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// `(f(θ+eps) − f(θ−eps)) / 2eps` over every scalar parameter, using
/// `|analytic − numeric| / max(1e-8, |analytic|)`.
///
/// `loss_fn` must be deterministic; it is evaluated twice up front and any
/// difference is reported as [`TensorError::NonDeterministic`].
pub fn finite_diff_check<F>(loss_fn: F, store: &ParameterStore, eps: f64) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId, TensorError>,
{
    let eval = |s: &ParameterStore| -> Result<f64, TensorError> {
        let mut tape = Tape::new(s);
        let loss = loss_fn(&mut tape)?;
        Ok(tape.value(loss)[0])
    };

    let analytic: Gradients = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        let first = tape.value(loss)[0];
        let again = eval(store)?;
        if first.to_bits() != again.to_bits() {
            return Err(TensorError::NonDeterministic { first, again });
        }
        tape.backward(loss)?
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        max_abs_error: 0.0,
        checked: 0,
    };
    for id in store.ids() {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            probe.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(&probe)?;
            probe.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).data()[k];
            let rel = (a - numeric).abs() / a.abs().max(1e-8);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if report.worst.is_none() || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((store.name(id).to_string(), k));
                report.worst_values = (a, numeric);
            }
        }
    }
    Ok(report)
}
