use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares backward-pass gradients with central finite differences.
///
/// `loss` must be deterministic for a given parameter state: any noise it
/// consumes has to be frozen and rewound on every call. `max_per_param`
/// limits how many entries of each tensor are probed (evenly strided); `None`
/// checks every entry.
pub fn gradient_check<L>(
    store: &ParamStore<f64>,
    eps: f64,
    max_per_param: Option<usize>,
    mut loss: L,
) -> Result<GradCheckReport>
where
    L: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut tape = Tape::new();
    let out = loss(&mut tape, &work)?;
    tape.backward(out, &mut work)?;
    let analytic = work.clone();
    work.zero_grads();

    let mut eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = loss(&mut tape, s)?;
        let value = tape.value(v).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("loss during gradient check".into()));
        }
        Ok(value)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for id in store.ids() {
        let n = store.value(id).len();
        let stride = match max_per_param {
            Some(limit) if limit > 0 && n > limit => n.div_ceil(limit),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let original = work.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = original + eps;
            let plus = eval(&work)?;
            work.value_mut(id).data_mut()[i] = original - eps;
            let minus = eval(&work)?;
            work.value_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.grad(id).data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
