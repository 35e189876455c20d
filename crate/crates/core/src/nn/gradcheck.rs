//! Central finite-difference gradient checking with the fourth-order
//! five-point stencil: truncation error O(h⁴) allows a step large enough to
//! keep round-off small.
//!
//! Only forward evaluations are used, so the check is independent of the
//! backward pass it validates.

use crate::nn::params::ParameterStore;
use crate::nn::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst relative error.
    pub worst: Option<(String, usize)>,
}

/// |a − b| / max(|a|, |b|, floor).
///
/// Round-off in a central difference grows with the loss magnitude, so the
/// floor for (near-)zero gradients is 1e-6 · max(1, |loss|).
pub fn rel_err(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = 1e-6 * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare backward-pass gradients of the scalar built by `build` against
/// five-point central differences with step `h`, for every scalar of every parameter.
pub fn check_gradients<F>(store: &mut ParameterStore, build: F, h: f64) -> GradCheckReport
where
    F: Fn(&ParameterStore, &mut Tape) -> Var,
{
    let mut tape = Tape::new();
    let loss = build(store, &mut tape);
    let grads = tape.backward(loss, store).expect("scalar loss");
    let loss_value = tape.value(loss).item();
    let eval = |store: &ParameterStore| {
        let mut tape = Tape::new();
        let v = build(store, &mut tape);
        tape.value(v).item()
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        checked: 0,
        worst: None,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            let mut at = |offset: f64| {
                store.value_mut(id).data_mut()[k] = orig + offset;
                eval(store)
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let analytic = grads.get(id).data()[k];
            let err = rel_err(analytic, numeric, loss_value);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((store.name(id).to_string(), k));
            }
            report.max_abs_err = report.max_abs_err.max((analytic - numeric).abs());
            report.checked += 1;
        }
    }
    report
}
