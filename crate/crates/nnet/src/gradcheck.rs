//! Central finite-difference verification of tape gradients.

use rand::Rng;

use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// One compared entry.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub samples: Vec<GradSample>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.rel_error))
    }

    pub fn worst(&self) -> Option<&GradSample> {
        self.samples
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Picks up to `per_tensor` random entries from every parameter tensor.
pub fn sample_entries<R: Rng + ?Sized>(
    store: &ParamStore,
    per_tensor: usize,
    rng: &mut R,
) -> Vec<(ParamId, usize)> {
    let mut out = Vec::new();
    for id in store.ids() {
        let n = store.get(id).len();
        if n <= per_tensor {
            out.extend((0..n).map(|i| (id, i)));
        } else {
            out.extend((0..per_tensor).map(|_| (id, rng.random_range(0..n))));
        }
    }
    out
}

/// Compares reverse-mode gradients of `loss` against central differences
/// with step `h` at the listed entries. `loss` must build a scalar on the
/// given tape from the bound parameters.
pub fn check_gradients<F>(
    store: &ParamStore,
    loss: F,
    entries: &[(ParamId, usize)],
    h: f64,
    floor: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Var,
{
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let l = loss(&mut tape, &bound);
    let mut grads = tape.backward(l)?;
    let analytic_all = bound.gradients(store, &mut grads);
    drop(tape);

    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let b = s.bind_frozen(&mut t);
        let l = loss(&mut t, &b);
        t.value(l).item()
    };
    let mut work = store.clone();
    let mut samples = Vec::with_capacity(entries.len());
    for &(id, idx) in entries {
        let orig = work.get(id).data()[idx];
        work.get_mut(id).data_mut()[idx] = orig + h;
        let plus = eval(&work);
        work.get_mut(id).data_mut()[idx] = orig - h;
        let minus = eval(&work);
        work.get_mut(id).data_mut()[idx] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = analytic_all[id.index()].data()[idx];
        samples.push(GradSample {
            param: store.name(id).to_string(),
            index: idx,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, floor),
        });
    }
    Ok(GradCheckReport { samples })
}
