//! Central finite-difference gradient checks.

use crate::params::{ParamKind, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// `|a - n|_2 / max(|a|_2, |n|_2, 1e-6)` over the checked entries; the
    /// floor keeps gradients that are analytically zero from reporting noise.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn summary(&self) -> String {
        self.params
            .iter()
            .map(|p| format!("{}: rel {:.2e} (|g| {:.2e}, n={})", p.name, p.rel_error, p.analytic_norm, p.checked))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Compares tape gradients of `loss` with central differences for every
/// weight selected by `trainable`. At most `max_entries` evenly spaced
/// entries are probed per tensor.
pub fn check_params<F>(
    store: &ParamStore<f64>,
    training: bool,
    trainable: &dyn Fn(&str) -> bool,
    loss: F,
    step: f64,
    max_entries: usize,
) -> GradCheckReport
where
    F: for<'t> Fn(&'t Tape<f64>) -> Var<'t, f64>,
{
    let tape = Tape::new(store, training, trainable);
    let l = loss(&tape);
    let grads = tape.backward(l);
    let mut work = store.clone();
    let mut params = Vec::new();
    for (id, entry) in store.iter() {
        if entry.kind != ParamKind::Weight || !trainable(&entry.name) {
            continue;
        }
        let n = entry.value().len();
        let analytic = grads.param(id).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let stride = n.div_ceil(max_entries.max(1)).max(1);
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        let mut checked = 0;
        let mut k = 0;
        while k < n {
            let orig = work.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + step;
            let lp = {
                let t = Tape::new(&work, training, |_| false);
                loss(&t).item()
            };
            work.get_mut(id).data_mut()[k] = orig - step;
            let lm = {
                let t = Tape::new(&work, training, |_| false);
                loss(&t).item()
            };
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (lp - lm) / (2.0 * step);
            diff2 += (analytic[k] - numeric).powi(2);
            a2 += analytic[k].powi(2);
            n2 += numeric.powi(2);
            checked += 1;
            k += stride;
        }
        let denom = a2.sqrt().max(n2.sqrt()).max(1e-6);
        params.push(ParamCheck {
            name: entry.name.clone(),
            checked,
            rel_error: diff2.sqrt() / denom,
            analytic_norm: a2.sqrt(),
        });
    }
    GradCheckReport { params }
}
