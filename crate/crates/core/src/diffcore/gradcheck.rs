//! Central finite-difference verification of tape gradients.

use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Checks at most this many evenly spaced entries per parameter.
    pub max_entries_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_entries_per_param: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum was attained.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

fn eval<T: Real, F>(store: &ParamStore<T>, f: &F) -> Result<T>
where
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    Ok(g.value(loss).item())
}

/// Compares the tape gradient of `fragment` against central differences at
/// the store's current values.
///
/// Returns the maximum over checked entries of
/// `|analytic − cd| / max(|analytic|, |cd|, 1e-8)`. The fragment must be
/// deterministic: if two evaluations at the same point disagree the check
/// fails with a contract error. Gradients already in the store are left
/// untouched.
pub fn finite_diff_check<T: Real, F>(
    store: &ParamStore<T>,
    opts: GradCheckOptions,
    fragment: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut g = Graph::new();
    let loss = fragment(&mut g, &work)?;
    let base = g.value(loss).item();
    g.reverse_accumulate(loss, &mut work)?;
    if eval(&work, &fragment)? != base {
        return Err(Error::Contract(
            "fragment is not deterministic (unfixed dropout mask?)".into(),
        ));
    }

    let eps = T::c(opts.eps);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    let names: Vec<String> = work.names().map(str::to_string).collect();
    for name in names {
        let len = work.value(&name)?.len();
        let stride = opts
            .max_entries_per_param
            .map_or(1, |m| len.div_ceil(m.max(1)).max(1));
        for idx in (0..len).step_by(stride) {
            let analytic = work.grad(&name)?.data()[idx].to_f64_lossy();
            let orig = work.value(&name)?.data()[idx];
            work.get_mut(&name)?.value.data_mut()[idx] = orig + eps;
            let plus = eval(&work, &fragment)?;
            work.get_mut(&name)?.value.data_mut()[idx] = orig - eps;
            let minus = eval(&work, &fragment)?;
            work.get_mut(&name)?.value.data_mut()[idx] = orig;
            let cd = ((plus - minus) / (eps + eps)).to_f64_lossy();
            let denom = analytic.abs().max(cd.abs()).max(1e-8);
            let rel = (analytic - cd).abs() / denom;
            report.entries_checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), idx));
            }
        }
    }
    Ok(report)
}
