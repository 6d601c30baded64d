use alloc::string::String;
use alloc::vec::Vec;

use super::{ParamStore, Tape, Tensor, Var};
use crate::Result;

fn relative(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / libm::fabs(analytic).max(1.0)
}

fn eval_scalar<F>(f: &mut F, x: &Tensor) -> Result<f64>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.variable(x.clone());
    let out = f(&mut tape, xv)?;
    Ok(tape.value(out).item())
}

/// Largest `|analytic − central difference| / max(1, |analytic|)` over the
/// coordinates of `x`, for a scalar-valued `f`.
pub fn gradient_check<F>(mut f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.variable(x.clone());
    let out = f(&mut tape, xv)?;
    let analytic = tape.backward(out)?.get(xv);
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval_scalar(&mut f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval_scalar(&mut f, &probe)?;
        probe.data_mut()[i] = orig;
        worst = worst.max(relative(analytic.data()[i], (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

/// Same check against every scalar of every parameter in `store`. Returns
/// the worst error per parameter name.
pub fn gradient_check_params<F>(mut f: F, store: &ParamStore, eps: f64) -> Result<Vec<(String, f64)>>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let analytic = tape.param_grads(&grads);
    let mut probe = store.clone();
    let mut report = Vec::new();
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in names {
        let len = store.get(&name).map_or(0, |t| t.len());
        let zero = Tensor::zeros(1, len);
        let a = analytic.get(&name).unwrap_or(&zero);
        let mut worst = 0.0f64;
        for i in 0..len {
            let orig = store.get(&name).unwrap().data()[i];
            let mut eval = |v: f64, probe: &mut ParamStore| -> Result<f64> {
                probe.get_mut(&name).unwrap().data_mut()[i] = v;
                let mut t = Tape::new();
                let out = f(&mut t, probe)?;
                Ok(t.value(out).item())
            };
            let plus = eval(orig + eps, &mut probe)?;
            let minus = eval(orig - eps, &mut probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            worst = worst.max(relative(a.data()[i], (plus - minus) / (2.0 * eps)));
        }
        report.push((name, worst));
    }
    Ok(report)
}
