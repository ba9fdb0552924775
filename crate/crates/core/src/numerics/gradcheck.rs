use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval<F>(f: &mut F, store: &ParamStore) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let v = tape.value(loss);
    if !v.is_scalar() {
        return Err(Error::NotScalar(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compare tape gradients with central finite differences for every entry.
///
/// Gradient slots are left as they were on entry.
pub fn grad_check<F>(mut closure: F, store: &mut ParamStore, tolerance: f64) -> Result<GradReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut report = GradReport { tolerance, params: Vec::new() };
    if store.is_empty() {
        return Ok(report);
    }

    let first = eval(&mut closure, store)?;
    let second = eval(&mut closure, store)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let saved = store.clone();
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = closure(&mut tape, store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, e)| e.grad.data().to_vec()).collect();

    for (idx, grads) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for (k, &g) in grads.iter().enumerate() {
            let orig = store.value_at(idx).data()[k];
            store.value_at_mut(idx).data_mut()[k] = orig + FD_STEP;
            let plus = eval(&mut closure, store)?;
            store.value_at_mut(idx).data_mut()[k] = orig - FD_STEP;
            let minus = eval(&mut closure, store)?;
            store.value_at_mut(idx).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(g, numeric));
        }
        let name = store.names().nth(idx).expect("index in range").to_string();
        report.params.push(ParamCheck { name, max_rel_error: worst });
    }
    *store = saved;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn empty_store_passes() {
        let mut s = ParamStore::new();
        let r = grad_check(|t, _| Ok(t.constant(Tensor::scalar(1.0))), &mut s, 1e-5).unwrap();
        assert!(r.params.is_empty() && r.passed());
    }

    #[test]
    fn detects_nondeterminism() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut calls = 0.0;
        let err = grad_check(
            |t, _| {
                calls += 1.0;
                Ok(t.constant(Tensor::scalar(calls)))
            },
            &mut s,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic { .. }));
    }
}
