//! Central finite differences for checking analytic gradients.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Compares backprop against `(f(w + h) - f(w - h)) / 2h` at the given
/// parameter entries. `loss` must build a deterministic scalar.
pub fn check_gradients<T, F>(
    store: &mut ParamStore<T>,
    entries: &[(ParamId, usize)],
    h: f64,
    loss: F,
) -> Result<Vec<GradCheck>>
where
    T: Scalar,
    F: Fn(&mut Graph<'_, T>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?;
        g.into_param_grads()
    };
    let eval = |store: &ParamStore<T>| -> Result<f64> {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        Ok(g.scalar(l).as_f64())
    };
    let mut out = Vec::with_capacity(entries.len());
    for &(id, index) in entries {
        let original = store.get(id).data()[index];
        store.get_mut(id).data_mut()[index] = original + T::lit(h);
        let plus = eval(store)?;
        store.get_mut(id).data_mut()[index] = original - T::lit(h);
        let minus = eval(store)?;
        store.get_mut(id).data_mut()[index] = original;
        out.push(GradCheck {
            param: id,
            index,
            analytic: analytic.get(id).map_or(0.0, |g| g[index].as_f64()),
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    Ok(out)
}
