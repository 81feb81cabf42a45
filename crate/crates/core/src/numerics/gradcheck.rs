use crate::error::Result;
use crate::numerics::{Gradients, ParamStore};

/// Denominator floor for [`relative_error`], so coordinates whose true
/// gradient is zero are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Default central-difference step. Smaller steps let round-off dominate
/// on gradients near 1e-7.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Worst relative error over the coordinates of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
}

/// Compares `analytic` against central differences of `loss` with step
/// `eps`, perturbing every coordinate of every parameter in `store`.
///
/// `store` is restored before returning.
pub fn central_difference<F>(
    store: &mut ParamStore,
    analytic: &Gradients,
    eps: f64,
    mut loss: F,
) -> Result<Vec<GroupError>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let ids: Vec<_> = (0..store.len()).map(crate::numerics::ParamId).collect();
    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let len = store.get(id).value.len();
        let mut worst: f64 = 0.0;
        for k in 0..len {
            let original = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = original + eps;
            let plus = loss(store);
            store.get_mut(id).value.data_mut()[k] = original - eps;
            let minus = loss(store);
            store.get_mut(id).value.data_mut()[k] = original;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let exact = analytic.get(id).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(relative_error(exact, numeric));
        }
        report.push(GroupError {
            name: store.get(id).name.clone(),
            max_rel_error: worst,
            coordinates: len,
        });
    }
    Ok(report)
}
