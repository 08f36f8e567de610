//! Central-difference gradient oracle.

use indexmap::IndexMap;

use crate::error::{Error, Result};

use super::optim::ParameterSet;
use super::tensor::Tensor;

/// Compares analytic gradients against central differences coordinate by
/// coordinate and returns the worst relative error.
///
/// `f` evaluates the (deterministic, smooth) scalar objective together with
/// its analytic gradients at the given parameters; only the loss value is
/// used at perturbed points.
pub fn finite_diff_check<F>(params: &ParameterSet, epsilon: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&ParameterSet) -> Result<(f64, IndexMap<String, Tensor>)>,
{
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument(
            "finite_diff_check requires epsilon > 0".to_string(),
        ));
    }
    let (_, analytic) = f(params)?;
    let mut worst: f64 = 0.0;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.get(name)?.data.len();
        for i in 0..n {
            let mut plus = params.clone();
            plus.get_mut(name)?.data[i] += epsilon;
            let (lp, _) = f(&plus)?;
            let mut minus = params.clone();
            minus.get_mut(name)?.data[i] -= epsilon;
            let (lm, _) = f(&minus)?;
            let fd = (lp - lm) / (2.0 * epsilon);
            let an = analytic
                .get(name)
                .map(|g| g.data[i])
                .ok_or_else(|| Error::MissingGradient(name.clone()))?;
            let denom = fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max((fd - an).abs() / denom);
        }
    }
    Ok(worst)
}
