//! Central finite-difference gradient checking.

use crate::tensor::Tensor;

/// Compare analytic gradients of `f` (a scalar-valued graph builder over
/// `inputs`) against central finite differences with step `eps`. Returns
/// the maximum relative error, with denominator `max(|a|, |n|, 1e-8)`.
///
/// `f` must be deterministic: it is re-run for every perturbed entry.
pub fn max_rel_error<F>(inputs: &[Tensor], f: F, eps: f64) -> f64
where
    F: Fn(&[Tensor]) -> Tensor,
{
    for t in inputs {
        t.zero_grad();
    }
    let loss = f(inputs);
    loss.backward();
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut worst = 0.0f64;
    for (ti, t) in inputs.iter().enumerate() {
        let base = t.data();
        for k in 0..base.len() {
            let mut plus = base.clone();
            plus[k] += eps;
            t.set_data(&plus);
            let lp = f(inputs).item();

            let mut minus = base.clone();
            minus[k] -= eps;
            t.set_data(&minus);
            let lm = f(inputs).item();

            t.set_data(&base);
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic[ti][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}
