//! Central finite-difference gradient checking. This is the independent
//! oracle for every differentiable op: it never consults the recorded
//! backward rules, only repeated forward evaluations.

use super::Tensor;
use crate::error::Result;

/// One disagreement between analytic and numeric gradients.
#[derive(Debug)]
pub struct GradMismatch {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Outcome of a gradient check.
#[derive(Debug)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub mismatches: Vec<GradMismatch>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Check analytic gradients of `f` at `inputs` against central differences.
///
/// `f` must rebuild its graph from the given leaves on every call. Each
/// input is perturbed by `eps` one element at a time; agreement is
/// `|a - n| <= atol + rel_tol * max(|a|, |n|)` with `atol = rel_tol * 1e-3`.
pub fn gradcheck<F>(
    inputs: &[Tensor<f64>],
    f: F,
    rel_tol: f64,
    eps: f64,
) -> Result<GradcheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    for t in inputs {
        t.zero_grad();
    }
    let loss = f(inputs)?;
    loss.backward()?;

    let atol = rel_tol * 1e-3;
    let mut max_rel_err = 0.0f64;
    let mut mismatches = Vec::new();

    for (ti, t) in inputs.iter().enumerate() {
        if !t.requires_grad() {
            continue;
        }
        let analytic = t
            .grad()
            .unwrap_or_else(|| vec![0.0; t.numel()]);
        let base = t.to_vec();
        for e in 0..base.len() {
            let mut plus = base.clone();
            plus[e] += eps;
            t.set_data(plus);
            let f_plus = f(inputs)?.item();

            let mut minus = base.clone();
            minus[e] -= eps;
            t.set_data(minus);
            let f_minus = f(inputs)?.item();

            t.set_data(base.clone());

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[e];
            let denom = a.abs().max(numeric.abs());
            let err = (a - numeric).abs();
            let rel = if denom > 0.0 { err / denom } else { 0.0 };
            max_rel_err = max_rel_err.max(if err <= atol { 0.0 } else { rel });
            if err > atol + rel_tol * denom {
                mismatches.push(GradMismatch {
                    input: ti,
                    element: e,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(GradcheckReport {
        max_rel_err,
        mismatches,
    })
}

/// Panicking wrapper for tests.
pub fn assert_gradcheck<F>(inputs: &[Tensor<f64>], f: F, rel_tol: f64, eps: f64)
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let report = gradcheck(inputs, f, rel_tol, eps).expect("gradcheck forward failed");
    assert!(
        report.passed(),
        "gradcheck failed (max rel err {:.3e}): first mismatches: {:?}",
        report.max_rel_err,
        &report.mismatches[..report.mismatches.len().min(5)]
    );
}
