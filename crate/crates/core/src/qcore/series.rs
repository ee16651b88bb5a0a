//! q-exponentials and the q-Gaussian series.

use super::{q_number, QParam, SeriesPolicy};
use crate::error::{QError, Result};

/// Sums `t_0 + t_1 + ...` where `t_k = t_{k-1} * ratio(k)`.
///
/// Stops after the first term whose magnitude is below `policy.tol` once the
/// terms have started to shrink. Returns `(sum, sum of magnitudes)`.
fn sum_by_ratio(policy: &SeriesPolicy, mut ratio: impl FnMut(u32) -> f64) -> Result<(f64, f64)> {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut abs_sum = 1.0f64;
    for k in 1..policy.max_terms as u32 {
        let rho = ratio(k);
        term *= rho;
        sum += term;
        abs_sum += term.abs();
        if !sum.is_finite() {
            return Err(QError::NonFiniteEvaluation { x: k as f64, value: sum });
        }
        if term.abs() < policy.tol && rho.abs() < 1.0 {
            return Ok((sum, abs_sum));
        }
    }
    Err(QError::TruncationIncomplete {
        terms: policy.max_terms,
        partial: sum,
    })
}

/// The small q-exponential `e_q^x = sum_k x^k / [k]_q!`, convergent for `|x| < 1/(1-q)`.
pub fn q_exp_small(x: f64, q: QParam, policy: &SeriesPolicy) -> Result<f64> {
    let radius = 1.0 / (1.0 - q.value());
    if x.abs() >= radius {
        return Err(QError::DivergentSeries { x: x.abs(), radius });
    }
    if q.is_classical() {
        return Ok(x.exp());
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    sum_by_ratio(policy, |k| x / q_number(k, q)).map(|(s, _)| s)
}

/// The big q-exponential `E_q^x = sum_k q^{k(k-1)/2} x^k / [k]_q!`, an entire function.
pub fn q_exp_big(x: f64, q: QParam, policy: &SeriesPolicy) -> Result<f64> {
    if q.is_classical() {
        return Ok(x.exp());
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let qv = q.value();
    sum_by_ratio(policy, |k| qv.powi(k as i32 - 1) * x / q_number(k, q)).map(|(s, _)| s)
}

/// The q-analog of `exp(-x^2/2)`:
///
/// `E_{q^2}^{-q^2 x^2/[2]_q} = sum_k q^{k(k+1)} (q-1)^k x^{2k} / (1-q^2)^k_{q^2}`
///
/// defined on `|x| <= nu(q)`. Each denominator factor `1 - q^{2k}` is the
/// k-th factor of the q-Pochhammer symbol `(1 - q^2)^k_{q^2}`.
///
/// The alternating series loses precision close to `nu` when `q` is near 1.
/// In that regime the same function is evaluated through its product form
/// `prod_{j>=0} (1 - (1-q) q^{2j+2} x^2)`, whose factors all lie in `(0, 1]`.
pub fn q_gauss_series(x: f64, q: QParam, policy: &SeriesPolicy) -> Result<f64> {
    let nu = q.nu();
    if x.abs() > nu * (1.0 + 1e-12) {
        return Err(QError::Domain(format!(
            "q-Gaussian series evaluated at |x| = {} > nu = {nu}",
            x.abs()
        )));
    }
    if q.is_classical() {
        return Ok((-0.5 * x * x).exp());
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let qv = q.value();
    let q2 = qv * qv;
    let scaled = (qv - 1.0) * x * x;
    let mut q2k = 1.0;
    let series = sum_by_ratio(policy, |_| {
        q2k *= q2;
        q2k * scaled / (1.0 - q2k)
    });
    match series {
        // more than one decimal digit lost to cancellation: switch representations
        Ok((sum, abs_sum)) if sum > 0.0 && abs_sum <= 16.0 * sum => Ok(sum),
        Ok(_) | Err(QError::NonFiniteEvaluation { .. }) => q_gauss_product(x, q, policy),
        Err(e) => Err(e),
    }
}

/// Product form of the q-Gaussian, accumulated in log space.
pub(crate) fn q_gauss_product(x: f64, q: QParam, policy: &SeriesPolicy) -> Result<f64> {
    let qv = q.value();
    let q2 = qv * qv;
    let mut a = (1.0 - qv) * q2 * x * x;
    let mut log_sum = 0.0f64;
    for _ in 0..policy.max_terms {
        if a / (1.0 - q2) < policy.tol * 1e-2 {
            return Ok(log_sum.exp());
        }
        log_sum += (-a).ln_1p();
        a *= q2;
    }
    Err(QError::TruncationIncomplete {
        terms: policy.max_terms,
        partial: log_sum.exp(),
    })
}
