//! Tsallis deformed logarithm and exponential.
//!
//! These accept `q` in the closed interval `[0, 1]`; `q = 1` is the classical case.

use crate::error::{QError, Result};

fn check_index(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(QError::InvalidParameter(format!(
            "Tsallis index must lie in [0, 1], got {q}"
        )))
    }
}

/// `ln_q(x) = (x^{1-q} - 1) / (1 - q)` for `x > 0`.
pub fn tsallis_ln(x: f64, q: f64) -> Result<f64> {
    check_index(q)?;
    if !(x > 0.0) {
        return Err(QError::Domain(format!("ln_q requires x > 0, got {x}")));
    }
    if q == 1.0 {
        return Ok(x.ln());
    }
    let one_minus_q = 1.0 - q;
    Ok((one_minus_q * x.ln()).exp_m1() / one_minus_q)
}

/// `exp_q(x) = [1 + (1 - q) x]^{1/(1-q)}` where `1 + (1 - q) x >= 0`.
pub fn tsallis_exp(x: f64, q: f64) -> Result<f64> {
    check_index(q)?;
    if q == 1.0 {
        return Ok(x.exp());
    }
    let one_minus_q = 1.0 - q;
    let base = 1.0 + one_minus_q * x;
    if base < 0.0 || x.is_nan() {
        return Err(QError::Domain(format!(
            "exp_q requires 1 + (1 - q) x >= 0, got x = {x} with q = {q}"
        )));
    }
    if base == 0.0 {
        return Ok(0.0);
    }
    Ok(((one_minus_q * x).ln_1p() / one_minus_q).exp())
}
