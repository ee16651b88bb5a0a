//! Jackson integration, q-differentiation and q-Taylor expansion.

use serde::Serialize;

use crate::error::{QError, Result};
use crate::qcore::{q_factorial, q_pochhammer, QParam, SeriesPolicy};

/// Outcome of a truncated Jackson sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacksonIntegralResult {
    pub value: f64,
    pub terms_used: usize,
    pub truncation_complete: bool,
    /// `|last included term| / (1 - q)`, with the term measured by the
    /// magnitudes of both endpoint contributions.
    pub tail_bound_estimate: f64,
}

impl JacksonIntegralResult {
    /// The value, or `TruncationIncomplete` when the term budget ran out.
    pub fn checked(self) -> Result<f64> {
        if self.truncation_complete {
            Ok(self.value)
        } else {
            Err(QError::TruncationIncomplete {
                terms: self.terms_used,
                partial: self.value,
            })
        }
    }
}

/// The Jackson integral `(1-q) sum_k q^k [b f(q^k b) - a f(q^k a)]`.
///
/// Truncation happens once the tail estimate drops below `policy.tol` while
/// the term magnitudes are shrinking. Runs of exactly-zero terms (an
/// integrand with compact support away from the origin) never end the sum on
/// their own; they only stop it once `q^k (|a| + |b|) max(1, sup|f|)` is
/// itself below the tolerance.
pub fn jackson_integral<F>(f: F, a: f64, b: f64, q: QParam, policy: &SeriesPolicy) -> Result<JacksonIntegralResult>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(JacksonIntegralResult {
            value: 0.0,
            terms_used: 0,
            truncation_complete: true,
            tail_bound_estimate: 0.0,
        });
    }
    let qv = q.value();
    let one_minus_q = 1.0 - qv;
    let span = a.abs() + b.abs();
    let mut qk = 1.0f64;
    let mut sum = 0.0f64;
    let mut prev_mag = f64::INFINITY;
    let mut f_seen = 0.0f64;
    let mut tail = f64::INFINITY;
    for k in 0..policy.max_terms {
        let (pa, pb) = (qk * a, qk * b);
        let (fa, fb) = (f(pa), f(pb));
        if !fa.is_finite() {
            return Err(QError::NonFiniteEvaluation { x: pa, value: fa });
        }
        if !fb.is_finite() {
            return Err(QError::NonFiniteEvaluation { x: pb, value: fb });
        }
        let w = one_minus_q * qk;
        sum += w * (b * fb - a * fa);
        let mag = w * ((b * fb).abs() + (a * fa).abs());
        f_seen = f_seen.max(fa.abs()).max(fb.abs());
        tail = mag / one_minus_q;

        let decaying = mag > 0.0 && mag < prev_mag && k > 0;
        let exhausted = qk * span * f_seen.max(1.0) < policy.tol;
        if tail < policy.tol && (decaying || exhausted) {
            return Ok(JacksonIntegralResult {
                value: sum,
                terms_used: k + 1,
                truncation_complete: true,
                tail_bound_estimate: tail,
            });
        }
        prev_mag = mag;
        qk *= qv;
    }
    Ok(JacksonIntegralResult {
        value: sum,
        terms_used: policy.max_terms,
        truncation_complete: false,
        tail_bound_estimate: tail,
    })
}

/// The q-analog of the improper integral: the Jackson integral over `[-nu, nu]`.
pub fn jackson_integral_improper<F>(f: F, q: QParam, policy: &SeriesPolicy) -> Result<JacksonIntegralResult>
where
    F: Fn(f64) -> f64,
{
    jackson_integral(f, -q.nu(), q.nu(), q, policy)
}

/// A q-derivative value. `origin_limit` marks values taken at `x = 0`, where
/// the q-difference quotient is singular and the classical limit is returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QDerivative {
    pub value: f64,
    pub origin_limit: bool,
}

fn eval_finite<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QError::NonFiniteEvaluation { x, value: v })
    }
}

/// `D_q f(x) = (f(qx) - f(x)) / ((q - 1) x)`.
///
/// At `x = 0` returns the symmetric difference `(f(h) - f(-h)) / 2h` with
/// `h = 1e-6`, flagged as an origin limit.
pub fn q_derivative<F: Fn(f64) -> f64>(f: F, x: f64, q: QParam) -> Result<QDerivative> {
    q_derivative_iter(f, x, q, 1)
}

/// `D_q^s f(x)`, computed from the values `f(q^j x)`, `j = 0..=s`, by
/// repeated q-differencing.
///
/// At `x = 0` every stencil point collapses, so the limit
/// `lim_{x->0} D_q^s f(x) = [s]_q!/s! f^{(s)}(0)` is returned instead, with
/// the classical derivative taken by central differences.
pub fn q_derivative_iter<F: Fn(f64) -> f64>(f: F, x: f64, q: QParam, s: u32) -> Result<QDerivative> {
    if s == 0 {
        return Ok(QDerivative {
            value: eval_finite(&f, x)?,
            origin_limit: false,
        });
    }
    if x == 0.0 {
        let classical = central_difference(&f, s)?;
        let factorial: f64 = (1..=s).map(f64::from).product();
        return Ok(QDerivative {
            value: q_factorial(s, q) / factorial * classical,
            origin_limit: true,
        });
    }
    let qv = q.value();
    let mut points = Vec::with_capacity(s as usize + 1);
    let mut p = x;
    for _ in 0..=s {
        points.push(p);
        p *= qv;
    }
    let mut values = points
        .iter()
        .map(|&p| eval_finite(&f, p))
        .collect::<Result<Vec<_>>>()?;
    // level l holds D_q^l f at points[0..=s-l]
    for level in 0..s as usize {
        for j in 0..values.len() - 1 - level {
            values[j] = (values[j + 1] - values[j]) / ((qv - 1.0) * points[j]);
        }
    }
    Ok(QDerivative {
        value: values[0],
        origin_limit: false,
    })
}

/// Central finite difference of order `s` at the origin.
fn central_difference<F: Fn(f64) -> f64>(f: &F, s: u32) -> Result<f64> {
    let h = if s == 1 {
        1e-6
    } else {
        f64::EPSILON.powf(1.0 / (s as f64 + 2.0))
    };
    let mut acc = 0.0;
    let mut binom = 1.0;
    for j in 0..=s {
        let point = (s as f64 / 2.0 - j as f64) * h;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * eval_finite(f, point)?;
        binom = binom * (s - j) as f64 / (j + 1) as f64;
    }
    Ok(acc / h.powi(s as i32))
}

/// A q-Taylor expansion of order `s` around `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTaylorExpansion {
    pub center: f64,
    pub order: u32,
    pub q: QParam,
    /// `(D_q^k f)(a) / [k]_q!` for `k = 0..=order`.
    pub coefficients: Vec<f64>,
    /// `|f(b) - partial sum|` at the last point passed to [`QTaylorExpansion::residual`].
    pub remainder_estimate: Option<f64>,
}

impl QTaylorExpansion {
    /// `sum_k (b - a)^k_q (D_q^k f)(a) / [k]_q!`.
    pub fn eval(&self, b: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| q_pochhammer(b, self.center, k as u32, self.q) * c)
            .sum()
    }

    /// Records and returns the residual `|f(b) - eval(b)|`.
    pub fn residual<F: Fn(f64) -> f64>(&mut self, f: F, b: f64) -> f64 {
        let r = (f(b) - self.eval(b)).abs();
        self.remainder_estimate = Some(r);
        r
    }
}

pub fn q_taylor<F: Fn(f64) -> f64>(f: F, a: f64, s: u32, q: QParam) -> Result<QTaylorExpansion> {
    let coefficients = (0..=s)
        .map(|k| Ok(q_derivative_iter(&f, a, q, k)?.value / q_factorial(k, q)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QTaylorExpansion {
        center: a,
        order: s,
        q,
        coefficients,
        remainder_estimate: None,
    })
}

pub fn q_taylor_eval(expansion: &QTaylorExpansion, b: f64, q: QParam) -> f64 {
    if q == expansion.q {
        expansion.eval(b)
    } else {
        QTaylorExpansion { q, ..expansion.clone() }.eval(b)
    }
}
