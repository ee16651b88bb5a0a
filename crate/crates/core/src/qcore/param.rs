use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};

/// Default width of the band around `q = 1` inside which classical formulas are used.
pub const DEFAULT_ONE_LIMIT_EPSILON: f64 = 1e-8;

/// A validated deformation parameter `0 < q < 1`.
///
/// Carries the derived half-width `nu = 1/sqrt(1 - q)` that replaces the
/// infinite limits of improper integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QParam {
    q: f64,
    nu: f64,
    one_limit_epsilon: f64,
}

impl QParam {
    pub fn new(q: f64) -> Result<Self> {
        Self::with_one_limit_epsilon(q, DEFAULT_ONE_LIMIT_EPSILON)
    }

    pub fn with_one_limit_epsilon(q: f64, one_limit_epsilon: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(QError::InvalidParameter(format!(
                "q must satisfy 0 < q < 1, got {q}"
            )));
        }
        if !(one_limit_epsilon >= 0.0 && one_limit_epsilon.is_finite()) {
            return Err(QError::InvalidParameter(format!(
                "one_limit_epsilon must be finite and non-negative, got {one_limit_epsilon}"
            )));
        }
        Ok(QParam {
            q,
            nu: 1.0 / (1.0 - q).sqrt(),
            one_limit_epsilon,
        })
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.q
    }

    /// `nu(q) = 1/sqrt(1 - q)`.
    #[inline]
    pub fn nu(&self) -> f64 {
        self.nu
    }

    #[inline]
    pub fn one_limit_epsilon(&self) -> f64 {
        self.one_limit_epsilon
    }

    /// True when `|1 - q|` is below the classical-limit threshold.
    #[inline]
    pub fn is_classical(&self) -> bool {
        1.0 - self.q < self.one_limit_epsilon
    }

    /// The parameter `q^2`, used as the base of the q-Gaussian series.
    pub fn squared(&self) -> QParam {
        QParam {
            q: self.q * self.q,
            nu: 1.0 / (1.0 - self.q * self.q).sqrt(),
            one_limit_epsilon: self.one_limit_epsilon,
        }
    }
}

impl TryFrom<f64> for QParam {
    type Error = QError;

    fn try_from(q: f64) -> Result<Self> {
        QParam::new(q)
    }
}

impl From<QParam> for f64 {
    fn from(q: QParam) -> f64 {
        q.q
    }
}

/// Truncation rule for infinite series and Jackson sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPolicy {
    pub tol: f64,
    pub max_terms: usize,
}

impl SeriesPolicy {
    pub fn new(tol: f64, max_terms: usize) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(QError::InvalidParameter(format!(
                "series tolerance must be positive, got {tol}"
            )));
        }
        if max_terms == 0 {
            return Err(QError::InvalidParameter(
                "max_terms must be at least 1".into(),
            ));
        }
        Ok(SeriesPolicy { tol, max_terms })
    }

    /// A policy whose term budget grows like `1/(1 - q)`, enough for
    /// geometric sums with ratio `q` to reach `tol`.
    pub fn scaled_for(q: QParam, tol: f64) -> Result<Self> {
        let per_decade = 2.303 / (1.0 - q.value());
        let decades = (-tol.log10()).max(1.0) + 6.0;
        let budget = (per_decade * decades).ceil() as usize;
        SeriesPolicy::new(tol, budget.max(SeriesPolicy::default().max_terms))
    }
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        SeriesPolicy {
            tol: 1e-14,
            max_terms: 10_000,
        }
    }
}
