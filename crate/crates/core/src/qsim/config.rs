//! Experiment configuration, read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{QError, Result};
use crate::qcore::QParam;
use crate::qkernels::KernelKind;
use crate::qtheory::ModelSpec;

/// `scale * n^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthRule {
    #[serde(default = "one")]
    pub scale: f64,
    pub exponent: f64,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule { scale: 1.0, exponent: 0.2 }
    }
}

impl BandwidthRule {
    pub fn at(&self, n: usize) -> f64 {
        self.scale * (n as f64).powf(-self.exponent)
    }
}

/// `max(epsilon, n^{-exponent})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorRule {
    pub epsilon: f64,
    pub exponent: f64,
}

impl Default for FloorRule {
    fn default() -> Self {
        FloorRule { epsilon: 1e-3, exponent: 0.1 }
    }
}

impl FloorRule {
    pub fn at(&self, n: usize) -> f64 {
        self.epsilon.max((n as f64).powf(-self.exponent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Design points drawn from the discrete Jackson measure of `f`.
    QNative,
    /// Continuous design points drawn from `f` by rejection.
    #[default]
    ClassicalLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: -2.5, hi: 2.5, count: 201 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// KS test of the standardized statistic against N(0, 1).
    Normality,
    /// `Var(r_hat) n h` against `V_q` at the largest `n`.
    VarianceLaw,
    /// Log-log slope of the empirical bias against `h`.
    BiasSlope,
    /// Empirical bias against the leading term for `h` in `[0.1, 0.3]`.
    BiasPointwise,
    /// Sup-error over the almost-sure rate, for `f_hat`, `g_hat` and `r_hat`.
    Rate,
    /// Exceedance frequencies against the q-Bernstein bound.
    Bernstein,
    /// Lyapunov ratio decreasing in `n`.
    Lyapunov,
    /// Noiseless constant model recovered to rounding error.
    ConstantRecovery,
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::Normality => "normality",
            Check::VarianceLaw => "variance-law",
            Check::BiasSlope => "bias-slope",
            Check::BiasPointwise => "bias-pointwise",
            Check::Rate => "rate",
            Check::Bernstein => "bernstein",
            Check::Lyapunov => "lyapunov",
            Check::ConstantRecovery => "constant-recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernsteinSpec {
    #[serde(default = "default_k_values")]
    pub k_values: Vec<u32>,
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    /// Explicit thresholds; when absent a grid is chosen from the bound itself.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
}

impl Default for BernsteinSpec {
    fn default() -> Self {
        BernsteinSpec { k_values: default_k_values(), t_points: default_t_points(), t_grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub model: ModelSpec,
    pub q: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub h_rule: BandwidthRule,
    /// Fixed bandwidths used instead of `h_rule` for the pointwise tables.
    #[serde(default)]
    pub h_values: Option<Vec<f64>>,
    #[serde(default)]
    pub b_rule: FloorRule,
    pub seed: u64,
    #[serde(default)]
    pub mode: SamplingMode,
    #[serde(default = "default_x_points")]
    pub x_points: Vec<f64>,
    #[serde(default)]
    pub sup_grid: GridSpec,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "two", rename = "L")]
    pub l: f64,
    /// Center the Lyapunov `Z_i` at the true `r(x)` instead of `r_hat(x)`.
    #[serde(default)]
    pub lyapunov_true_center: bool,
    #[serde(default)]
    pub bernstein: BernsteinSpec,
    pub checks: Vec<Check>,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_kernel() -> KernelKind {
    KernelKind::Polynomial { p: 1 }
}

fn default_x_points() -> Vec<f64> {
    vec![0.0]
}

fn default_k_values() -> Vec<u32> {
    vec![0, 1]
}

fn default_t_points() -> usize {
    20
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| QError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QError::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn qparam(&self) -> Result<QParam> {
        QParam::new(self.q).map_err(|e| QError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QError::Config(msg));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad(format!("name `{}` must be nonempty ASCII letters, digits, `-` or `_`", self.name));
        }
        self.qparam()?;
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.n_values.is_empty() || self.n_values[0] < 2 {
            return bad("n_values must be nonempty with every n >= 2".into());
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_values must be strictly increasing".into());
        }
        if !(self.h_rule.scale > 0.0 && self.h_rule.exponent.is_finite()) {
            return bad("h_rule needs a positive scale".into());
        }
        if let Some(hs) = &self.h_values {
            if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return bad("h_values must be nonempty and positive".into());
            }
        }
        if !(self.b_rule.epsilon > 0.0 && self.b_rule.exponent.is_finite()) {
            return bad("b_rule needs a positive epsilon".into());
        }
        if self.x_points.is_empty() || self.x_points.iter().any(|x| !x.is_finite()) {
            return bad("x_points must be nonempty and finite".into());
        }
        let g = self.sup_grid;
        if !(g.lo < g.hi && g.count >= 2) {
            return bad("sup_grid needs lo < hi and count >= 2".into());
        }
        if !(self.c0 > 0.0) {
            return bad("c0 must be positive".into());
        }
        if self.bernstein.t_points == 0 || self.bernstein.k_values.iter().any(|&k| k > 1) {
            return bad("bernstein needs t_points >= 1 and k values in {0, 1}".into());
        }
        if let Some(ts) = &self.bernstein.t_grid {
            if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0)) {
                return bad("bernstein t_grid must be nonempty and positive".into());
            }
        }
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..12].to_string()
    }

    /// Bandwidths for the pointwise tables at sample size `n`.
    pub fn pointwise_bandwidths(&self, n: usize) -> Vec<f64> {
        self.h_values.clone().unwrap_or_else(|| vec![self.h_rule.at(n)])
    }
}
