//! Closed-form predictions for the q-kernel estimators: leading bias, the
//! asymptotic normal parameters, the almost-sure rate, the q-Bernstein tail
//! bound, and the Markov and Lyapunov diagnostics.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};
use crate::qcalc::q_derivative_iter;
use crate::qcore::{q_factorial, q_number, tsallis_exp, tsallis_ln, QParam};
use crate::qestim::{EstimatorConfig, KernelSmoother, Sample};
use crate::qkernels::QKernel;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Points used to approximate `sup f` over the model support.
const SUP_GRID_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensitySpec {
    /// Standard normal density truncated to `[-half_width, half_width]`.
    Bell { half_width: f64 },
    Uniform { half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegressionSpec {
    /// `slope * x + amplitude * sin(x)`.
    LinearSine { slope: f64, amplitude: f64 },
    Affine { slope: f64, intercept: f64 },
    Constant { value: f64 },
}

/// Additive noise independent of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    None,
    Uniform { half_width: f64 },
}

impl NoiseSpec {
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { half_width } => half_width * (2.0 * rng.gen::<f64>() - 1.0),
        }
    }
}

/// Serializable description of a synthetic regression design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub density: DensitySpec,
    pub regression: RegressionSpec,
    pub noise: NoiseSpec,
}

impl Default for ModelSpec {
    /// Bell density on `[-3, 3]`, `r(x) = 2x + sin x`, uniform noise on `[-0.5, 0.5]`.
    fn default() -> Self {
        ModelSpec {
            density: DensitySpec::Bell { half_width: 3.0 },
            regression: RegressionSpec::LinearSine { slope: 2.0, amplitude: 1.0 },
            noise: NoiseSpec::Uniform { half_width: 0.5 },
        }
    }
}

/// Design density `f`, regression `r` and noise law of a synthetic model.
#[derive(Clone)]
pub struct TargetModel {
    f: RealFn,
    r: RealFn,
    noise: NoiseSpec,
    support: (f64, f64),
    density_sup: f64,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetModel")
            .field("noise", &self.noise)
            .field("support", &self.support)
            .field("density_sup", &self.density_sup)
            .finish_non_exhaustive()
    }
}

impl TargetModel {
    /// `f` must vanish outside `support`.
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        r: impl Fn(f64) -> f64 + Send + Sync + 'static,
        noise: NoiseSpec,
        support: (f64, f64),
    ) -> Result<Self> {
        let (lo, hi) = support;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(QError::InvalidParameter(format!("invalid support [{lo}, {hi}]")));
        }
        let mut density_sup = 0.0f64;
        for i in 0..SUP_GRID_POINTS {
            let x = lo + (hi - lo) * i as f64 / (SUP_GRID_POINTS - 1) as f64;
            let v = f(x);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(QError::InvalidParameter(format!("density value {v} at x = {x}")));
            }
            density_sup = density_sup.max(v);
        }
        Ok(TargetModel { f: Arc::new(f), r: Arc::new(r), noise, support, density_sup })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let (f, support): (RealFn, (f64, f64)) = match spec.density {
            DensitySpec::Bell { half_width: w } if w > 0.0 => {
                let mass = (2.0 * std::f64::consts::PI).sqrt() * statrs::function::erf::erf(w / std::f64::consts::SQRT_2);
                (Arc::new(move |x: f64| if x.abs() <= w { (-0.5 * x * x).exp() / mass } else { 0.0 }), (-w, w))
            }
            DensitySpec::Uniform { half_width: w } if w > 0.0 => {
                (Arc::new(move |x: f64| if x.abs() <= w { 0.5 / w } else { 0.0 }), (-w, w))
            }
            _ => return Err(QError::InvalidParameter("density half width must be positive".into())),
        };
        let r: RealFn = match spec.regression {
            RegressionSpec::LinearSine { slope, amplitude } => Arc::new(move |x: f64| slope * x + amplitude * x.sin()),
            RegressionSpec::Affine { slope, intercept } => Arc::new(move |x: f64| slope * x + intercept),
            RegressionSpec::Constant { value } => Arc::new(move |_| value),
        };
        if let NoiseSpec::Uniform { half_width } = spec.noise {
            if !(half_width >= 0.0 && half_width.is_finite()) {
                return Err(QError::InvalidParameter("noise half width must be nonnegative".into()));
            }
        }
        TargetModel::new(move |x| f(x), move |x| r(x), spec.noise, support)
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn r(&self, x: f64) -> f64 {
        (self.r)(x)
    }

    /// `g = r f`.
    pub fn g(&self, x: f64) -> f64 {
        self.r(x) * self.f(x)
    }

    /// `Var(Y | X = x)`.
    pub fn noise_cond_var(&self, _x: f64) -> f64 {
        self.noise.variance()
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// `sup f` over a fine grid of the support.
    pub fn density_sup(&self) -> f64 {
        self.density_sup
    }

    /// `D_q^s f(x)`.
    pub fn dq_f(&self, x: f64, q: QParam, s: u32) -> Result<f64> {
        Ok(q_derivative_iter(|t| self.f(t), x, q, s)?.value)
    }

    /// `D_q^s g(x)`.
    pub fn dq_g(&self, x: f64, q: QParam, s: u32) -> Result<f64> {
        Ok(q_derivative_iter(|t| self.g(t), x, q, s)?.value)
    }

    /// Same design with responses multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> TargetModel {
        let r = self.r.clone();
        let noise = match self.noise {
            NoiseSpec::None => NoiseSpec::None,
            NoiseSpec::Uniform { half_width } => NoiseSpec::Uniform { half_width: half_width * alpha.abs() },
        };
        TargetModel {
            f: self.f.clone(),
            r: Arc::new(move |x| alpha * r(x)),
            noise,
            support: self.support,
            density_sup: self.density_sup,
        }
    }

    /// One draw of `X` from `f` by rejection from the uniform law on the support.
    pub fn draw_x<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.support;
        loop {
            let x = lo + (hi - lo) * rng.gen::<f64>();
            if rng.gen::<f64>() * self.density_sup <= self.f(x) {
                return x;
            }
        }
    }

    /// `Y = r(x) + noise`.
    pub fn draw_y<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.r(x) + self.noise.draw(rng)
    }
}

fn positive_density(model: &TargetModel, x: f64) -> Result<f64> {
    let fx = model.f(x);
    if fx > 0.0 {
        Ok(fx)
    } else {
        Err(QError::Domain(format!("design density is {fx} at x = {x}")))
    }
}

/// `(D_q^2 g - r D_q^2 f)(x) / f(x)`, the shape factor shared by the bias terms.
fn bias_shape(model: &TargetModel, q: QParam, x: f64) -> Result<f64> {
    let fx = positive_density(model, x)?;
    let d2g = model.dq_g(x, q, 2)?;
    let d2f = model.dq_f(x, q, 2)?;
    Ok((d2g - model.r(x) * d2f) / fx)
}

/// Leading bias of `r_hat(x)`:
/// `q h^2 / ([2]_q f(x)) (D_q^2 g - r D_q^2 f)(x) int u^2 K_q d_qu`.
pub fn bias_rn(model: &TargetModel, kernel: &QKernel, h: f64, x: f64) -> Result<f64> {
    let q = kernel.q();
    let shape = bias_shape(model, q, x)?;
    Ok(q.value() * h * h / q_number(2, q) * shape * kernel.moment2())
}

/// `(E_q, V_q)` of the limiting normal law of `sqrt(nh) (r_hat(x) - r(x))`,
/// where `c = lim sqrt(n h^5)`.
pub fn clt_params(model: &TargetModel, kernel: &QKernel, q: QParam, c: f64, x: f64) -> Result<(f64, f64)> {
    let fx = positive_density(model, x)?;
    let script_e = if c == 0.0 {
        0.0
    } else {
        q.value() * c / q_number(2, q) * bias_shape(model, q, x)? * kernel.moment2()
    };
    let script_v = model.noise_cond_var(x) * kernel.square_integral() / fx;
    Ok((script_e, script_v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateTerms {
    pub v_nk: f64,
    pub w_term: f64,
    pub rate: f64,
}

/// `v_(n,k)`, `w` and the almost-sure rate `q w h^2 + sqrt(v_(n,k) ln_q n)`.
///
/// Asymptotically negligible terms are set to zero.
#[allow(clippy::too_many_arguments)]
pub fn rate_terms(
    model: &TargetModel,
    kernel: &QKernel,
    q: QParam,
    n: usize,
    h: f64,
    k: u32,
    c0: f64,
    l: f64,
) -> Result<RateTerms> {
    let two_q = q_number(2, q);
    if l <= (2.0 * two_q).sqrt() {
        return Err(QError::Parameter(format!(
            "L = {l} must exceed sqrt(2 [2]_q) = {}",
            (2.0 * two_q).sqrt()
        )));
    }
    if n == 0 || !(h > 0.0) {
        return Err(QError::InvalidParameter(format!("need n >= 1 and h > 0, got n = {n}, h = {h}")));
    }
    let ln_q_n = tsallis_ln(n as f64, q.value())?;
    let v_nk = moment_scale(model, ln_q_n, k, c0) * kernel.square_integral() / (n as f64 * h);
    let w_term = l / two_q * kernel.moment2();
    let rate = q.value() * w_term * h * h + (v_nk * ln_q_n).sqrt();
    Ok(RateTerms { v_nk, w_term, rate })
}

/// `(c_0 ln_q n)^{k/2} sup f`.
fn moment_scale(model: &TargetModel, ln_q_n: f64, k: u32, c0: f64) -> f64 {
    let growth = if k == 0 { 1.0 } else { (c0 * ln_q_n).powf(k as f64 / 2.0) };
    growth * model.density_sup()
}

/// The constant `c = M ((c_0 ln_q n)^{k/2} sup f) [2]_q / ([3]_q! n h)` of the q-Bernstein bound.
pub fn bernstein_constant(model: &TargetModel, kernel: &QKernel, n: usize, h: f64, k: u32, c0: f64) -> Result<f64> {
    let q = kernel.q();
    let ln_q_n = tsallis_ln(n as f64, q.value())?;
    Ok(kernel.sup_bound() * moment_scale(model, ln_q_n, k, c0) * q_number(2, q)
        / (q_factorial(3, q) * n as f64 * h))
}

/// `exp_q(-t^2 / ([2]_q (v + c t)))`.
pub fn bernstein_bound(t: f64, v: f64, c: f64, q: QParam) -> Result<f64> {
    if !(t > 0.0 && v > 0.0 && c > 0.0) {
        return Err(QError::InvalidParameter(format!("need t, v, c > 0, got t = {t}, v = {v}, c = {c}")));
    }
    tsallis_exp(-t * t / (q_number(2, q) * (v + c * t)), q.value())
}

/// Largest `t` at which the bound's argument stays inside the `exp_q` domain,
/// pulled in by a relative `1e-12` so rounding cannot push it across.
pub fn bernstein_domain_edge(v: f64, c: f64, q: QParam) -> f64 {
    let qv = q.value();
    if q.is_classical() || qv >= 1.0 {
        return f64::INFINITY;
    }
    // t^2 = s (v + c t) with s = [2]_q / (1 - q)
    let s = q_number(2, q) / (1.0 - qv);
    0.5 * (s * c + ((s * c).powi(2) + 4.0 * s * v).sqrt()) * (1.0 - 1e-12)
}

/// Empirical `P(X >= a)` and the Markov bound `mean / a`.
pub fn markov_check(samples: &[f64], a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return Err(QError::InvalidParameter(format!("threshold must be positive, got {a}")));
    }
    if samples.is_empty() || samples.iter().any(|&s| !(s >= 0.0)) {
        return Err(QError::InvalidParameter("samples must be nonempty and nonnegative".into()));
    }
    let n = samples.len() as f64;
    let exceed = samples.iter().filter(|&&s| s >= a).count() as f64 / n;
    let mean = samples.iter().sum::<f64>() / n;
    Ok((exceed, mean / a))
}

/// Lyapunov ratio `sum |Z_i - Z_bar|^3 / (sum (Z_i - Z_bar)^2)^{3/2}` with
/// `Z_i = (Y_i - r_hat(x)) K_q((x - X_i)/h) / (n h)`.
pub fn lyapunov_ratio(sample: &Sample, cfg: &EstimatorConfig, x: f64) -> Result<f64> {
    lyapunov_ratio_centered(sample, cfg, x, None)
}

/// [`lyapunov_ratio`] centering `Y_i` at `center` (the true `r(x)` on synthetic
/// models) instead of `r_hat(x)`.
pub fn lyapunov_ratio_centered(sample: &Sample, cfg: &EstimatorConfig, x: f64, center: Option<f64>) -> Result<f64> {
    let smoother = KernelSmoother::new(sample, &cfg.kernel, cfg.h);
    let center = center.unwrap_or_else(|| smoother.regression_at(x, cfg.b).0);
    let n = smoother.n() as f64;
    let scale = 1.0 / (n * cfg.h);
    let mut zs = Vec::new();
    let mut reference = 0.0;
    for (xi, yi) in smoother.local(x) {
        let k = cfg.kernel.eval((x - xi) / cfg.h);
        zs.push(scale * (yi - center) * k);
        reference += (scale * yi * k).powi(2);
    }
    // points outside the window have Z_i = 0
    let zeros = n - zs.len() as f64;
    let mean = zs.iter().sum::<f64>() / n;
    let mut second = zeros * mean * mean;
    let mut third = zeros * mean.abs().powi(3);
    for z in &zs {
        let d = z - mean;
        second += d * d;
        third += d.abs().powi(3);
    }
    if !(second > 1e-20 * reference) || second < f64::MIN_POSITIVE {
        return Err(QError::DegenerateVariance(format!(
            "centered Z sum of squares {second} at x = {x}"
        )));
    }
    Ok(third / second.powf(1.5))
}

/// Theory predictions over a grid, for a fixed `n` and `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub grid: Vec<f64>,
    pub bias_leading: Vec<f64>,
    #[serde(rename = "script_E")]
    pub script_e: Vec<f64>,
    #[serde(rename = "script_V")]
    pub script_v: Vec<f64>,
    pub v_nk: f64,
    pub w_term: f64,
    pub rate: f64,
    pub bernstein_curve: Vec<(f64, f64)>,
    pub lyapunov_ratio: Option<f64>,
}

/// Inputs of [`theory_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryInputs {
    pub n: usize,
    pub h: f64,
    pub k: u32,
    pub c0: f64,
    pub l: f64,
    pub grid: Vec<f64>,
    /// Number of points on the Bernstein curve.
    pub t_points: usize,
}

pub fn theory_report(model: &TargetModel, kernel: &QKernel, inputs: &TheoryInputs) -> Result<TheoryReport> {
    let q = kernel.q();
    let TheoryInputs { n, h, k, c0, l, .. } = *inputs;
    let c = (n as f64 * h.powi(5)).sqrt();
    let mut bias_leading = Vec::with_capacity(inputs.grid.len());
    let mut script_e = Vec::with_capacity(inputs.grid.len());
    let mut script_v = Vec::with_capacity(inputs.grid.len());
    for &x in &inputs.grid {
        bias_leading.push(bias_rn(model, kernel, h, x)?);
        let (e, v) = clt_params(model, kernel, q, c, x)?;
        script_e.push(e);
        script_v.push(v);
    }
    let terms = rate_terms(model, kernel, q, n, h, k, c0, l)?;
    let bc = bernstein_constant(model, kernel, n, h, k, c0)?;
    let t_max = bernstein_domain_edge(terms.v_nk, bc, q).min(6.0 * terms.v_nk.sqrt());
    let bernstein_curve = (1..=inputs.t_points)
        .map(|i| {
            let t = t_max * i as f64 / inputs.t_points as f64;
            Ok((t, bernstein_bound(t, terms.v_nk, bc, q)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TheoryReport {
        grid: inputs.grid.clone(),
        bias_leading,
        script_e,
        script_v,
        v_nk: terms.v_nk,
        w_term: terms.w_term,
        rate: terms.rate,
        bernstein_curve,
        lyapunov_ratio: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qestim::{default_bandwidth, default_floor, linear_grid};
    use crate::qkernels::make_q_poly;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    fn default_model() -> TargetModel {
        TargetModel::from_spec(&ModelSpec::default()).unwrap()
    }

    #[test]
    fn model_basics() {
        let m = default_model();
        assert_relative_eq!(m.f(0.0), m.density_sup(), max_relative = 1e-12);
        assert_eq!(m.f(3.5), 0.0);
        assert_relative_eq!(m.r(1.0), 2.0 + 1f64.sin());
        assert_relative_eq!(m.noise_cond_var(0.0), 1.0 / 12.0);
        let spec: ModelSpec = serde_json::from_str(
            r#"{"density":{"kind":"bell","half_width":3.0},
                "regression":{"kind":"linear-sine","slope":2.0,"amplitude":1.0},
                "noise":{"kind":"uniform","half_width":0.5}}"#,
        )
        .unwrap();
        assert_eq!(spec, ModelSpec::default());
    }

    #[test]
    fn constant_regression_has_no_bias() {
        let spec = ModelSpec { regression: RegressionSpec::Constant { value: 1.7 }, ..ModelSpec::default() };
        let m = TargetModel::from_spec(&spec).unwrap();
        let k = make_q_poly(1, qp(0.9)).unwrap();
        for x in [-1.0, 0.3, 2.0] {
            assert!(bias_rn(&m, &k, 0.3, x).unwrap().abs() < 1e-8);
        }
        assert_eq!(bias_rn(&default_model(), &k, 0.0, 0.5).unwrap(), 0.0);
        assert!(matches!(bias_rn(&m, &k, 0.3, 4.0), Err(QError::Domain(_))));
    }

    #[test]
    fn bias_tends_to_classical_nadaraya_watson() {
        let m = default_model();
        let k = make_q_poly(1, qp(0.999)).unwrap();
        let (x, h): (f64, f64) = (1.0, 0.2);
        // m(x) = 2x + sin x and f the standard normal shape: f'/f = -x
        let (m1, m2) = (2.0 + x.cos(), -x.sin());
        let classical = 0.5 * h * h * 0.2 * (m2 + 2.0 * m1 * (-x));
        let ratio = bias_rn(&m, &k, h, x).unwrap() / classical;
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    }

    #[test]
    fn clt_parameters() {
        let m = default_model();
        let q = qp(0.99);
        let k = make_q_poly(1, q).unwrap();
        let (e, v) = clt_params(&m, &k, q, 0.0, 0.0).unwrap();
        assert_eq!(e, 0.0);
        // classical Epanechnikov int K^2 = 3/5
        let classical = (1.0 / 12.0) * 0.6 / m.f(0.0);
        assert!((v / classical - 1.0).abs() < 0.02, "{v} vs {classical}");

        let noiseless = ModelSpec { noise: NoiseSpec::None, ..ModelSpec::default() };
        let (_, v0) = clt_params(&TargetModel::from_spec(&noiseless).unwrap(), &k, q, 1.0, 0.5).unwrap();
        assert_eq!(v0, 0.0);
        assert!(clt_params(&m, &k, q, 1.0, 0.5).unwrap().0 != 0.0);
    }

    #[test]
    fn variance_scales_quadratically() {
        let m = default_model();
        let q = qp(0.9);
        let k = make_q_poly(2, q).unwrap();
        for alpha in [0.5, 2.0, -4.0] {
            let (_, v) = clt_params(&m, &k, q, 0.0, 0.3).unwrap();
            let (_, va) = clt_params(&m.scaled(alpha), &k, q, 0.0, 0.3).unwrap();
            assert_eq!(va, alpha * alpha * v);
        }
    }

    #[test]
    fn rate_terms_examples() {
        let m = default_model();
        let q = qp(0.99);
        let k = make_q_poly(1, q).unwrap();
        let a = rate_terms(&m, &k, q, 1000, 0.3, 0, 1.0, 2.0).unwrap();
        let b = rate_terms(&m, &k, q, 2000, 0.3, 0, 1.0, 2.0).unwrap();
        assert_relative_eq!(b.v_nk, 0.5 * a.v_nk, max_relative = 1e-14);
        let c = rate_terms(&m, &k, q, 1000, 0.3, 0, 7.0, 2.0).unwrap();
        assert_eq!(a.v_nk, c.v_nk);
        assert!(matches!(rate_terms(&m, &k, q, 1000, 0.3, 0, 1.0, 1.9), Err(QError::Parameter(_))));
    }

    #[test]
    fn rate_matches_independent_evaluation() {
        let m = default_model();
        let q = qp(0.99);
        let k = make_q_poly(1, q).unwrap();
        let n = 10_000usize;
        let h = default_bandwidth(n);
        let got = rate_terms(&m, &k, q, n, h, 0, 1.0, 2.0).unwrap();
        // straight transcription with plain powers
        let two_q = 1.0 + 0.99;
        let ln_q = ((n as f64).powf(0.01) - 1.0) / 0.01;
        let sup_f = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * statrs::function::erf::erf(3.0 / 2f64.sqrt()));
        let v = sup_f * k.square_integral() / (n as f64 * h);
        let w = 2.0 / two_q * k.moment2();
        let rate = 0.99 * w * h * h + (v * ln_q).sqrt();
        assert_relative_eq!(got.v_nk, v, max_relative = 1e-6);
        assert_relative_eq!(got.rate, rate, max_relative = 1e-6);
    }

    #[test]
    fn rate_decreases_in_n() {
        let m = default_model();
        let q = qp(0.99);
        let k = make_q_poly(1, q).unwrap();
        let rates: Vec<f64> = (8..=16)
            .map(|j| {
                let n = 1usize << j;
                rate_terms(&m, &k, q, n, default_bandwidth(n), 0, 1.0, 2.0).unwrap().rate
            })
            .collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
    }

    #[test]
    fn bernstein_examples() {
        let q = qp(0.999);
        let b = bernstein_bound(1.0, 1.0, 0.01, q).unwrap();
        assert!((b - (-1.0f64 / (2.0 * 1.01)).exp()).abs() < 1e-3, "{b}");
        let small = bernstein_bound(1e-9, 1.0, 0.1, qp(0.5)).unwrap();
        assert!((small - 1.0).abs() < 1e-12);
        assert!(bernstein_bound(0.0, 1.0, 0.1, qp(0.5)).is_err());
    }

    #[test]
    fn bernstein_decreasing_inside_domain() {
        let q = qp(0.5);
        let edge = bernstein_domain_edge(1.0, 0.1, q);
        let mut prev = 1.0;
        for i in 1..=200 {
            let t = edge * i as f64 / 201.0;
            let b = bernstein_bound(t, 1.0, 0.1, q).unwrap();
            assert!(b < prev && b <= 1.0);
            prev = b;
        }
        assert!(bernstein_bound(edge * 1.01, 1.0, 0.1, q).is_err());
    }

    #[test]
    fn markov_examples() {
        assert_eq!(markov_check(&[2.0; 10], 4.0).unwrap(), (0.0, 0.5));
        assert_eq!(markov_check(&[2.0; 10], 1.0).unwrap(), (1.0, 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let (emp, bound) = markov_check(&u, 0.9).unwrap();
        assert!((emp - 0.1).abs() < 0.005 && (bound - 0.5 / 0.9).abs() < 0.005);
        assert!(emp <= bound);
    }

    #[test]
    fn lyapunov_degenerate_and_shift() {
        let k = make_q_poly(0, qp(0.5)).unwrap();
        let s = Sample::new(vec![-0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let cfg = EstimatorConfig::new(k.clone(), 1.0, 0.1, vec![0.0]).unwrap();
        assert!(matches!(lyapunov_ratio(&s, &cfg, 0.0), Err(QError::DegenerateVariance(_))));

        let m = default_model();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..2000).map(|_| m.draw_x(&mut rng)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| m.draw_y(x, &mut rng)).collect();
        let s = Sample::new(xs, ys).unwrap();
        let cfg = EstimatorConfig::new(make_q_poly(1, qp(0.99)).unwrap(), 0.3, 0.05, vec![0.0]).unwrap();
        let a = lyapunov_ratio(&s, &cfg, 0.0).unwrap();
        let b = lyapunov_ratio(&s.map_ys(|y| y + 3.0).unwrap(), &cfg, 0.0).unwrap();
        assert!((a - b).abs() < 1e-8 * a, "{a} vs {b}");
    }

    #[test]
    fn lyapunov_shrinks_with_n() {
        let m = default_model();
        let k = make_q_poly(1, qp(0.99)).unwrap();
        let mut ratios = Vec::new();
        for n in [1_000usize, 8_000, 64_000] {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let xs: Vec<f64> = (0..n).map(|_| m.draw_x(&mut rng)).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| m.draw_y(x, &mut rng)).collect();
            let cfg = EstimatorConfig::new(k.clone(), default_bandwidth(n), default_floor(n), vec![0.0]).unwrap();
            ratios.push(lyapunov_ratio(&Sample::new(xs, ys).unwrap(), &cfg, 0.0).unwrap());
        }
        assert!(ratios[2] < ratios[0], "{ratios:?}");
    }

    #[test]
    fn report_serializes_with_stable_names() {
        let m = default_model();
        let k = make_q_poly(1, qp(0.9)).unwrap();
        let inputs = TheoryInputs { n: 1000, h: 0.25, k: 0, c0: 1.0, l: 2.0, grid: linear_grid(-1.0, 1.0, 5), t_points: 10 };
        let report = theory_report(&m, &k, &inputs).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in ["bias_leading", "script_E", "script_V", "v_nk", "w_term", "rate", "bernstein_curve", "lyapunov_ratio"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(report.script_v.iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    proptest! {
        #[test]
        fn bernstein_at_most_one(t in 1e-6f64..50.0, v in 1e-3f64..10.0, c in 1e-3f64..1.0, q in 0.05f64..0.999) {
            let q = qp(q);
            if t < bernstein_domain_edge(v, c, q) {
                let b = bernstein_bound(t, v, c, q).unwrap();
                prop_assert!(b < 1.0 && b >= 0.0);
            }
        }
    }
}
