//! Replicated Monte Carlo runs and the checks computed from them.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Check, ExperimentConfig, SamplingMode};
use super::sampler::{build_sampler, QSampler};
use super::stats::{ks_standard_normal, mean, ols_slope, sample_variance};
use crate::error::{QError, Result};
use crate::qcalc::jackson_integral;
use crate::qcore::{QParam, SeriesPolicy};
use crate::qestim::{linear_grid, EstimatorConfig, KernelSmoother, Sample};
use crate::qkernels::{make_kernel, QKernel};
use crate::qtheory::{
    bernstein_bound, bernstein_constant, bernstein_domain_edge, bias_rn, clt_params, lyapunov_ratio_centered,
    rate_terms, TargetModel,
};

/// Minimum KS p-value for the normality check.
pub const NORMALITY_LEVEL: f64 = 0.01;
/// Relative tolerance of the variance law.
pub const VARIANCE_TOLERANCE: f64 = 0.2;
/// Accepted range of the log-bias against log-h slope.
pub const BIAS_SLOPE_RANGE: (f64, f64) = (1.7, 2.3);
/// Relative tolerance of the pointwise bias prediction, applied for `h` in [`BIAS_POINTWISE_H`].
pub const BIAS_POINTWISE_TOLERANCE: f64 = 0.25;
pub const BIAS_POINTWISE_H: (f64, f64) = (0.1, 0.3);
/// Upper bound on the sup-error to rate ratio.
pub const RATE_RATIO_BOUND: f64 = 10.0;
/// Binomial standard errors of slack in the Bernstein comparison.
pub const BERNSTEIN_SLACK_SE: f64 = 3.0;
/// Bound value at which the automatic Bernstein threshold grid ends.
pub const BERNSTEIN_GRID_FLOOR: f64 = 1e-4;
pub const CONSTANT_RECOVERY_TOLERANCE: f64 = 1e-12;

/// A plot-ready table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table { name, columns: columns.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| QError::Io(e.to_string()))?;
        w.write_record(&self.columns).map_err(|e| QError::Io(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| QError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityResult {
    pub n: usize,
    pub h: f64,
    pub x: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeResult {
    pub x: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub config_hash: String,
    pub mode: SamplingMode,
    pub q: f64,
    pub kernel: String,
    pub replicates: usize,
    pub n_values: Vec<usize>,
    pub checks: Vec<CheckOutcome>,
    pub normality: Vec<NormalityResult>,
    /// Bias slope at the first evaluation point.
    pub bias_slope: Option<f64>,
    pub bias_slopes: Vec<SlopeResult>,
    pub rate_max_ratio: Option<f64>,
    pub lyapunov_slope: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub hash: String,
    pub tables: Vec<Table>,
    pub summary: Summary,
}

impl ExperimentReport {
    pub fn checks(&self) -> &[CheckOutcome] {
        &self.summary.checks
    }

    pub fn all_passed(&self) -> bool {
        self.summary.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn stem(&self) -> String {
        format!("{}-{}", self.config.name, self.hash)
    }

    /// Writes one CSV per table and `<name>-<hash>-summary.json`; returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for table in &self.tables {
            let path = dir.join(format!("{}-{}.csv", self.stem(), table.name));
            table.write_csv(&path)?;
            paths.push(path);
        }
        let path = dir.join(format!("{}-summary.json", self.stem()));
        let json = serde_json::to_string_pretty(&self.summary).map_err(|e| QError::Io(e.to_string()))?;
        std::fs::write(&path, json + "\n")?;
        paths.push(path);
        Ok(paths)
    }
}

struct PointValue {
    r_hat: f64,
    floored: bool,
}

#[derive(Default)]
struct Replicate {
    /// Indexed `[h][x]`.
    point: Vec<PointValue>,
    /// Sup errors of `f_hat`, `g_hat`, `r_hat`.
    sup: Option<[f64; 3]>,
    /// Indexed `[k][x]`.
    gammas: Vec<f64>,
    lyapunov: Option<f64>,
    constant_err: Option<f64>,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    q: QParam,
    model: TargetModel,
    kernel: QKernel,
    sampler: Option<QSampler>,
    sup_grid: Vec<f64>,
}

impl Context<'_> {
    fn wants(&self, check: Check) -> bool {
        self.cfg.checks.contains(&check)
    }

    fn wants_points(&self) -> bool {
        [Check::Normality, Check::VarianceLaw, Check::BiasSlope, Check::BiasPointwise]
            .iter()
            .any(|c| self.wants(*c))
    }

    fn draw_sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Sample> {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x = match &self.sampler {
                Some(s) => s.sample(rng),
                None => self.model.draw_x(rng),
            };
            ys.push(self.model.draw_y(x, rng));
            xs.push(x);
        }
        Sample::new(xs, ys)
    }

    fn replicate(&self, n_idx: usize, n: usize, rep: usize) -> Result<Replicate> {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(((n_idx as u64) << 40) | rep as u64);
        let sample = self.draw_sample(n, &mut rng)?;
        let b = cfg.b_rule.at(n);
        let h_main = cfg.h_rule.at(n);
        let mut out = Replicate::default();

        let mut smoother = KernelSmoother::new(&sample, &self.kernel, h_main);
        if self.wants_points() {
            for h in cfg.pointwise_bandwidths(n) {
                smoother.set_bandwidth(h);
                for &x in &cfg.x_points {
                    let (r_hat, floored) = smoother.regression_at(x, b);
                    out.point.push(PointValue { r_hat, floored });
                }
            }
        }
        smoother.set_bandwidth(h_main);
        if self.wants(Check::Rate) || self.wants(Check::ConstantRecovery) {
            let (mut sf, mut sg, mut sr) = (0.0f64, 0.0f64, f64::NAN);
            let mut constant_err = 0.0f64;
            for &x in &self.sup_grid {
                let [f_hat, g_hat] = smoother.gammas_at(x, [0, 1]);
                let (r_hat, floored) = smoother.regression_at(x, b);
                sf = sf.max((f_hat - self.model.f(x)).abs());
                sg = sg.max((g_hat - self.model.g(x)).abs());
                // r_hat is only controlled where the density clears the floor
                if !floored && self.model.f(x) >= b {
                    sr = sr.max((r_hat - self.model.r(x)).abs());
                }
                if !floored && f_hat > 0.0 {
                    constant_err = constant_err.max((r_hat - self.model.r(x)).abs());
                }
            }
            out.sup = Some([sf, sg, sr]);
            out.constant_err = Some(constant_err);
        }
        if self.wants(Check::Bernstein) {
            for &k in &cfg.bernstein.k_values {
                for &x in &cfg.x_points {
                    out.gammas.push(smoother.gamma_at(x, k));
                }
            }
        }
        if self.wants(Check::Lyapunov) {
            let x = cfg.x_points[0];
            let est = EstimatorConfig::new(self.kernel.clone(), h_main, b, vec![x])?;
            let center = cfg.lyapunov_true_center.then(|| self.model.r(x));
            out.lyapunov = Some(lyapunov_ratio_centered(&sample, &est, x, center)?);
        }
        Ok(out)
    }
}

fn build_context(cfg: &ExperimentConfig) -> Result<Context<'_>> {
    cfg.validate()?;
    let q = cfg.qparam()?;
    let policy = SeriesPolicy::scaled_for(q, 1e-14)?;
    let model = TargetModel::from_spec(&cfg.model)?;
    let kernel = make_kernel(cfg.kernel, q, &policy)?;
    let sampler = match cfg.mode {
        SamplingMode::ClassicalLimit => None,
        SamplingMode::QNative => {
            // the continuous density is renormalized under the Jackson measure before sampling
            let nu = q.nu();
            let f = |x: f64| model.f(x);
            let mass = jackson_integral(f, -nu, nu, q, &policy)?.checked()?;
            if !(mass > 0.0) {
                return Err(QError::InvalidDensity { mass, tolerance: 0.0 });
            }
            Some(build_sampler(|x| model.f(x) / mass, q, &policy, cfg.seed)?)
        }
    };
    let g = cfg.sup_grid;
    Ok(Context { cfg, q, model, kernel, sampler, sup_grid: linear_grid(g.lo, g.hi, g.count) })
}

/// Runs every replicate for every `n` and evaluates the configured checks.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let ctx = build_context(cfg)?;
    let mut failures = Table::new("failures", &["n", "replicate", "message"]);
    let mut runs: Vec<Vec<Replicate>> = Vec::with_capacity(cfg.n_values.len());
    for (n_idx, &n) in cfg.n_values.iter().enumerate() {
        let results: Vec<Result<Replicate>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|rep| ctx.replicate(n_idx, n, rep))
            .collect();
        let mut ok = Vec::with_capacity(results.len());
        for (rep, res) in results.into_iter().enumerate() {
            match res {
                Ok(r) => ok.push(r),
                Err(e) => failures.push(vec![n.to_string(), rep.to_string(), e.to_string()]),
            }
        }
        runs.push(ok);
    }

    let mut summary = Summary {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        mode: cfg.mode,
        q: cfg.q,
        kernel: ctx.kernel.kind().to_string(),
        replicates: cfg.replicates,
        n_values: cfg.n_values.clone(),
        checks: Vec::new(),
        normality: Vec::new(),
        bias_slope: None,
        bias_slopes: Vec::new(),
        rate_max_ratio: None,
        lyapunov_slope: None,
        failures: 0,
    };
    let mut tables = Vec::new();
    let mut outcomes = Vec::new();

    if ctx.wants_points() {
        let (pointwise, standardized, point_outcomes) = pointwise_analysis(&ctx, &runs, &mut summary, &mut failures);
        tables.push(pointwise);
        if let Some(t) = standardized {
            tables.push(t);
        }
        outcomes.extend(point_outcomes);
    }
    if ctx.wants(Check::Rate) {
        let (sup_table, ratio_table, outcome) = rate_analysis(&ctx, &runs, &mut summary)?;
        tables.push(sup_table);
        tables.push(ratio_table);
        outcomes.push(outcome);
    }
    if ctx.wants(Check::ConstantRecovery) {
        let worst = runs
            .iter()
            .flatten()
            .filter_map(|r| r.constant_err)
            .fold(0.0f64, f64::max);
        outcomes.push(CheckOutcome {
            check: Check::ConstantRecovery.name().into(),
            passed: worst < CONSTANT_RECOVERY_TOLERANCE,
            detail: format!("max sup-error of r_hat at non-floored points {worst:e}"),
        });
    }
    if ctx.wants(Check::Bernstein) {
        let (table, outcome) = bernstein_analysis(&ctx, &runs)?;
        tables.push(table);
        outcomes.push(outcome);
    }
    if ctx.wants(Check::Lyapunov) {
        let (table, outcome) = lyapunov_analysis(&ctx, &runs, &mut summary);
        tables.push(table);
        outcomes.push(outcome);
    }

    outcomes.sort_by_key(|o| cfg.checks.iter().position(|c| c.name() == o.check));
    summary.failures = failures.rows.len();
    summary.checks = outcomes;
    let mut checks_table = Table::new("checks", &["check", "passed", "detail"]);
    for o in &summary.checks {
        checks_table.push(vec![o.check.clone(), o.passed.to_string(), o.detail.clone()]);
    }
    tables.push(failures);
    tables.push(checks_table);
    Ok(ExperimentReport { config: cfg.clone(), hash: cfg.hash(), tables, summary })
}

fn outcome(check: Check, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { check: check.name().into(), passed, detail }
}

fn pointwise_analysis(
    ctx: &Context,
    runs: &[Vec<Replicate>],
    summary: &mut Summary,
    failures: &mut Table,
) -> (Table, Option<Table>, Vec<CheckOutcome>) {
    let cfg = ctx.cfg;
    let mut table = Table::new(
        "pointwise",
        &[
            "n", "h", "x", "replicates", "mean_r_hat", "true_r", "empirical_bias", "predicted_bias",
            "empirical_sd", "empirical_var_nh", "predicted_var_nh", "floored_fraction", "ks_statistic", "ks_p_value",
        ],
    );
    let mut standardized = cfg
        .checks
        .contains(&Check::Normality)
        .then(|| Table::new("standardized", &["n", "h", "x", "replicate", "statistic"]));
    let nx = cfg.x_points.len();
    let last = cfg.n_values.len() - 1;
    let mut normality_ok = true;
    let mut variance_worst = 0.0f64;
    let mut variance_ok = true;
    let mut pointwise_worst = 0.0f64;
    let mut pointwise_ok = true;
    let mut pointwise_count = 0usize;
    // (x index) -> (ln h, ln |bias|) at the largest n
    let mut bias_curves: Vec<Vec<(f64, f64)>> = vec![Vec::new(); nx];

    for (n_idx, &n) in cfg.n_values.iter().enumerate() {
        let reps = &runs[n_idx];
        for (h_idx, h) in cfg.pointwise_bandwidths(n).into_iter().enumerate() {
            for (x_idx, &x) in cfg.x_points.iter().enumerate() {
                let slot = h_idx * nx + x_idx;
                let values: Vec<f64> = reps.iter().map(|r| r.point[slot].r_hat).collect();
                let floored = reps.iter().filter(|r| r.point[slot].floored).count();
                let truth = ctx.model.r(x);
                let predicted_bias = bias_rn(&ctx.model, &ctx.kernel, h, x);
                let clt = clt_params(&ctx.model, &ctx.kernel, ctx.q, (n as f64 * h.powi(5)).sqrt(), x);
                let (predicted_bias, script_v) = match (predicted_bias, clt) {
                    (Ok(b), Ok((_, v))) => (b, v),
                    (Err(e), _) | (_, Err(e)) => {
                        failures.push(vec![n.to_string(), "-".into(), format!("prediction at h = {h}, x = {x}: {e}")]);
                        (f64::NAN, f64::NAN)
                    }
                };
                let nh = n as f64 * h;
                let (m, var) = if values.is_empty() { (f64::NAN, f64::NAN) } else { (mean(&values), sample_variance(&values)) };
                let bias = m - truth;
                let (ks_d, ks_p) = if script_v > 0.0 && values.len() > 1 {
                    let z: Vec<f64> = values
                        .iter()
                        .map(|v| nh.sqrt() * (v - truth - predicted_bias) / script_v.sqrt())
                        .collect();
                    if let Some(t) = standardized.as_mut() {
                        for (rep, zi) in z.iter().enumerate() {
                            t.push(vec![n.to_string(), fmt(h), fmt(x), rep.to_string(), fmt(*zi)]);
                        }
                    }
                    ks_standard_normal(&z)
                } else {
                    (f64::NAN, f64::NAN)
                };
                table.push(vec![
                    n.to_string(),
                    fmt(h),
                    fmt(x),
                    values.len().to_string(),
                    fmt(m),
                    fmt(truth),
                    fmt(bias),
                    fmt(predicted_bias),
                    fmt(var.sqrt()),
                    fmt(var * nh),
                    fmt(script_v),
                    fmt(floored as f64 / reps.len().max(1) as f64),
                    fmt(ks_d),
                    fmt(ks_p),
                ]);
                summary.normality.push(NormalityResult { n, h, x, ks_statistic: ks_d, p_value: ks_p });
                normality_ok &= ks_p >= NORMALITY_LEVEL;
                if n_idx == last {
                    let rel = (var * nh / script_v - 1.0).abs();
                    variance_worst = variance_worst.max(rel);
                    variance_ok &= rel <= VARIANCE_TOLERANCE;
                    bias_curves[x_idx].push((h.ln(), bias.abs().ln()));
                    if (BIAS_POINTWISE_H.0..=BIAS_POINTWISE_H.1).contains(&h) {
                        let rel = (bias / predicted_bias - 1.0).abs();
                        pointwise_worst = pointwise_worst.max(rel);
                        pointwise_ok &= rel <= BIAS_POINTWISE_TOLERANCE;
                        pointwise_count += 1;
                    }
                }
            }
        }
    }

    let mut outcomes = Vec::new();
    if cfg.checks.contains(&Check::Normality) {
        let min_p = summary.normality.iter().map(|r| r.p_value).fold(f64::INFINITY, f64::min);
        outcomes.push(outcome(
            Check::Normality,
            normality_ok,
            format!("min KS p-value {min_p:.4} (need >= {NORMALITY_LEVEL})"),
        ));
    }
    if cfg.checks.contains(&Check::VarianceLaw) {
        outcomes.push(outcome(
            Check::VarianceLaw,
            variance_ok,
            format!("max |Var(r_hat) n h / V_q - 1| = {variance_worst:.4} (need <= {VARIANCE_TOLERANCE})"),
        ));
    }
    if cfg.checks.contains(&Check::BiasSlope) {
        let mut ok = true;
        for (x_idx, curve) in bias_curves.iter().enumerate() {
            let slope = if curve.len() >= 2 {
                let (lx, ly): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
                ols_slope(&lx, &ly)
            } else {
                f64::NAN
            };
            ok &= (BIAS_SLOPE_RANGE.0..=BIAS_SLOPE_RANGE.1).contains(&slope);
            summary.bias_slopes.push(SlopeResult { x: cfg.x_points[x_idx], slope });
        }
        summary.bias_slope = summary.bias_slopes.first().map(|s| s.slope);
        let listed: Vec<String> = summary.bias_slopes.iter().map(|s| format!("x = {}: {:.3}", s.x, s.slope)).collect();
        outcomes.push(outcome(
            Check::BiasSlope,
            ok,
            format!("log-bias vs log-h slopes [{}] (need within [{}, {}])", listed.join(", "), BIAS_SLOPE_RANGE.0, BIAS_SLOPE_RANGE.1),
        ));
    }
    if cfg.checks.contains(&Check::BiasPointwise) {
        outcomes.push(outcome(
            Check::BiasPointwise,
            pointwise_ok && pointwise_count > 0,
            format!(
                "max relative bias error {pointwise_worst:.4} over {pointwise_count} (h, x) pairs (need <= {BIAS_POINTWISE_TOLERANCE})"
            ),
        ));
    }
    (table, standardized, outcomes)
}

fn rate_analysis(ctx: &Context, runs: &[Vec<Replicate>], summary: &mut Summary) -> Result<(Table, Table, CheckOutcome)> {
    let cfg = ctx.cfg;
    let mut sup_table = Table::new("sup_errors", &["n", "replicate", "h", "sup_f", "sup_g", "sup_r"]);
    let mut ratio_table = Table::new("rate_ratios", &["n", "h", "b", "target", "mean_sup_error", "rate", "ratio"]);
    let targets = [("f_hat", 0u32, 0usize), ("g_hat", 1, 1), ("r_hat", 1, 2)];
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];
    let log_n: Vec<f64> = cfg.n_values.iter().map(|&n| (n as f64).ln()).collect();
    for (n_idx, &n) in cfg.n_values.iter().enumerate() {
        let h = cfg.h_rule.at(n);
        for (rep, r) in runs[n_idx].iter().enumerate() {
            if let Some([sf, sg, sr]) = r.sup {
                sup_table.push(vec![n.to_string(), rep.to_string(), fmt(h), fmt(sf), fmt(sg), fmt(sr)]);
            }
        }
        for (t_idx, &(label, k, col)) in targets.iter().enumerate() {
            let errs: Vec<f64> = runs[n_idx].iter().filter_map(|r| r.sup.map(|s| s[col])).collect();
            let mean_err = if errs.is_empty() { f64::NAN } else { mean(&errs) };
            let rate = rate_terms(&ctx.model, &ctx.kernel, ctx.q, n, h, k, cfg.c0, cfg.l)?.rate;
            let ratio = mean_err / rate;
            series[t_idx].push(ratio);
            ratio_table.push(vec![
                n.to_string(),
                fmt(h),
                fmt(cfg.b_rule.at(n)),
                label.into(),
                fmt(mean_err),
                fmt(rate),
                fmt(ratio),
            ]);
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    let mut max_ratio = 0.0f64;
    for (t_idx, &(label, _, _)) in targets.iter().enumerate() {
        let ratios = &series[t_idx];
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slope = if ratios.len() >= 2 { ols_slope(&log_n, ratios) } else { 0.0 };
        ok &= max.is_finite() && max <= RATE_RATIO_BOUND && slope <= 0.0;
        max_ratio = max_ratio.max(max);
        parts.push(format!("{label}: max ratio {max:.3}, trend {slope:.4}"));
    }
    summary.rate_max_ratio = Some(max_ratio);
    let detail = format!("{} (need max <= {RATE_RATIO_BOUND} and trend <= 0)", parts.join("; "));
    Ok((sup_table, ratio_table, outcome(Check::Rate, ok, detail)))
}

/// Threshold grid ending where the bound falls to [`BERNSTEIN_GRID_FLOOR`] or
/// the `exp_q` domain ends, whichever comes first.
fn auto_t_grid(v: f64, c: f64, q: QParam, points: usize) -> Result<Vec<f64>> {
    let edge = bernstein_domain_edge(v, c, q);
    let mut hi = if edge.is_finite() { edge } else { 1.0 };
    while !edge.is_finite() && bernstein_bound(hi, v, c, q)? > BERNSTEIN_GRID_FLOOR {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || bernstein_bound(mid, v, c, q)? > BERNSTEIN_GRID_FLOOR {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((1..=points).map(|i| hi * i as f64 / points as f64).collect())
}

fn bernstein_analysis(ctx: &Context, runs: &[Vec<Replicate>]) -> Result<(Table, CheckOutcome)> {
    let cfg = ctx.cfg;
    let mut table = Table::new(
        "bernstein",
        &["n", "k", "x", "t", "empirical", "bound", "standard_error", "passed"],
    );
    let nx = cfg.x_points.len();
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for (n_idx, &n) in cfg.n_values.iter().enumerate() {
        let h = cfg.h_rule.at(n);
        let reps = &runs[n_idx];
        for (k_idx, &k) in cfg.bernstein.k_values.iter().enumerate() {
            let v = rate_terms(&ctx.model, &ctx.kernel, ctx.q, n, h, k, cfg.c0, cfg.l)?.v_nk;
            let c = bernstein_constant(&ctx.model, &ctx.kernel, n, h, k, cfg.c0)?;
            let t_grid = match &cfg.bernstein.t_grid {
                Some(ts) => ts.clone(),
                None => auto_t_grid(v, c, ctx.q, cfg.bernstein.t_points)?,
            };
            for (x_idx, &x) in cfg.x_points.iter().enumerate() {
                let values: Vec<f64> = reps.iter().map(|r| r.gammas[k_idx * nx + x_idx]).collect();
                let center = mean(&values);
                let devs: Vec<f64> = values.iter().map(|g| (g - center).abs()).collect();
                let count = devs.len() as f64;
                for &t in &t_grid {
                    let p = devs.iter().filter(|&&d| d >= t).count() as f64 / count;
                    let bound = match bernstein_bound(t, v, c, ctx.q) {
                        Ok(b) => b,
                        // beyond the exp_q domain the bound is zero
                        Err(QError::Domain(_)) => 0.0,
                        Err(e) => return Err(e),
                    };
                    // the larger of the binomial errors at the observed rate and at the bound
                    let se = (p * (1.0 - p) / count).sqrt().max((bound * (1.0 - bound) / count).sqrt());
                    let passed = p <= bound + BERNSTEIN_SLACK_SE * se;
                    ok &= passed;
                    worst = worst.max(p - bound - BERNSTEIN_SLACK_SE * se);
                    table.push(vec![
                        n.to_string(),
                        k.to_string(),
                        fmt(x),
                        fmt(t),
                        fmt(p),
                        fmt(bound),
                        fmt(se),
                        passed.to_string(),
                    ]);
                }
            }
        }
    }
    let detail = format!(
        "{} thresholds; worst margin empirical - bound - {BERNSTEIN_SLACK_SE} SE = {worst:.4} (need <= 0)",
        table.rows.len()
    );
    Ok((table, outcome(Check::Bernstein, ok, detail)))
}

fn lyapunov_analysis(ctx: &Context, runs: &[Vec<Replicate>], summary: &mut Summary) -> (Table, CheckOutcome) {
    let cfg = ctx.cfg;
    let mut table = Table::new("lyapunov", &["n", "h", "x", "replicates", "mean_ratio", "sd_ratio"]);
    let (mut log_n, mut log_ratio) = (Vec::new(), Vec::new());
    for (n_idx, &n) in cfg.n_values.iter().enumerate() {
        let ratios: Vec<f64> = runs[n_idx].iter().filter_map(|r| r.lyapunov).collect();
        let m = if ratios.is_empty() { f64::NAN } else { mean(&ratios) };
        table.push(vec![
            n.to_string(),
            fmt(cfg.h_rule.at(n)),
            fmt(cfg.x_points[0]),
            ratios.len().to_string(),
            fmt(m),
            fmt(sample_variance(&ratios).sqrt()),
        ]);
        if m > 0.0 {
            log_n.push((n as f64).ln());
            log_ratio.push(m.ln());
        }
    }
    let slope = if log_n.len() >= 2 { ols_slope(&log_n, &log_ratio) } else { f64::NAN };
    summary.lyapunov_slope = Some(slope);
    let detail = format!("log-ratio vs log-n slope {slope:.4} (need < 0)");
    (table, outcome(Check::Lyapunov, slope < 0.0, detail))
}

/// Exceedance table of `|Gamma_hat_k(x) - mean|` against the q-Bernstein bound
/// at the given thresholds (or the automatic grid when `None`).
pub fn verify_bernstein(cfg: &ExperimentConfig, t_grid: Option<&[f64]>) -> Result<(Table, CheckOutcome)> {
    let mut cfg = cfg.clone();
    cfg.checks = vec![Check::Bernstein];
    if let Some(ts) = t_grid {
        cfg.bernstein.t_grid = Some(ts.to_vec());
    }
    let report = run_experiment(&cfg)?;
    let table = report.table("bernstein").cloned().expect("bernstein table present");
    let outcome = report.summary.checks[0].clone();
    Ok((table, outcome))
}
