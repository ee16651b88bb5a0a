//! q-kernel estimators of the design density, `Gamma_k` and the regression function.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{QError, Result};
use crate::qkernels::QKernel;

/// Highest power of `Y` accepted by [`estimate_gamma`].
pub const MAX_GAMMA_POWER: u32 = 8;

/// Lower clamp `epsilon` of the default density floor.
pub const DEFAULT_FLOOR_EPSILON: f64 = 1e-3;

/// Paired observations `(X_i, Y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Sample {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(QError::InvalidParameter(format!(
                "sample has {} x values but {} y values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(QError::InvalidParameter("sample is empty".into()));
        }
        if let Some(i) = xs.iter().chain(&ys).position(|v| !v.is_finite()) {
            return Err(QError::InvalidParameter(format!(
                "sample entry {} is not finite",
                i % xs.len()
            )));
        }
        Ok(Sample { xs, ys })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Same design points with every response replaced by `map(y)`.
    pub fn map_ys(&self, map: impl Fn(f64) -> f64) -> Result<Sample> {
        Sample::new(self.xs.clone(), self.ys.iter().map(|&y| map(y)).collect())
    }

    /// Reads a CSV with header `x,y` and one observation per row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Sample> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| QError::Parse { line: 1, message: e.to_string() })?
            .clone();
        if header.len() != 2 || &header[0] != "x" || &header[1] != "y" {
            return Err(QError::Parse {
                line: 1,
                message: format!("expected header `x,y`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| QError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<f64> {
                let raw = &record[i];
                let v: f64 = raw.parse().map_err(|_| QError::Parse {
                    line,
                    message: format!("cannot parse `{raw}` as a number"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(QError::Parse { line, message: format!("value `{raw}` is not finite") })
                }
            };
            xs.push(field(0)?);
            ys.push(field(1)?);
        }
        if xs.is_empty() {
            return Err(QError::Parse { line: 2, message: "no observations after the header".into() });
        }
        Sample::new(xs, ys)
    }

    pub fn from_csv_path(path: &Path) -> Result<Sample> {
        let file = std::fs::File::open(path).map_err(|e| QError::Io(format!("{}: {e}", path.display())))?;
        Sample::from_csv_reader(std::io::BufReader::new(file))
    }
}

/// Kernel, bandwidth `h`, density floor `b` and evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kernel: QKernel,
    pub h: f64,
    pub b: f64,
    pub grid: Vec<f64>,
}

impl EstimatorConfig {
    pub fn new(kernel: QKernel, h: f64, b: f64, grid: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(QError::InvalidParameter(format!("bandwidth must be positive, got {h}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(QError::InvalidParameter(format!("floor must be positive, got {b}")));
        }
        if grid.is_empty() {
            return Err(QError::InvalidParameter("evaluation grid is empty".into()));
        }
        if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(QError::InvalidParameter("evaluation grid must be finite and sorted".into()));
        }
        Ok(EstimatorConfig { kernel, h, b, grid })
    }
}

/// `count` equally spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `h = n^{-1/5}`.
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-0.2)
}

/// `b = max(epsilon, n^{-1/10})` with `epsilon = 1e-3`.
pub fn default_floor(n: usize) -> f64 {
    DEFAULT_FLOOR_EPSILON.max((n as f64).powf(-0.1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSet {
    pub f_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub gamma_hat: BTreeMap<u32, Vec<f64>>,
    pub floored_mask: Vec<bool>,
}

/// A sample sorted by design point, for windowed kernel sums.
#[derive(Debug, Clone)]
pub struct KernelSmoother<'k> {
    kernel: &'k QKernel,
    h: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl<'k> KernelSmoother<'k> {
    pub fn new(sample: &Sample, kernel: &'k QKernel, h: f64) -> Self {
        let mut order: Vec<usize> = (0..sample.n()).collect();
        order.sort_by(|&i, &j| sample.xs[i].total_cmp(&sample.xs[j]));
        KernelSmoother {
            kernel,
            h,
            xs: order.iter().map(|&i| sample.xs[i]).collect(),
            ys: order.iter().map(|&i| sample.ys[i]).collect(),
        }
    }

    fn window(&self, x: f64) -> std::ops::Range<usize> {
        let reach = self.h * self.kernel.support_halfwidth();
        let lo = self.xs.partition_point(|&xi| xi < x - reach);
        let hi = self.xs.partition_point(|&xi| xi <= x + reach);
        lo..hi
    }

    /// `(1/(nh)) sum_i Y_i^k K((x - X_i)/h)` for each requested power.
    pub fn gammas_at<const N: usize>(&self, x: f64, powers: [u32; N]) -> [f64; N] {
        let mut acc = [0.0; N];
        for i in self.window(x) {
            let w = self.kernel.eval((x - self.xs[i]) / self.h);
            if w == 0.0 {
                continue;
            }
            for (a, &k) in acc.iter_mut().zip(&powers) {
                *a += self.ys[i].powi(k as i32) * w;
            }
        }
        let scale = 1.0 / (self.xs.len() as f64 * self.h);
        acc.map(|a| a * scale)
    }

    pub fn gamma_at(&self, x: f64, k: u32) -> f64 {
        self.gammas_at(x, [k])[0]
    }

    /// `f_hat(x)`.
    pub fn density_at(&self, x: f64) -> f64 {
        self.gamma_at(x, 0)
    }

    /// `(r_hat(x), floored)` with the denominator clamped at `b/2`.
    pub fn regression_at(&self, x: f64, b: f64) -> (f64, bool) {
        let [f, g] = self.gammas_at(x, [0, 1]);
        floor_ratio(g, f, b)
    }

    /// `(X_i, Y_i)` pairs inside the kernel window around `x`.
    pub(crate) fn local(&self, x: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.window(x).map(move |i| (self.xs[i], self.ys[i]))
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    /// Reuses the sorted sample with another bandwidth.
    pub fn set_bandwidth(&mut self, h: f64) {
        self.h = h;
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> &QKernel {
        self.kernel
    }
}

fn floor_ratio(g: f64, f: f64, b: f64) -> (f64, bool) {
    let floor = 0.5 * b;
    if f < floor {
        (g / floor, true)
    } else {
        (g / f, false)
    }
}

fn check_power(k: u32) -> Result<()> {
    if k > MAX_GAMMA_POWER {
        return Err(QError::InvalidParameter(format!(
            "power k = {k} exceeds the supported maximum {MAX_GAMMA_POWER}"
        )));
    }
    Ok(())
}

/// `Gamma_hat_k` on the configured grid. `k = 0` is `f_hat`, `k = 1` is `g_hat`.
pub fn estimate_gamma(sample: &Sample, cfg: &EstimatorConfig, k: u32) -> Result<Vec<f64>> {
    check_power(k)?;
    let smoother = KernelSmoother::new(sample, &cfg.kernel, cfg.h);
    Ok(cfg.grid.iter().map(|&x| smoother.gamma_at(x, k)).collect())
}

/// `r_hat = g_hat / max(f_hat, b/2)` together with `f_hat`, `g_hat` and `Gamma_hat_2`.
pub fn estimate_regression(sample: &Sample, cfg: &EstimatorConfig) -> EstimateSet {
    let smoother = KernelSmoother::new(sample, &cfg.kernel, cfg.h);
    let m = cfg.grid.len();
    let (mut f_hat, mut g_hat, mut gamma2) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    let (mut r_hat, mut floored_mask) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for &x in &cfg.grid {
        let [f, g, g2] = smoother.gammas_at(x, [0, 1, 2]);
        let (r, floored) = floor_ratio(g, f, cfg.b);
        f_hat.push(f);
        g_hat.push(g);
        gamma2.push(g2);
        r_hat.push(r);
        floored_mask.push(floored);
    }
    let gamma_hat = BTreeMap::from([(0, f_hat.clone()), (1, g_hat.clone()), (2, gamma2)]);
    EstimateSet { f_hat, g_hat, r_hat, gamma_hat, floored_mask }
}

/// `max_i |estimate_i - truth(grid_i)|`.
pub fn sup_error(estimate: &[f64], truth: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    assert_eq!(estimate.len(), grid.len(), "estimate and grid lengths differ");
    estimate
        .iter()
        .zip(grid)
        .map(|(e, &x)| (e - truth(x)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcalc::jackson_integral;
    use crate::qcore::{QParam, SeriesPolicy};
    use crate::qkernels::make_q_poly;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect() -> QKernel {
        make_q_poly(0, QParam::new(0.5).unwrap()).unwrap()
    }

    fn epan(q: f64) -> QKernel {
        make_q_poly(1, QParam::new(q).unwrap()).unwrap()
    }

    /// Bell density on [-3, 3] drawn by rejection.
    fn draw_bell(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x: f64 = rng.gen_range(-3.0..3.0);
            if rng.gen::<f64>() < (-0.5 * x * x).exp() {
                out.push(x);
            }
        }
        out
    }

    fn bell_density(x: f64) -> f64 {
        let mass = (2.0 * std::f64::consts::PI).sqrt() * statrs::function::erf::erf(3.0 / 2f64.sqrt());
        if x.abs() <= 3.0 {
            (-0.5 * x * x).exp() / mass
        } else {
            0.0
        }
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::new(vec![], vec![]).is_err());
        assert!(Sample::new(vec![1.0], vec![]).is_err());
        assert!(Sample::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(EstimatorConfig::new(rect(), 0.0, 1.0, vec![0.0]).is_err());
        assert!(EstimatorConfig::new(rect(), 1.0, 1.0, vec![1.0, 0.0]).is_err());
        assert!(EstimatorConfig::new(rect(), 1.0, 1.0, vec![]).is_err());
    }

    #[test]
    fn single_point_rectangular() {
        let s = Sample::new(vec![0.3], vec![1.0]).unwrap();
        let cfg = EstimatorConfig::new(rect(), 1.0, 0.1, vec![0.3]).unwrap();
        assert_eq!(estimate_gamma(&s, &cfg, 0).unwrap(), vec![0.5]);
        assert!(estimate_gamma(&s, &cfg, 9).is_err());
    }

    #[test]
    fn far_points_contribute_nothing() {
        let s = Sample::new(vec![5.0, -7.0, 2.01], vec![1.0, 2.0, 3.0]).unwrap();
        let cfg = EstimatorConfig::new(epan(0.5), 1.0, 0.1, vec![1.0]).unwrap();
        assert_eq!(estimate_gamma(&s, &cfg, 0).unwrap(), vec![0.0]);
    }

    #[test]
    fn window_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..500).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x + rng.gen::<f64>()).collect();
        let s = Sample::new(xs.clone(), ys.clone()).unwrap();
        let k = epan(0.7);
        let cfg = EstimatorConfig::new(k.clone(), 0.3, 0.1, linear_grid(-2.5, 2.5, 41)).unwrap();
        let got = estimate_gamma(&s, &cfg, 2).unwrap();
        for (x, g) in cfg.grid.iter().zip(got) {
            let naive: f64 = xs.iter().zip(&ys).map(|(xi, yi)| yi * yi * k.eval((x - xi) / 0.3)).sum::<f64>() / (500.0 * 0.3);
            assert!((g - naive).abs() < 1e-12 * (1.0 + naive.abs()));
        }
    }

    #[test]
    fn constant_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = Sample::new(xs, vec![2.5; 300]).unwrap();
        let cfg = EstimatorConfig::new(epan(0.9), 0.2, 1e-3, linear_grid(-1.5, 1.5, 31)).unwrap();
        let est = estimate_regression(&s, &cfg);
        for (i, r) in est.r_hat.iter().enumerate() {
            if est.f_hat[i] > 0.0 && !est.floored_mask[i] {
                assert!((r - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_region_is_floored() {
        let s = Sample::new(vec![0.0, 0.1], vec![1.0, 1.0]).unwrap();
        let cfg = EstimatorConfig::new(epan(0.5), 0.5, 0.2, vec![10.0]).unwrap();
        let est = estimate_regression(&s, &cfg);
        assert_eq!(est.r_hat, vec![0.0]);
        assert_eq!(est.floored_mask, vec![true]);
    }

    #[test]
    fn sup_error_examples() {
        let grid = linear_grid(0.0, 1.0, 5);
        let truth = |x: f64| x * x;
        let exact: Vec<f64> = grid.iter().map(|&x| truth(x)).collect();
        assert_eq!(sup_error(&exact, truth, &grid), 0.0);
        let mut bumped = exact.clone();
        bumped[2] += 0.3;
        assert!((sup_error(&bumped, truth, &grid) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn density_recovery_near_classical_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let xs = draw_bell(&mut rng, n);
        let s = Sample::new(xs, vec![0.0; n]).unwrap();
        let grid = linear_grid(-2.5, 2.5, 101);
        let cfg = EstimatorConfig::new(epan(0.99), default_bandwidth(n), default_floor(n), grid).unwrap();
        let f_hat = estimate_gamma(&s, &cfg, 0).unwrap();
        let err = sup_error(&f_hat, bell_density, &cfg.grid);
        let naive = f_hat
            .iter()
            .zip(&cfg.grid)
            .fold(0.0f64, |m, (e, &x)| m.max((e - bell_density(x)).abs()));
        assert_eq!(err, naive);
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn linear_regression_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 10_000;
        let xs = draw_bell(&mut rng, n);
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + rng.gen_range(-0.5..0.5)).collect();
        let s = Sample::new(xs, ys).unwrap();
        let cfg = EstimatorConfig::new(epan(0.99), default_bandwidth(n), default_floor(n), linear_grid(-1.0, 1.0, 81)).unwrap();
        let est = estimate_regression(&s, &cfg);
        let err = sup_error(&est.r_hat, |x| 2.0 * x, &cfg.grid);
        assert!(err < 0.1, "{err}");
    }

    #[test]
    fn mass_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let q = QParam::new(0.99).unwrap();
        let k = epan(0.99);
        for n in [1_000, 4_000] {
            let s = Sample::new(draw_bell(&mut rng, n), vec![0.0; n]).unwrap();
            let sm = KernelSmoother::new(&s, &k, default_bandwidth(n));
            let policy = SeriesPolicy::scaled_for(q, 1e-12).unwrap();
            let mass = jackson_integral(|x| sm.density_at(x), -5.0, 5.0, q, &policy)
                .unwrap()
                .checked()
                .unwrap();
            assert!((mass - 1.0).abs() < 0.02, "n = {n}: {mass}");
        }
    }

    #[test]
    fn variance_scales_inversely_with_n() {
        let k = epan(0.99);
        let h = 0.3;
        let ns = [250usize, 1_000, 4_000];
        let mut points = Vec::new();
        for (j, &n) in ns.iter().enumerate() {
            let vals: Vec<f64> = (0..400)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(1_000 * j as u64 + r);
                    let s = Sample::new(draw_bell(&mut rng, n), vec![0.0; n]).unwrap();
                    KernelSmoother::new(&s, &k, h).density_at(0.5)
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            points.push(((n as f64).ln(), var.ln()));
        }
        let mx = points.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = points.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.15, "{slope}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let s = Sample::from_csv_reader("x,y\n0.5,1\n-1.25,2e-1\n".as_bytes()).unwrap();
        assert_eq!(s.xs(), &[0.5, -1.25]);
        assert_eq!(s.ys(), &[1.0, 0.2]);
        let err = Sample::from_csv_reader("x,y\n0.5,1\n0.7,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, QError::Parse { line: 3, .. }), "{err:?}");
        let err = Sample::from_csv_reader("x,y\n0.5,1\n0.7\n".as_bytes()).unwrap_err();
        assert!(matches!(err, QError::Parse { line: 3, .. }), "{err:?}");
        assert!(matches!(Sample::from_csv_reader("x,y\n".as_bytes()), Err(QError::Parse { .. })));
        assert!(matches!(Sample::from_csv_reader("a,b\n1,2\n".as_bytes()), Err(QError::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn affine_equivariance(seed in 0u64..1_000, e in -4i32..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ys: Vec<f64> = (0..200).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let alpha = 2f64.powi(e);
            let s = Sample::new(xs, ys).unwrap();
            let scaled = s.map_ys(|y| alpha * y).unwrap();
            let cfg = EstimatorConfig::new(epan(0.8), 0.25, 0.05, linear_grid(-1.0, 1.0, 21)).unwrap();
            let base = estimate_gamma(&s, &cfg, 1).unwrap();
            let got = estimate_gamma(&scaled, &cfg, 1).unwrap();
            for (b, g) in base.iter().zip(&got) {
                prop_assert_eq!(alpha * b, *g);
            }
        }

        #[test]
        fn shift_invariance(seed in 0u64..1_000, c in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ys: Vec<f64> = (0..200).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let s = Sample::new(xs, ys).unwrap();
            let shifted = s.map_ys(|y| y + c).unwrap();
            let cfg = EstimatorConfig::new(epan(0.8), 0.25, 0.05, linear_grid(-1.0, 1.0, 21)).unwrap();
            let a = estimate_regression(&s, &cfg);
            let b = estimate_regression(&shifted, &cfg);
            for i in 0..cfg.grid.len() {
                if !a.floored_mask[i] {
                    prop_assert!((b.r_hat[i] - a.r_hat[i] - c).abs() < 1e-9 * (1.0 + c.abs() + a.r_hat[i].abs()));
                }
            }
        }
    }
}
