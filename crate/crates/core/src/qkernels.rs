//! The q-Gaussian kernel and the polynomial q-kernel family `K_{q,p}`.

use serde::{Deserialize, Serialize};

use crate::error::{QError, Result};
use crate::qcalc::jackson_integral;
use crate::qcore::{q_gauss_series, q_number, QParam, SeriesPolicy};

/// Number of equally spaced points used to validate positivity and the sup bound.
pub const VALIDATION_GRID_POINTS: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// `E_{q^2}^{-q^2 u^2/[2]_q} / c(q)` on `[-nu, nu]`.
    Gaussian,
    /// `(1 - q^2 u^2)^p / c_q` on `[-1, 1]`.
    #[serde(rename = "poly")]
    Polynomial { p: u32 },
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::Gaussian => write!(f, "q-gaussian"),
            KernelKind::Polynomial { p } => write!(f, "q-poly(p={p})"),
        }
    }
}

/// An immutable, normalized q-kernel with its cached constants.
#[derive(Debug, Clone, PartialEq)]
pub struct QKernel {
    kind: KernelKind,
    q: QParam,
    policy: SeriesPolicy,
    support_halfwidth: f64,
    norm_const: f64,
    sup_bound: f64,
    moment2: f64,
    square_integral: f64,
    cube_integral: f64,
}

impl QKernel {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn policy(&self) -> SeriesPolicy {
        self.policy
    }

    pub fn support_halfwidth(&self) -> f64 {
        self.support_halfwidth
    }

    /// `c(q)` for the q-Gaussian, `c_q` for the polynomial family.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// The bound `M >= sup K_q`.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// Jackson integral of `u^2 K_q(u)` over the support.
    pub fn moment2(&self) -> f64 {
        self.moment2
    }

    /// Jackson integral of `K_q(u)^2` over the support.
    pub fn square_integral(&self) -> f64 {
        self.square_integral
    }

    /// Jackson integral of `K_q(u)^3` over the support.
    pub fn cube_integral(&self) -> f64 {
        self.cube_integral
    }

    /// Unnormalized kernel shape; zero outside the support.
    fn shape(&self, u: f64) -> f64 {
        if u.abs() > self.support_halfwidth {
            return 0.0;
        }
        match self.kind {
            KernelKind::Gaussian => {
                // every |u| <= nu was reachable under this policy when c(q) was computed
                q_gauss_series(u, self.q, &self.policy).unwrap_or(f64::NAN)
            }
            KernelKind::Polynomial { p } => poly_shape(u, self.q, p),
        }
    }

    /// `K_q(u)`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        self.shape(u) / self.norm_const
    }
}

fn poly_shape(u: f64, q: QParam, p: u32) -> f64 {
    let qu = q.value() * u;
    (1.0 - qu * qu).powi(p as i32)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Closed-form normalizer `c_q = 2 sum_l (-1)^l C(p, l) q^{2l} / [2l+1]_q`.
pub fn poly_norm_const(p: u32, q: QParam) -> f64 {
    let qv = q.value();
    2.0 * (0..=p)
        .map(|l| {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(p, l) * qv.powi(2 * l as i32) / q_number(2 * l + 1, q)
        })
        .sum::<f64>()
}

/// Builds the q-Gaussian kernel on `[-nu, nu]`.
pub fn make_q_gaussian(q: QParam, policy: &SeriesPolicy) -> Result<QKernel> {
    let nu = q.nu();
    // the edge value needs the most terms; fail early if the policy cannot reach it
    q_gauss_series(nu, q, policy)?;
    let c = jackson_integral(|u| q_gauss_series(u, q, policy).unwrap_or(f64::NAN), -nu, nu, q, policy)?
        .checked()?;
    let mut kernel = QKernel {
        kind: KernelKind::Gaussian,
        q,
        policy: *policy,
        support_halfwidth: nu,
        norm_const: c,
        sup_bound: 1.0 / c,
        moment2: f64::NAN,
        square_integral: f64::NAN,
        cube_integral: f64::NAN,
    };
    let peak = validate_shape(&kernel)?;
    if peak > kernel.sup_bound * (1.0 + 1e-12) {
        return Err(QError::Domain(format!(
            "q-Gaussian maximum {peak} exceeds its value at the origin {}",
            kernel.sup_bound
        )));
    }
    fill_moments(&mut kernel)?;
    Ok(kernel)
}

/// Builds the polynomial q-kernel `K_{q,p}` on `[-1, 1]`.
///
/// `p = 0` is the rectangular kernel `1/2`; `p = 1, 2, 3` are the q-analogs of
/// the Epanechnikov, biweight and triweight kernels.
pub fn make_q_poly(p: u32, q: QParam) -> Result<QKernel> {
    let policy = SeriesPolicy::scaled_for(q, 1e-15)?;
    make_q_poly_with(p, q, &policy)
}

/// [`make_q_poly`] with an explicit truncation policy for the cached moments.
pub fn make_q_poly_with(p: u32, q: QParam, policy: &SeriesPolicy) -> Result<QKernel> {
    let c = poly_norm_const(p, q);
    let mut kernel = QKernel {
        kind: KernelKind::Polynomial { p },
        q,
        policy: *policy,
        support_halfwidth: 1.0,
        norm_const: c,
        sup_bound: 1.0 / c,
        moment2: f64::NAN,
        square_integral: f64::NAN,
        cube_integral: f64::NAN,
    };
    validate_shape(&kernel)?;
    fill_moments(&mut kernel)?;
    Ok(kernel)
}

pub fn make_kernel(kind: KernelKind, q: QParam, policy: &SeriesPolicy) -> Result<QKernel> {
    match kind {
        KernelKind::Gaussian => make_q_gaussian(q, policy),
        KernelKind::Polynomial { p } => make_q_poly_with(p, q, policy),
    }
}

/// Checks positivity on the validation grid; returns the largest value seen.
fn validate_shape(kernel: &QKernel) -> Result<f64> {
    let s = kernel.support_halfwidth;
    let mut peak = f64::NEG_INFINITY;
    for i in 0..VALIDATION_GRID_POINTS {
        let u = -s + 2.0 * s * i as f64 / (VALIDATION_GRID_POINTS - 1) as f64;
        let v = kernel.eval(u);
        if !v.is_finite() {
            return Err(QError::NonFiniteEvaluation { x: u, value: v });
        }
        if v < 0.0 {
            return Err(QError::PositivityViolation { u, value: v });
        }
        peak = peak.max(v);
    }
    Ok(peak)
}

fn fill_moments(kernel: &mut QKernel) -> Result<()> {
    let policy = kernel.policy;
    kernel.moment2 = kernel_moment(kernel, 2, 1, &policy)?;
    kernel.square_integral = kernel_moment(kernel, 0, 2, &policy)?;
    kernel.cube_integral = kernel_moment(kernel, 0, 3, &policy)?;
    Ok(())
}

/// Jackson integral of `u^{u_power} K_q(u)^{k_power}` over the kernel support.
pub fn kernel_moment(kernel: &QKernel, u_power: u32, k_power: u32, policy: &SeriesPolicy) -> Result<f64> {
    if k_power == 0 {
        return Err(QError::InvalidParameter("k_power must be positive".into()));
    }
    let s = kernel.support_halfwidth;
    jackson_integral(
        |u| u.powi(u_power as i32) * kernel.eval(u).powi(k_power as i32),
        -s,
        s,
        kernel.q,
        policy,
    )?
    .checked()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    /// Jackson sum of `gamma_{q,p}` over [-1, 1] computed term by term.
    fn brute_force_poly_mass(p: u32, q: f64) -> f64 {
        let mut total = 0.0;
        let mut qk = 1.0f64;
        for _ in 0..20_000 {
            let g = (1.0 - q * q * qk * qk).powi(p as i32);
            total += (1.0 - q) * qk * 2.0 * g;
            qk *= q;
        }
        total
    }

    /// Independent route to `c(q)`: Euler's product for the q-Gaussian summed on the Jackson grid.
    fn brute_force_gaussian_const(q: f64) -> f64 {
        let nu = 1.0 / (1.0 - q).sqrt();
        let e = |x: f64| -> f64 {
            (0..5_000)
                .map(|j| 1.0 - (1.0 - q) * q.powi(2 * j + 2) * x * x)
                .product()
        };
        let mut total = 0.0;
        let mut qk = 1.0f64;
        for _ in 0..2_000 {
            total += qk * e(qk * nu);
            qk *= q;
        }
        2.0 * (1.0 - q) * nu * total
    }

    #[test]
    fn rectangular_kernel_is_one_half() {
        for q in [0.2, 0.5, 0.9] {
            let k = make_q_poly(0, qp(q)).unwrap();
            assert_relative_eq!(k.norm_const(), 2.0, max_relative = 1e-14);
            for u in [-1.0, -0.3, 0.0, 0.99, 1.0] {
                assert_relative_eq!(k.eval(u), 0.5, max_relative = 1e-14);
            }
            assert_eq!(k.eval(1.0001), 0.0);
        }
    }

    #[test]
    fn epanechnikov_constant() {
        let q = qp(0.5);
        let k = make_q_poly(1, q).unwrap();
        let q3 = q_number(3, q);
        assert_relative_eq!(k.norm_const(), 2.0 * (q3 - 0.25) / q3, max_relative = 1e-14);
        assert_relative_eq!(k.norm_const(), 12.0 / 7.0, max_relative = 1e-14);
    }

    #[test]
    fn biweight_constant() {
        let q = qp(0.5);
        let k = make_q_poly(2, q).unwrap();
        let expected = 2.0 * (1.0 - 2.0 * 0.25 / q_number(3, q) + 0.0625 / q_number(5, q));
        assert_relative_eq!(k.norm_const(), expected, max_relative = 1e-14);
        assert_relative_eq!(k.norm_const(), brute_force_poly_mass(2, 0.5), max_relative = 1e-12);
    }

    #[test]
    fn closed_form_matches_brute_force() {
        for q in [0.3, 0.5, 0.7, 0.9, 0.99] {
            for p in 0..=3 {
                let c = poly_norm_const(p, qp(q));
                assert!((c - brute_force_poly_mass(p, q)).abs() < 1e-10, "q = {q}, p = {p}");
            }
        }
    }

    #[test]
    fn gaussian_constant_matches_product_route() {
        let q = qp(0.5);
        let k = make_q_gaussian(q, &SeriesPolicy::default()).unwrap();
        let oracle = brute_force_gaussian_const(0.5);
        assert_relative_eq!(k.norm_const(), oracle, max_relative = 1e-12);
        assert_relative_eq!(k.eval(0.0), 1.0 / oracle, max_relative = 1e-12);
        assert_relative_eq!(k.sup_bound(), k.eval(0.0), max_relative = 1e-15);
    }

    #[test]
    fn gaussian_constant_tends_to_sqrt_two_pi() {
        let q = qp(0.999);
        let policy = SeriesPolicy::scaled_for(q, 1e-14).unwrap();
        let k = make_q_gaussian(q, &policy).unwrap();
        let target = (2.0 * std::f64::consts::PI).sqrt();
        assert!((k.norm_const() / target - 1.0).abs() < 0.02, "{}", k.norm_const());
    }

    #[test]
    fn gaussian_needs_enough_terms() {
        let q = qp(0.99);
        let policy = SeriesPolicy::new(1e-14, 50).unwrap();
        assert!(matches!(
            make_q_gaussian(q, &policy),
            Err(QError::TruncationIncomplete { .. })
        ));
    }

    #[test]
    fn moments_and_identities() {
        let q = qp(0.5);
        let k = make_q_poly(1, q).unwrap();
        let p = SeriesPolicy::default();
        assert_relative_eq!(kernel_moment(&k, 0, 1, &p).unwrap(), 1.0, max_relative = 1e-12);
        assert!(kernel_moment(&k, 1, 2, &p).unwrap().abs() < 1e-10);
        assert!(kernel_moment(&k, 0, 0, &p).is_err());
        // q-moments of a polynomial kernel in closed form: int u^2 (1 - q^2 u^2) d_qu = 2(1/[3] - q^2/[5])
        let expected = 2.0 * (1.0 / q_number(3, q) - 0.25 / q_number(5, q)) / k.norm_const();
        assert_relative_eq!(k.moment2(), expected, max_relative = 1e-12);
    }

    #[test]
    fn epanechnikov_second_moment_near_one() {
        let k = make_q_poly(1, qp(0.999)).unwrap();
        assert!((k.moment2() - 0.2).abs() < 1e-3, "{}", k.moment2());
    }

    #[test]
    fn kernel_kind_json() {
        let k: KernelKind = serde_json::from_str(r#"{"kind":"poly","p":2}"#).unwrap();
        assert_eq!(k, KernelKind::Polynomial { p: 2 });
        let g: KernelKind = serde_json::from_str(r#"{"kind":"gaussian"}"#).unwrap();
        assert_eq!(g, KernelKind::Gaussian);
    }
}
