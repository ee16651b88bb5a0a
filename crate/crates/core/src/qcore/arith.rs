use super::QParam;

/// `[n]_q = (1 - q^n) / (1 - q)`, the q-analog of the integer `n`.
pub fn q_number(n: u32, q: QParam) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if q.is_classical() {
        return n as f64;
    }
    let ln_q = q.value().ln();
    // expm1 keeps 1 - q^n accurate when q is close to 1
    -(n as f64 * ln_q).exp_m1() / (1.0 - q.value())
}

/// `[n]_q! = [n]_q [n-1]_q ... [1]_q`, with `[0]_q! = 1`.
pub fn q_factorial(n: u32, q: QParam) -> f64 {
    (1..=n).map(|k| q_number(k, q)).product()
}

/// `(x - a)^n_q = (x - a)(x - qa)...(x - q^{n-1} a)`, equal to 1 for `n = 0`.
pub fn q_pochhammer(x: f64, a: f64, n: u32, q: QParam) -> f64 {
    let mut product = 1.0;
    let mut qa = a;
    for _ in 0..n {
        product *= x - qa;
        qa *= q.value();
    }
    product
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    fn explicit_sum(n: u32, q: f64) -> f64 {
        (0..n).map(|j| q.powi(j as i32)).sum()
    }

    #[test]
    fn q_number_examples() {
        assert_eq!(q_number(0, qp(0.5)), 0.0);
        assert_eq!(q_number(1, qp(0.5)), 1.0);
        assert_relative_eq!(q_number(3, qp(0.5)), 1.75, max_relative = 1e-15);
        let v = q_number(5, qp(0.999));
        assert_relative_eq!(v, explicit_sum(5, 0.999), max_relative = 1e-13);
        assert!((v - 4.9900).abs() < 1e-4);
    }

    #[test]
    fn q_factorial_examples() {
        assert_eq!(q_factorial(0, qp(0.3)), 1.0);
        assert_relative_eq!(q_factorial(3, qp(0.5)), 1.0 * 1.5 * 1.75, max_relative = 1e-15);
        let v = q_factorial(4, qp(0.9999));
        assert!((v - 24.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn classical_band_delegates() {
        let q = QParam::with_one_limit_epsilon(1.0 - 1e-10, 1e-8).unwrap();
        assert_eq!(q_number(7, q), 7.0);
        assert_eq!(q_factorial(4, q), 24.0);
    }

    #[test]
    fn pochhammer_examples() {
        assert_eq!(q_pochhammer(2.0, 3.0, 0, qp(0.5)), 1.0);
        assert_eq!(q_pochhammer(1.0, 1.0, 2, qp(0.5)), 0.0);
        // (a - x)^n_q = (-1)^n q^{n(n-1)/2} (x - q^{1-n} a)^n_q at x = 1, a = 2, n = 2
        let q = qp(0.5);
        let (x, a, n) = (1.0, 2.0, 2u32);
        let lhs = q_pochhammer(a, x, n, q);
        let rhs = (-1f64).powi(n as i32)
            * 0.5f64.powi((n * (n - 1) / 2) as i32)
            * q_pochhammer(x, 0.5f64.powi(1 - n as i32) * a, n, q);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
    }

    #[test]
    fn approaches_integer_as_q_tends_to_one() {
        for n in [2u32, 5, 10] {
            let gaps: Vec<f64> = (2..=5)
                .map(|k| (q_number(n, qp(1.0 - 10f64.powi(-k))) - n as f64).abs())
                .collect();
            assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        }
    }

    proptest! {
        #[test]
        fn q_number_recurrence(n in 1u32..60, q in 0.01f64..0.999) {
            let p = qp(q);
            let lhs = q_number(n, p);
            let rhs = 1.0 + q * q_number(n - 1, p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        }

        #[test]
        fn pochhammer_sign_identity(x in -3.0f64..3.0, a in -3.0f64..3.0, n in 0u32..6, q in 0.2f64..0.95) {
            let p = qp(q);
            let lhs = q_pochhammer(a, x, n, p);
            let rhs = (-1f64).powi(n as i32)
                * q.powi((n * n.saturating_sub(1) / 2) as i32)
                * q_pochhammer(x, q.powi(1 - n as i32) * a, n, p);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
