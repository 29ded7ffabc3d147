//! Special functions in log domain: gamma, regularized incomplete gamma and
//! the modified Bessel function of the second kind with real order.

mod bessel;

use crate::error::{domain, Result};

/// Order of a modified Bessel function of the second kind.
///
/// Negative orders are folded with `K_{-a} = K_a`, so the stored order is
/// always non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(domain("BesselOrder::new", format!("order {a} is not finite")));
        }
        Ok(Self(a.abs()))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(domain("log_gamma", format!("x = {x} must be positive and finite")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Regularized lower incomplete gamma `P(a, x) = γ(a, x) / Γ(a)`.
pub fn reg_lower_inc_gamma(a: f64, x: f64) -> Result<f64> {
    check_inc_gamma_args("reg_lower_inc_gamma", a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(statrs::function::gamma::gamma_lr(a, x))
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`, computed
/// directly so the upper tail keeps full relative precision.
pub fn reg_upper_inc_gamma(a: f64, x: f64) -> Result<f64> {
    check_inc_gamma_args("reg_upper_inc_gamma", a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::gamma_ur(a, x))
}

fn check_inc_gamma_args(func: &'static str, a: f64, x: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(domain(func, format!("shape a = {a} must be positive and finite")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(domain(func, format!("x = {x} must be non-negative")));
    }
    Ok(())
}

fn check_bessel_arg(func: &'static str, z: f64) -> Result<()> {
    if !(z.is_finite() && z > 0.0) {
        return Err(domain(func, format!("z = {z} must be positive and finite")));
    }
    Ok(())
}

/// `ln K_a(z)`.
pub fn log_bessel_k(order: BesselOrder, z: f64) -> Result<f64> {
    check_bessel_arg("log_bessel_k", z)?;
    Ok(bessel::ln_k(order.0, z))
}

/// `ln K_a(z)` for any real order, folding the sign. Callers must have
/// validated `z > 0`.
#[inline]
pub(crate) fn ln_k_real(order: f64, z: f64) -> f64 {
    bessel::ln_k(order.abs(), z)
}

/// `K_{a+1}(z) / K_a(z)`, evaluated as the exponential of a log difference.
pub fn bessel_k_ratio(order: BesselOrder, z: f64) -> Result<f64> {
    check_bessel_arg("bessel_k_ratio", z)?;
    let a = order.0;
    Ok((bessel::ln_k(a + 1.0, z) - bessel::ln_k(a, z)).exp())
}

/// Closed-form bracket on `K_{a+1}(z) / K_a(z)` valid for `a >= 1`:
/// `sqrt(a / (a + 1)) + a / z` below and `2 (a + 1) / z + 1` above.
pub fn ratio_bounds(order: BesselOrder, z: f64) -> Result<(f64, f64)> {
    check_bessel_arg("ratio_bounds", z)?;
    let a = order.0;
    if a < 1.0 {
        return Err(domain("ratio_bounds", format!("order {a} < 1: bounds not established")));
    }
    let lower = (a / (a + 1.0)).sqrt() + a / z;
    let upper = 2.0 * (a + 1.0) / z + 1.0;
    Ok((lower, upper))
}

/// Leading large-order form `sqrt(π / (2a)) (e z / (2a))^{-a}` in log domain.
pub fn log_bessel_k_large_order(order: BesselOrder, z: f64) -> Result<f64> {
    check_bessel_arg("log_bessel_k_large_order", z)?;
    let a = order.0;
    if a <= 0.0 {
        return Err(domain("log_bessel_k_large_order", "order must be positive"));
    }
    Ok(0.5 * (std::f64::consts::PI / (2.0 * a)).ln() - a * (std::f64::consts::E * z / (2.0 * a)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ord(a: f64) -> BesselOrder {
        BesselOrder::new(a).unwrap()
    }

    /// `K_{n+1/2}(z) = sqrt(π/(2z)) e^{-z} Σ_k (n+k)! / (k! (n-k)! (2z)^k)`.
    fn half_integer_k(n: u32, z: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..=n {
            let mut c = 1.0;
            for j in (n - k + 1)..=(n + k) {
                c *= j as f64;
            }
            for j in 1..=k {
                c /= j as f64;
            }
            sum += c / (2.0 * z).powi(k as i32);
        }
        (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp() * sum
    }

    /// Simpson oracle on the alternative representation
    /// `K_a(z) = sqrt(π) (z/2)^a / Γ(a+1/2) ∫₀^∞ e^{-z cosh t} sinh^{2a} t dt`.
    fn k_oracle(a: f64, z: f64) -> f64 {
        let upper = ((60.0 + 2.0 * a * 8.0) / z).acosh().max(1.0) + 2.0;
        let n = 200_000;
        let h = upper / n as f64;
        let f = |t: f64| {
            if t == 0.0 {
                0.0
            } else {
                (-z * t.cosh() + 2.0 * a * t.sinh().ln()).exp()
            }
        };
        let mut s = f(0.0) + f(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        let integral = s * h / 3.0;
        std::f64::consts::PI.sqrt() * (z / 2.0).powf(a) / statrs::function::gamma::gamma(a + 0.5)
            * integral
    }

    #[test]
    fn log_gamma_values() {
        assert_eq!(log_gamma(1.0).unwrap().abs() < 1e-15, true);
        assert_relative_eq!(log_gamma(0.5).unwrap(), 0.572_364_942_924_700_087_07, max_relative = 1e-13);
        assert_relative_eq!(log_gamma(5.0).unwrap(), 24f64.ln(), max_relative = 1e-13);
        assert_relative_eq!(log_gamma(1e-3).unwrap(), 6.907_178_885_383_853_661_7, max_relative = 1e-12);
        assert_relative_eq!(log_gamma(1e3).unwrap(), 5_905.220_423_209_181_211_8, max_relative = 1e-12);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.0).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn incomplete_gamma_values() {
        assert_relative_eq!(reg_lower_inc_gamma(1.0, 2f64.ln()).unwrap(), 0.5, max_relative = 1e-14);
        assert_eq!(reg_lower_inc_gamma(3.2, 0.0).unwrap(), 0.0);
        // mpmath values
        assert_relative_eq!(
            reg_lower_inc_gamma(0.5, 0.1).unwrap(),
            0.345_279_153_981_422_979_56,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            reg_lower_inc_gamma(2.5, 3.0).unwrap(),
            0.693_781_081_586_721_599_12,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            reg_lower_inc_gamma(0.2, 1e-6).unwrap(),
            0.068_719_093_798_768_478_058,
            max_relative = 1e-12
        );
        assert!(reg_lower_inc_gamma(0.0, 1.0).is_err());
        assert!(reg_lower_inc_gamma(1.0, -1.0).is_err());
    }

    #[test]
    fn incomplete_gamma_against_quadrature() {
        // P(0.5, x): substitute t = u² to remove the endpoint singularity.
        let x: f64 = 0.1;
        let n = 20_000;
        let ub = x.sqrt();
        let h = ub / n as f64;
        let f = |u: f64| 2.0 * (-u * u).exp();
        let mut s = f(0.0) + f(ub);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let oracle = s * h / 3.0 / std::f64::consts::PI.sqrt();
        assert_relative_eq!(reg_lower_inc_gamma(0.5, x).unwrap(), oracle, max_relative = 1e-11);
    }

    #[test]
    fn bessel_half_integer_closed_form() {
        let expected = (std::f64::consts::FRAC_PI_2.sqrt() * (-1f64).exp()).ln();
        assert_relative_eq!(log_bessel_k(ord(0.5), 1.0).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, -0.774_208_647_355_272_6, epsilon = 1e-12);
        for n in 0..6u32 {
            for &z in &[1e-3, 0.1, 1.0, 7.0, 40.0] {
                let got = log_bessel_k(ord(n as f64 + 0.5), z).unwrap();
                let want = half_integer_k(n, z).ln();
                assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "n={n} z={z}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bessel_against_frozen_high_precision_values() {
        // ln K_a(z) from mpmath at 30 digits
        let table = [
            (0.0, 1e-8, 2.919_747_817_422_440_051_8),
            (0.0, 1.0, -0.865_064_398_906_788_096_8),
            (0.3, 0.05, 1.338_145_154_894_912_713_9),
            (1.0, 1.0, -0.507_651_948_210_752_330_95),
            (2.5, 10.0, -10.640_322_251_618_633_013),
            (14.5, 3.0, 17.124_798_173_388_684_632),
            (14.5, 0.5, 43.266_258_124_616_925_61),
            (15.5, 0.5, 47.327_020_250_884_028_899),
            (15.9, 100.0, -100.822_807_076_581_739_52),
            (60.0, 3.0, 159.474_652_127_280_841_5),
            (120.0, 5.0, 342.324_351_906_017_553_8),
            (200.0, 1e-8, 4_680.006_107_547_759_643_6),
            (200.0, 1e4, -10_002.379_557_960_566_017),
            (0.7, 1e4, -10_004.379_366_833_943_306),
            (50.5, 2.0, 145.805_910_495_014_048_77),
        ];
        for &(a, z, want) in &table {
            let got = log_bessel_k(ord(a), z).unwrap();
            // absolute error in ln K is the relative error in K
            assert!((got - want).abs() < 1e-11 * want.abs().max(1.0), "a={a} z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn bessel_against_alternative_integral() {
        for &(a, z) in &[(14.5, 3.0), (1.3, 0.7), (4.0, 12.0)] {
            let got = log_bessel_k(ord(a), z).unwrap();
            let want = k_oracle(a, z).ln();
            assert!((got - want).abs() < 1e-9, "a={a} z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn bessel_large_order_form() {
        // z/a small: leading form is accurate
        let exact = log_bessel_k(ord(14.5), 0.5).unwrap();
        let approx = log_bessel_k_large_order(ord(14.5), 0.5).unwrap();
        assert!((approx - exact).exp_m1().abs() < 0.05);
        // the gap shrinks as z/a -> 0 and grows with z
        let gap = |z: f64| {
            (log_bessel_k_large_order(ord(14.5), z).unwrap() - log_bessel_k(ord(14.5), z).unwrap()).abs()
        };
        assert!(gap(0.05) < 0.01 && gap(0.5) < gap(3.0));
        assert!(gap(3.0).exp_m1() > 0.15);
    }

    #[test]
    fn bessel_symmetry_and_errors() {
        for &a in &[0.3, 2.0, 14.5] {
            assert_eq!(
                log_bessel_k(ord(-a), 2.0).unwrap(),
                log_bessel_k(ord(a), 2.0).unwrap()
            );
        }
        assert!(log_bessel_k(ord(1.0), 0.0).is_err());
        assert!(log_bessel_k(ord(1.0), -2.0).is_err());
        assert!(BesselOrder::new(f64::INFINITY).is_err());
        assert!(bessel_k_ratio(ord(1.0), 0.0).is_err());
    }

    #[test]
    fn ratio_half_integer_and_approximation() {
        for &z in &[0.01, 0.3, 1.0, 5.0, 80.0] {
            assert_relative_eq!(bessel_k_ratio(ord(0.5), z).unwrap(), 1.0 + 1.0 / z, max_relative = 1e-12);
        }
        let exact = bessel_k_ratio(ord(14.5), 0.5).unwrap();
        assert_relative_eq!(exact, 58.018_511_665_324_285_357, max_relative = 1e-11);
        let approx = 2.0 * (15.5f64 * 14.5).sqrt() / 0.5;
        assert!((approx / exact - 1.0).abs() < 0.035);
        assert_relative_eq!(bessel_k_ratio(ord(14.5), 2.0).unwrap(), 14.573_640_675_312_395_468, max_relative = 1e-11);
    }

    #[test]
    fn ratio_bounds_values() {
        let (lo, hi) = ratio_bounds(ord(1.0), 1.0).unwrap();
        assert_relative_eq!(lo, 0.5f64.sqrt() + 1.0, max_relative = 1e-15);
        assert_relative_eq!(hi, 5.0, max_relative = 1e-15);
        let (lo, hi) = ratio_bounds(ord(3.0), 1e12).unwrap();
        assert_relative_eq!(lo, (0.75f64).sqrt(), max_relative = 1e-9);
        assert_relative_eq!(hi, 1.0, max_relative = 1e-9);
        let r = bessel_k_ratio(ord(14.5), 2.0).unwrap();
        let (lo, hi) = ratio_bounds(ord(14.5), 2.0).unwrap();
        assert!(lo < r && r < hi);
        assert!(ratio_bounds(ord(0.5), 1.0).is_err());
    }

    #[test]
    fn ratio_exceeds_one() {
        for &a in &[0.0, 0.2, 3.0, 40.0] {
            for &z in &[1e-3, 1.0, 1e3] {
                assert!(bessel_k_ratio(ord(a), z).unwrap() > 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn recurrence_holds(a in 1.0f64..50.0, lz in (0.01f64).ln()..(100.0f64).ln()) {
            // K_{a+1} = (2a/z) K_a + K_{a-1}  <=>  r_a = 2a/z + 1/r_{a-1}
            let z = lz.exp();
            let r_a = bessel_k_ratio(ord(a), z).unwrap();
            let r_prev = bessel_k_ratio(ord(a - 1.0), z).unwrap();
            let rhs = 2.0 * a / z + 1.0 / r_prev;
            prop_assert!((r_a / rhs - 1.0).abs() < 1e-9, "a={} z={} {} vs {}", a, z, r_a, rhs);
        }

        #[test]
        fn bracketing_holds(a in 1.0f64..60.0, lz in (1e-3f64).ln()..(1e3f64).ln()) {
            let z = lz.exp();
            let r = bessel_k_ratio(ord(a), z).unwrap();
            let (lo, hi) = ratio_bounds(ord(a), z).unwrap();
            prop_assert!(lo < r && r < hi);
        }

        #[test]
        fn ratio_decreasing_in_z(a in 0.0f64..40.0, lz in (1e-3f64).ln()..(1e3f64).ln()) {
            let z = lz.exp();
            let r1 = bessel_k_ratio(ord(a), z).unwrap();
            let r2 = bessel_k_ratio(ord(a), z * 1.05).unwrap();
            prop_assert!(r2 < r1);
        }

        #[test]
        fn symmetry_in_order(a in 0.0f64..100.0, lz in (1e-8f64).ln()..(1e4f64).ln()) {
            let z = lz.exp();
            prop_assert_eq!(log_bessel_k(ord(-a), z).unwrap(), log_bessel_k(ord(a), z).unwrap());
            prop_assert!(log_bessel_k(ord(a), z).unwrap().is_finite());
        }
    }
}
