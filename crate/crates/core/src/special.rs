//! Special functions used by the mode and turbulence models.

/// `ln(n!)`.
pub fn ln_factorial(n: u32) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Generalized Laguerre polynomial `L_p^α(x)` by the three-term recurrence.
pub fn laguerre(p: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Modified Bessel function of the second kind `K_ν(x)` for `x > 0`.
///
/// Evaluates `∫₀^∞ exp(−x cosh t) cosh(νt) dt` with the trapezoid rule. The
/// integrand is entire and decays double-exponentially, so a fixed step of
/// 1/32 is accurate to machine precision over the whole argument range used
/// here.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k requires x > 0");
    const H: f64 = 1.0 / 32.0;
    let mut sum = 0.5 * (-x).exp();
    let mut t = H;
    loop {
        let arg = x * t.cosh();
        // exp(-arg)·cosh(νt) < 1e-300·...; stop once both the decay term
        // dominates and the contribution is negligible.
        if arg > 745.0 {
            break;
        }
        let term = (-arg + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        sum += term;
        if arg > 50.0 && term < sum * 1e-18 {
            break;
        }
        t += H;
    }
    sum * H
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_k_half_order_closed_form() {
        // K_{1/2}(x) = sqrt(π/(2x)) e^{-x}
        for &x in &[1e-6, 0.01, 0.5, 1.0, 3.0, 20.0, 60.0] {
            let exact = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x as f64).exp();
            let got = bessel_k(0.5, x);
            assert!(((got - exact) / exact).abs() < 1e-12, "x={x}: {got} vs {exact}");
        }
    }

    #[test]
    fn bessel_k_recurrence() {
        // K_{ν+1}(x) = K_{ν-1}(x) + (2ν/x) K_ν(x)
        let nu = 5.0 / 6.0;
        for &x in &[0.1, 1.0, 4.0] {
            let lhs = bessel_k(nu + 1.0, x);
            let rhs = bessel_k(nu - 1.0, x) + 2.0 * nu / x * bessel_k(nu, x);
            assert!(((lhs - rhs) / lhs).abs() < 1e-12);
        }
    }

    #[test]
    fn laguerre_low_orders() {
        let (a, x) = (2.0, 0.7);
        assert_eq!(laguerre(0, a, x), 1.0);
        assert!((laguerre(1, a, x) - (1.0 + a - x)).abs() < 1e-15);
        let l2 = 0.5 * (x * x - 2.0 * (a + 2.0) * x + (a + 1.0) * (a + 2.0));
        assert!((laguerre(2, a, x) - l2).abs() < 1e-14);
    }

    #[test]
    fn ln_factorial_matches_product() {
        let direct: f64 = (1..=12).map(|k| k as f64).product::<f64>().ln();
        assert!((ln_factorial(12) - direct).abs() < 1e-12);
        assert_eq!(ln_factorial(0), 0.0);
    }
}
