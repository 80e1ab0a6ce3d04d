//! Binomial and Poisson probability mass functions, evaluated in log space.
//!
//! Boundary conventions: `0^0 = 1`, so `binomial_pmf(0, n, 0) = 1` and
//! `poisson_pmf(0, 0) = 1`.

use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// `x * ln(p)` with the convention `0 * ln(0) = 0`.
#[inline]
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub fn ln_binomial_coefficient(n: u64, x: u64) -> f64 {
    ln_factorial(n) - ln_factorial(x) - ln_factorial(n - x)
}

/// Log of the binomial pmf. Returns `-inf` for impossible outcomes.
pub fn ln_binomial_pmf(x: u64, n: u64, p: f64) -> Result<f64> {
    if x > n {
        return Err(Error::Domain(format!("binomial: x = {x} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("binomial: p = {p} outside [0, 1]")));
    }
    let (xf, nf) = (x as f64, n as f64);
    Ok(ln_binomial_coefficient(n, x) + xlogy(xf, p) + xlogy(nf - xf, 1.0 - p))
}

pub fn binomial_pmf(x: u64, n: u64, p: f64) -> Result<f64> {
    ln_binomial_pmf(x, n, p).map(f64::exp)
}

/// Log of the Poisson pmf. Returns `-inf` for impossible outcomes.
pub fn ln_poisson_pmf(k: u64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "poisson: lambda = {lambda} is not a finite nonnegative number"
        )));
    }
    Ok(-lambda + xlogy(k as f64, lambda) - ln_factorial(k))
}

pub fn poisson_pmf(k: u64, lambda: f64) -> Result<f64> {
    ln_poisson_pmf(k, lambda).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn factorial(n: u64) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    #[test]
    fn binomial_trivial_cases() {
        assert_eq!(binomial_pmf(0, 0, 0.3).unwrap(), 1.0);
        assert_relative_eq!(binomial_pmf(1, 2, 0.5).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(binomial_pmf(0, 5, 0.0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(5, 5, 1.0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(2, 5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn binomial_matches_factorial_oracle() {
        let (x, n, p) = (3u64, 7u64, 0.42f64);
        let oracle = factorial(n) / (factorial(x) * factorial(n - x))
            * p.powi(x as i32)
            * (1.0 - p).powi((n - x) as i32);
        assert_relative_eq!(binomial_pmf(x, n, p).unwrap(), oracle, max_relative = 1e-12);
    }

    #[test]
    fn binomial_domain_errors() {
        assert!(matches!(binomial_pmf(3, 2, 0.5), Err(Error::Domain(_))));
        assert!(matches!(binomial_pmf(1, 2, 1.5), Err(Error::Domain(_))));
        assert!(matches!(binomial_pmf(1, 2, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn poisson_cases() {
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(3, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            poisson_pmf(0, 2.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(poisson_pmf(0, 2.0).unwrap(), 0.135335, max_relative = 1e-5);
        let oracle = (-1.7f64).exp() * 1.7f64.powi(4) / factorial(4);
        assert_relative_eq!(poisson_pmf(4, 1.7).unwrap(), oracle, max_relative = 1e-12);
        assert!(matches!(poisson_pmf(1, -0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn large_counts_stay_finite() {
        let v = binomial_pmf(5_000, 10_000, 0.5).unwrap();
        assert!(v > 0.0 && v < 0.01);
        let l = ln_poisson_pmf(2_000, 0.01).unwrap();
        assert!(l.is_finite() && l < -10_000.0);
    }
}
