//! Normal, chi-square and noncentral chi-square distribution functions.

use std::f64::consts::SQRT_2;

use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{NlrError, Result};

/// Tail mass of the Poisson mixing weights left out of the noncentral series.
const POISSON_TAIL: f64 = 1e-14;
const MAX_TERMS: usize = 200_000;

/// `Φ(z)` through the regularized incomplete gamma function, which holds
/// full double precision where the `erfc` routine at hand does not.
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    if z == 0.0 {
        return 0.5;
    }
    let half_tail = 0.5 * gamma_ur(0.5, 0.5 * z * z);
    if z < 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_quantile(q: f64) -> Result<f64> {
    check_prob(q)?;
    let mut z = -SQRT_2 * erfc_inv(2.0 * q);
    // one Newton polish against the cdf
    let d = std_normal_pdf(z);
    if d > 0.0 {
        z -= (std_normal_cdf(z) - q) / d;
    }
    Ok(z)
}

fn check_prob(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(NlrError::Domain(format!("probability must lie in (0, 1), got {q}")));
    }
    Ok(())
}

fn check_df(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(NlrError::Domain(format!("degrees of freedom must be positive, got {r}")));
    }
    Ok(())
}

/// `P(χ²_r ≤ x)`.
pub fn chisq_cdf(x: f64, r: f64) -> Result<f64> {
    check_df(r)?;
    Ok(if x <= 0.0 { 0.0 } else { gamma_lr(r / 2.0, x / 2.0) })
}

/// `P(χ²_r > x)`.
pub fn chisq_sf(x: f64, r: f64) -> Result<f64> {
    check_df(r)?;
    Ok(if x <= 0.0 { 1.0 } else { gamma_ur(r / 2.0, x / 2.0) })
}

fn chisq_pdf(x: f64, r: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = r / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Inverse of [`chisq_cdf`] in `x`.
pub fn chisq_quantile(q: f64, r: f64) -> Result<f64> {
    check_prob(q)?;
    check_df(r)?;
    // Wilson–Hilferty start
    let z = std_normal_quantile(q)?;
    let h = 2.0 / (9.0 * r);
    let mut x = (r * (1.0 - h + z * h.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..200 {
        let f = chisq_cdf(x, r)? - q;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = chisq_pdf(x, r);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Poisson(λ) weights `w_j = e^{−λ} λ^j / j!` starting at `j = 0`, summed
/// against `term(j)` until the omitted weight is below [`POISSON_TAIL`].
fn poisson_mixture<F: FnMut(usize) -> f64>(lambda: f64, mut term: F) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(term(0));
    }
    let mut sum = 0.0;
    for j in 0..MAX_TERMS {
        let jf = j as f64;
        let w = (-lambda + jf * lambda.ln() - ln_gamma(jf + 1.0)).exp();
        sum += w * term(j);
        // P(N > j) = P(j + 1, λ)
        if jf > lambda && gamma_lr(jf + 1.0, lambda) < POISSON_TAIL {
            return Ok(sum);
        }
    }
    Err(NlrError::SeriesDivergence { terms: MAX_TERMS })
}

fn check_ncp(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(NlrError::Domain(format!("noncentrality must be non-negative, got {delta}")));
    }
    Ok(())
}

/// `P(χ²_r(δ) ≤ x)` as a Poisson(δ/2) mixture of central chi-square cdfs.
pub fn noncentral_chisq_cdf(x: f64, r: f64, delta: f64) -> Result<f64> {
    check_df(r)?;
    check_ncp(delta)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    poisson_mixture(delta / 2.0, |j| gamma_lr(r / 2.0 + j as f64, x / 2.0))
}

/// `P(χ²_r(δ) > x)`.
pub fn noncentral_chisq_sf(x: f64, r: f64, delta: f64) -> Result<f64> {
    check_df(r)?;
    check_ncp(delta)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    poisson_mixture(delta / 2.0, |j| gamma_ur(r / 2.0 + j as f64, x / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normal_basics() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_quantile(0.95).unwrap() - 1.6448536269514722).abs() < 1e-14);
        assert!((std_normal_quantile(0.025).unwrap() + 1.959963984540054).abs() < 1e-14);
        assert!(std_normal_quantile(1.0).is_err());
    }

    #[test]
    fn chisq_one_df() {
        assert!((chisq_quantile(0.95, 1.0).unwrap() - 3.841458820694124).abs() < 1e-12);
        // χ²₁ cdf equals 2Φ(√x) − 1
        let x: f64 = 2.7;
        let want = 2.0 * std_normal_cdf(x.sqrt()) - 1.0;
        assert!((chisq_cdf(x, 1.0).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(chisq_cdf(1.0, 0.0).is_err());
        assert!(chisq_quantile(0.0, 2.0).is_err());
        assert!(noncentral_chisq_cdf(1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn noncentral_two_df_closed_form_at_zero_ncp() {
        let x = 3.3;
        assert!((noncentral_chisq_cdf(x, 2.0, 0.0).unwrap() - (1.0 - (-x / 2.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn noncentral_one_df_matches_normal() {
        // χ²₁(δ) is (Z + √δ)²
        let (x, delta) = (5.0f64, 3.0f64);
        let s = x.sqrt();
        let want = std_normal_cdf(s - delta.sqrt()) - std_normal_cdf(-s - delta.sqrt());
        assert!((noncentral_chisq_cdf(x, 1.0, delta).unwrap() - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(q in 0.001f64..0.999, r in 1u32..30) {
            let x = chisq_quantile(q, r as f64).unwrap();
            prop_assert!((chisq_cdf(x, r as f64).unwrap() - q).abs() < 1e-12);
        }

        #[test]
        fn zero_ncp_is_central(x in 0.0f64..60.0, r in 1u32..20) {
            let a = noncentral_chisq_cdf(x, r as f64, 0.0).unwrap();
            let b = chisq_cdf(x, r as f64).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn cdf_and_sf_complement(x in 0.1f64..80.0, r in 1u32..10, d in 0.0f64..40.0) {
            let a = noncentral_chisq_cdf(x, r as f64, d).unwrap();
            let b = noncentral_chisq_sf(x, r as f64, d).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
