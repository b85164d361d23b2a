//! Wald-type tests built on the MDPDE, their contiguous power and the
//! power influence function.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distributions::{chisq_quantile, chisq_sf, noncentral_chisq_sf, std_normal_cdf, std_normal_quantile};
use crate::dpd::v1;
use crate::error::{NlrError, Result};
use crate::estimators::{FitResult, Method};
use crate::influence::if_beta_all;
use crate::linalg;
use crate::model::{jacobian, Dataset, MeanFunction, Theta};

const RANK_TOL: f64 = 1e-10;
const KSTAR_REL_TOL: f64 = 1e-12;
const KSTAR_MAX_TERMS: usize = 10_000;

/// `H₀: Lβ = l₀` with `L` of full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHypothesis {
    pub l: DMatrix<f64>,
    pub l0: DVector<f64>,
}

impl LinearHypothesis {
    pub fn new(l: DMatrix<f64>, l0: DVector<f64>) -> Result<Self> {
        let r = l.nrows();
        if r == 0 || l0.len() != r {
            return Err(NlrError::Dimension(format!(
                "hypothesis has {} rows and {} right-hand values",
                r,
                l0.len()
            )));
        }
        let rank = linalg::numerical_rank(&l, RANK_TOL);
        if rank != r || r > l.ncols() {
            return Err(NlrError::Rank { rank, rows: r });
        }
        Ok(LinearHypothesis { l, l0 })
    }

    /// `β_k = value` for zero-based `k` among `p` coefficients.
    pub fn component(p: usize, k: usize, value: f64) -> Result<Self> {
        if k >= p {
            return Err(NlrError::InvalidArgument(format!("component {k} out of range for {p} parameters")));
        }
        let mut l = DMatrix::zeros(1, p);
        l[(0, k)] = 1.0;
        Self::new(l, DVector::from_element(1, value))
    }

    /// Parses comma-separated linear restrictions on `b1 … bp`, for example
    /// `"b2=0"` or `"b1-2*b2=3, b2=1"`.
    pub fn parse(text: &str, p: usize) -> Result<Self> {
        let clauses: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if clauses.is_empty() {
            return Err(NlrError::InvalidArgument("empty hypothesis".into()));
        }
        let mut l = DMatrix::zeros(clauses.len(), p);
        let mut l0 = DVector::zeros(clauses.len());
        for (row, clause) in clauses.iter().enumerate() {
            let (lhs, rhs) = clause
                .split_once('=')
                .ok_or_else(|| NlrError::InvalidArgument(format!("missing '=' in restriction {clause:?}")))?;
            l0[row] = rhs
                .trim()
                .parse::<f64>()
                .map_err(|_| NlrError::InvalidArgument(format!("bad right-hand side in {clause:?}")))?;
            for (k, coef) in parse_linear(lhs, p)? {
                l[(row, k)] += coef;
            }
        }
        Self::new(l, l0)
    }

    pub fn r(&self) -> usize {
        self.l.nrows()
    }

    pub fn p(&self) -> usize {
        self.l.ncols()
    }

    fn check_p(&self, p: usize) -> Result<()> {
        if self.p() != p {
            return Err(NlrError::Dimension(format!(
                "hypothesis has {} columns, model has {p} parameters",
                self.p()
            )));
        }
        Ok(())
    }

    /// Fails unless `‖Lβ − l₀‖∞ ≤ tol`.
    pub fn check_null(&self, theta: &Theta, tol: f64) -> Result<()> {
        self.check_p(theta.beta.len())?;
        let gap = (&self.l * DVector::from_column_slice(&theta.beta) - &self.l0).amax();
        if gap > tol {
            return Err(NlrError::InvalidArgument(format!(
                "parameter does not satisfy the null hypothesis (gap {gap:e})"
            )));
        }
        Ok(())
    }
}

/// Terms like `b1`, `-b2`, `2.5*b1`, `0.5 b3` joined by `+`/`-`.
fn parse_linear(expr: &str, p: usize) -> Result<Vec<(usize, f64)>> {
    let bad = || NlrError::InvalidArgument(format!("cannot parse linear expression {expr:?}"));
    let s: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let mut terms = vec![];
    let mut start = 0;
    let bytes = s.as_bytes();
    for i in 1..=bytes.len() {
        let boundary = i == bytes.len() || ((bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'e' && bytes[i - 1] != b'*');
        if boundary {
            terms.push(&s[start..i]);
            start = i;
        }
    }
    let mut out = vec![];
    for term in terms {
        let (sign, body) = match term.as_bytes().first() {
            Some(b'-') => (-1.0, &term[1..]),
            Some(b'+') => (1.0, &term[1..]),
            _ => (1.0, term),
        };
        let pos = body.find('b').ok_or_else(bad)?;
        let coef_text = body[..pos].trim_end_matches('*');
        let coef = if coef_text.is_empty() {
            1.0
        } else {
            coef_text.parse::<f64>().map_err(|_| bad())?
        };
        let idx: usize = body[pos + 1..].parse().map_err(|_| bad())?;
        if idx == 0 || idx > p {
            return Err(NlrError::InvalidArgument(format!("parameter b{idx} out of range 1..={p}")));
        }
        out.push((idx - 1, sign * coef));
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NullDistribution {
    ChiSq(usize),
    StdNormal,
}

/// Direction of a one-sided alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub distribution: NullDistribution,
    pub p_value: f64,
    pub critical_value: f64,
    pub gamma: f64,
    pub reject: bool,
    pub alpha_used: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(NlrError::InvalidArgument(format!("level gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// `(α, β̂, σ̂²)` from a converged MDPDE fit.
fn mdpde_parts(fit: &FitResult) -> Result<(f64, Theta)> {
    if fit.method != Method::Mdpde {
        return Err(NlrError::InvalidArgument(format!("Wald-type tests need an MDPDE fit, got {}", fit.method)));
    }
    if !fit.optim.converged {
        return Err(NlrError::InvalidArgument("the MDPDE fit did not converge".into()));
    }
    let alpha = fit.tuning.unwrap_or(0.0);
    let theta = fit
        .theta()
        .ok_or_else(|| NlrError::InvalidArgument("MDPDE fit carries no sigma2".into()))?;
    Ok((alpha, theta))
}

fn inverse_gram(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(&linalg::gram(&jacobian(model, data, beta)?))
}

/// `W = (Lβ̂ − l₀)ᵀ [L M⁻¹ Lᵀ]⁻¹ (Lβ̂ − l₀) / (v₁α σ̂²)`, referred to `χ²_r`.
pub fn wald_test(model: &dyn MeanFunction, data: &Dataset, fit: &FitResult, hyp: &LinearHypothesis, gamma: f64) -> Result<TestResult> {
    check_gamma(gamma)?;
    let (alpha, theta) = mdpde_parts(fit)?;
    hyp.check_p(theta.beta.len())?;
    let minv = inverse_gram(model, data, &theta.beta)?;
    let middle = linalg::spd_inverse(&(&hyp.l * &minv * hyp.l.transpose()))?;
    let diff = &hyp.l * DVector::from_column_slice(&theta.beta) - &hyp.l0;
    let w = linalg::quad_form(&middle, &diff).max(0.0) / (v1(alpha) * theta.sigma2);
    let r = hyp.r();
    let crit = chisq_quantile(1.0 - gamma, r as f64)?;
    Ok(TestResult {
        statistic: w,
        distribution: NullDistribution::ChiSq(r),
        p_value: chisq_sf(w, r as f64)?,
        critical_value: crit,
        gamma,
        reject: w > crit,
        alpha_used: alpha,
    })
}

/// `W̃ = (β̂_k − β_k⁰)/√(v₁α σ̂² s_kk)` for zero-based `k`, referred to `N(0, 1)`.
pub fn wald_one_sided(
    model: &dyn MeanFunction,
    data: &Dataset,
    fit: &FitResult,
    k: usize,
    beta_k0: f64,
    side: Side,
    gamma: f64,
) -> Result<TestResult> {
    check_gamma(gamma)?;
    let (alpha, theta) = mdpde_parts(fit)?;
    if k >= theta.beta.len() {
        return Err(NlrError::InvalidArgument(format!(
            "component {k} out of range for {} parameters",
            theta.beta.len()
        )));
    }
    let minv = inverse_gram(model, data, &theta.beta)?;
    let w = (theta.beta[k] - beta_k0) / (v1(alpha) * theta.sigma2 * minv[(k, k)]).sqrt();
    let z = std_normal_quantile(1.0 - gamma)?;
    let (p_value, critical_value, reject) = match side {
        Side::Greater => (std_normal_cdf(-w), z, w > z),
        Side::Less => (std_normal_cdf(w), -z, w < -z),
    };
    Ok(TestResult {
        statistic: w,
        distribution: NullDistribution::StdNormal,
        p_value,
        critical_value,
        gamma,
        reject,
        alpha_used: alpha,
    })
}

/// `δ = dᵀ [L M(β₀)⁻¹ Lᵀ]⁻¹ d / (n v₁α σ₀²)`.
pub fn noncentrality(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta0: &Theta,
    l: &DMatrix<f64>,
    d: &DVector<f64>,
    alpha: f64,
) -> Result<f64> {
    let (middle, scale) = power_pieces(model, data, theta0, l, d, alpha)?;
    Ok(linalg::quad_form(&middle, d).max(0.0) * scale)
}

/// `[L M⁻¹ Lᵀ]⁻¹` and `1/(n v₁α σ₀²)`.
fn power_pieces(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta0: &Theta,
    l: &DMatrix<f64>,
    d: &DVector<f64>,
    alpha: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if !(alpha >= 0.0) {
        return Err(NlrError::Alpha {
            expected: ">= 0",
            got: alpha,
        });
    }
    let rank = linalg::numerical_rank(l, RANK_TOL);
    if rank != l.nrows() {
        return Err(NlrError::Rank { rank, rows: l.nrows() });
    }
    if d.len() != l.nrows() || l.ncols() != theta0.beta.len() {
        return Err(NlrError::Dimension("shift d and hypothesis matrix disagree".into()));
    }
    let minv = inverse_gram(model, data, &theta0.beta)?;
    let middle = linalg::spd_inverse(&(l * &minv * l.transpose()))?;
    Ok((middle, 1.0 / (data.n() as f64 * v1(alpha) * theta0.sigma2)))
}

/// Two-sided contiguous power `1 − G_{χ²_r(δ)}(χ²_{γ;r})`.
pub fn contiguous_power(delta: f64, r: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let crit = chisq_quantile(1.0 - gamma, r as f64)?;
    noncentral_chisq_sf(crit, r as f64, delta)
}

/// One-sided contiguous power `1 − Φ(z_γ − d*/√(v₁α σ²))` with `d* = d/√(n s_kk)`.
pub fn contiguous_power_one_sided(d_star: f64, alpha: f64, sigma2: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(sigma2 > 0.0) || !(alpha >= 0.0) {
        return Err(NlrError::InvalidArgument("need sigma2 > 0 and alpha >= 0".into()));
    }
    let z = std_normal_quantile(1.0 - gamma)?;
    Ok(std_normal_cdf(-(z - d_star / (v1(alpha) * sigma2).sqrt())))
}

/// `K*_r(s) = e^{−s/2} Σ_{v≥0} s^{v−1}/(v! 2^v) (2v − s) P(χ²_{r+2v} > χ²_{γ;r})`.
///
/// The `v = 0` term is read as its limit `−e^{−s/2} P(χ²_r > χ²_{γ;r})`.
pub fn k_star(s: f64, r: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(s >= 0.0) || !s.is_finite() {
        return Err(NlrError::Domain(format!("K* argument must be non-negative, got {s}")));
    }
    let rf = r as f64;
    let crit = chisq_quantile(1.0 - gamma, rf)?;
    let tail = |v: usize| chisq_sf(crit, rf + 2.0 * v as f64);
    let mut sum = -(-s / 2.0).exp() * tail(0)?;
    if s == 0.0 {
        return Ok(sum + tail(1)?);
    }
    for v in 1..KSTAR_MAX_TERMS {
        let vf = v as f64;
        let log_mag = -s / 2.0 + (vf - 1.0) * s.ln() - ln_gamma(vf + 1.0) - vf * std::f64::consts::LN_2;
        let term = log_mag.exp() * (2.0 * vf - s) * tail(v)?;
        sum += term;
        if 2.0 * vf > s && term.abs() <= KSTAR_REL_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(NlrError::SeriesDivergence { terms: KSTAR_MAX_TERMS })
}

/// Power influence function with observation `i` contaminated at `t[i]`:
/// `K*_r(δ) dᵀ [L M⁻¹ Lᵀ]⁻¹ L IF(t) / (n v₁α σ₀²)`.
pub fn pif(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta0: &Theta,
    hyp: &LinearHypothesis,
    d: &DVector<f64>,
    alpha: f64,
    t: &[f64],
    gamma: f64,
) -> Result<f64> {
    hyp.check_null(theta0, 1e-8)?;
    let (middle, scale) = power_pieces(model, data, theta0, &hyp.l, d, alpha)?;
    let delta = linalg::quad_form(&middle, d).max(0.0) * scale;
    let inf = if_beta_all(model, data, theta0, alpha, t)?;
    let lin = d.dot(&(&middle * (&hyp.l * inf)));
    Ok(k_star(delta, hyp.r(), gamma)? * scale * lin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_mdpde;
    use crate::model::MichaelisMenten;
    use crate::optim::OptimizerConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noisy(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nz = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (1..=40).map(f64::from).collect();
        let y = x.iter().map(|&v| 20.0 * v / (1.0 + v) + nz.sample(&mut rng)).collect();
        Dataset::univariate(x, y).unwrap()
    }

    #[test]
    fn hypothesis_parsing() {
        let h = LinearHypothesis::parse("b2=0", 2).unwrap();
        assert_eq!(h.l, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        let h = LinearHypothesis::parse("b1 - 2*b2 = 3, b2=1.5", 2).unwrap();
        assert_eq!(h.l, DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 1.0]));
        assert_eq!(h.l0.as_slice(), &[3.0, 1.5]);
        assert!(LinearHypothesis::parse("b3=0", 2).is_err());
        assert!(LinearHypothesis::parse("b1", 2).is_err());
        assert!(matches!(
            LinearHypothesis::parse("b1=0,2*b1=1", 2),
            Err(NlrError::Rank { rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn wald_scalar_is_square_of_one_sided() {
        let d = noisy(1);
        let fit = fit_mdpde(&MichaelisMenten, &d, 0.3, &OptimizerConfig::default()).unwrap();
        let h = LinearHypothesis::component(2, 1, 0.8).unwrap();
        let w = wald_test(&MichaelisMenten, &d, &fit, &h, 0.05).unwrap();
        let o = wald_one_sided(&MichaelisMenten, &d, &fit, 1, 0.8, Side::Greater, 0.05).unwrap();
        assert!((w.statistic - o.statistic * o.statistic).abs() <= 1e-12 * w.statistic.max(1.0));
    }

    #[test]
    fn wald_at_estimate_is_zero() {
        let d = noisy(2);
        let fit = fit_mdpde(&MichaelisMenten, &d, 0.5, &OptimizerConfig::default()).unwrap();
        let h = LinearHypothesis::new(DMatrix::identity(2, 2), DVector::from_column_slice(&fit.beta)).unwrap();
        let w = wald_test(&MichaelisMenten, &d, &fit, &h, 0.05).unwrap();
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.p_value, 1.0);
        let o = wald_one_sided(&MichaelisMenten, &d, &fit, 0, fit.beta[0], Side::Greater, 0.05).unwrap();
        assert_eq!(o.p_value, 0.5);
    }

    #[test]
    fn noncentrality_alpha_ratio() {
        let d = noisy(3);
        let th = Theta::new(vec![20.0, 1.0], 1.0).unwrap();
        let l = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let dv = DVector::from_element(1, 1.5);
        let a = noncentrality(&MichaelisMenten, &d, &th, &l, &dv, 0.0).unwrap();
        let b = noncentrality(&MichaelisMenten, &d, &th, &l, &dv, 1.0).unwrap();
        assert!((a / b - (4.0f64 / 3.0).powf(1.5)).abs() < 1e-12);
        let c = noncentrality(&MichaelisMenten, &d, &th, &l, &(&dv * 2.0), 0.0).unwrap();
        assert!((c - 4.0 * a).abs() < 1e-12 * c);
        assert_eq!(noncentrality(&MichaelisMenten, &d, &th, &l, &DVector::zeros(1), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn power_at_zero_shift_is_level() {
        assert!((contiguous_power(0.0, 3, 0.05).unwrap() - 0.05).abs() < 1e-12);
        assert!((contiguous_power_one_sided(0.0, 0.4, 1.0, 0.05).unwrap() - 0.05).abs() < 1e-12);
        assert!((contiguous_power_one_sided(2.0, 0.3, 1.0, 0.05).unwrap() - 0.608).abs() < 5e-4);
    }

    #[test]
    fn k_star_is_twice_power_derivative() {
        for (s, r) in [(0.5, 1usize), (2.0, 2), (10.0, 3)] {
            let h = 1e-5;
            let deriv = (contiguous_power(s + h, r, 0.05).unwrap() - contiguous_power(s - h, r, 0.05).unwrap()) / (2.0 * h);
            let k = k_star(s, r, 0.05).unwrap();
            assert!((k - 2.0 * deriv).abs() < 1e-7, "s={s} r={r} k={k} 2π'={}", 2.0 * deriv);
        }
    }

    #[test]
    fn pif_vanishes_at_means() {
        let d = noisy(4);
        let th = Theta::new(vec![20.0, 1.0], 1.0).unwrap();
        let h = LinearHypothesis::component(2, 1, 1.0).unwrap();
        let t: Vec<f64> = (0..d.n()).map(|i| 20.0 * d.row(i)[0] / (1.0 + d.row(i)[0])).collect();
        let v = pif(&MichaelisMenten, &d, &th, &h, &DVector::from_element(1, 1.0), 0.5, &t, 0.05).unwrap();
        assert_eq!(v, 0.0);
        let off = Theta::new(vec![20.0, 1.1], 1.0).unwrap();
        assert!(pif(&MichaelisMenten, &d, &off, &h, &DVector::from_element(1, 1.0), 0.5, &t, 0.05).is_err());
    }

    proptest! {
        #[test]
        fn one_sided_power_increasing(a in 0.0f64..1.0, d1 in 0.0f64..6.0, gap in 0.01f64..2.0) {
            let lo = contiguous_power_one_sided(d1, a, 1.0, 0.05).unwrap();
            let hi = contiguous_power_one_sided(d1 + gap, a, 1.0, 0.05).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn two_sided_power_increasing(r in 1usize..6, d1 in 0.0f64..20.0, gap in 0.05f64..5.0) {
            prop_assert!(contiguous_power(d1 + gap, r, 0.05).unwrap() > contiguous_power(d1, r, 0.05).unwrap());
        }
    }
}
