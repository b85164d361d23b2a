//! Density power divergence objective, gradient, estimating equations and
//! the closed-form asymptotic matrices of the MDPDE under Gaussian errors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};
use crate::linalg;
use crate::model::{jacobian, Dataset, MeanFunction, Theta};

/// `ζ_α`, `ς_α`, `v₁α`, `v₂α` at a given `(α, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpdConstants {
    pub alpha: f64,
    pub zeta: f64,
    pub varsigma: f64,
    pub v1: f64,
    pub v2: f64,
}

impl DpdConstants {
    pub fn new(alpha: f64, sigma2: f64) -> Result<Self> {
        check_alpha_nonneg(alpha)?;
        check_sigma2(sigma2)?;
        Ok(DpdConstants {
            alpha,
            zeta: zeta(alpha, sigma2),
            varsigma: varsigma(alpha, sigma2),
            v1: v1(alpha),
            v2: v2(alpha),
        })
    }
}

/// `ζ_α = (2π)^{−α/2} σ^{−(α+2)} (1+α)^{−3/2}`.
pub fn zeta(alpha: f64, sigma2: f64) -> f64 {
    (2.0 * PI).powf(-alpha / 2.0) * sigma2.powf(-(alpha + 2.0) / 2.0) * (1.0 + alpha).powf(-1.5)
}

/// `ς_α = (2π)^{−α/2} σ^{−(α+4)} (2+α²) / (4(1+α)^{5/2})`.
pub fn varsigma(alpha: f64, sigma2: f64) -> f64 {
    (2.0 * PI).powf(-alpha / 2.0) * sigma2.powf(-(alpha + 4.0) / 2.0) * (2.0 + alpha * alpha)
        / (4.0 * (1.0 + alpha).powf(2.5))
}

/// Variance inflation of `β̂_α` relative to least squares.
pub fn v1(alpha: f64) -> f64 {
    (1.0 + alpha * alpha / (1.0 + 2.0 * alpha)).powf(1.5)
}

/// Asymptotic variance factor of `σ̂²_α` (`v₂₀ = 2`).
pub fn v2(alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    4.0 / ((2.0 + a2) * (2.0 + a2))
        * (2.0 * (1.0 + 2.0 * a2) * (1.0 + a2 / (1.0 + 2.0 * alpha)).powf(2.5)
            - a2 * (1.0 + alpha) * (1.0 + alpha))
}

/// Asymptotic efficiency of `β̂_α` relative to the MLE.
pub fn are_beta(alpha: f64) -> f64 {
    1.0 / v1(alpha)
}

/// Asymptotic efficiency of `σ̂²_α` relative to the MLE.
pub fn are_sigma2(alpha: f64) -> f64 {
    2.0 / v2(alpha)
}

fn check_alpha_pos(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(NlrError::Alpha {
            expected: "> 0",
            got: alpha,
        });
    }
    Ok(())
}

fn check_alpha_nonneg(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(NlrError::Alpha {
            expected: ">= 0",
            got: alpha,
        });
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(NlrError::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

fn check_theta(model: &dyn MeanFunction, theta: &Theta) -> Result<()> {
    check_sigma2(theta.sigma2)?;
    if theta.beta.len() != model.n_params() {
        return Err(NlrError::Dimension(format!(
            "model '{}' has {} parameters, got {}",
            model.name(),
            model.n_params(),
            theta.beta.len()
        )));
    }
    if !model.in_domain(&theta.beta) {
        return Err(NlrError::Domain(format!("beta {:?} outside the model domain", theta.beta)));
    }
    Ok(())
}

/// `H_n(θ)` for `α > 0`.
pub fn objective(model: &dyn MeanFunction, data: &Dataset, theta: &Theta, alpha: f64) -> Result<f64> {
    check_alpha_pos(alpha)?;
    check_theta(model, theta)?;
    Ok(objective_unchecked(model, data, &theta.beta, theta.sigma2, alpha))
}

pub(crate) fn objective_unchecked(
    model: &dyn MeanFunction,
    data: &Dataset,
    beta: &[f64],
    sigma2: f64,
    alpha: f64,
) -> f64 {
    let c = (2.0 * PI * sigma2).powf(-alpha / 2.0);
    let k = alpha / (2.0 * sigma2);
    let y = data.y();
    let mut s = 0.0;
    for i in 0..data.n() {
        let r = y[i] - model.eval(data.row(i), beta);
        s += (-k * r * r).exp();
    }
    let n = data.n() as f64;
    c / (1.0 + alpha).sqrt() - (1.0 + alpha) / alpha * c * s / n
}

/// Mean negative Gaussian log-likelihood, the `α → 0` objective.
pub fn nll(model: &dyn MeanFunction, data: &Dataset, theta: &Theta) -> Result<f64> {
    check_theta(model, theta)?;
    Ok(nll_unchecked(model, data, &theta.beta, theta.sigma2))
}

pub(crate) fn nll_unchecked(model: &dyn MeanFunction, data: &Dataset, beta: &[f64], sigma2: f64) -> f64 {
    let rss = rss(model, data, beta);
    let n = data.n() as f64;
    0.5 * (2.0 * PI * sigma2).ln() + rss / (2.0 * sigma2 * n)
}

/// Residual sum of squares at `beta`.
pub fn rss(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> f64 {
    let y = data.y();
    (0..data.n())
        .map(|i| {
            let r = y[i] - model.eval(data.row(i), beta);
            r * r
        })
        .sum()
}

/// Accumulates `Σ e_i r_i ∇μ_i`, `Σ e_i`, `Σ e_i r_i²` in one pass.
struct Sums {
    score: Vec<f64>,
    e: f64,
    er2: f64,
}

fn weighted_sums(model: &dyn MeanFunction, data: &Dataset, beta: &[f64], sigma2: f64, alpha: f64) -> Sums {
    let p = beta.len();
    let k = alpha / (2.0 * sigma2);
    let y = data.y();
    let mut g = vec![0.0; p];
    let mut out = Sums {
        score: vec![0.0; p],
        e: 0.0,
        er2: 0.0,
    };
    for i in 0..data.n() {
        let x = data.row(i);
        let r = y[i] - model.eval(x, beta);
        let e = (-k * r * r).exp();
        model.gradient(x, beta, &mut g);
        for j in 0..p {
            out.score[j] += e * r * g[j];
        }
        out.e += e;
        out.er2 += e * r * r;
    }
    out
}

/// `(∂H_n/∂β, ∂H_n/∂σ²)` for `α > 0`.
pub fn gradient(model: &dyn MeanFunction, data: &Dataset, theta: &Theta, alpha: f64) -> Result<DVector<f64>> {
    check_alpha_pos(alpha)?;
    check_theta(model, theta)?;
    let (_, g) = value_and_gradient_unchecked(model, data, &theta.beta, theta.sigma2, alpha);
    Ok(g)
}

pub(crate) fn value_and_gradient_unchecked(
    model: &dyn MeanFunction,
    data: &Dataset,
    beta: &[f64],
    sigma2: f64,
    alpha: f64,
) -> (f64, DVector<f64>) {
    let p = beta.len();
    let n = data.n() as f64;
    let c = (2.0 * PI * sigma2).powf(-alpha / 2.0);
    let sums = weighted_sums(model, data, beta, sigma2, alpha);
    let value = c / (1.0 + alpha).sqrt() - (1.0 + alpha) / alpha * c * sums.e / n;
    let mut g = DVector::zeros(p + 1);
    let kb = -(1.0 + alpha) * c / (n * sigma2);
    for j in 0..p {
        g[j] = kb * sums.score[j];
    }
    let s2 = sums.e - sums.er2 / sigma2 - n * alpha / (1.0 + alpha).powf(1.5);
    g[p] = (1.0 + alpha) * c / (2.0 * sigma2 * n) * s2;
    (value, g)
}

/// Left-minus-right sides of the two estimating equations: the β block
/// `Σ e_i r_i ∇μ_i` and the scalar `Σ e_i (1 − r_i²/σ²) − nα/(1+α)^{3/2}`.
pub fn estimating_residuals(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta: &Theta,
    alpha: f64,
) -> Result<DVector<f64>> {
    check_alpha_nonneg(alpha)?;
    check_theta(model, theta)?;
    let p = theta.beta.len();
    let n = data.n() as f64;
    let sums = weighted_sums(model, data, &theta.beta, theta.sigma2, alpha);
    let mut out = DVector::zeros(p + 1);
    for j in 0..p {
        out[j] = sums.score[j];
    }
    out[p] = sums.e - sums.er2 / theta.sigma2 - n * alpha / (1.0 + alpha).powf(1.5);
    Ok(out)
}

/// `Ψ_n` and `Ω_n`, both `(p+1)×(p+1)` and block diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticMatrices {
    pub psi: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

fn gram_checked(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> Result<DMatrix<f64>> {
    let m = linalg::gram(&jacobian(model, data, beta)?);
    let condition = linalg::sym_condition(&m);
    if !(condition <= linalg::CONDITION_CEILING) {
        return Err(NlrError::SingularDesign { condition });
    }
    Ok(m)
}

pub fn asymptotic_matrices(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta: &Theta,
    alpha: f64,
) -> Result<AsymptoticMatrices> {
    check_alpha_nonneg(alpha)?;
    check_theta(model, theta)?;
    let m = gram_checked(model, data, &theta.beta)?;
    let p = theta.beta.len();
    let n = data.n() as f64;
    let s = theta.sigma2;
    let z1 = zeta(alpha, s);
    let mut psi = DMatrix::zeros(p + 1, p + 1);
    let mut omega = DMatrix::zeros(p + 1, p + 1);
    psi.view_mut((0, 0), (p, p)).copy_from(&(&m * (z1 / n)));
    omega
        .view_mut((0, 0), (p, p))
        .copy_from(&(&m * (zeta(2.0 * alpha, s) / n)));
    psi[(p, p)] = varsigma(alpha, s);
    omega[(p, p)] = varsigma(2.0 * alpha, s) - alpha * alpha * z1 * z1 / 4.0;
    Ok(AsymptoticMatrices { psi, omega })
}

/// Covariance of `θ̂ = (β̂, σ̂²)` for a sample of size n, with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticCovariance {
    pub cov: DMatrix<f64>,
    pub std_errors: Vec<f64>,
}

/// `Cov(β̂) = v₁α σ² (μ̇ᵀμ̇)⁻¹`, `Var(σ̂²) = v₂α σ⁴ / n`, zero cross terms.
pub fn asymptotic_covariance(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta: &Theta,
    alpha: f64,
) -> Result<AsymptoticCovariance> {
    check_alpha_nonneg(alpha)?;
    check_theta(model, theta)?;
    let m = gram_checked(model, data, &theta.beta)?;
    let minv = linalg::spd_inverse(&m)?;
    let p = theta.beta.len();
    let s = theta.sigma2;
    let mut cov = DMatrix::zeros(p + 1, p + 1);
    cov.view_mut((0, 0), (p, p)).copy_from(&(minv * (v1(alpha) * s)));
    cov[(p, p)] = v2(alpha) * s * s / data.n() as f64;
    let std_errors = (0..=p).map(|j| cov[(j, j)].sqrt()).collect();
    Ok(AsymptoticCovariance { cov, std_errors })
}
