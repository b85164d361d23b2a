//! Influence functions of the minimum DPD functionals and derived
//! sensitivity measures.
//!
//! Indices are zero-based. `M` below is `μ̇ᵀμ̇` evaluated at `θ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};
use crate::inference::LinearHypothesis;
use crate::linalg;
use crate::model::{jacobian, Dataset, MeanFunction, Theta};

/// Which observations are contaminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IfIndex {
    Single(usize),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IfTarget {
    Beta,
    Sigma2,
    /// Second-order influence of the Wald-type statistic for this hypothesis.
    Wald2(LinearHypothesis),
}

/// Influence-function query: contamination points `t` are one value for
/// [`IfIndex::Single`] and `n` values for [`IfIndex::All`].
#[derive(Debug, Clone, PartialEq)]
pub struct IfRequest {
    pub target: IfTarget,
    pub index: IfIndex,
    pub t: Vec<f64>,
    pub theta: Theta,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IfValue {
    Vector(Vec<f64>),
    Scalar(f64),
}

/// Sensitivity value; `Infinite` at `α = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sensitivity {
    Finite(f64),
    Infinite,
}

impl Sensitivity {
    pub fn value(&self) -> Option<f64> {
        match self {
            Sensitivity::Finite(v) => Some(*v),
            Sensitivity::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitivityKind {
    Gross,
    SelfStandardized,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(NlrError::Alpha {
            expected: ">= 0",
            got: alpha,
        });
    }
    Ok(())
}

fn check_index(data: &Dataset, i0: usize) -> Result<()> {
    if i0 >= data.n() {
        return Err(NlrError::InvalidArgument(format!(
            "observation index {i0} out of range for {} rows",
            data.n()
        )));
    }
    Ok(())
}

/// Precomputed pieces shared by the β influence functions.
struct Design {
    jac: DMatrix<f64>,
    minv: DMatrix<f64>,
}

impl Design {
    fn new(model: &dyn MeanFunction, data: &Dataset, theta: &Theta) -> Result<Self> {
        let jac = jacobian(model, data, &theta.beta)?;
        let minv = linalg::spd_inverse(&linalg::gram(&jac))?;
        Ok(Design { jac, minv })
    }

    fn grad(&self, i: usize) -> DVector<f64> {
        self.jac.row(i).transpose()
    }
}

/// `r·e^{−αr²/(2σ²)}` kernel scaled by `(1+α)^{3/2}`.
fn beta_kernel(r: f64, sigma2: f64, alpha: f64) -> f64 {
    (1.0 + alpha).powf(1.5) * r * (-alpha * r * r / (2.0 * sigma2)).exp()
}

fn sigma2_kernel(r: f64, sigma2: f64, alpha: f64, n: f64) -> f64 {
    let a2 = alpha * alpha;
    2.0 * (1.0 + alpha).powf(2.5) / (n * (2.0 + a2)) * (r * r - sigma2) * (-alpha * r * r / (2.0 * sigma2)).exp()
        + 2.0 * alpha * (1.0 + alpha).powi(2) / (n * (2.0 + a2))
}

/// IF of `β̂_α` for contamination at `t` in observation `i0`.
pub fn if_beta_single(model: &dyn MeanFunction, data: &Dataset, theta: &Theta, alpha: f64, i0: usize, t: f64) -> Result<DVector<f64>> {
    check_alpha(alpha)?;
    check_index(data, i0)?;
    let d = Design::new(model, data, theta)?;
    let r = t - model.eval(data.row(i0), &theta.beta);
    Ok(&d.minv * d.grad(i0) * beta_kernel(r, theta.sigma2, alpha))
}

/// IF of `σ̂²_α` for contamination at `t` in observation `i0`.
pub fn if_sigma2_single(model: &dyn MeanFunction, data: &Dataset, theta: &Theta, alpha: f64, i0: usize, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_index(data, i0)?;
    let r = t - model.eval(data.row(i0), &theta.beta);
    Ok(sigma2_kernel(r, theta.sigma2, alpha, data.n() as f64))
}

/// IF of `β̂_α` with every observation `i` contaminated at `t[i]`.
pub fn if_beta_all(model: &dyn MeanFunction, data: &Dataset, theta: &Theta, alpha: f64, t: &[f64]) -> Result<DVector<f64>> {
    check_alpha(alpha)?;
    check_points(data, t)?;
    let d = Design::new(model, data, theta)?;
    let mut acc = DVector::zeros(theta.beta.len());
    for (i, &ti) in t.iter().enumerate() {
        let r = ti - model.eval(data.row(i), &theta.beta);
        acc += d.grad(i) * beta_kernel(r, theta.sigma2, alpha);
    }
    Ok(&d.minv * acc)
}

/// IF of `σ̂²_α` with every observation `i` contaminated at `t[i]`.
pub fn if_sigma2_all(model: &dyn MeanFunction, data: &Dataset, theta: &Theta, alpha: f64, t: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    check_points(data, t)?;
    let n = data.n() as f64;
    Ok(t.iter()
        .enumerate()
        .map(|(i, &ti)| sigma2_kernel(ti - model.eval(data.row(i), &theta.beta), theta.sigma2, alpha, n))
        .sum())
}

fn check_points(data: &Dataset, t: &[f64]) -> Result<()> {
    if t.len() != data.n() {
        return Err(NlrError::Dimension(format!(
            "{} contamination points for {} observations",
            t.len(),
            data.n()
        )));
    }
    Ok(())
}

/// Michaelis–Menten closed forms for `(IF of β̂₁, IF of β̂₂)` at observation `i0`.
pub fn if_beta_mm(data: &Dataset, theta: &Theta, alpha: f64, i0: usize, t: f64) -> Result<[f64; 2]> {
    check_alpha(alpha)?;
    check_index(data, i0)?;
    let (b1, b2) = (theta.beta[0], theta.beta[1]);
    let x = data.column(0);
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for &xj in &x {
        let a = xj / (b2 + xj);
        let b = b1 * xj / (b2 + xj).powi(2);
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    let det = saa * sbb - sab * sab;
    let x0 = x[i0];
    let r = t - b1 * x0 / (b2 + x0);
    let pre = beta_kernel(r, theta.sigma2, alpha) / det;
    let s4: f64 = x.iter().map(|&xj| xj * xj * (x0 - xj) / (b2 + xj).powi(4)).sum();
    let s3: f64 = x.iter().map(|&xj| xj * xj * (x0 - xj) / (b2 + xj).powi(3)).sum();
    Ok([
        pre * b1 * b1 * x0 / (b2 + x0).powi(2) * s4,
        pre * b1 * x0 / (b2 + x0).powi(2) * s3,
    ])
}

/// Gross-error or self-standardized sensitivity of `β̂_α` at observation `i0`.
pub fn sensitivity(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta: &Theta,
    alpha: f64,
    i0: usize,
    kind: SensitivityKind,
) -> Result<Sensitivity> {
    check_alpha(alpha)?;
    check_index(data, i0)?;
    if alpha == 0.0 {
        return Ok(Sensitivity::Infinite);
    }
    let d = Design::new(model, data, theta)?;
    let g = d.grad(i0);
    let half = (-0.5f64).exp();
    let v = match kind {
        SensitivityKind::Gross => {
            (1.0 + alpha).powf(1.5) / alpha.sqrt() * theta.sigma() * half * (&d.minv * &g).norm()
        }
        SensitivityKind::SelfStandardized => {
            let n = data.n() as f64;
            (1.0 + 2.0 * alpha).powf(0.75) / (n * alpha).sqrt() * half * linalg::quad_form(&d.minv, &g).sqrt()
        }
    };
    Ok(Sensitivity::Finite(v))
}

/// Second-order IF of the Wald-type statistic at `θ₀`:
/// `(2/(n v₁α σ₀²)) IFᵀ Lᵀ [L M⁻¹ Lᵀ]⁻¹ L IF`.
pub fn if_wald_second_order(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta0: &Theta,
    hyp: &LinearHypothesis,
    alpha: f64,
    i0: usize,
    t: f64,
) -> Result<f64> {
    hyp.check_null(theta0, 1e-8)?;
    let d = Design::new(model, data, theta0)?;
    let inf = if_beta_single(model, data, theta0, alpha, i0, t)?;
    let middle = linalg::spd_inverse(&(&hyp.l * &d.minv * hyp.l.transpose()))?;
    let li = &hyp.l * inf;
    let n = data.n() as f64;
    let q = linalg::quad_form(&middle, &li).max(0.0);
    Ok(2.0 / (n * crate::dpd::v1(alpha) * theta0.sigma2) * q)
}

/// Dispatches an [`IfRequest`].
pub fn evaluate(model: &dyn MeanFunction, data: &Dataset, req: &IfRequest) -> Result<IfValue> {
    let single_t = || -> Result<f64> {
        match req.t.as_slice() {
            [t] => Ok(*t),
            _ => Err(NlrError::Dimension("single-observation IF needs exactly one point".into())),
        }
    };
    match (&req.target, req.index) {
        (IfTarget::Beta, IfIndex::Single(i)) => Ok(IfValue::Vector(
            if_beta_single(model, data, &req.theta, req.alpha, i, single_t()?)?
                .iter()
                .cloned()
                .collect(),
        )),
        (IfTarget::Beta, IfIndex::All) => Ok(IfValue::Vector(
            if_beta_all(model, data, &req.theta, req.alpha, &req.t)?
                .iter()
                .cloned()
                .collect(),
        )),
        (IfTarget::Sigma2, IfIndex::Single(i)) => Ok(IfValue::Scalar(if_sigma2_single(
            model,
            data,
            &req.theta,
            req.alpha,
            i,
            single_t()?,
        )?)),
        (IfTarget::Sigma2, IfIndex::All) => Ok(IfValue::Scalar(if_sigma2_all(model, data, &req.theta, req.alpha, &req.t)?)),
        (IfTarget::Wald2(h), IfIndex::Single(i)) => Ok(IfValue::Scalar(if_wald_second_order(
            model,
            data,
            &req.theta,
            h,
            req.alpha,
            i,
            single_t()?,
        )?)),
        (IfTarget::Wald2(_), IfIndex::All) => Err(NlrError::InvalidArgument(
            "the Wald second-order IF is defined for a single contaminated observation".into(),
        )),
    }
}

/// One row of an IF profile: `t`, the β influence and the σ² influence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfRow {
    pub t: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

/// IF profile on `points` equally spaced values of `t` spanning `center ± half_width·σ`.
/// With [`IfIndex::All`] every observation is contaminated at the same `t`
/// and the span is taken around the range of fitted means.
pub fn if_profile(
    model: &dyn MeanFunction,
    data: &Dataset,
    theta: &Theta,
    alpha: f64,
    index: IfIndex,
    half_width: f64,
    points: usize,
) -> Result<Vec<IfRow>> {
    if points < 2 {
        return Err(NlrError::InvalidArgument("profile needs at least two points".into()));
    }
    let mu: Vec<f64> = (0..data.n()).map(|i| model.eval(data.row(i), &theta.beta)).collect();
    let (lo, hi) = match index {
        IfIndex::Single(i) => {
            check_index(data, i)?;
            (mu[i], mu[i])
        }
        IfIndex::All => (
            mu.iter().cloned().fold(f64::INFINITY, f64::min),
            mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ),
    };
    let s = theta.sigma();
    let (a, b) = (lo - half_width * s, hi + half_width * s);
    (0..points)
        .map(|k| {
            let t = a + (b - a) * k as f64 / (points - 1) as f64;
            let (beta, sigma2) = match index {
                IfIndex::Single(i) => (
                    if_beta_single(model, data, theta, alpha, i, t)?,
                    if_sigma2_single(model, data, theta, alpha, i, t)?,
                ),
                IfIndex::All => {
                    let tv = vec![t; data.n()];
                    (
                        if_beta_all(model, data, theta, alpha, &tv)?,
                        if_sigma2_all(model, data, theta, alpha, &tv)?,
                    )
                }
            };
            Ok(IfRow {
                t,
                beta: beta.iter().cloned().collect(),
                sigma2,
            })
        })
        .collect()
}
