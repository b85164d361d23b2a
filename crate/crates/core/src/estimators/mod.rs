//! Estimator suite: the MDPDE and the least-squares, M, KPS and
//! median-of-means competitors, all reporting a common [`FitResult`].

mod kps;
mod m;
mod mdpde;
mod mom;
mod scale;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};
use crate::model::{Dataset, MeanFunction, Theta};
use crate::optim::{OptimOutcome, OptimizerConfig};

pub use kps::{fit_kps, KpsOptions};
pub use m::{are_m_estimator, fit_m, v_m_factor, MLoss};
pub use mdpde::{default_starts, fit_mdpde, fit_ols, MdpdeObjective};
pub use mom::{fit_mom, fit_mom_groups, mom_groups};
pub use scale::{robust_scale, ScaleVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MDPDE")]
    Mdpde,
    #[serde(rename = "OLS")]
    Ols,
    #[serde(rename = "HuberM")]
    HuberM,
    #[serde(rename = "TukeyM")]
    TukeyM,
    #[serde(rename = "KPS")]
    Kps,
    #[serde(rename = "MOM")]
    Mom,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Mdpde => "MDPDE",
            Method::Ols => "OLS",
            Method::HuberM => "HuberM",
            Method::TukeyM => "TukeyM",
            Method::Kps => "KPS",
            Method::Mom => "MOM",
        };
        f.write_str(s)
    }
}

/// Where reported standard errors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeSource {
    Asymptotic,
    Bootstrap { replicates: usize },
}

/// Outcome of one estimator on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    /// `α`, `c`, `ω` or `g`, depending on the method.
    pub tuning: Option<f64>,
    pub beta: Vec<f64>,
    /// Present for MDPDE and OLS only.
    pub sigma2: Option<f64>,
    /// Row-major covariance; `(p+1)²` entries when `sigma2` is present, else `p²`.
    pub cov: Option<Vec<Vec<f64>>>,
    pub std_errors: Option<Vec<f64>>,
    pub se_source: Option<SeSource>,
    pub optim: OptimOutcome,
    /// Robust scale the method plugged in (M, KPS, MOM).
    pub scale_estimate_used: Option<f64>,
    /// Estimating-equation residuals at the MDPDE.
    pub estimating_residuals: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// `(β̂, σ̂²)` when the method estimates `σ²`.
    pub fn theta(&self) -> Option<Theta> {
        self.sigma2.map(|s| Theta {
            beta: self.beta.clone(),
            sigma2: s,
        })
    }

    /// `σ̂²`, or the square of the plugged-in robust scale.
    pub fn sigma2_or_scale(&self) -> Option<f64> {
        self.sigma2.or(self.scale_estimate_used.map(|s| s * s))
    }

    pub(crate) fn set_cov(&mut self, cov: &DMatrix<f64>, source: SeSource) {
        let rows: Vec<Vec<f64>> = (0..cov.nrows())
            .map(|i| cov.row(i).iter().cloned().collect())
            .collect();
        self.std_errors = Some((0..cov.nrows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect());
        self.cov = Some(rows);
        self.se_source = Some(source);
    }
}

/// Estimator with its tuning constant, used by the simulation lab and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorSpec {
    Mdpde { alpha: f64 },
    Ols,
    Huber { c: f64 },
    Tukey { c: f64 },
    Kps { omega: f64 },
    Mom { groups: usize },
}

impl EstimatorSpec {
    pub const HUBER_DEFAULT: f64 = 1.345;
    pub const TUKEY_DEFAULT: f64 = 4.685;
    pub const KPS_DEFAULT: f64 = 1.0;
    pub const MOM_DEFAULT: usize = 5;

    pub fn fit(&self, model: &dyn MeanFunction, data: &Dataset, config: &OptimizerConfig) -> Result<FitResult> {
        match *self {
            EstimatorSpec::Mdpde { alpha } => fit_mdpde(model, data, alpha, config),
            EstimatorSpec::Ols => fit_ols(model, data, config),
            EstimatorSpec::Huber { c } => fit_m(model, data, MLoss::Huber(c), config),
            EstimatorSpec::Tukey { c } => fit_m(model, data, MLoss::Tukey(c), config),
            EstimatorSpec::Kps { omega } => fit_kps(model, data, &KpsOptions::new(omega), config),
            EstimatorSpec::Mom { groups } => fit_mom(model, data, groups, config),
        }
    }

    /// Short label such as `MDPDE(0.3)` or `Huber(1.345)`.
    pub fn label(&self) -> String {
        match *self {
            EstimatorSpec::Mdpde { alpha } => format!("MDPDE({alpha})"),
            EstimatorSpec::Ols => "OLS".into(),
            EstimatorSpec::Huber { c } => format!("Huber({c})"),
            EstimatorSpec::Tukey { c } => format!("Tukey({c})"),
            EstimatorSpec::Kps { omega } => format!("KPS({omega})"),
            EstimatorSpec::Mom { groups } => format!("MOM({groups})"),
        }
    }

    /// Parses `mdpde`, `mdpde:0.5`, `huber:1.5`, `ols`, `mom:5`, …
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        Self::from_parts(name, arg.map(str::trim))
    }

    /// Builds a spec from a method name and an optional tuning value.
    pub fn from_parts(name: &str, tuning: Option<&str>) -> Result<Self> {
        let num = |default: f64| -> Result<f64> {
            match tuning {
                None => Ok(default),
                Some(t) => t
                    .parse::<f64>()
                    .map_err(|_| NlrError::InvalidArgument(format!("bad tuning value '{t}'"))),
            }
        };
        let spec = match name.trim().to_ascii_lowercase().as_str() {
            "mdpde" => EstimatorSpec::Mdpde { alpha: num(0.5)? },
            "ols" | "mle" => EstimatorSpec::Ols,
            "huber" => EstimatorSpec::Huber {
                c: num(Self::HUBER_DEFAULT)?,
            },
            "tukey" => EstimatorSpec::Tukey {
                c: num(Self::TUKEY_DEFAULT)?,
            },
            "kps" => EstimatorSpec::Kps {
                omega: num(Self::KPS_DEFAULT)?,
            },
            "mom" => {
                let g = num(Self::MOM_DEFAULT as f64)?;
                if g < 1.0 || g.fract() != 0.0 {
                    return Err(NlrError::InvalidArgument(format!(
                        "MOM group count must be a positive integer, got {g}"
                    )));
                }
                EstimatorSpec::Mom { groups: g as usize }
            }
            other => return Err(NlrError::InvalidArgument(format!("unknown method '{other}'"))),
        };
        Ok(spec)
    }
}

/// `μ(x, β̂)` at each new covariate row.
pub fn predict(model: &dyn MeanFunction, fit: &FitResult, newx: &[Vec<f64>]) -> Vec<f64> {
    newx.iter().map(|x| model.eval(x, &fit.beta)).collect()
}

fn squared_residuals(model: &dyn MeanFunction, fit: &FitResult, data: &Dataset) -> Vec<f64> {
    (0..data.n())
        .map(|i| {
            let r = data.y()[i] - model.eval(data.row(i), &fit.beta);
            r * r
        })
        .collect()
}

/// Mean squared prediction error over the rows flagged clean.
pub fn ape(model: &dyn MeanFunction, fit: &FitResult, data: &Dataset, clean_mask: &[bool]) -> Result<f64> {
    if clean_mask.len() != data.n() {
        return Err(NlrError::Dimension(format!(
            "clean mask has {} entries for {} rows",
            clean_mask.len(),
            data.n()
        )));
    }
    let sq = squared_residuals(model, fit, data);
    let (sum, count) = sq
        .iter()
        .zip(clean_mask)
        .filter(|(_, &c)| c)
        .fold((0.0, 0usize), |(s, k), (v, _)| (s + v, k + 1));
    if count == 0 {
        return Err(NlrError::EmptyCleanSet);
    }
    Ok(sum / count as f64)
}

/// Mean squared residual after dropping the `⌈trim·n⌉` largest.
pub fn tape(model: &dyn MeanFunction, fit: &FitResult, data: &Dataset, trim_fraction: f64) -> Result<f64> {
    trimmed_mean_square(squared_residuals(model, fit, data), trim_fraction)
}

pub(crate) fn trimmed_mean_square(mut sq: Vec<f64>, trim_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&trim_fraction) {
        return Err(NlrError::InvalidArgument(format!(
            "trim fraction must lie in [0, 1), got {trim_fraction}"
        )));
    }
    let n = sq.len();
    // guard against 1/3·3 = 1.0000000000000002
    let drop = ((trim_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if drop >= n {
        return Err(NlrError::EmptyCleanSet);
    }
    sq.sort_by(f64::total_cmp);
    let kept = &sq[..n - drop];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_drops_largest() {
        let v = trimmed_mean_square(vec![1.0, 4.0, 100.0], 1.0 / 3.0).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(trimmed_mean_square(vec![1.0, 4.0, 100.0], 0.0).unwrap(), 35.0);
        assert!(trimmed_mean_square(vec![1.0], 1.0).is_err());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(EstimatorSpec::parse("mdpde:0.3").unwrap(), EstimatorSpec::Mdpde { alpha: 0.3 });
        assert_eq!(EstimatorSpec::parse("huber").unwrap(), EstimatorSpec::Huber { c: 1.345 });
        assert_eq!(EstimatorSpec::parse("MOM:4").unwrap(), EstimatorSpec::Mom { groups: 4 });
        assert!(EstimatorSpec::parse("mom:2.5").is_err());
        assert!(EstimatorSpec::parse("lasso").is_err());
    }
}
