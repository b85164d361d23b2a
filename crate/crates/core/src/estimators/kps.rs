use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::m::MLoss;
use super::scale::{robust_scale, ScaleVariant};
use super::{fit_ols, FitResult, Method, SeSource};
use crate::error::{NlrError, Result};
use crate::linalg::{self, median};
use crate::model::{jacobian, Dataset, MeanFunction};
use crate::optim::{jittered_starts, minimize_from, Objective, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpsOptions {
    pub omega: f64,
    pub scale: ScaleVariant,
    /// Nonparametric bootstrap replicates for standard errors; none by default.
    pub bootstrap: Option<usize>,
    pub seed: u64,
    /// Cap on leverage/scale refresh rounds.
    pub max_outer: usize,
}

impl KpsOptions {
    pub fn new(omega: f64) -> Self {
        KpsOptions {
            omega,
            scale: ScaleVariant::KpsMedMed,
            bootstrap: None,
            seed: 0,
            max_outer: 50,
        }
    }
}

/// `(1/n) Σ ρ_ω((1 − h_ii) r_i / σ) / L_i` with leverages and scale frozen.
struct KpsObjective<'a> {
    model: &'a dyn MeanFunction,
    data: &'a Dataset,
    loss: MLoss,
    sigma: f64,
    shrink: Vec<f64>,
    inv_l: Vec<f64>,
}

impl Objective for KpsObjective<'_> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let y = self.data.y();
        let s: f64 = (0..self.data.n())
            .map(|i| {
                let t = self.shrink[i] * (y[i] - self.model.eval(self.data.row(i), beta)) / self.sigma;
                self.loss.rho(t) * self.inv_l[i]
            })
            .sum();
        s / self.data.n() as f64
    }

    fn value_and_gradient(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let p = beta.len();
        let y = self.data.y();
        let mut gi = vec![0.0; p];
        let mut v = 0.0;
        grad.fill(0.0);
        for i in 0..self.data.n() {
            let x = self.data.row(i);
            let t = self.shrink[i] * (y[i] - self.model.eval(x, beta)) / self.sigma;
            v += self.loss.rho(t) * self.inv_l[i];
            let w = self.loss.psi(t) * self.shrink[i] * self.inv_l[i] / self.sigma;
            self.model.gradient(x, beta, &mut gi);
            for j in 0..p {
                grad[j] -= w * gi[j];
            }
        }
        let n = self.data.n() as f64;
        for g in grad.iter_mut() {
            *g /= n;
        }
        v / n
    }

    fn gradient_reliable(&self) -> bool {
        self.model.has_analytic_gradient()
    }

    fn project(&self, beta: &mut [f64]) -> bool {
        self.model.project(beta)
    }
}

/// `L_i = Σ_j max(M_j, |x_ij|)` with `M_j` the median of `|x_·j|`.
pub(crate) fn covariate_scales(data: &Dataset) -> Vec<f64> {
    let m: Vec<f64> = (0..data.k())
        .map(|j| median(&data.column(j).iter().map(|v| v.abs()).collect::<Vec<_>>()))
        .collect();
    (0..data.n())
        .map(|i| data.row(i).iter().zip(&m).map(|(x, mj)| mj.max(x.abs())).sum())
        .collect()
}

/// Diagonal of `μ̇(μ̇ᵀμ̇)⁻¹μ̇ᵀ`.
fn leverages(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    let j = jacobian(model, data, beta)?;
    let minv = linalg::spd_inverse(&linalg::gram(&j))?;
    Ok((0..data.n())
        .map(|i| {
            let row = j.row(i).transpose();
            row.dot(&(&minv * &row))
        })
        .collect())
}

fn residuals(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> Vec<f64> {
    (0..data.n())
        .map(|i| data.y()[i] - model.eval(data.row(i), beta))
        .collect()
}

fn kps_core(model: &dyn MeanFunction, data: &Dataset, opts: &KpsOptions, config: &OptimizerConfig) -> Result<FitResult> {
    if !(opts.omega > 0.0) {
        return Err(NlrError::InvalidArgument(format!("KPS omega must be positive, got {}", opts.omega)));
    }
    let l = covariate_scales(data);
    if l.iter().any(|&v| !(v > 0.0)) {
        return Err(NlrError::InvalidArgument("KPS covariate scales must be positive".into()));
    }
    let inv_l: Vec<f64> = l.iter().map(|v| 1.0 / v).collect();
    let ols = fit_ols(model, data, config)?;
    let mut beta = ols.beta.clone();
    let mut sigma = f64::NAN;
    let mut last = None;
    for round in 0..opts.max_outer.max(1) {
        sigma = robust_scale(&residuals(model, data, &beta), opts.scale)?;
        let h = leverages(model, data, &beta)?;
        let obj = KpsObjective {
            model,
            data,
            loss: MLoss::Sech(opts.omega),
            sigma,
            shrink: h.iter().map(|hi| 1.0 - hi).collect(),
            inv_l: inv_l.clone(),
        };
        let starts = if round == 0 {
            jittered_starts(&beta, config)
        } else {
            vec![beta.clone()]
        };
        let out = minimize_from(&obj, &starts, config)?;
        let step = out
            .argmin
            .iter()
            .zip(&beta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let size = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        beta = out.argmin.clone();
        last = Some(out);
        if step <= 1e-9 * (1.0 + size) {
            break;
        }
    }
    Ok(FitResult {
        method: Method::Kps,
        tuning: Some(opts.omega),
        beta,
        sigma2: None,
        cov: None,
        std_errors: None,
        se_source: None,
        optim: last.expect("at least one round"),
        scale_estimate_used: Some(sigma),
        estimating_residuals: None,
        warnings: vec![],
    })
}

/// KPS estimate: sech loss on leverage-shrunk standardized residuals, each
/// term divided by a covariate scale. Leverages and the residual scale are
/// refreshed from the current estimate until it settles.
pub fn fit_kps(model: &dyn MeanFunction, data: &Dataset, opts: &KpsOptions, config: &OptimizerConfig) -> Result<FitResult> {
    let mut fit = kps_core(model, data, opts, config)?;
    if let Some(b) = opts.bootstrap {
        let inner = KpsOptions {
            bootstrap: None,
            ..opts.clone()
        };
        let boot_cfg = OptimizerConfig {
            n_starts: 1,
            ..config.clone()
        };
        let n = data.n();
        let draws: Vec<Vec<f64>> = (0..b)
            .into_par_iter()
            .filter_map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(rep as u64);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                kps_core(model, &data.select(&idx), &inner, &boot_cfg)
                    .ok()
                    .map(|f| f.beta)
            })
            .collect();
        if draws.len() < 2 {
            fit.warnings.push("bootstrap produced fewer than two successful refits".into());
        } else {
            let p = fit.beta.len();
            let m = draws.len() as f64;
            let mean: Vec<f64> = (0..p).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / m).collect();
            let mut cov = DMatrix::zeros(p, p);
            for d in &draws {
                for a in 0..p {
                    for c in 0..p {
                        cov[(a, c)] += (d[a] - mean[a]) * (d[c] - mean[c]) / (m - 1.0);
                    }
                }
            }
            if draws.len() < b {
                fit.warnings.push(format!("{} of {} bootstrap refits failed", b - draws.len(), b));
            }
            fit.set_cov(&cov, SeSource::Bootstrap { replicates: draws.len() });
        }
    }
    Ok(fit)
}
