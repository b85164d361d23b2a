use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{FitResult, Method, SeSource};
use crate::dpd;
use crate::error::{NlrError, Result};
use crate::linalg;
use crate::model::{jacobian, Dataset, MeanFunction, Theta};
use crate::optim::{minimize, minimize_from, Objective, OptimizerConfig};

/// `RSS(β) / 2n` over `β`.
struct OlsObjective<'a> {
    model: &'a dyn MeanFunction,
    data: &'a Dataset,
}

impl Objective for OlsObjective<'_> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        dpd::rss(self.model, self.data, beta) / (2.0 * self.data.n() as f64)
    }

    fn value_and_gradient(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let p = beta.len();
        let n = self.data.n();
        let y = self.data.y();
        let mut gi = vec![0.0; p];
        grad.fill(0.0);
        let mut rss = 0.0;
        for i in 0..n {
            let x = self.data.row(i);
            let r = y[i] - self.model.eval(x, beta);
            self.model.gradient(x, beta, &mut gi);
            for j in 0..p {
                grad[j] -= r * gi[j];
            }
            rss += r * r;
        }
        for g in grad.iter_mut() {
            *g /= n as f64;
        }
        rss / (2.0 * n as f64)
    }

    fn gradient_reliable(&self) -> bool {
        self.model.has_analytic_gradient()
    }

    fn project(&self, beta: &mut [f64]) -> bool {
        self.model.project(beta)
    }
}

/// `H_n` in the coordinates `(β, ln σ²)`, divided by its constant at the pilot
/// variance so that tolerances do not depend on the response scale.
pub struct MdpdeObjective<'a> {
    model: &'a dyn MeanFunction,
    data: &'a Dataset,
    alpha: f64,
    scale: f64,
    log_s_floor: f64,
}

impl<'a> MdpdeObjective<'a> {
    pub fn new(model: &'a dyn MeanFunction, data: &'a Dataset, alpha: f64, pilot_sigma2: f64) -> Self {
        let floor = sigma2_floor(data);
        let s0 = pilot_sigma2.max(100.0 * floor);
        MdpdeObjective {
            model,
            data,
            alpha,
            scale: (2.0 * PI * s0).powf(-alpha / 2.0),
            log_s_floor: floor.ln(),
        }
    }

    /// Maps `θ` to optimizer coordinates, respecting the variance floor.
    pub fn encode(&self, theta: &Theta) -> Vec<f64> {
        let mut z = theta.beta.clone();
        z.push(theta.sigma2.ln().max(self.log_s_floor));
        z
    }

    pub fn decode(&self, z: &[f64]) -> Theta {
        let p = z.len() - 1;
        Theta {
            beta: z[..p].to_vec(),
            sigma2: z[p].exp(),
        }
    }
}

impl Objective for MdpdeObjective<'_> {
    fn dim(&self) -> usize {
        self.model.n_params() + 1
    }

    fn value(&self, z: &[f64]) -> f64 {
        let p = z.len() - 1;
        dpd::objective_unchecked(self.model, self.data, &z[..p], z[p].exp(), self.alpha) / self.scale
    }

    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let p = z.len() - 1;
        let s = z[p].exp();
        let (v, g) = dpd::value_and_gradient_unchecked(self.model, self.data, &z[..p], s, self.alpha);
        for j in 0..p {
            grad[j] = g[j] / self.scale;
        }
        grad[p] = s * g[p] / self.scale;
        v / self.scale
    }

    fn gradient_reliable(&self) -> bool {
        self.model.has_analytic_gradient()
    }

    fn project(&self, z: &mut [f64]) -> bool {
        let p = z.len() - 1;
        let mut changed = self.model.project(&mut z[..p]);
        if z[p] < self.log_s_floor {
            z[p] = self.log_s_floor;
            changed = true;
        }
        changed
    }
}

/// Smallest variance the optimizer may visit, relative to the response scale.
fn sigma2_floor(data: &Dataset) -> f64 {
    let ms = data.y().iter().map(|v| v * v).sum::<f64>() / data.n() as f64;
    1e-12 * ms.max(1e-200)
}

fn ols_starts(model: &dyn MeanFunction, data: &Dataset) -> Vec<f64> {
    model
        .initial_guess(data)
        .filter(|b| b.len() == model.n_params() && b.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| vec![1.0; model.n_params()])
}

/// Least squares, `σ̂² = RSS/n`, covariance `σ̂²(μ̇ᵀμ̇)⁻¹` for `β̂`.
pub fn fit_ols(model: &dyn MeanFunction, data: &Dataset, config: &OptimizerConfig) -> Result<FitResult> {
    let p = model.n_params();
    if data.n() < p {
        return Err(NlrError::Dimension(format!(
            "{} observations cannot identify {} parameters",
            data.n(),
            p
        )));
    }
    let obj = OlsObjective { model, data };
    let mut b0 = ols_starts(model, data);
    model.project(&mut b0);
    let out = minimize(&obj, &b0, config)?;
    let beta = out.argmin.clone();
    let sigma2 = dpd::rss(model, data, &beta) / data.n() as f64;
    let mut fit = FitResult {
        method: Method::Ols,
        tuning: None,
        beta,
        sigma2: Some(sigma2),
        cov: None,
        std_errors: None,
        se_source: None,
        optim: out,
        scale_estimate_used: None,
        estimating_residuals: None,
        warnings: vec![],
    };
    attach_covariance(model, data, &mut fit, 0.0);
    Ok(fit)
}

fn attach_covariance(model: &dyn MeanFunction, data: &Dataset, fit: &mut FitResult, alpha: f64) {
    let Some(theta) = fit.theta() else { return };
    match dpd::asymptotic_covariance(model, data, &theta, alpha) {
        Ok(c) => fit.set_cov(&c.cov, SeSource::Asymptotic),
        Err(e) => {
            log::warn!("covariance unavailable: {e}");
            fit.warnings.push(format!("covariance unavailable: {e}"));
        }
    }
}

fn median_sq_residual(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> f64 {
    let r2: Vec<f64> = (0..data.n())
        .map(|i| (data.y()[i] - model.eval(data.row(i), beta)).powi(2))
        .collect();
    crate::linalg::median(&r2)
}

/// High-breakdown pilot: least-median-of-squares over random elemental
/// subsets, refined by two concentration steps on the best half.
fn resampling_pilot(model: &dyn MeanFunction, data: &Dataset, config: &OptimizerConfig) -> Option<Theta> {
    let p = model.n_params();
    let n = data.n();
    if n < 2 * p + 1 {
        return None;
    }
    let single = OptimizerConfig {
        n_starts: 1,
        max_iters: config.max_iters.min(200),
        ..config.clone()
    };
    let mut b0 = ols_starts(model, data);
    model.project(&mut b0);
    let fit_subset = |idx: &[usize], start: &[f64]| -> Option<Vec<f64>> {
        let sub = data.select(idx);
        let obj = OlsObjective { model, data: &sub };
        minimize_from(&obj, &[start.to_vec()], &single)
            .ok()
            .map(|o| o.argmin)
            .filter(|b| b.iter().all(|v| v.is_finite()))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1e55);
    let n_sub = (15 * p).max(30);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..n_sub {
        let mut idx = rand::seq::index::sample(&mut rng, n, p).into_vec();
        idx.sort_unstable();
        let Some(beta) = fit_subset(&idx, &b0) else { continue };
        let crit = median_sq_residual(model, data, &beta);
        if crit.is_finite() && best.as_ref().is_none_or(|(c, _)| crit < *c) {
            best = Some((crit, beta));
        }
    }
    let (_, mut beta) = best?;
    let h = n / 2 + 1;
    for _ in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        let r2: Vec<f64> = (0..n)
            .map(|i| (data.y()[i] - model.eval(data.row(i), &beta)).powi(2))
            .collect();
        order.sort_by(|&a, &b| r2[a].total_cmp(&r2[b]));
        let mut keep = order[..h].to_vec();
        keep.sort_unstable();
        match fit_subset(&keep, &beta) {
            Some(b) => beta = b,
            None => break,
        }
    }
    let resid: Vec<f64> = (0..n)
        .map(|i| data.y()[i] - model.eval(data.row(i), &beta))
        .collect();
    let s = super::robust_scale(&resid, super::ScaleVariant::Mad).ok()?;
    Some(Theta { beta, sigma2: s * s })
}

/// Starting points for the MDPDE: the least-squares pilot first; with more
/// than one start, a high-breakdown resampling pilot second, then jittered
/// copies alternating between the two pilots.
///
/// If least squares fails or leaves a singular design, the single start
/// `β = (1, …, 1)`, `σ² = 1` is returned.
pub fn default_starts(model: &dyn MeanFunction, data: &Dataset, alpha: f64, config: &OptimizerConfig) -> Vec<Theta> {
    let p = model.n_params();
    let fallback = || {
        log::warn!("least-squares pilot failed; starting from the unit vector");
        vec![Theta {
            beta: vec![1.0; p],
            sigma2: 1.0,
        }]
    };
    let pilot_cfg = OptimizerConfig {
        n_starts: config.n_starts.min(3),
        ..config.clone()
    };
    let Ok(ols) = fit_ols(model, data, &pilot_cfg) else {
        return fallback();
    };
    let singular = match jacobian(model, data, &ols.beta) {
        Ok(j) => !(linalg::sym_condition(&linalg::gram(&j)) <= linalg::CONDITION_CEILING),
        Err(_) => true,
    };
    if singular || !ols.beta.iter().all(|b| b.is_finite()) {
        return fallback();
    }
    let floor = sigma2_floor(data);
    let s0 = ols.sigma2.unwrap_or(1.0).max(100.0 * floor);
    let mut starts = vec![Theta {
        beta: ols.beta.clone(),
        sigma2: s0,
    }];
    if config.n_starts >= 2 && alpha > 0.0 {
        if let Some(mut t) = resampling_pilot(model, data, config) {
            t.sigma2 = t.sigma2.max(100.0 * floor);
            starts.push(t);
        }
    }
    let centers: Vec<Theta> = starts.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.start_dispersion;
    while starts.len() < config.n_starts {
        let center = &centers[starts.len() % centers.len()];
        let mut beta: Vec<f64> = center
            .beta
            .iter()
            .map(|&b| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if b != 0.0 {
                    b * (1.0 + d * z)
                } else {
                    d * z
                }
            })
            .collect();
        model.project(&mut beta);
        let z: f64 = StandardNormal.sample(&mut rng);
        starts.push(Theta {
            beta,
            sigma2: center.sigma2 * (2.0 * d * z).exp(),
        });
    }
    starts
}

/// Minimum density power divergence estimate at tuning parameter `alpha`.
///
/// `alpha = 0` gives the maximum-likelihood fit (least squares with
/// `σ̂² = RSS/n`).
pub fn fit_mdpde(model: &dyn MeanFunction, data: &Dataset, alpha: f64, config: &OptimizerConfig) -> Result<FitResult> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(NlrError::Alpha {
            expected: ">= 0",
            got: alpha,
        });
    }
    config.validate()?;
    if alpha == 0.0 {
        let mut fit = fit_ols(model, data, config)?;
        fit.method = Method::Mdpde;
        fit.tuning = Some(0.0);
        if let Some(theta) = fit.theta().filter(|t| t.sigma2 > 0.0) {
            fit.estimating_residuals = dpd::estimating_residuals(model, data, &theta, 0.0)
                .ok()
                .map(|r| r.iter().cloned().collect());
        }
        return Ok(fit);
    }
    let starts = default_starts(model, data, alpha, config);
    let obj = MdpdeObjective::new(model, data, alpha, starts[0].sigma2);
    let zs: Vec<Vec<f64>> = starts.iter().map(|t| obj.encode(t)).collect();
    let out = minimize_from(&obj, &zs, config)?;
    let theta = obj.decode(&out.argmin);
    let mut fit = FitResult {
        method: Method::Mdpde,
        tuning: Some(alpha),
        beta: theta.beta.clone(),
        sigma2: Some(theta.sigma2),
        cov: None,
        std_errors: None,
        se_source: None,
        optim: out,
        scale_estimate_used: None,
        estimating_residuals: None,
        warnings: vec![],
    };
    if fit.optim.at_boundary {
        fit.warnings.push("estimate lies on the parameter boundary".into());
    }
    if !fit.optim.converged {
        fit.warnings.push(format!(
            "optimizer did not reach the gradient tolerance (grad_norm {:e})",
            fit.optim.grad_norm
        ));
    }
    fit.estimating_residuals = dpd::estimating_residuals(model, data, &theta, alpha)
        .ok()
        .map(|r| r.iter().cloned().collect());
    attach_covariance(model, data, &mut fit, alpha);
    Ok(fit)
}
