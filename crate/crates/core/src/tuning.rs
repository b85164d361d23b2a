//! Data-driven choice of the DPD tuning parameter by minimizing an
//! estimated mean squared error, iterated on its own pilot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpd::asymptotic_matrices;
use crate::error::{NlrError, Result};
use crate::estimators::{fit_mdpde, FitResult};
use crate::linalg;
use crate::model::{Dataset, MeanFunction, Theta};
use crate::optim::OptimizerConfig;

/// `‖θ̂_α − θ_pilot‖² + trace(Ψ⁻¹ Ω Ψ⁻¹)/n`, with the matrices evaluated at `θ̂_α`.
pub fn wj_mse(model: &dyn MeanFunction, data: &Dataset, alpha: f64, fit_theta: &Theta, pilot: &Theta) -> Result<f64> {
    if fit_theta.beta.len() != pilot.beta.len() {
        return Err(NlrError::Dimension("pilot and estimate differ in length".into()));
    }
    let am = asymptotic_matrices(model, data, fit_theta, alpha)?;
    let psi_inv = linalg::spd_inverse(&am.psi)?;
    let sandwich = &psi_inv * &am.omega * &psi_inv;
    let bias: f64 = fit_theta
        .to_vector()
        .iter()
        .zip(pilot.to_vector().iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(bias + sandwich.trace() / data.n() as f64)
}

/// Evenly spaced grid `0, step, …, 1`.
pub fn alpha_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(NlrError::InvalidArgument(format!("grid step must lie in (0, 1], got {step}")));
    }
    let k = (1.0 / step).round() as usize;
    if ((k as f64) * step - 1.0).abs() > 1e-9 {
        return Err(NlrError::InvalidArgument(format!("grid step {step} does not divide [0, 1]")));
    }
    Ok((0..=k).map(|i| i as f64 / k as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRound {
    pub pilot_alpha: f64,
    /// Estimated MSE per grid point; `None` where the fit failed.
    pub est_mse: Vec<Option<f64>>,
    pub chosen_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningTrace {
    pub grid: Vec<f64>,
    pub rounds: Vec<TuningRound>,
    pub alpha_hat: f64,
    pub converged: bool,
}

impl TuningTrace {
    /// Estimated MSE curve of the last round.
    pub fn est_mse(&self) -> &[Option<f64>] {
        self.rounds.last().map(|r| r.est_mse.as_slice()).unwrap_or(&[])
    }

    pub fn chosen_alphas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.chosen_alpha).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IwjOptions {
    pub alpha_init: f64,
    pub grid_step: f64,
    pub max_rounds: usize,
}

impl Default for IwjOptions {
    fn default() -> Self {
        IwjOptions {
            alpha_init: 0.5,
            grid_step: 0.01,
            max_rounds: 10,
        }
    }
}

/// MDPDE fits over a fixed grid, reusable across pilots.
pub struct GridFits {
    grid: Vec<f64>,
    fits: Vec<Option<FitResult>>,
}

impl GridFits {
    pub fn new(model: &dyn MeanFunction, data: &Dataset, grid: Vec<f64>, config: &OptimizerConfig) -> Self {
        let fits = grid
            .par_iter()
            .map(|&a| {
                fit_mdpde(model, data, a, config)
                    .ok()
                    .filter(|f| f.optim.converged && f.sigma2.is_some())
            })
            .collect();
        GridFits { grid, fits }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn fit(&self, i: usize) -> Option<&FitResult> {
        self.fits[i].as_ref()
    }

    fn index_of(&self, alpha: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - alpha).abs() < 1e-12)
    }

    /// Estimated MSE on the grid for a pilot, and the minimizing grid index
    /// (smallest α among ties).
    fn round(&self, model: &dyn MeanFunction, data: &Dataset, pilot: &Theta) -> (Vec<Option<f64>>, Option<usize>) {
        let mse: Vec<Option<f64>> = self
            .grid
            .iter()
            .zip(&self.fits)
            .map(|(&a, f)| {
                let f = f.as_ref()?;
                wj_mse(model, data, a, &f.theta()?, pilot).ok().filter(|v| v.is_finite())
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in mse.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
        }
        (mse, best.map(|(i, _)| i))
    }
}

/// Iterated Warwick–Jones selection: start from the MDPDE at `alpha_init`,
/// pick the grid minimizer of [`wj_mse`], refit the pilot there and repeat
/// until the same grid point is chosen twice in a row.
pub fn iwj_select(
    model: &dyn MeanFunction,
    data: &Dataset,
    opts: &IwjOptions,
    config: &OptimizerConfig,
) -> Result<(f64, TuningTrace)> {
    let grid = GridFits::new(model, data, alpha_grid(opts.grid_step)?, config);
    iwj_with_grid(model, data, &grid, opts, config)
}

/// [`iwj_select`] over precomputed grid fits.
pub fn iwj_with_grid(
    model: &dyn MeanFunction,
    data: &Dataset,
    grid: &GridFits,
    opts: &IwjOptions,
    config: &OptimizerConfig,
) -> Result<(f64, TuningTrace)> {
    if !(opts.alpha_init > 0.0 && opts.alpha_init <= 1.0) {
        return Err(NlrError::InvalidArgument(format!(
            "initial alpha must lie in (0, 1], got {}",
            opts.alpha_init
        )));
    }
    if opts.max_rounds == 0 {
        return Err(NlrError::InvalidArgument("max_rounds must be positive".into()));
    }
    if grid.fits.iter().all(Option::is_none) {
        return Err(NlrError::NoValidGridPoint);
    }
    let mut current = opts.alpha_init;
    let mut pilot = match grid.index_of(current).and_then(|i| grid.fit(i)) {
        Some(f) => f.theta(),
        None => fit_mdpde(model, data, current, config)?.theta(),
    }
    .ok_or(NlrError::NoValidGridPoint)?;
    let mut rounds = vec![];
    let mut converged = false;
    for _ in 0..opts.max_rounds {
        let (mse, best) = grid.round(model, data, &pilot);
        let i = best.ok_or(NlrError::NoValidGridPoint)?;
        let chosen = grid.grid[i];
        rounds.push(TuningRound {
            pilot_alpha: current,
            est_mse: mse,
            chosen_alpha: chosen,
        });
        if (chosen - current).abs() < 1e-12 {
            converged = true;
            break;
        }
        current = chosen;
        pilot = grid.fit(i).and_then(FitResult::theta).ok_or(NlrError::NoValidGridPoint)?;
    }
    let alpha_hat = rounds.last().map(|r| r.chosen_alpha).unwrap_or(current);
    Ok((
        alpha_hat,
        TuningTrace {
            grid: grid.grid.clone(),
            rounds,
            alpha_hat,
            converged,
        },
    ))
}
