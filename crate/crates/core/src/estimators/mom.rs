use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scale::{robust_scale, ScaleVariant};
use super::{fit_ols, FitResult, Method};
use crate::error::{NlrError, Result};
use crate::linalg::median;
use crate::model::{Dataset, MeanFunction};
use crate::optim::{OptimOutcome, OptimizerConfig};

/// Seeded partition of `0..n` into `g` groups of `⌊n/g⌋`, dropping the
/// `n mod g` observations that end up last after shuffling.
pub fn mom_groups(n: usize, g: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if g == 0 || g > n {
        return Err(NlrError::InvalidArgument(format!("cannot split {n} observations into {g} groups")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if g > 1 {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let m = n / g;
    if n % g != 0 {
        log::warn!("{} observations dropped so that {} groups have equal size", n % g, g);
    }
    Ok(idx[..m * g].chunks(m).map(|c| c.to_vec()).collect())
}

/// Median-of-means estimate: componentwise median of least-squares fits on
/// a random partition into `g` equal groups.
pub fn fit_mom(model: &dyn MeanFunction, data: &Dataset, g: usize, config: &OptimizerConfig) -> Result<FitResult> {
    let groups = mom_groups(data.n(), g, config.seed)?;
    let mut fit = fit_mom_groups(model, data, &groups, config)?;
    if data.n() % g != 0 {
        fit.warnings.push(format!("{} trailing observations dropped", data.n() % g));
    }
    Ok(fit)
}

/// Median-of-means over caller-supplied groups.
pub fn fit_mom_groups(model: &dyn MeanFunction, data: &Dataset, groups: &[Vec<usize>], config: &OptimizerConfig) -> Result<FitResult> {
    let p = model.n_params();
    if groups.is_empty() {
        return Err(NlrError::InvalidArgument("no groups".into()));
    }
    let smallest = groups.iter().map(Vec::len).min().unwrap_or(0);
    if smallest < p + 1 {
        return Err(NlrError::GroupTooSmall {
            per_group: smallest,
            needed: p + 1,
        });
    }
    let fits = groups
        .iter()
        .map(|grp| fit_ols(model, &data.select(grp), config))
        .collect::<Result<Vec<_>>>()?;
    let mut beta: Vec<f64> = (0..p)
        .map(|j| median(&fits.iter().map(|f| f.beta[j]).collect::<Vec<_>>()))
        .collect();
    model.project(&mut beta);
    let resid: Vec<f64> = (0..data.n())
        .map(|i| data.y()[i] - model.eval(data.row(i), &beta))
        .collect();
    let scale = robust_scale(&resid, ScaleVariant::Mad).ok();
    let value = resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * data.n() as f64);
    let mut optim = OptimOutcome::closed_form(beta.clone(), value);
    optim.converged = fits.iter().all(|f| f.optim.converged);
    optim.n_evals = fits.iter().map(|f| f.optim.n_evals).sum();
    let warnings = if optim.converged {
        vec![]
    } else {
        vec!["a group fit did not converge".into()]
    };
    Ok(FitResult {
        method: Method::Mom,
        tuning: Some(groups.len() as f64),
        beta,
        sigma2: None,
        cov: None,
        std_errors: None,
        se_source: None,
        optim,
        scale_estimate_used: scale,
        estimating_residuals: None,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MichaelisMenten;

    #[test]
    fn one_group_is_ols() {
        let x: Vec<f64> = (1..=12).map(f64::from).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, &v)| 3.0 * v / (2.0 + v) + 0.1 * (i as f64).sin()).collect();
        let d = Dataset::univariate(x, y).unwrap();
        let cfg = OptimizerConfig::default();
        assert_eq!(
            fit_mom(&MichaelisMenten, &d, 1, &cfg).unwrap().beta,
            fit_ols(&MichaelisMenten, &d, &cfg).unwrap().beta
        );
    }

    #[test]
    fn median_of_hand_made_groups() {
        // three exact MM curves with V_max 1, 5, 9 and common K_m
        let mut x = vec![];
        let mut y = vec![];
        for vmax in [1.0, 5.0, 9.0] {
            for xi in [0.5, 1.0, 2.0, 4.0] {
                x.push(xi);
                y.push(vmax * xi / (1.0 + xi));
            }
        }
        let d = Dataset::univariate(x, y).unwrap();
        let groups = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10, 11]];
        let f = fit_mom_groups(&MichaelisMenten, &d, &groups, &OptimizerConfig::default()).unwrap();
        assert!((f.beta[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn group_too_small() {
        let d = Dataset::univariate((1..=10).map(f64::from).collect(), vec![1.0; 10]).unwrap();
        assert_eq!(
            fit_mom(&MichaelisMenten, &d, 5, &OptimizerConfig::default()).unwrap_err(),
            NlrError::GroupTooSmall { per_group: 2, needed: 3 }
        );
    }

    #[test]
    fn uneven_split_drops_trailing() {
        let g = mom_groups(23, 5, 1).unwrap();
        assert_eq!(g.len(), 5);
        assert!(g.iter().all(|grp| grp.len() == 4));
        let mut all: Vec<usize> = g.concat();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 20);
        assert_eq!(mom_groups(23, 5, 1).unwrap(), g);
    }
}
