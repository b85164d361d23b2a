use serde::{Deserialize, Serialize};

use super::scale::{robust_scale, ScaleVariant};
use super::{fit_ols, FitResult, Method, SeSource};
use crate::error::{NlrError, Result};
use crate::linalg;
use crate::model::{jacobian, Dataset, MeanFunction};
use crate::optim::{jittered_starts, minimize_from, Objective, OptimizerConfig};
use crate::quadrature::gaussian_expectation;

/// Loss functions `ρ` of the M-type estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MLoss {
    /// `x²/2` inside `[−c, c]`, `c|x| − c²/2` outside.
    Huber(f64),
    /// Biweight: `c²/6 · (1 − (1 − (x/c)²)³)` inside `[−c, c]`, `c²/6` outside.
    Tukey(f64),
    /// `1 − sech(ωx)`, the KPS loss.
    Sech(f64),
}

impl MLoss {
    pub fn tuning(&self) -> f64 {
        match *self {
            MLoss::Huber(c) | MLoss::Tukey(c) | MLoss::Sech(c) => c,
        }
    }

    pub fn rho(&self, x: f64) -> f64 {
        match *self {
            MLoss::Huber(c) => {
                if x.abs() <= c {
                    0.5 * x * x
                } else {
                    c * x.abs() - 0.5 * c * c
                }
            }
            MLoss::Tukey(c) => {
                if x.abs() <= c {
                    let u = 1.0 - (x / c).powi(2);
                    c * c / 6.0 * (1.0 - u * u * u)
                } else {
                    c * c / 6.0
                }
            }
            MLoss::Sech(w) => 1.0 - 1.0 / (w * x).cosh(),
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        match *self {
            MLoss::Huber(c) => x.clamp(-c, c),
            MLoss::Tukey(c) => {
                if x.abs() <= c {
                    let u = 1.0 - (x / c).powi(2);
                    x * u * u
                } else {
                    0.0
                }
            }
            MLoss::Sech(w) => {
                let z = w * x;
                w * z.tanh() / z.cosh()
            }
        }
    }

    pub fn dpsi(&self, x: f64) -> f64 {
        match *self {
            MLoss::Huber(c) => {
                if x.abs() <= c {
                    1.0
                } else {
                    0.0
                }
            }
            MLoss::Tukey(c) => {
                if x.abs() <= c {
                    let u = (x / c).powi(2);
                    (1.0 - u) * (1.0 - 5.0 * u)
                } else {
                    0.0
                }
            }
            MLoss::Sech(w) => {
                let z = w * x;
                let t = z.tanh();
                w * w * (1.0 - 2.0 * t * t) / z.cosh()
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match *self {
            MLoss::Huber(c) | MLoss::Tukey(c) => vec![-c, c],
            MLoss::Sech(_) => vec![],
        }
    }

    fn check(&self) -> Result<()> {
        let c = self.tuning();
        if !(c > 0.0) || c.is_nan() {
            return Err(NlrError::InvalidArgument(format!("loss tuning constant must be positive, got {c}")));
        }
        Ok(())
    }
}

/// `E[ψ(Z)²] / E[ψ′(Z)]²` for standard normal `Z`.
pub fn v_m_factor(loss: MLoss) -> f64 {
    let brk = loss.kinks();
    let e_psi2 = gaussian_expectation(|z| loss.psi(z).powi(2), &brk);
    let e_dpsi = gaussian_expectation(|z| loss.dpsi(z), &brk);
    e_psi2 / (e_dpsi * e_dpsi)
}

/// Asymptotic efficiency relative to least squares under Gaussian errors.
pub fn are_m_estimator(loss: MLoss) -> f64 {
    1.0 / v_m_factor(loss)
}

struct MObjective<'a> {
    model: &'a dyn MeanFunction,
    data: &'a Dataset,
    loss: MLoss,
    sigma: f64,
}

impl Objective for MObjective<'_> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let y = self.data.y();
        let s: f64 = (0..self.data.n())
            .map(|i| self.loss.rho((y[i] - self.model.eval(self.data.row(i), beta)) / self.sigma))
            .sum();
        s / self.data.n() as f64
    }

    fn value_and_gradient(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let p = beta.len();
        let n = self.data.n() as f64;
        let y = self.data.y();
        let mut gi = vec![0.0; p];
        let mut v = 0.0;
        grad.fill(0.0);
        for i in 0..self.data.n() {
            let x = self.data.row(i);
            let u = (y[i] - self.model.eval(x, beta)) / self.sigma;
            v += self.loss.rho(u);
            let w = self.loss.psi(u) / self.sigma;
            self.model.gradient(x, beta, &mut gi);
            for j in 0..p {
                grad[j] -= w * gi[j];
            }
        }
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

/// Huber or Tukey M-estimate with the MAD scale of least-squares residuals
/// held fixed; covariance `v_M (μ̇ᵀμ̇)⁻¹` with `v_M = σ̂² E[ψ²]/E[ψ′]²`.
pub fn fit_m(model: &dyn MeanFunction, data: &Dataset, loss: MLoss, config: &OptimizerConfig) -> Result<FitResult> {
    loss.check()?;
    let method = match loss {
        MLoss::Huber(_) => Method::HuberM,
        MLoss::Tukey(_) => Method::TukeyM,
        MLoss::Sech(_) => {
            return Err(NlrError::InvalidArgument(
                "the sech loss is fitted through fit_kps".into(),
            ))
        }
    };
    let ols = fit_ols(model, data, config)?;
    let resid: Vec<f64> = (0..data.n())
        .map(|i| data.y()[i] - model.eval(data.row(i), &ols.beta))
        .collect();
    let sigma = robust_scale(&resid, ScaleVariant::Mad)?;

    let mut starts = jittered_starts(&ols.beta, config);
    if let MLoss::Tukey(_) = loss {
        // the biweight is not convex: seed it with a Huber solution as well
        let huber = MObjective {
            model,
            data,
            loss: MLoss::Huber(super::EstimatorSpec::HUBER_DEFAULT),
            sigma,
        };
        if let Ok(h) = minimize_from(&huber, &starts[..1], config) {
            starts.insert(0, h.argmin);
            starts.truncate(config.n_starts.max(2));
        }
    }
    let obj = MObjective {
        model,
        data,
        loss,
        sigma,
    };
    let out = minimize_from(&obj, &starts, config)?;
    let mut fit = FitResult {
        method,
        tuning: Some(loss.tuning()),
        beta: out.argmin.clone(),
        sigma2: None,
        cov: None,
        std_errors: None,
        se_source: None,
        optim: out,
        scale_estimate_used: Some(sigma),
        estimating_residuals: None,
        warnings: vec![],
    };
    let vm = sigma * sigma * v_m_factor(loss);
    match jacobian(model, data, &fit.beta).and_then(|j| linalg::spd_inverse(&linalg::gram(&j))) {
        Ok(minv) => fit.set_cov(&(minv * vm), SeSource::Asymptotic),
        Err(e) => fit.warnings.push(format!("covariance unavailable: {e}")),
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MichaelisMenten;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn psi_is_rho_derivative() {
        for loss in [MLoss::Huber(1.345), MLoss::Tukey(4.685), MLoss::Sech(1.0)] {
            for &x in &[-6.0, -2.0, -0.7, 0.0, 0.3, 1.1, 3.0, 5.0] {
                let h = 1e-6;
                let fd = (loss.rho(x + h) - loss.rho(x - h)) / (2.0 * h);
                assert!((fd - loss.psi(x)).abs() < 1e-7, "{loss:?} at {x}");
                let fd2 = (loss.psi(x + h) - loss.psi(x - h)) / (2.0 * h);
                if (x.abs() - loss.tuning()).abs() > 1e-3 {
                    assert!((fd2 - loss.dpsi(x)).abs() < 1e-6, "{loss:?} at {x}");
                }
            }
        }
    }

    #[test]
    fn tukey_and_sech_efficiencies() {
        assert!((are_m_estimator(MLoss::Tukey(4.685)) - 0.950).abs() < 1e-3);
        assert!((are_m_estimator(MLoss::Sech(1.0)) - 0.647).abs() < 1e-3);
    }

    #[test]
    fn huber_large_c_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nz = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (1..=50).map(f64::from).collect();
        let y = x.iter().map(|&v| 5.0 * v / (1.0 + v) + nz.sample(&mut rng)).collect();
        let d = Dataset::univariate(x, y).unwrap();
        let cfg = OptimizerConfig::default();
        let h = fit_m(&MichaelisMenten, &d, MLoss::Huber(1e6), &cfg).unwrap();
        let o = fit_ols(&MichaelisMenten, &d, &cfg).unwrap();
        for j in 0..2 {
            assert!((h.beta[j] - o.beta[j]).abs() < 1e-6 * (1.0 + o.beta[j].abs()));
        }
        assert_eq!(h.sigma2, None);
        assert!(h.scale_estimate_used.is_some());
    }

    #[test]
    fn rejects_bad_tuning() {
        let d = Dataset::univariate(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 2.5]).unwrap();
        assert!(fit_m(&MichaelisMenten, &d, MLoss::Huber(0.0), &OptimizerConfig::default()).is_err());
    }
}
