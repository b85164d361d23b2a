//! Datasets, parameter points and mean functions.
//!
//! A nonlinear regression model is described by a [`MeanFunction`]
//! `μ(x, β)` together with homoscedastic Gaussian errors. The
//! Michaelis–Menten rate law ships as the built-in [`MichaelisMenten`]
//! model; additional models can be added through a [`ModelRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};
use crate::linalg;

/// Covariates (n rows × k columns, row-major) and responses for one regression problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    k: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from covariate rows and responses.
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(NlrError::Dimension("dataset needs at least one row".into()));
        }
        if y.len() != n {
            return Err(NlrError::Dimension(format!(
                "{} covariate rows but {} responses",
                n,
                y.len()
            )));
        }
        let k = rows[0].len();
        let mut x = Vec::with_capacity(n * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(NlrError::Dimension(format!(
                    "row {} has {} covariates, expected {}",
                    i,
                    row.len(),
                    k
                )));
            }
            x.extend_from_slice(row);
        }
        Self::check_finite(&x, &y)?;
        Ok(Dataset { n, k, x, y })
    }

    /// Univariate dataset (k = 1).
    pub fn univariate(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(NlrError::Dimension("dataset needs at least one row".into()));
        }
        if y.len() != n {
            return Err(NlrError::Dimension(format!(
                "{} covariates but {} responses",
                n,
                y.len()
            )));
        }
        Self::check_finite(&x, &y)?;
        Ok(Dataset { n, k: 1, x, y })
    }

    fn check_finite(x: &[f64], y: &[f64]) -> Result<()> {
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(NlrError::InvalidArgument(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Covariate row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Column `j` of the covariate matrix.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.x[i * self.k + j]).collect()
    }

    /// Covariate matrix as a dense n×k matrix.
    pub fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.k, &self.x)
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.k);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset {
            n: idx.len(),
            k: self.k,
            x,
            y,
        }
    }

    /// Same covariates, new responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n {
            return Err(NlrError::Dimension(format!(
                "expected {} responses, got {}",
                self.n,
                y.len()
            )));
        }
        Self::check_finite(&self.x, &y)?;
        Ok(Dataset {
            n: self.n,
            k: self.k,
            x: self.x.clone(),
            y,
        })
    }
}

/// Full parameter point `(β, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl Theta {
    pub fn new(beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(NlrError::Domain(format!("sigma2 must be positive, got {sigma2}")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(NlrError::Domain("beta has non-finite entries".into()));
        }
        Ok(Theta { beta, sigma2 })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `(β₁, …, β_p, σ²)` as one vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.beta.len() + 1);
        v.rows_mut(0, self.beta.len())
            .copy_from_slice(&self.beta);
        v[self.beta.len()] = self.sigma2;
        v
    }
}

/// Regression function `μ(x, β)` with its gradient in `β`.
pub trait MeanFunction: Send + Sync {
    fn name(&self) -> &str;

    /// Parameter dimension `p`.
    fn n_params(&self) -> usize;

    fn eval(&self, x: &[f64], beta: &[f64]) -> f64;

    /// `∇_β μ(x, β)` written into `out`. The default is a central difference.
    fn gradient(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        central_difference_gradient(self, x, beta, out);
    }

    /// False when [`MeanFunction::gradient`] falls back to finite differences.
    fn has_analytic_gradient(&self) -> bool {
        false
    }

    fn in_domain(&self, beta: &[f64]) -> bool {
        beta.iter().all(|b| b.is_finite())
    }

    /// Pulls `beta` back into the domain; returns true if anything was clamped.
    fn project(&self, _beta: &mut [f64]) -> bool {
        false
    }

    /// Whether a covariate row lies in the model's covariate domain.
    fn covariate_ok(&self, _x: &[f64]) -> bool {
        true
    }

    /// Data-driven starting value for least squares, if the model has one.
    fn initial_guess(&self, _data: &Dataset) -> Option<Vec<f64>> {
        None
    }
}

/// Central-difference gradient with step `1e-6·(1+|β_j|)`.
pub fn central_difference_gradient<M: MeanFunction + ?Sized>(
    model: &M,
    x: &[f64],
    beta: &[f64],
    out: &mut [f64],
) {
    let mut b = beta.to_vec();
    for j in 0..beta.len() {
        let h = 1e-6 * (1.0 + beta[j].abs());
        b[j] = beta[j] + h;
        let up = model.eval(x, &b);
        b[j] = beta[j] - h;
        let down = model.eval(x, &b);
        b[j] = beta[j];
        out[j] = (up - down) / (2.0 * h);
    }
}

/// Michaelis–Menten rate law `μ(x, β) = β₁x/(β₂ + x)` with `β = (V_max, K_m)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MichaelisMenten;

impl MeanFunction for MichaelisMenten {
    fn name(&self) -> &str {
        "mm"
    }

    fn n_params(&self) -> usize {
        2
    }

    #[inline]
    fn eval(&self, x: &[f64], beta: &[f64]) -> f64 {
        beta[0] * x[0] / (beta[1] + x[0])
    }

    #[inline]
    fn gradient(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        let d = beta[1] + x[0];
        let a = x[0] / d;
        out[0] = a;
        out[1] = -beta[0] * a / d;
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn in_domain(&self, beta: &[f64]) -> bool {
        beta.len() == 2 && beta[0].is_finite() && beta[1].is_finite() && beta[1] >= 0.0
    }

    fn project(&self, beta: &mut [f64]) -> bool {
        if beta[1] < 0.0 {
            beta[1] = 0.0;
            true
        } else {
            false
        }
    }

    fn covariate_ok(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0] > 0.0
    }

    /// `β₁ = 1.05·max(y)`, `β₂ = median(x)`.
    fn initial_guess(&self, data: &Dataset) -> Option<Vec<f64>> {
        let ymax = data.y().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let xmed = linalg::median(&data.column(0));
        Some(vec![1.05 * ymax, xmed.max(0.0)])
    }
}

fn check_beta(model: &dyn MeanFunction, beta: &[f64]) -> Result<()> {
    if beta.len() != model.n_params() {
        return Err(NlrError::Dimension(format!(
            "model '{}' has {} parameters, got {}",
            model.name(),
            model.n_params(),
            beta.len()
        )));
    }
    if !model.in_domain(beta) {
        return Err(NlrError::Domain(format!(
            "beta {:?} outside the domain of model '{}'",
            beta,
            model.name()
        )));
    }
    Ok(())
}

/// `μ(β) = (μ(x₁, β), …, μ(x_n, β))`.
pub fn mu_vector(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> Result<DVector<f64>> {
    check_beta(model, beta)?;
    Ok(DVector::from_iterator(
        data.n(),
        (0..data.n()).map(|i| model.eval(data.row(i), beta)),
    ))
}

/// The n×p matrix `μ̇(β)` whose rows are `∇_β μ(x_i, β)ᵀ`.
pub fn jacobian(model: &dyn MeanFunction, data: &Dataset, beta: &[f64]) -> Result<DMatrix<f64>> {
    check_beta(model, beta)?;
    let p = model.n_params();
    let mut jac = DMatrix::zeros(data.n(), p);
    let mut g = vec![0.0; p];
    for i in 0..data.n() {
        model.gradient(data.row(i), beta, &mut g);
        for j in 0..p {
            jac[(i, j)] = g[j];
        }
    }
    Ok(jac)
}

/// Design diagnostics for the Michaelis–Menten model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmDesignReport {
    /// All `x_i > 0` and `β₂ ≥ 0`; sufficient for the smoothness conditions.
    pub r1_sufficient: bool,
    /// `x_i` not all equal, `n ≥ 2` and `β₁ ≠ 0`; necessary for full column rank.
    pub r2_necessary: bool,
    /// Smallest eigenvalue of `(1/n) μ̇ᵀμ̇`.
    pub min_eigenvalue: f64,
}

/// Checks the sufficient and necessary design conditions for the MM model at `beta`.
pub fn validate_mm_design(data: &Dataset, beta: &[f64]) -> Result<MmDesignReport> {
    if data.k() != 1 {
        return Err(NlrError::Dimension(format!(
            "MM design check needs one covariate column, got {}",
            data.k()
        )));
    }
    if beta.len() != 2 {
        return Err(NlrError::Dimension(format!("MM has 2 parameters, got {}", beta.len())));
    }
    let x = data.column(0);
    let r1_sufficient = x.iter().all(|&v| v > 0.0) && beta[1] >= 0.0;
    let all_equal = x.iter().all(|&v| v == x[0]);
    let r2_necessary = !all_equal && data.n() >= 2 && beta[0] != 0.0;

    // a_i = x/(β₂+x), b_i = β₁x/(β₂+x)²; the Gram matrix has -Σab off the diagonal.
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for &xi in &x {
        let d = beta[1] + xi;
        let a = xi / d;
        let b = beta[0] * xi / (d * d);
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    let n = data.n() as f64;
    let m = DMatrix::from_row_slice(2, 2, &[saa / n, -sab / n, -sab / n, sbb / n]);
    let (min_eigenvalue, _) = linalg::sym_eigen_extremes(&m);
    Ok(MmDesignReport {
        r1_sufficient,
        r2_necessary,
        min_eigenvalue,
    })
}

/// Named collection of mean functions; starts with the built-in `mm` model.
#[derive(Clone)]
pub struct ModelRegistry {
    models: BTreeMap<String, Arc<dyn MeanFunction>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            models: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(MichaelisMenten));
        r
    }

    /// Adds or replaces a model under its own name.
    pub fn register(&mut self, model: Arc<dyn MeanFunction>) {
        self.models.insert(model.name().to_string(), model);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn MeanFunction>> {
        self.models
            .get(name)
            .cloned()
            .ok_or_else(|| NlrError::InvalidArgument(format!("unknown model '{name}'")))
    }

    pub fn names(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }
}
