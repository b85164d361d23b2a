//! Monte-Carlo experiments for the Michaelis–Menten model: seeded data
//! generation with contamination, estimator comparisons and empirical
//! level/power of the one-sided validity test.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};
use crate::estimators::{ape, EstimatorSpec, FitResult};
use crate::inference::{wald_one_sided, Side};
use crate::model::{Dataset, MichaelisMenten};
use crate::optim::OptimizerConfig;

/// Share of failed replications above which a summary is flagged.
pub const FAILURE_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateDesign {
    /// `x_i = i` for `i = 1..n`.
    Sequence,
    /// Fresh `Uniform(low, high)` draws each replication.
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Response,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contamination {
    None,
    /// Multiply the response (and the covariate for [`Direction::Both`]) by `factor`.
    Multiply {
        direction: Direction,
        proportion: f64,
        factor: f64,
    },
    /// Replace `y_i` by a uniform draw between `y_i` and `20x_i/(5+x_i)`.
    Level { proportion: f64 },
    /// Replace `y_i` by a `Uniform(0, 20)` draw.
    Power { proportion: f64 },
}

impl Contamination {
    pub fn proportion(&self) -> f64 {
        match *self {
            Contamination::None => 0.0,
            Contamination::Multiply { proportion, .. }
            | Contamination::Level { proportion }
            | Contamination::Power { proportion } => proportion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub design: CovariateDesign,
    pub n: usize,
    pub beta_true: Vec<f64>,
    pub sigma_true: f64,
    pub contamination: Contamination,
    pub reps: usize,
    pub seed: u64,
}

impl SimScenario {
    /// `n = 50`, `(β₁, β₂, σ) = (5, 1, 1)`, `x_i = i`; contamination factor 5.
    pub fn setup1(proportion: f64, direction: Direction, reps: usize, seed: u64) -> Self {
        SimScenario {
            design: CovariateDesign::Sequence,
            n: 50,
            beta_true: vec![5.0, 1.0],
            sigma_true: 1.0,
            contamination: multiply(proportion, direction, 5.0),
            reps,
            seed,
        }
    }

    /// `n = 50`, `(β₁, β₂, σ) = (50, 2, 2)`, `x ~ Uniform(0, 40)`; contamination factor 2.
    pub fn setup2(proportion: f64, direction: Direction, reps: usize, seed: u64) -> Self {
        SimScenario {
            design: CovariateDesign::Uniform { low: 0.0, high: 40.0 },
            n: 50,
            beta_true: vec![50.0, 2.0],
            sigma_true: 2.0,
            contamination: multiply(proportion, direction, 2.0),
            reps,
            seed,
        }
    }

    /// Null model of the validity test: `(20, 0, 1)` on the Setup-2 design.
    pub fn level(n: usize, proportion: f64, reps: usize, seed: u64) -> Self {
        SimScenario {
            design: CovariateDesign::Uniform { low: 0.0, high: 40.0 },
            n,
            beta_true: vec![20.0, 0.0],
            sigma_true: 1.0,
            contamination: if proportion > 0.0 {
                Contamination::Level { proportion }
            } else {
                Contamination::None
            },
            reps,
            seed,
        }
    }

    /// Alternative of the validity test: `(20, 1, 2)` on the Setup-2 design.
    pub fn power(n: usize, proportion: f64, reps: usize, seed: u64) -> Self {
        SimScenario {
            design: CovariateDesign::Uniform { low: 0.0, high: 40.0 },
            n,
            beta_true: vec![20.0, 1.0],
            sigma_true: 2.0,
            contamination: if proportion > 0.0 {
                Contamination::Power { proportion }
            } else {
                Contamination::None
            },
            reps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NlrError::InvalidArgument(m));
        if self.n < 3 {
            return bad(format!("sample size {} too small", self.n));
        }
        if self.reps == 0 {
            return bad("at least one replication is required".into());
        }
        if self.beta_true.len() != 2 || self.beta_true.iter().any(|b| !b.is_finite()) || self.beta_true[1] < 0.0 {
            return bad(format!("invalid true Michaelis–Menten parameters {:?}", self.beta_true));
        }
        if !(self.sigma_true >= 0.0) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma_true));
        }
        let e = self.contamination.proportion();
        if !(0.0..1.0).contains(&e) {
            return bad(format!("contamination proportion must lie in [0, 1), got {e}"));
        }
        if let CovariateDesign::Uniform { low, high } = self.design {
            if !(low >= 0.0 && high > low) {
                return bad(format!("invalid covariate range [{low}, {high}]"));
            }
        }
        if let Contamination::Multiply { factor, .. } = self.contamination {
            if !(factor > 0.0) {
                return bad(format!("contamination factor must be positive, got {factor}"));
            }
        }
        Ok(())
    }

    /// Number of contaminated rows, `round(e_c · n)`.
    pub fn contaminated_count(&self) -> usize {
        (self.contamination.proportion() * self.n as f64).round() as usize
    }

    fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

fn multiply(proportion: f64, direction: Direction, factor: f64) -> Contamination {
    if proportion > 0.0 {
        Contamination::Multiply {
            direction,
            proportion,
            factor,
        }
    } else {
        Contamination::None
    }
}

/// Dataset for replication `rep` and its clean-row mask. Deterministic in
/// `(scenario.seed, rep)`.
pub fn generate(scenario: &SimScenario, rep: usize) -> Result<(Dataset, Vec<bool>)> {
    scenario.validate()?;
    let n = scenario.n;
    let mut rng = scenario.rng(rep);
    let mut x: Vec<f64> = match scenario.design {
        CovariateDesign::Sequence => (1..=n).map(|i| i as f64).collect(),
        CovariateDesign::Uniform { low, high } => (0..n)
            .map(|_| loop {
                let v = rng.random_range(low..high);
                if v > 0.0 {
                    break v;
                }
            })
            .collect(),
    };
    let (b1, b2) = (scenario.beta_true[0], scenario.beta_true[1]);
    let noise = Normal::new(0.0, scenario.sigma_true).map_err(|e| NlrError::InvalidArgument(e.to_string()))?;
    let mut y: Vec<f64> = x.iter().map(|&v| b1 * v / (b2 + v) + noise.sample(&mut rng)).collect();
    let mut clean = vec![true; n];
    let m = scenario.contaminated_count();
    if m > 0 {
        let mut idx = sample(&mut rng, n, m).into_vec();
        idx.sort_unstable();
        for i in idx {
            clean[i] = false;
            match scenario.contamination {
                Contamination::None => {}
                Contamination::Multiply { direction, factor, .. } => {
                    y[i] *= factor;
                    if direction == Direction::Both {
                        x[i] *= factor;
                    }
                }
                Contamination::Level { .. } => {
                    let z = 20.0 * x[i] / (5.0 + x[i]);
                    let (lo, hi) = if z < y[i] { (z, y[i]) } else { (y[i], z) };
                    if hi > lo {
                        y[i] = rng.random_range(lo..hi);
                    }
                }
                Contamination::Power { .. } => {
                    y[i] = rng.random_range(0.0..20.0);
                }
            }
        }
    }
    Ok((Dataset::univariate(x, y)?, clean))
}

/// Summary of one parameter across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub true_value: f64,
    /// Mean error, before taking the absolute value.
    pub mean_error: f64,
    pub ebias: f64,
    pub emse: f64,
    /// Population variance of the estimates over the same replications.
    pub variance: f64,
    pub ebias_se: f64,
    pub emse_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub succeeded: usize,
    pub failed: usize,
    pub unreliable: bool,
    pub params: Vec<ParamSummary>,
    pub ape: Option<f64>,
    pub ape_se: Option<f64>,
}

impl MethodSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Empirical rejection rate of `H₀: β₂ = 0` against `β₂ > 0` in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCell {
    pub alpha: f64,
    pub n: usize,
    pub proportion: f64,
    pub rejections: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub rate: f64,
    pub mean_p_value: f64,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub reps: usize,
    pub scenario: Option<SimScenario>,
    pub methods: Vec<MethodSummary>,
    pub rejection: Vec<RejectionCell>,
}

impl SimReport {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.label == label)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn summarize_param(name: &str, truth: f64, est: &[f64]) -> ParamSummary {
    let err: Vec<f64> = est.iter().map(|e| e - truth).collect();
    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
    let m = err.len() as f64;
    let mean_error = mean(&err);
    let emse = mean(&sq);
    let center = mean(est);
    let variance = est.iter().map(|e| (e - center).powi(2)).sum::<f64>() / m;
    ParamSummary {
        name: name.into(),
        true_value: truth,
        mean_error,
        ebias: mean_error.abs(),
        emse,
        variance,
        ebias_se: sd(&err) / m.sqrt(),
        emse_se: sd(&sq) / m.sqrt(),
    }
}

fn rep_config(config: &OptimizerConfig, seed: u64, rep: usize) -> OptimizerConfig {
    OptimizerConfig {
        seed: config.seed ^ seed.rotate_left(17) ^ (rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        ..config.clone()
    }
}

/// Accepts a fit only when the optimizer reports convergence.
fn usable(fit: Result<FitResult>) -> Option<FitResult> {
    fit.ok().filter(|f| f.optim.converged && f.beta.iter().all(|b| b.is_finite()))
}

/// EBias, EMSE and APE of each estimator over the scenario's replications.
pub fn run_estimation_study(scenario: &SimScenario, methods: &[EstimatorSpec], config: &OptimizerConfig) -> Result<SimReport> {
    scenario.validate()?;
    if methods.is_empty() {
        return Err(NlrError::InvalidArgument("at least one estimator is required".into()));
    }
    let model = MichaelisMenten;
    // per replication, per method: (parameter estimates, APE)
    let outcomes: Vec<Vec<Option<(Vec<f64>, f64)>>> = (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let Ok((data, clean)) = generate(scenario, rep) else {
                return vec![None; methods.len()];
            };
            let cfg = rep_config(config, scenario.seed, rep);
            methods
                .iter()
                .map(|spec| {
                    let fit = usable(spec.fit(&model, &data, &cfg))?;
                    let err = ape(&model, &fit, &data, &clean).ok()?;
                    let mut est = fit.beta.clone();
                    if let Some(s2) = fit.sigma2 {
                        est.push(s2.sqrt());
                    }
                    Some((est, err))
                })
                .collect()
        })
        .collect();
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let ok: Vec<&(Vec<f64>, f64)> = outcomes.iter().filter_map(|o| o[k].as_ref()).collect();
            let failed = scenario.reps - ok.len();
            let mut truth = scenario.beta_true.clone();
            truth.push(scenario.sigma_true);
            let names = ["beta1", "beta2", "sigma"];
            let params = if ok.is_empty() {
                vec![]
            } else {
                let width = ok[0].0.len();
                (0..width)
                    .map(|j| {
                        let est: Vec<f64> = ok.iter().map(|(e, _)| e[j]).collect();
                        summarize_param(names[j], truth[j], &est)
                    })
                    .collect()
            };
            let apes: Vec<f64> = ok.iter().map(|(_, a)| *a).collect();
            MethodSummary {
                label: spec.label(),
                succeeded: ok.len(),
                failed,
                unreliable: failed as f64 >= FAILURE_LIMIT * scenario.reps as f64,
                params,
                ape: (!apes.is_empty()).then(|| mean(&apes)),
                ape_se: (!apes.is_empty()).then(|| sd(&apes) / (apes.len() as f64).sqrt()),
            }
        })
        .collect();
    Ok(SimReport {
        reps: scenario.reps,
        scenario: Some(scenario.clone()),
        methods: summaries,
        rejection: vec![],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestScheme {
    Level,
    Power,
}

/// Settings of a level/power experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPowerStudy {
    pub scheme: TestScheme,
    pub alphas: Vec<f64>,
    pub ns: Vec<usize>,
    pub proportions: Vec<f64>,
    pub reps: usize,
    pub gamma: f64,
    pub seed: u64,
}

/// Rejection rates of the one-sided validity test per `(α, n, e_c)`.
/// Every `α` is applied to the same simulated datasets.
pub fn run_level_power_study(study: &LevelPowerStudy, config: &OptimizerConfig) -> Result<SimReport> {
    if study.alphas.is_empty() || study.ns.is_empty() || study.proportions.is_empty() {
        return Err(NlrError::InvalidArgument("alphas, sample sizes and proportions must be non-empty".into()));
    }
    if !(study.gamma > 0.0 && study.gamma < 1.0) {
        return Err(NlrError::InvalidArgument(format!("gamma must lie in (0, 1), got {}", study.gamma)));
    }
    let model = MichaelisMenten;
    let mut cells = vec![];
    for (ni, &n) in study.ns.iter().enumerate() {
        for (ei, &ec) in study.proportions.iter().enumerate() {
            let seed = study.seed ^ ((ni as u64) << 40) ^ ((ei as u64) << 20);
            let scenario = match study.scheme {
                TestScheme::Level => SimScenario::level(n, ec, study.reps, seed),
                TestScheme::Power => SimScenario::power(n, ec, study.reps, seed),
            };
            scenario.validate()?;
            // per replication, per alpha: (reject, p-value)
            let outcomes: Vec<Vec<Option<(bool, f64)>>> = (0..study.reps)
                .into_par_iter()
                .map(|rep| {
                    let Ok((data, _)) = generate(&scenario, rep) else {
                        return vec![None; study.alphas.len()];
                    };
                    let cfg = rep_config(config, seed, rep);
                    study
                        .alphas
                        .iter()
                        .map(|&a| {
                            let fit = usable(EstimatorSpec::Mdpde { alpha: a }.fit(&model, &data, &cfg))?;
                            let t = wald_one_sided(&model, &data, &fit, 1, 0.0, Side::Greater, study.gamma).ok()?;
                            Some((t.reject, t.p_value))
                        })
                        .collect()
                })
                .collect();
            for (k, &a) in study.alphas.iter().enumerate() {
                let ok: Vec<(bool, f64)> = outcomes.iter().filter_map(|o| o[k]).collect();
                let rejections = ok.iter().filter(|(r, _)| *r).count();
                let failed = study.reps - ok.len();
                let pv: Vec<f64> = ok.iter().map(|(_, p)| *p).collect();
                cells.push(RejectionCell {
                    alpha: a,
                    n,
                    proportion: ec,
                    rejections,
                    succeeded: ok.len(),
                    failed,
                    rate: if ok.is_empty() { f64::NAN } else { rejections as f64 / ok.len() as f64 },
                    mean_p_value: if pv.is_empty() { f64::NAN } else { mean(&pv) },
                    unreliable: failed as f64 >= FAILURE_LIMIT * study.reps as f64,
                });
            }
        }
    }
    Ok(SimReport {
        reps: study.reps,
        scenario: None,
        methods: vec![],
        rejection: cells,
    })
}

/// Monte-Carlo binomial band `z · √(γ(1−γ)/reps)` around a nominal rate.
pub fn binomial_band(gamma: f64, reps: usize, z: f64) -> f64 {
    z * (gamma * (1.0 - gamma) / reps as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_setup1_has_fixed_design() {
        let s = SimScenario::setup1(0.0, Direction::Response, 3, 11);
        let (d, clean) = generate(&s, 0).unwrap();
        assert_eq!(d.column(0), (1..=50).map(f64::from).collect::<Vec<_>>());
        assert!(clean.iter().all(|&c| c));
    }

    #[test]
    fn response_contamination_multiplies() {
        let pure = SimScenario::setup1(0.0, Direction::Response, 3, 5);
        let dirty = SimScenario::setup1(0.2, Direction::Response, 3, 5);
        let (a, _) = generate(&pure, 1).unwrap();
        let (b, clean) = generate(&dirty, 1).unwrap();
        assert_eq!(clean.iter().filter(|c| !**c).count(), 10);
        for i in 0..50 {
            let want = if clean[i] { a.y()[i] } else { 5.0 * a.y()[i] };
            assert_eq!(b.y()[i], want);
        }
    }

    #[test]
    fn both_direction_scales_x_and_y() {
        let pure = SimScenario::setup2(0.0, Direction::Both, 2, 9);
        let dirty = SimScenario::setup2(0.1, Direction::Both, 2, 9);
        let (a, _) = generate(&pure, 0).unwrap();
        let (b, clean) = generate(&dirty, 0).unwrap();
        for i in 0..50 {
            let k = if clean[i] { 1.0 } else { 2.0 };
            assert_eq!(b.row(i)[0], k * a.row(i)[0]);
            assert_eq!(b.y()[i], k * a.y()[i]);
        }
        // fresh covariates per replication
        let (c, _) = generate(&pure, 1).unwrap();
        assert_ne!(a.column(0), c.column(0));
    }

    #[test]
    fn level_scheme_stays_between() {
        let s = SimScenario::level(60, 0.3, 2, 4);
        let p = SimScenario::level(60, 0.0, 2, 4);
        let (d, clean) = generate(&s, 0).unwrap();
        let (d0, _) = generate(&p, 0).unwrap();
        for i in 0..60 {
            if !clean[i] {
                let x = d.row(i)[0];
                let z = 20.0 * x / (5.0 + x);
                let (lo, hi) = (z.min(d0.y()[i]), z.max(d0.y()[i]));
                assert!(d.y()[i] >= lo && d.y()[i] <= hi);
            }
        }
    }

    #[test]
    fn zero_noise_gives_zero_error() {
        let mut s = SimScenario::setup1(0.0, Direction::Response, 4, 1);
        s.sigma_true = 0.0;
        let r = run_estimation_study(&s, &[EstimatorSpec::Ols], &OptimizerConfig::default()).unwrap();
        let m = r.method("OLS").unwrap();
        assert_eq!(m.failed, 0);
        for p in &m.params[..2] {
            assert!(p.ebias < 1e-6 && p.emse < 1e-10, "{p:?}");
        }
    }

    #[test]
    fn reproducible_and_decomposes() {
        let s = SimScenario::setup1(0.1, Direction::Response, 12, 77);
        let specs = [EstimatorSpec::Ols, EstimatorSpec::Mdpde { alpha: 0.5 }];
        let cfg = OptimizerConfig::default();
        let a = run_estimation_study(&s, &specs, &cfg).unwrap();
        let b = run_estimation_study(&s, &specs, &cfg).unwrap();
        assert_eq!(a, b);
        for m in &a.methods {
            for p in &m.params {
                assert!((p.emse - (p.mean_error.powi(2) + p.variance)).abs() <= 1e-10 * (1.0 + p.emse));
            }
        }
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = SimScenario::setup1(0.0, Direction::Response, 0, 1);
        assert!(s.validate().is_err());
        s.reps = 1;
        s.contamination = Contamination::Level { proportion: 1.0 };
        assert!(s.validate().is_err());
    }
}
