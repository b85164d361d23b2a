use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use robust_nlr::estimators::{fit_mdpde, tape};
use robust_nlr::inference::{wald_one_sided, wald_test, LinearHypothesis, Side};
use robust_nlr::influence::{if_profile, IfIndex};
use robust_nlr::io::{
    emit_fit_report, emit_influence, emit_sim_report, emit_test_report, emit_tuning, read_csv, write_atomic, FitReport,
    OutputFormat, TestReport,
};
use robust_nlr::simlab::{generate, run_estimation_study, run_level_power_study, Direction, LevelPowerStudy, TestScheme};
use robust_nlr::tuning::iwj_select;
use robust_nlr::{Dataset, EstimatorSpec, IwjOptions, MeanFunction, ModelRegistry, NlrError, OptimizerConfig, SimScenario};

#[derive(Parser)]
#[command(name = "robust-nlr", version, about = "Robust nonlinear regression by minimum density power divergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a regression model and report estimates with standard errors.
    Fit {
        #[command(flatten)]
        common: Common,
        /// mdpde, ols, huber, tukey, kps or mom
        #[arg(long, default_value = "mdpde")]
        method: String,
        /// α for mdpde, c for huber/tukey, ω for kps, groups for mom
        #[arg(long)]
        tuning: Option<String>,
        /// Report the trimmed average prediction error at this trim fraction
        #[arg(long)]
        trim: Option<f64>,
    },
    /// Wald-type test of a linear hypothesis on the regression coefficients.
    Test {
        #[command(flatten)]
        common: Common,
        /// Restrictions on b1..bp, e.g. "b2=0" or "b1-2*b2=3, b2=1"
        #[arg(long, default_value = "b2=0")]
        hypothesis: String,
        /// One-sided alternative for a single-coefficient hypothesis
        #[arg(long, value_enum)]
        side: Option<SideArg>,
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        /// DPD tuning parameter of the underlying estimator
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Influence-function profile of the MDPDE over contamination points.
    Influence {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Contaminated observation (1-based); omit to contaminate all of them
        #[arg(long)]
        index: Option<usize>,
        /// Profile spans the fitted mean ± this many σ
        #[arg(long, default_value_t = 5.0)]
        half_width: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Choose α by the iterated Warwick–Jones procedure.
    TuneAlpha {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        alpha_init: f64,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        #[arg(long, default_value_t = 10)]
        max_rounds: usize,
    },
    /// Monte-Carlo comparison of estimators, or level/power of the validity test.
    Simulate {
        #[command(flatten)]
        output: OutputArgs,
        #[command(flatten)]
        optim: OptimArgs,
        #[arg(long, value_enum, default_value = "estimation")]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        setup: u8,
        /// Contamination proportion(s); comma-separated for level/power
        #[arg(long, default_value = "0")]
        ec: String,
        #[arg(long, value_enum, default_value = "response")]
        direction: DirectionArg,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Estimators, e.g. "ols,mdpde:0.5,huber,tukey,kps,mom"
        #[arg(long, default_value = "ols,mdpde:0.1,mdpde:0.3,mdpde:0.5,mdpde:0.7,mdpde:1,huber,tukey,kps,mom")]
        methods: String,
        /// Tuning parameters of the level/power study
        #[arg(long, default_value = "0,0.1,0.3,0.5,0.7,1")]
        alphas: String,
        /// Sample sizes of the level/power study
        #[arg(long, default_value = "50,100,150")]
        ns: String,
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
    },
}

#[derive(Args)]
struct Common {
    /// CSV input with a header row and a "y" column
    #[arg(long, short, required_unless_present = "demo", conflicts_with = "demo")]
    input: Option<PathBuf>,
    /// Use synthetic data from simulation setup 1 or 2 instead of a file
    #[arg(long, num_args = 0..=1, default_missing_value = "1", value_parser = clap::value_parser!(u8).range(1..=2))]
    demo: Option<u8>,
    /// Contamination proportion of the demo data
    #[arg(long, default_value_t = 0.0, requires = "demo")]
    demo_ec: f64,
    #[arg(long, default_value = "mm")]
    model: String,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "tsv")]
    format: FormatArg,
    /// Write the report here (atomically) instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimArgs {
    #[arg(long, env = "ROBUST_NLR_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    starts: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Greater,
    Less,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Estimation,
    Level,
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Response,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => OutputFormat::Tsv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

impl OptimArgs {
    fn config(&self) -> Result<OptimizerConfig, NlrError> {
        let mut c = OptimizerConfig {
            seed: self.seed,
            ..OptimizerConfig::default()
        };
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.grad_tol {
            c.grad_tol = v;
        }
        if let Some(v) = self.starts {
            c.n_starts = v;
        }
        c.validate()?;
        Ok(c)
    }
}

impl OutputArgs {
    fn write(&self, text: &str) -> Result<(), NlrError> {
        match &self.out {
            Some(path) => write_atomic(path, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

struct Loaded {
    model: std::sync::Arc<dyn MeanFunction>,
    data: Dataset,
    config: OptimizerConfig,
    format: OutputFormat,
}

impl Common {
    fn load(&self) -> Result<Loaded, NlrError> {
        let model = ModelRegistry::with_builtins().get(&self.model)?;
        let config = self.optim.config()?;
        let data = match (&self.input, self.demo) {
            (Some(path), _) => read_csv(path)?,
            (None, Some(setup)) => {
                let scenario = demo_scenario(setup, self.demo_ec, Direction::Response, 1, config.seed);
                generate(&scenario, 0)?.0
            }
            (None, None) => return Err(NlrError::InvalidArgument("either --input or --demo is required".into())),
        };
        for i in 0..data.n() {
            if !model.covariate_ok(data.row(i)) {
                return Err(NlrError::Domain(format!(
                    "row {} has covariates {:?} outside the domain of model '{}'",
                    i + 1,
                    data.row(i),
                    model.name()
                )));
            }
        }
        Ok(Loaded {
            model,
            data,
            config,
            format: self.output.format.into(),
        })
    }
}

fn demo_scenario(setup: u8, ec: f64, direction: Direction, reps: usize, seed: u64) -> SimScenario {
    if setup == 1 {
        SimScenario::setup1(ec, direction, reps, seed)
    } else {
        SimScenario::setup2(ec, direction, reps, seed)
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, NlrError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| NlrError::InvalidArgument(format!("bad {what} value {s:?}")))
        })
        .collect()
}

/// `(k, β_k⁰)` when the hypothesis restricts a single coefficient.
fn single_component(hyp: &LinearHypothesis) -> Option<(usize, f64)> {
    if hyp.r() != 1 {
        return None;
    }
    let row = hyp.l.row(0);
    let nonzero: Vec<usize> = (0..row.len()).filter(|&j| row[j] != 0.0).collect();
    match nonzero.as_slice() {
        [k] => Some((*k, hyp.l0[0] / row[*k])),
        _ => None,
    }
}

fn run(cli: Cli) -> Result<(), NlrError> {
    match cli.command {
        Command::Fit {
            common,
            method,
            tuning,
            trim,
        } => {
            let ld = common.load()?;
            let spec = EstimatorSpec::from_parts(&method, tuning.as_deref())?;
            let fit = spec.fit(ld.model.as_ref(), &ld.data, &ld.config)?;
            for w in &fit.warnings {
                warn!("{w}");
            }
            let tape = match trim {
                Some(f) => Some((f, tape(ld.model.as_ref(), &fit, &ld.data, f)?)),
                None => None,
            };
            common
                .output
                .write(&emit_fit_report(&FitReport::new(&fit, tape), ld.format))
        }
        Command::Test {
            common,
            hypothesis,
            side,
            gamma,
            alpha,
        } => {
            let ld = common.load()?;
            let hyp = LinearHypothesis::parse(&hypothesis, ld.model.n_params())?;
            let fit = fit_mdpde(ld.model.as_ref(), &ld.data, alpha, &ld.config)?;
            let result = match side {
                None => wald_test(ld.model.as_ref(), &ld.data, &fit, &hyp, gamma)?,
                Some(s) => {
                    let (k, value) = single_component(&hyp).ok_or_else(|| {
                        NlrError::InvalidArgument("a one-sided test needs a hypothesis on a single coefficient".into())
                    })?;
                    let side = match s {
                        SideArg::Greater => Side::Greater,
                        SideArg::Less => Side::Less,
                    };
                    wald_one_sided(ld.model.as_ref(), &ld.data, &fit, k, value, side, gamma)?
                }
            };
            common
                .output
                .write(&emit_test_report(&TestReport::new(&hypothesis, result), ld.format))
        }
        Command::Influence {
            common,
            alpha,
            index,
            half_width,
            points,
        } => {
            let ld = common.load()?;
            let index = match index {
                Some(0) => return Err(NlrError::InvalidArgument("--index is 1-based".into())),
                Some(i) => IfIndex::Single(i - 1),
                None => IfIndex::All,
            };
            let fit = fit_mdpde(ld.model.as_ref(), &ld.data, alpha, &ld.config)?;
            let theta = fit
                .theta()
                .ok_or_else(|| NlrError::InvalidArgument("MDPDE fit carries no sigma2".into()))?;
            let rows = if_profile(ld.model.as_ref(), &ld.data, &theta, alpha, index, half_width, points)?;
            common.output.write(&emit_influence(&rows, ld.format))
        }
        Command::TuneAlpha {
            common,
            alpha_init,
            grid_step,
            max_rounds,
        } => {
            let ld = common.load()?;
            let opts = IwjOptions {
                alpha_init,
                grid_step,
                max_rounds,
            };
            let (_, trace) = iwj_select(ld.model.as_ref(), &ld.data, &opts, &ld.config)?;
            if !trace.converged {
                warn!("no fixed point after {max_rounds} rounds; reporting the last choice");
            }
            common.output.write(&emit_tuning(&trace, ld.format))
        }
        Command::Simulate {
            output,
            optim,
            scheme,
            setup,
            ec,
            direction,
            reps,
            methods,
            alphas,
            ns,
            gamma,
        } => {
            let config = optim.config()?;
            let proportions: Vec<f64> = parse_list(&ec, "--ec")?;
            let report = match scheme {
                SchemeArg::Estimation => {
                    let [ec] = proportions.as_slice() else {
                        return Err(NlrError::InvalidArgument("estimation studies take a single --ec".into()));
                    };
                    let direction = match direction {
                        DirectionArg::Response => Direction::Response,
                        DirectionArg::Both => Direction::Both,
                    };
                    let specs = methods
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(EstimatorSpec::parse)
                        .collect::<Result<Vec<_>, _>>()?;
                    let scenario = demo_scenario(setup, *ec, direction, reps, config.seed);
                    run_estimation_study(&scenario, &specs, &config)?
                }
                SchemeArg::Level | SchemeArg::Power => run_level_power_study(
                    &LevelPowerStudy {
                        scheme: if matches!(scheme, SchemeArg::Level) {
                            TestScheme::Level
                        } else {
                            TestScheme::Power
                        },
                        alphas: parse_list(&alphas, "--alphas")?,
                        ns: parse_list(&ns, "--ns")?,
                        proportions,
                        reps,
                        gamma,
                        seed: config.seed,
                    },
                    &config,
                )?,
            };
            for m in report.methods.iter().filter(|m| m.unreliable) {
                warn!("{}: {} of {} fits failed", m.label, m.failed, reps);
            }
            output.write(&emit_sim_report(&report, output.format.into()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
