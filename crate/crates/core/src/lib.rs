//! Robust nonlinear regression by minimum density power divergence.

pub mod distributions;
pub mod dpd;
pub mod estimators;
pub mod error;
pub mod inference;
pub mod influence;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod simlab;
pub mod tuning;

pub use error::{NlrError, Result};
pub use estimators::{EstimatorSpec, FitResult, Method};
pub use inference::{LinearHypothesis, Side, TestResult};
pub use model::{Dataset, MeanFunction, MichaelisMenten, ModelRegistry, Theta};
pub use optim::{OptimOutcome, OptimizerConfig};
pub use simlab::{SimReport, SimScenario};
pub use tuning::{iwj_select, IwjOptions, TuningTrace};
