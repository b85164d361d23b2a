//! Fixtures shared by the benchmarks.

use robust_nlr::simlab::{generate, Direction};
use robust_nlr::{Dataset, SimScenario};

/// One replication of the first simulation setup (n = 50).
pub fn setup1(contamination: f64, seed: u64) -> Dataset {
    generate(&SimScenario::setup1(contamination, Direction::Response, 1, seed), 0)
        .expect("valid scenario")
        .0
}

/// One replication of the second simulation setup (n = 50, random design).
pub fn setup2(contamination: f64, seed: u64) -> Dataset {
    generate(&SimScenario::setup2(contamination, Direction::Response, 1, seed), 0)
        .expect("valid scenario")
        .0
}
