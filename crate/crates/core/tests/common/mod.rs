#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use robust_nlr::model::{Dataset, MeanFunction, MichaelisMenten, Theta};
use robust_nlr::quadrature::gauss_hermite;

/// A random Michaelis–Menten problem: design, true parameters and a tuning value.
pub struct MmCase {
    pub data: Dataset,
    pub theta: Theta,
    pub alpha: f64,
}

pub fn random_mm_case(seed: u64) -> MmCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(10..=60);
    let b1: f64 = rng.random_range(1.0..100.0);
    let b2 = rng.random_range(0.2..10.0);
    let sigma2 = rng.random_range(0.1..4.0) * (b1 / 20.0).powi(2);
    let alpha = rng.random_range(0.0..1.0);
    let noise = Normal::new(0.0, sigma2.sqrt()).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..50.0)).collect();
    let y = x.iter().map(|&v| b1 * v / (b2 + v) + noise.sample(&mut rng)).collect();
    MmCase {
        data: Dataset::univariate(x, y).unwrap(),
        theta: Theta::new(vec![b1, b2], sigma2).unwrap(),
        alpha,
    }
}

/// `∫ h(y) f(y)^{1+a} dy` for `f = N(μ, σ²)`, by Gauss–Hermite.
fn power_density_integral(h: impl Fn(f64) -> f64, mu: f64, sigma2: f64, a: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (nodes, weights) = rule;
    let c = (2.0 * std::f64::consts::PI * sigma2).powf(-a / 2.0) / (1.0 + a).sqrt();
    let s = (sigma2 / (1.0 + a)).sqrt();
    let sum: f64 = nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * h(mu + s * std::f64::consts::SQRT_2 * x))
        .sum();
    c * sum / std::f64::consts::PI.sqrt()
}

/// `Ψ_n = n⁻¹ Σ ∫ u uᵀ f_i^{1+α}` and
/// `Ω_n = n⁻¹ Σ [∫ u uᵀ f_i^{1+2α} − ξ_i ξ_iᵀ]` with `ξ_i = ∫ u f_i^{1+α}`.
pub fn quadrature_psi_omega(data: &Dataset, theta: &Theta, alpha: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let model = MichaelisMenten;
    let p = theta.beta.len();
    let s2 = theta.sigma2;
    let rule = gauss_hermite(60);
    let mut psi = DMatrix::zeros(p + 1, p + 1);
    let mut omega = DMatrix::zeros(p + 1, p + 1);
    let mut g = vec![0.0; p];
    for i in 0..data.n() {
        let x = data.row(i);
        let mu = model.eval(x, &theta.beta);
        model.gradient(x, &theta.beta, &mut g);
        let score = |y: f64, j: usize| -> f64 {
            let r = y - mu;
            if j < p {
                r / s2 * g[j]
            } else {
                (r * r - s2) / (2.0 * s2 * s2)
            }
        };
        let xi: Vec<f64> = (0..=p)
            .map(|j| power_density_integral(|y| score(y, j), mu, s2, alpha, &rule))
            .collect();
        for j in 0..=p {
            for k in 0..=p {
                let uu = |y: f64| score(y, j) * score(y, k);
                psi[(j, k)] += power_density_integral(uu, mu, s2, alpha, &rule);
                omega[(j, k)] += power_density_integral(uu, mu, s2, 2.0 * alpha, &rule) - xi[j] * xi[k];
            }
        }
    }
    let n = data.n() as f64;
    (psi / n, omega / n)
}

/// Maximum of `f` on `[a, b]`: a uniform grid, then golden-section search
/// around the best grid point.
pub fn numeric_sup(f: impl Fn(f64) -> f64, a: f64, b: f64, grid: usize) -> f64 {
    let h = (b - a) / grid as f64;
    let mut best = (a, f(a));
    for i in 1..=grid {
        let t = a + h * i as f64;
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - h).max(a), (best.0 + h).min(b));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    for _ in 0..200 {
        if f(c) > f(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - phi * (hi - lo);
        d = lo + phi * (hi - lo);
    }
    best.1.max(f(0.5 * (lo + hi)))
}

pub fn max_abs_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

pub fn vec_max_abs(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Random MM dataset for fitting: n = 30..60, noise σ relative to β₁.
pub fn random_fit_data(seed: u64) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(30..=60);
    let b1 = rng.random_range(2.0..60.0);
    let b2 = rng.random_range(0.5..5.0);
    let noise = Normal::new(0.0, 0.05 * b1).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..30.0)).collect();
    let y = x.iter().map(|&v| b1 * v / (b2 + v) + noise.sample(&mut rng)).collect();
    (Dataset::univariate(x, y).unwrap(), vec![b1, b2])
}
