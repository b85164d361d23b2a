//! Multi-start quasi-Newton minimization.
//!
//! Each start runs BFGS with a strong Wolfe line search. Near the optimum,
//! where function differences drown in rounding, the line search also accepts
//! approximate Wolfe steps (sufficient decrease judged from the directional
//! derivative). Simple bounds enter through [`Objective::project`]; the search
//! direction is restricted to the free coordinates and the inverse Hessian is
//! reset whenever the active set changes. Objectives without a trustworthy
//! gradient are handled by Nelder–Mead.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};

/// A smooth objective on `ℝ^d`, optionally restricted to a closed set by projection.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Returns `f(x)` and writes `∇f(x)` into `grad`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// When false the minimizer uses Nelder–Mead instead of BFGS.
    fn gradient_reliable(&self) -> bool {
        true
    }

    /// Maps `x` onto the feasible set; returns true if `x` was changed.
    fn project(&self, _x: &mut [f64]) -> bool {
        false
    }
}

/// Adapter turning a pair of closures into an [`Objective`].
pub struct FnObjective<F, G> {
    dim: usize,
    f: F,
    fg: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F, fg: G) -> Self {
        FnObjective { dim, f, fg }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.fg)(x, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Tolerance on `‖∇f‖∞ / (1 + |f|)`.
    pub grad_tol: f64,
    /// Relative step size below which iteration stops.
    pub step_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Relative scale of the Gaussian jitter applied to non-pilot starts.
    pub start_dispersion: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 500,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            n_starts: 5,
            seed: 0,
            start_dispersion: 0.25,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(NlrError::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(NlrError::InvalidArgument("tolerances must be positive".into()));
        }
        if self.n_starts < 1 {
            return Err(NlrError::InvalidArgument("n_starts must be at least 1".into()));
        }
        if !(self.start_dispersion >= 0.0) {
            return Err(NlrError::InvalidArgument("start_dispersion must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimOutcome {
    pub argmin: Vec<f64>,
    pub value: f64,
    /// `‖projected ∇f‖∞ / (1 + |f|)` at `argmin`.
    pub grad_norm: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub start_index: usize,
    pub iterations: usize,
    /// A bound constraint is active at `argmin`.
    pub at_boundary: bool,
}

impl OptimOutcome {
    /// Outcome for estimators with a closed form (no iterations).
    pub fn closed_form(argmin: Vec<f64>, value: f64) -> Self {
        OptimOutcome {
            argmin,
            value,
            grad_norm: 0.0,
            converged: true,
            n_evals: 1,
            start_index: 0,
            iterations: 0,
            at_boundary: false,
        }
    }
}

/// Minimizes from `x0` and `n_starts − 1` jittered copies of it.
pub fn minimize(obj: &dyn Objective, x0: &[f64], config: &OptimizerConfig) -> Result<OptimOutcome> {
    config.validate()?;
    let starts = jittered_starts(x0, config);
    minimize_from(obj, &starts, config)
}

/// `x0` followed by `n_starts − 1` copies with entries `x_j + d·max(|x_j|,1)·z`.
pub fn jittered_starts(x0: &[f64], config: &OptimizerConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![x0.to_vec()];
    for _ in 1..config.n_starts {
        starts.push(
            x0.iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + config.start_dispersion * v.abs().max(1.0) * z
                })
                .collect(),
        );
    }
    starts
}

/// Runs a local minimization from every start and keeps the lowest value,
/// ties going to the earlier start.
pub fn minimize_from(obj: &dyn Objective, starts: &[Vec<f64>], config: &OptimizerConfig) -> Result<OptimOutcome> {
    config.validate()?;
    if starts.is_empty() {
        return Err(NlrError::InvalidArgument("no starting points".into()));
    }
    let results: Vec<Result<OptimOutcome>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| local_minimize(obj, x0, config, i))
        .collect();
    let mut best: Option<OptimOutcome> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(o) => {
                let better = match &best {
                    None => true,
                    Some(b) => o.value < b.value,
                };
                if better {
                    best = Some(o);
                }
            }
            Err(e) => {
                log::debug!("start discarded: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(b) => {
            if !b.converged {
                log::debug!(
                    "no start met the gradient tolerance (best grad_norm {:e})",
                    b.grad_norm
                );
            }
            Ok(b)
        }
        None => Err(first_err.unwrap_or(NlrError::NonFiniteObjective { start: 0 })),
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x − P(x − g)`, together with the mask of coordinates held by a bound.
fn projected_gradient(obj: &dyn Objective, x: &[f64], g: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut probe: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    if !obj.project(&mut probe) {
        return (g.to_vec(), vec![false; x.len()]);
    }
    let pg: Vec<f64> = x.iter().zip(&probe).map(|(a, b)| a - b).collect();
    // a coordinate is held only if even an infinitesimal descent step is clipped
    let eps = 1e-8 * (1.0 + inf_norm(x)) / inf_norm(g).max(f64::MIN_POSITIVE);
    let mut tiny: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - eps * b).collect();
    obj.project(&mut tiny);
    let active = (0..x.len())
        .map(|i| {
            let free = x[i] - eps * g[i];
            (tiny[i] - free).abs() > 0.5 * eps * g[i].abs()
        })
        .collect();
    (pg, active)
}

struct Trial {
    a: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
    projected: bool,
}

struct LineSearch<'a> {
    obj: &'a dyn Objective,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    g0: &'a [f64],
    dphi0: f64,
    evals: usize,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const HZ_DELTA: f64 = 0.1;

impl LineSearch<'_> {
    fn eval(&mut self, a: f64) -> Trial {
        let mut x: Vec<f64> = self.x.iter().zip(self.d).map(|(xi, di)| xi + a * di).collect();
        let projected = self.obj.project(&mut x);
        let mut g = vec![0.0; x.len()];
        let mut f = self.obj.value_and_gradient(&x, &mut g);
        self.evals += 1;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            f = f64::INFINITY;
        }
        let dphi = dot(&g, self.d);
        Trial {
            a,
            x,
            f,
            g,
            dphi,
            projected,
        }
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.f <= self.f0 + C1 * t.a * self.dphi0
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.dphi.abs() <= -C2 * self.dphi0
    }

    /// Approximate Wolfe test: value within rounding of `f0`, slope in band.
    fn approx_wolfe(&self, t: &Trial) -> bool {
        let eps = 1e-12 * (1.0 + self.f0.abs());
        t.f <= self.f0 + eps
            && t.dphi <= (2.0 * HZ_DELTA - 1.0) * self.dphi0
            && t.dphi >= C2 * self.dphi0
    }

    fn acceptable(&self, t: &Trial) -> bool {
        (self.armijo(t) && self.curvature(t)) || self.approx_wolfe(t)
    }

    fn search(&mut self, a_init: f64) -> Option<Trial> {
        let mut prev: Option<Trial> = None;
        let mut a = a_init;
        for i in 0..40 {
            let t = self.eval(a);
            if t.projected {
                return self.backtrack(a);
            }
            if self.approx_wolfe(&t) {
                return Some(t);
            }
            let prev_f = prev.as_ref().map_or(self.f0, |p| p.f);
            if !self.armijo(&t) || (i > 0 && t.f >= prev_f) {
                let lo = prev.unwrap_or_else(|| self.origin());
                return self.zoom(lo, t);
            }
            if self.curvature(&t) {
                return Some(t);
            }
            if t.dphi >= 0.0 {
                return self.zoom(t, prev.unwrap_or_else(|| self.origin()));
            }
            prev = Some(t);
            a *= 2.0;
        }
        prev
    }

    fn origin(&self) -> Trial {
        Trial {
            a: 0.0,
            x: self.x.to_vec(),
            f: self.f0,
            g: self.g0.to_vec(),
            dphi: self.dphi0,
            projected: false,
        }
    }

    /// Interval refinement; `lo` always satisfies sufficient decrease.
    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Option<Trial> {
        for _ in 0..40 {
            let w = hi.a - lo.a;
            if w.abs() < 1e-16 * lo.a.abs().max(1e-300) {
                break;
            }
            let mut a = cubic_min(&lo, &hi).unwrap_or(lo.a + 0.5 * w);
            let (left, right) = if lo.a < hi.a {
                (lo.a + 0.1 * w.abs(), hi.a - 0.1 * w.abs())
            } else {
                (hi.a + 0.1 * w.abs(), lo.a - 0.1 * w.abs())
            };
            if !(a >= left && a <= right) {
                a = lo.a + 0.5 * w;
            }
            let t = self.eval(a);
            if t.projected {
                return self.backtrack(a);
            }
            if self.acceptable(&t) {
                return Some(t);
            }
            if !self.armijo(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if t.dphi * (hi.a - lo.a) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
        // settle for any decrease found
        if lo.a > 0.0 && lo.f < self.f0 {
            Some(lo)
        } else {
            None
        }
    }

    /// Armijo backtracking along the projected path.
    fn backtrack(&mut self, a_start: f64) -> Option<Trial> {
        let mut a = a_start;
        for _ in 0..60 {
            let t = self.eval(a);
            let dx: Vec<f64> = t.x.iter().zip(self.x).map(|(u, v)| u - v).collect();
            let pred = dot(self.g0, &dx);
            if pred < 0.0 && t.f <= self.f0 + C1 * pred {
                return Some(t);
            }
            a *= 0.5;
        }
        None
    }
}

/// Minimizer of the cubic interpolating value and slope at both ends.
fn cubic_min(lo: &Trial, hi: &Trial) -> Option<f64> {
    let (a0, a1) = (lo.a, hi.a);
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a0 - a1);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    if !(disc >= 0.0) || !hi.f.is_finite() {
        return None;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let a = a1 - (a1 - a0) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
    a.is_finite().then_some(a)
}

fn local_minimize(obj: &dyn Objective, x0: &[f64], config: &OptimizerConfig, start_index: usize) -> Result<OptimOutcome> {
    if x0.len() != obj.dim() {
        return Err(NlrError::Dimension(format!(
            "start has {} coordinates, objective expects {}",
            x0.len(),
            obj.dim()
        )));
    }
    if !obj.gradient_reliable() {
        return nelder_mead(obj, x0, config, start_index);
    }
    let n = obj.dim();
    let mut x = x0.to_vec();
    obj.project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(&x, &mut g);
    let mut evals = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(NlrError::NonFiniteObjective { start: start_index });
    }
    let identity = DMatrix::<f64>::identity(n, n);
    let mut h = identity.clone();
    let mut h_scaled = false;
    let mut prev_active: Option<Vec<bool>> = None;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let (pg, active) = projected_gradient(obj, &x, &g);
        if inf_norm(&pg) / (1.0 + f.abs()) <= config.grad_tol {
            break;
        }
        if prev_active.as_ref().is_some_and(|p| *p != active) {
            h = identity.clone();
            h_scaled = false;
        }
        prev_active = Some(active.clone());
        iterations += 1;

        let gfree = DVector::from_iterator(n, g.iter().zip(&active).map(|(v, &a)| if a { 0.0 } else { *v }));
        let mut d: Vec<f64> = (-(&h * &gfree)).iter().cloned().collect();
        for (di, &a) in d.iter_mut().zip(&active) {
            if a {
                *di = 0.0;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity.clone();
            h_scaled = false;
            d = gfree.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break;
            }
        }
        let a_init = if h_scaled { 1.0 } else { (1.0 / inf_norm(&d)).min(1.0) };
        let mut ls = LineSearch {
            obj,
            x: &x,
            d: &d,
            f0: f,
            g0: &g,
            dphi0: slope,
            evals: 0,
        };
        let step = ls.search(a_init);
        evals += ls.evals;
        let Some(t) = step else {
            if h_scaled {
                // retry along steepest descent before giving up
                h = identity.clone();
                h_scaled = false;
                continue;
            }
            break;
        };
        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let small_step = inf_norm(&s) <= config.step_tol * (1.0 + inf_norm(&x));
        x = t.x;
        f = t.f;
        g = t.g;
        if small_step {
            break;
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let sv = DVector::from_vec(s);
            let yv = DVector::from_vec(y);
            if !h_scaled {
                h = &identity * (sy / yv.dot(&yv));
                h_scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H⁺ = H − ρ(Hy sᵀ + s yᵀH) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            h += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
        }
    }

    let (pg, active) = projected_gradient(obj, &x, &g);
    let grad_norm = inf_norm(&pg) / (1.0 + f.abs());
    Ok(OptimOutcome {
        argmin: x,
        value: f,
        grad_norm,
        converged: grad_norm <= config.grad_tol,
        n_evals: evals,
        start_index,
        iterations,
        at_boundary: active.iter().any(|&a| a),
    })
}

/// Central-difference gradient used to certify Nelder–Mead results.
fn fd_gradient(obj: &dyn Objective, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let up = obj.value(&xp);
        xp[j] = x[j] - h;
        let down = obj.value(&xp);
        xp[j] = x[j];
        g[j] = (up - down) / (2.0 * h);
    }
    g
}

fn nelder_mead(obj: &dyn Objective, x0: &[f64], config: &OptimizerConfig, start_index: usize) -> Result<OptimOutcome> {
    let n = obj.dim();
    let eval = |x: &mut Vec<f64>| -> f64 {
        obj.project(x);
        let v = obj.value(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut p0 = x0.to_vec();
    let f0 = eval(&mut p0);
    if !f0.is_finite() {
        return Err(NlrError::NonFiniteObjective { start: start_index });
    }
    let mut simplex = vec![(p0.clone(), f0)];
    for j in 0..n {
        let mut p = p0.clone();
        p[j] += if p[j] != 0.0 { 0.05 * p[j] } else { 2.5e-4 };
        let f = eval(&mut p);
        simplex.push((p, f));
    }
    let mut evals = n + 1;
    let nf = n as f64;
    // dimension-adaptive coefficients
    let (rho, chi, gam, sig) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let max_iters = config.max_iters.saturating_mul(20);
    let mut iterations = 0;
    while iterations < max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let fbest = simplex[0].1;
        let fworst = simplex[n].1;
        let diam = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0, f64::max);
        let scale = 1.0 + inf_norm(&simplex[0].0);
        if (fworst - fbest).abs() <= 1e-15 * (1.0 + fbest.abs()) && diam <= config.step_tol.sqrt() * scale {
            break;
        }
        if diam <= config.step_tol * scale {
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let mut xr = along(rho);
        let fr = eval(&mut xr);
        evals += 1;
        if fr < simplex[0].1 {
            let mut xe = along(rho * chi);
            let fe = eval(&mut xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < simplex[n].1;
            let mut xc = if outside { along(rho * gam) } else { along(-gam) };
            let fc = eval(&mut xc);
            evals += 1;
            if (outside && fc <= fr) || (!outside && fc < simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut p: Vec<f64> = best.iter().zip(&v.0).map(|(b, q)| b + sig * (q - b)).collect();
                    let f = eval(&mut p);
                    *v = (p, f);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    let g = fd_gradient(obj, &x);
    evals += 2 * n;
    let (pg, active) = projected_gradient(obj, &x, &g);
    let grad_norm = inf_norm(&pg) / (1.0 + f.abs());
    Ok(OptimOutcome {
        argmin: x,
        value: f,
        grad_norm,
        converged: grad_norm <= config.grad_tol,
        n_evals: evals,
        start_index,
        iterations,
        at_boundary: active.iter().any(|&a| a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rosenbrock() -> impl Objective {
        FnObjective::new(
            2,
            |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            |x: &[f64], g: &mut [f64]| {
                g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
                g[1] = 200.0 * (x[1] - x[0] * x[0]);
                (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
            },
        )
    }

    #[test]
    fn quadratic_minimum() {
        let obj = FnObjective::new(
            1,
            |x: &[f64]| (x[0] - 3.0).powi(2),
            |x: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * (x[0] - 3.0);
                (x[0] - 3.0).powi(2)
            },
        );
        let out = minimize(&obj, &[0.0], &OptimizerConfig::default()).unwrap();
        assert!((out.argmin[0] - 3.0).abs() < 1e-8);
        assert!(out.converged);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let cfg = OptimizerConfig {
            n_starts: 1,
            ..Default::default()
        };
        let out = minimize(&rosenbrock(), &[-1.2, 1.0], &cfg).unwrap();
        assert!(out.converged, "{out:?}");
        assert!((out.argmin[0] - 1.0).abs() < 1e-6 && (out.argmin[1] - 1.0).abs() < 1e-6);
    }

    struct Unreliable;
    impl Objective for Unreliable {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 0.5 * x[0] * x[1]
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            g.fill(f64::NAN);
            self.value(x)
        }
        fn gradient_reliable(&self) -> bool {
            false
        }
    }

    #[test]
    fn nelder_mead_fallback() {
        let out = minimize(&Unreliable, &[0.0, 0.0], &OptimizerConfig::default()).unwrap();
        // stationary point of the quadratic
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 6.0]);
        let b = DVector::from_vec(vec![2.0, -12.0]);
        let xs = a.lu().solve(&b).unwrap();
        assert!((out.argmin[0] - xs[0]).abs() < 1e-5);
        assert!((out.argmin[1] - xs[1]).abs() < 1e-5);
    }

    struct BoundedQuadratic;
    impl Objective for BoundedQuadratic {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2)
        }
        fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
            g[0] = 2.0 * (x[0] - 2.0);
            g[1] = 2.0 * (x[1] + 1.0);
            self.value(x)
        }
        fn project(&self, x: &mut [f64]) -> bool {
            if x[1] < 0.0 {
                x[1] = 0.0;
                true
            } else {
                false
            }
        }
    }

    #[test]
    fn projection_lands_on_bound() {
        let out = minimize(&BoundedQuadratic, &[0.0, 3.0], &OptimizerConfig::default()).unwrap();
        assert!(out.converged && out.at_boundary, "{out:?}");
        assert!((out.argmin[0] - 2.0).abs() < 1e-8);
        assert_eq!(out.argmin[1], 0.0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let obj = FnObjective::new(
            1,
            |_: &[f64]| f64::NAN,
            |_: &[f64], g: &mut [f64]| {
                g[0] = 0.0;
                f64::NAN
            },
        );
        assert!(matches!(
            minimize(&obj, &[0.0], &OptimizerConfig::default()),
            Err(NlrError::NonFiniteObjective { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig {
            n_starts: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = OptimizerConfig {
            seed: 17,
            ..Default::default()
        };
        let a = minimize(&rosenbrock(), &[-1.2, 1.0], &cfg).unwrap();
        let b = minimize(&rosenbrock(), &[-1.2, 1.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn convex_quadratics_converge(
            a in 0.1f64..100.0, b in 0.1f64..100.0, c in -0.9f64..0.9,
            x0 in -50.0f64..50.0, y0 in -50.0f64..50.0,
        ) {
            // positive definite: off-diagonal bounded by √(ab)
            let off = c * (a * b).sqrt();
            let obj = FnObjective::new(
                2,
                move |x: &[f64]| 0.5 * (a * x[0] * x[0] + 2.0 * off * x[0] * x[1] + b * x[1] * x[1]) + x[0] - x[1],
                move |x: &[f64], g: &mut [f64]| {
                    g[0] = a * x[0] + off * x[1] + 1.0;
                    g[1] = off * x[0] + b * x[1] - 1.0;
                    0.5 * (a * x[0] * x[0] + 2.0 * off * x[0] * x[1] + b * x[1] * x[1]) + x[0] - x[1]
                },
            );
            let cfg = OptimizerConfig { n_starts: 1, ..Default::default() };
            let out = minimize(&obj, &[x0, y0], &cfg).unwrap();
            prop_assert!(out.converged);
            prop_assert!(out.grad_norm <= cfg.grad_tol);
        }

        #[test]
        fn multistart_dominates_each_start(seed in 0u64..200) {
            let cfg = OptimizerConfig { seed, n_starts: 4, ..Default::default() };
            let obj = FnObjective::new(
                1,
                |x: &[f64]| (x[0] * x[0] - 1.0).powi(2) + 0.2 * x[0],
                |x: &[f64], g: &mut [f64]| {
                    g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0) + 0.2;
                    (x[0] * x[0] - 1.0).powi(2) + 0.2 * x[0]
                },
            );
            let starts = jittered_starts(&[0.8], &cfg);
            let best = minimize_from(&obj, &starts, &cfg).unwrap();
            for s in &starts {
                let single = minimize_from(&obj, std::slice::from_ref(s), &cfg).unwrap();
                prop_assert!(best.value <= single.value);
            }
        }
    }
}
