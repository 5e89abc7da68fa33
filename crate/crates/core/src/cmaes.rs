//! (μ/μ_w, λ)-CMA-ES with cumulative step-size adaptation and rank-one plus
//! rank-μ covariance updates.
//!
//! Candidates are evaluated in parallel but selection only ever looks at the
//! ranks of the returned fitness values, in population order, so the search
//! is deterministic for a given seed and invariant to monotone rescaling of
//! the objective.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generations over which best-fitness improvement is measured for the
/// stagnation stop.
pub const STAGNATION_WINDOW: usize = 20;

const MAX_CONDITION: f64 = 1e14;

pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesConfig {
    pub dim: usize,
    pub initial_mean: Vec<f64>,
    pub initial_sigma: f64,
    pub population: usize,
    pub max_generations: usize,
    /// Stop once the best fitness improved by less than this over the last
    /// [`STAGNATION_WINDOW`] generations. Zero disables the check.
    pub target_tolerance: f64,
    pub seed: u64,
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Run once more with a doubled population after the first stagnation.
    pub restart_on_stagnation: bool,
    /// Stop as soon as a candidate reaches this fitness (minimization sense).
    pub stop_fitness: Option<f64>,
    /// Keep every evaluated population in the result.
    pub record_trace: bool,
}

impl CmaesConfig {
    pub fn new(initial_mean: Vec<f64>, initial_sigma: f64) -> Self {
        let dim = initial_mean.len();
        CmaesConfig {
            dim,
            initial_mean,
            initial_sigma,
            population: default_population(dim.max(1)),
            max_generations: 1000,
            target_tolerance: 1e-12,
            seed: 0,
            bounds: None,
            restart_on_stagnation: false,
            stop_fitness: None,
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if self.initial_mean.len() != self.dim {
            return Err(Error::dims(self.dim, self.initial_mean.len()));
        }
        if self.initial_mean.iter().any(|v| !v.is_finite()) {
            return bad("initial mean must be finite");
        }
        if !(self.initial_sigma > 0.0 && self.initial_sigma.is_finite()) {
            return bad("initial sigma must be positive");
        }
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.max_generations == 0 {
            return bad("max_generations must be positive");
        }
        if !(self.target_tolerance >= 0.0) {
            return bad("target tolerance must be non-negative");
        }
        if let Some(bounds) = &self.bounds {
            if bounds.len() != self.dim {
                return Err(Error::dims(self.dim, bounds.len()));
            }
            for (i, &(lo, hi)) in bounds.iter().enumerate() {
                if !(lo < hi) {
                    return Err(Error::InvalidConfig(format!("bound {i}: lower must be below upper")));
                }
                let m = self.initial_mean[i];
                if m < lo || m > hi {
                    return Err(Error::InvalidConfig(format!("initial mean outside bounds in dim {i}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxGenerations,
    Stagnation,
    StopFitness,
    /// Step size or covariance degenerated numerically.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesResult {
    pub best_point: Vec<f64>,
    pub best_fitness: f64,
    pub generations_used: usize,
    pub evaluations: usize,
    /// Best fitness within each generation's population.
    pub history: Vec<f64>,
    pub restarts: usize,
    pub stop_reason: StopReason,
    /// Evaluated (post-clamping) populations, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<Vec<Vec<f64>>>>,
}

impl CmaesResult {
    /// Running best of [`history`](Self::history), minimization sense.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.history
            .iter()
            .map(|&f| {
                best = best.min(f);
                best
            })
            .collect()
    }

    fn negated(mut self) -> Self {
        self.best_fitness = -self.best_fitness;
        self.history.iter_mut().for_each(|f| *f = -*f);
        self
    }
}

/// Strategy constants for one population size.
struct Params {
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    cs: f64,
    ds: f64,
    cc: f64,
    c1: f64,
    cmu: f64,
    chi_n: f64,
}

impl Params {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let ds = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Params {
            lambda,
            weights,
            mu_eff,
            cs,
            ds,
            cc,
            c1,
            cmu,
            chi_n,
        }
    }
}

struct Tracker {
    best_point: Vec<f64>,
    best_fitness: f64,
    history: Vec<f64>,
    evaluations: usize,
    trace: Option<Vec<Vec<Vec<f64>>>>,
}

impl Tracker {
    fn result(self, restarts: usize, stop_reason: StopReason) -> CmaesResult {
        CmaesResult {
            generations_used: self.history.len(),
            best_point: self.best_point,
            best_fitness: self.best_fitness,
            evaluations: self.evaluations,
            history: self.history,
            restarts,
            stop_reason,
            trace: self.trace,
        }
    }
}

fn clamp_into(x: &mut DVector<f64>, bounds: Option<&[(f64, f64)]>) -> bool {
    let mut clamped = false;
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b) {
            let c = v.clamp(lo, hi);
            clamped |= c != *v;
            *v = c;
        }
    }
    clamped
}

/// One CMA-ES run from the configured start; returns why it stopped.
fn run<F>(
    objective: &F,
    config: &CmaesConfig,
    lambda: usize,
    budget: usize,
    rng: &mut ChaCha8Rng,
    tracker: &mut Tracker,
) -> Result<StopReason>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = config.dim;
    let p = Params::new(n, lambda);
    let bounds = config.bounds.as_deref();
    let mut mean = DVector::from_column_slice(&config.initial_mean);
    let mut sigma = config.initial_sigma;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);
    let start_gen = tracker.history.len();

    for gen in 0..budget {
        cov = (&cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(cov.clone());
        let basis = eig.eigenvectors;
        let eigvals = eig.eigenvalues.map(|v| v.max(1e-300));
        let max_ev = eigvals.max();
        let min_ev = eigvals.min();
        if max_ev / min_ev > MAX_CONDITION
            || sigma * max_ev.sqrt() < 1e-300
            || !sigma.is_finite()
        {
            return Ok(StopReason::Degenerate);
        }
        let scales = eigvals.map(f64::sqrt);
        let bd = &basis * DMatrix::from_diagonal(&scales);

        let mut ys = Vec::with_capacity(p.lambda);
        let mut xs = Vec::with_capacity(p.lambda);
        for _ in 0..p.lambda {
            let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng));
            let mut y = &bd * z;
            let mut x = &mean + &y * sigma;
            if clamp_into(&mut x, bounds) {
                y = (&x - &mean) / sigma;
            }
            ys.push(y);
            xs.push(x);
        }
        let fitness: Vec<f64> = xs.par_iter().map(|x| objective(x.as_slice())).collect();
        tracker.evaluations += p.lambda;
        if let Some(trace) = tracker.trace.as_mut() {
            trace.push(xs.iter().map(|x| x.as_slice().to_vec()).collect());
        }
        if let Some(i) = fitness.iter().position(|f| !f.is_finite()) {
            return Err(Error::NonFiniteObjective {
                point: xs[i].as_slice().to_vec(),
                best: None,
            });
        }

        let mut order: Vec<usize> = (0..p.lambda).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
        let gen_best = fitness[order[0]];
        tracker.history.push(gen_best);
        if gen_best < tracker.best_fitness {
            tracker.best_fitness = gen_best;
            tracker.best_point = xs[order[0]].as_slice().to_vec();
        }

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &i) in p.weights.iter().zip(&order) {
            y_w.axpy(*w, &ys[i], 1.0);
        }
        mean += &y_w * sigma;

        let inv_sqrt = &basis * DMatrix::from_diagonal(&scales.map(|s| 1.0 / s)) * basis.transpose();
        ps = &ps * (1.0 - p.cs) + (&inv_sqrt * &y_w) * (p.cs * (2.0 - p.cs) * p.mu_eff).sqrt();
        let local_gen = (gen + 1) as i32;
        let ps_norm = ps.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - p.cs).powi(2 * local_gen)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        pc = &pc * (1.0 - p.cc) + &y_w * (hs * (p.cc * (2.0 - p.cc) * p.mu_eff).sqrt());
        let delta = (1.0 - hs) * p.cc * (2.0 - p.cc);

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &i) in p.weights.iter().zip(&order) {
            rank_mu.ger(*w, &ys[i], &ys[i], 1.0);
        }
        cov = &cov * (1.0 - p.c1 - p.cmu + p.c1 * delta)
            + (&pc * pc.transpose()) * p.c1
            + rank_mu * p.cmu;
        sigma *= ((p.cs / p.ds) * (ps_norm / p.chi_n - 1.0)).exp();

        if let Some(target) = config.stop_fitness {
            if tracker.best_fitness <= target {
                return Ok(StopReason::StopFitness);
            }
        }
        let done = tracker.history.len() - start_gen;
        if config.target_tolerance > 0.0 && done > STAGNATION_WINDOW {
            let h = &tracker.history[start_gen..];
            let best_now = h.iter().copied().fold(f64::INFINITY, f64::min);
            let best_then = h[..done - STAGNATION_WINDOW]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if best_then - best_now < config.target_tolerance {
                return Ok(StopReason::Stagnation);
            }
        }
    }
    Ok(StopReason::MaxGenerations)
}

/// Minimizes `objective`. The objective must be pure; it may be called from
/// several threads at once.
pub fn minimize<F>(objective: F, config: &CmaesConfig) -> Result<CmaesResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = Tracker {
        best_point: config.initial_mean.clone(),
        best_fitness: f64::INFINITY,
        history: Vec::new(),
        evaluations: 0,
        trace: config.record_trace.then(Vec::new),
    };
    let mut lambda = config.population;
    let mut restarts = 0;
    loop {
        let budget = config.max_generations - tracker.history.len();
        let outcome = run(&objective, config, lambda, budget, &mut rng, &mut tracker);
        let reason = match outcome {
            Ok(reason) => reason,
            Err(Error::NonFiniteObjective { point, .. }) => {
                let best = tracker
                    .best_fitness
                    .is_finite()
                    .then(|| Box::new(tracker.result(restarts, StopReason::Degenerate)));
                return Err(Error::NonFiniteObjective { point, best });
            }
            Err(e) => return Err(e),
        };
        let can_restart = config.restart_on_stagnation
            && restarts == 0
            && matches!(reason, StopReason::Stagnation | StopReason::Degenerate)
            && tracker.history.len() < config.max_generations;
        if !can_restart {
            return Ok(tracker.result(restarts, reason));
        }
        restarts += 1;
        lambda *= 2;
    }
}

/// Maximizes `objective`; fitness values in the result keep the caller's sign.
pub fn maximize<F>(objective: F, config: &CmaesConfig) -> Result<CmaesResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut cfg = config.clone();
    cfg.stop_fitness = config.stop_fitness.map(|f| -f);
    match minimize(|x| -objective(x), &cfg) {
        Ok(r) => Ok(r.negated()),
        Err(Error::NonFiniteObjective { point, best }) => Err(Error::NonFiniteObjective {
            point,
            best: best.map(|b| Box::new(b.negated())),
        }),
        Err(e) => Err(e),
    }
}
