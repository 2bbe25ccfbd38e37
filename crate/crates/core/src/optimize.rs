//! Multistart quasi-Newton minimization of the composite rounding objective,
//! with a bounded pool of reusable warm starts.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::circuit::Circuit;
use crate::cost::{
    infidelity_surrogate, infidelity_surrogate_value, objective, objective_with_gradient, AngleSet,
    EpsilonVector, ObjectiveConfig,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_MAX_ITERS: usize = 1000;
pub const DEFAULT_GRAD_TOL: f64 = 1e-10;
pub const DEFAULT_NUM_STARTS: usize = 10;
pub const DEFAULT_POOL_CAPACITY: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub params: Vec<f64>,
    pub objective_value: f64,
    pub distance_part: f64,
    pub epsilon: EpsilonVector,
    pub iterations: usize,
    /// Where the run started, e.g. `random:3`, `pool:0`, `step1:random:2`.
    pub start_label: String,
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub params: Vec<f64>,
    pub objective_value: f64,
    pub n_round: usize,
    pub angle_set: AngleSet,
    pub penalty_factor: f64,
}

/// Bounded collection of parameter vectors that solved earlier instances.
#[derive(Debug, Clone)]
pub struct SeedPool {
    capacity: usize,
    entries: Vec<PoolEntry>,
}

impl Default for SeedPool {
    fn default() -> Self {
        SeedPool::new(DEFAULT_POOL_CAPACITY)
    }
}

impl SeedPool {
    pub fn new(capacity: usize) -> Self {
        SeedPool { capacity: capacity.max(1), entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    /// Inserts an entry; a near-duplicate keeps the better value, and a full
    /// pool evicts its worst entry if the newcomer beats it.
    pub fn insert(&mut self, entry: PoolEntry) {
        if let Some(dup) = self.entries.iter_mut().find(|e| same_point(&e.params, &entry.params)) {
            if entry.objective_value < dup.objective_value {
                *dup = entry;
            }
            return;
        }
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return;
        }
        let (worst, worst_value) = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, e.objective_value))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("pool is non-empty");
        if entry.objective_value < worst_value {
            self.entries[worst] = entry;
        }
    }

    pub fn insert_result(&mut self, result: &OptResult, config: &ObjectiveConfig) {
        self.insert(PoolEntry {
            params: result.params.clone(),
            objective_value: result.objective_value,
            n_round: config.n_round,
            angle_set: config.angle_set.clone(),
            penalty_factor: config.penalty_factor,
        });
    }

    /// Entries of matching length, best stored objective first.
    pub fn applicable(&self, num_params: usize) -> Vec<&PoolEntry> {
        let mut out: Vec<&PoolEntry> = self.entries.iter().filter(|e| e.params.len() == num_params).collect();
        out.sort_by(|a, b| a.objective_value.total_cmp(&b.objective_value));
        out
    }
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
}

/// Knobs shared by the multistart drivers.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub num_starts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Results with objective at or below this go into the pool.
    pub pool_accept: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            num_starts: DEFAULT_NUM_STARTS,
            max_iters: DEFAULT_MAX_ITERS,
            grad_tol: DEFAULT_GRAD_TOL,
            pool_accept: 1e-8,
        }
    }
}

impl SolverSettings {
    pub fn with_starts(mut self, n: usize) -> Self {
        self.num_starts = n;
        self
    }
}

/// A smooth-enough scalar function of the parameters.
trait Problem {
    fn value(&self, x: &[f64]) -> f64;
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

struct Composite<'a> {
    circuit: &'a Circuit,
    config: &'a ObjectiveConfig,
}

impl Problem for Composite<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        objective(self.circuit, x, self.config).map(|v| v.value).unwrap_or(f64::INFINITY)
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match objective_with_gradient(self.circuit, x, self.config) {
            Ok((v, g)) => (v.value, g),
            Err(_) => (f64::INFINITY, vec![0.0; x.len()]),
        }
    }
}

struct Surrogate<'a> {
    circuit: &'a Circuit,
    target: &'a Matrix,
}

impl Problem for Surrogate<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        infidelity_surrogate_value(self.circuit, self.target, x)
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        infidelity_surrogate(self.circuit, self.target, x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest change of any single angle per line-search trial.
const MAX_STEP: f64 = PI / 8.0;

/// Dense BFGS on the inverse Hessian with Armijo backtracking. Only strictly
/// decreasing steps are taken, so the result never exceeds the start value.
fn bfgs<P: Problem>(problem: &P, x0: &[f64], max_iters: usize, grad_tol: f64) -> (Vec<f64>, usize) {
    let m = x0.len();
    if m == 0 {
        return (Vec::new(), 0);
    }
    let mut x = x0.to_vec();
    let (mut f, mut g) = problem.value_grad(&x);
    if !f.is_finite() {
        return (x, 0);
    }
    let identity = |m: usize| {
        let mut h = vec![0.0; m * m];
        for i in 0..m {
            h[i * m + i] = 1.0;
        }
        h
    };
    let mut h = identity(m);
    let mut h_is_identity = true;
    let mut history = Vec::with_capacity(max_iters.min(4096));
    let mut iters = 0;

    while iters < max_iters {
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm < grad_tol || f <= 0.0 {
            break;
        }
        let mut p: Vec<f64> = (0..m).map(|i| -dot(&h[i * m..(i + 1) * m], &g)).collect();
        let mut slope = dot(&g, &p);
        if slope.is_nan() || slope >= 0.0 {
            h = identity(m);
            h_is_identity = true;
            p = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let pmax = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut alpha = if h_is_identity { (1.0 / gnorm).min(1.0) } else { 1.0 };
        // Half a desired-angle spacing at most, so one step cannot hop basins.
        alpha = alpha.min(MAX_STEP / pmax);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + alpha * pi).collect();
            let ft = problem.value(&trial);
            if ft < f && ft <= f + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        // Plain decrease is enough once Armijo has given up; kinks rarely satisfy it.
        if accepted.is_none() {
            let mut a = alpha * 2.0f64.powi(60);
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + a * pi).collect();
                let ft = problem.value(&trial);
                if ft < f {
                    accepted = Some((trial, ft));
                    break;
                }
                a *= 0.5;
            }
        }
        let Some((x_new, _)) = accepted else {
            if h_is_identity {
                break;
            }
            h = identity(m);
            h_is_identity = true;
            continue;
        };
        let (f_new, g_new) = problem.value_grad(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() && sy > 0.0 {
            if h_is_identity {
                let scale = sy / yy;
                for v in h.iter_mut() {
                    *v *= scale;
                }
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..m).map(|i| dot(&h[i * m..(i + 1) * m], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..m {
                for j in 0..m {
                    h[i * m + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            h_is_identity = false;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iters += 1;
        history.push(f);
        if history.len() > 20 {
            let old = history[history.len() - 21];
            if old - f <= 1e-12 * old.abs() {
                break;
            }
        }
    }
    (x, iters)
}

fn finish(circuit: &Circuit, config: &ObjectiveConfig, params: Vec<f64>, iterations: usize, label: String) -> Result<OptResult> {
    let v = objective(circuit, &params, config)?;
    Ok(OptResult {
        params,
        objective_value: v.value,
        distance_part: v.distance_part,
        epsilon: v.epsilon,
        iterations,
        start_label: label,
    })
}

/// Local quasi-Newton descent from `start`. With `n_round = 0` the smooth
/// infidelity surrogate is minimized, which shares its minimizers with the
/// distance.
pub fn minimize(circuit: &Circuit, config: &ObjectiveConfig, start: &[f64], budget: usize) -> Result<OptResult> {
    minimize_labeled(circuit, config, start, budget, DEFAULT_GRAD_TOL, "start".into())
}

fn minimize_labeled(
    circuit: &Circuit,
    config: &ObjectiveConfig,
    start: &[f64],
    budget: usize,
    grad_tol: f64,
    label: String,
) -> Result<OptResult> {
    let at_start = objective(circuit, start, config)?;
    if !at_start.value.is_finite() {
        return Err(Error::input("objective is not finite at the start point"));
    }
    let (x, iters) = if config.n_round == 0 {
        bfgs(&Surrogate { circuit, target: &config.target }, start, budget, grad_tol)
    } else {
        bfgs(&Composite { circuit, config }, start, budget, grad_tol)
    };
    let result = finish(circuit, config, x, iters, label.clone())?;
    // The surrogate is monotone in the distance, but guard against roundoff.
    if result.objective_value > at_start.value {
        return finish(circuit, config, start.to_vec(), 0, label);
    }
    Ok(result)
}

/// Minimizes the distance alone over the circuit parameters.
pub fn polish(circuit: &Circuit, target: &Matrix, start: &[f64], budget: usize) -> Result<(Vec<f64>, f64)> {
    let cfg = ObjectiveConfig::new(target.clone(), AngleSet::clifford(), 0);
    let r = minimize(circuit, &cfg, start, budget)?;
    Ok((r.params, r.distance_part))
}

pub fn random_start<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(-PI..=PI)).collect()
}

fn pool_starts(pool: &SeedPool, m: usize, num_starts: usize) -> Vec<(Vec<f64>, String)> {
    pool.applicable(m)
        .into_iter()
        .take(num_starts.div_ceil(2))
        .enumerate()
        .map(|(i, e)| (e.params.clone(), format!("pool:{i}")))
        .collect()
}

fn run_starts(
    circuit: &Circuit,
    config: &ObjectiveConfig,
    starts: Vec<(Vec<f64>, String)>,
    settings: &SolverSettings,
) -> Result<Vec<OptResult>> {
    let results: Vec<Result<OptResult>> = starts
        .into_par_iter()
        .map(|(x, label)| minimize_labeled(circuit, config, &x, settings.max_iters, settings.grad_tol, label))
        .collect();
    results.into_iter().collect()
}

/// Best-first ordering; ties keep start order (the sort is stable).
fn sort_results(results: &mut [OptResult]) {
    results.sort_by(|a, b| a.objective_value.total_cmp(&b.objective_value));
}

fn absorb(pool: &mut SeedPool, config: &ObjectiveConfig, results: &[OptResult], settings: &SolverSettings) {
    for r in results.iter().filter(|r| r.objective_value <= settings.pool_accept) {
        pool.insert_result(r, config);
    }
}

/// All multistart results, best first. Pool entries fill up to half of the
/// starts and fresh uniform draws in `[−π, π]` fill the rest.
pub fn multistart_all<R: Rng + ?Sized>(
    circuit: &Circuit,
    config: &ObjectiveConfig,
    pool: &mut SeedPool,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<Vec<OptResult>> {
    if settings.num_starts == 0 {
        return Err(Error::input("num_starts must be at least 1"));
    }
    let m = circuit.num_params();
    let mut starts = pool_starts(pool, m, settings.num_starts);
    for i in starts.len()..settings.num_starts {
        starts.push((random_start(rng, m), format!("random:{i}")));
    }
    let mut results = run_starts(circuit, config, starts, settings)?;
    absorb(pool, config, &results, settings);
    sort_results(&mut results);
    Ok(results)
}

pub fn multistart<R: Rng + ?Sized>(
    circuit: &Circuit,
    config: &ObjectiveConfig,
    pool: &mut SeedPool,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<OptResult> {
    Ok(multistart_all(circuit, config, pool, settings, rng)?.swap_remove(0))
}

/// Step 1 minimizes the distance alone from random seeds; step 2 minimizes
/// the full objective from those solutions and from pooled warm starts.
pub fn two_step_all<R: Rng + ?Sized>(
    circuit: &Circuit,
    config: &ObjectiveConfig,
    pool: &mut SeedPool,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<Vec<OptResult>> {
    if config.n_round == 0 {
        return multistart_all(circuit, config, pool, settings, rng);
    }
    if settings.num_starts == 0 {
        return Err(Error::input("num_starts must be at least 1"));
    }
    let m = circuit.num_params();
    let step1_config = config.with_n_round(0);
    let seeds: Vec<(Vec<f64>, String)> =
        (0..settings.num_starts).map(|i| (random_start(rng, m), format!("random:{i}"))).collect();
    let step1 = run_starts(circuit, &step1_config, seeds, settings)?;

    let mut starts = pool_starts(pool, m, settings.num_starts);
    starts.extend(step1.into_iter().map(|r| (r.params, format!("step1:{}", r.start_label))));
    let mut results = run_starts(circuit, config, starts, settings)?;
    absorb(pool, config, &results, settings);
    sort_results(&mut results);
    Ok(results)
}

pub fn two_step<R: Rng + ?Sized>(
    circuit: &Circuit,
    config: &ObjectiveConfig,
    pool: &mut SeedPool,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<OptResult> {
    Ok(two_step_all(circuit, config, pool, settings, rng)?.swap_remove(0))
}
