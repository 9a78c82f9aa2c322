//! Global-best particle swarm optimisation over a box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Cost assigned to evaluations that fail or return a non-finite value.
pub const FAILED_COST: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoOptions {
    pub swarm_size: usize,
    pub max_iter: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    /// Stop once the best cost improved by less than `stall_tol`
    /// (relative) over the last `stall_iters` iterations; `0` disables.
    pub stall_iters: usize,
    pub stall_tol: f64,
}

impl Default for PsoOptions {
    fn default() -> Self {
        Self {
            swarm_size: 50,
            max_iter: 1000,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            seed: 0,
            stall_iters: 0,
            stall_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Evaluations that returned a failure.
    pub failures: usize,
    /// Best cost after initialisation and after each iteration.
    pub trace: Vec<f64>,
}

fn evaluate<F>(cost: &F, xs: &[Vec<f64>]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let f = |x: &Vec<f64>| {
        let c = cost(x);
        if c.is_finite() {
            c
        } else {
            FAILED_COST
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        xs.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        xs.iter().map(f).collect()
    }
}

/// Minimises `cost` over `bounds`. Positions that leave the box are
/// reflected back in and their velocity component reversed, so `cost` is
/// only ever called inside the bounds.
///
/// Evaluations within one iteration may run concurrently; the result is
/// identical for a fixed seed regardless.
pub fn pso_minimize<F>(cost: F, bounds: &[(f64, f64)], opts: &PsoOptions) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if opts.swarm_size < 10 {
        return Err(Error::domain("swarm_size", "at least 10 particles"));
    }
    if bounds.is_empty() {
        return Err(Error::domain("bounds", "no free dimensions"));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::domain(
                "bounds",
                format!("invalid interval [{lo}, {hi}]"),
            ));
        }
    }
    let d = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let span: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();

    let mut x: Vec<Vec<f64>> = (0..opts.swarm_size)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect()
        })
        .collect();
    let mut v: Vec<Vec<f64>> = (0..opts.swarm_size)
        .map(|_| {
            span.iter()
                .map(|s| 0.1 * s * rng.gen_range(-1.0..=1.0))
                .collect()
        })
        .collect();

    let mut fx = evaluate(&cost, &x);
    let mut evaluations = fx.len();
    let mut failures = fx.iter().filter(|&&c| c >= FAILED_COST).count();
    let mut pbest = x.clone();
    let mut pcost = fx.clone();
    let mut g = argmin(&pcost);
    let mut gbest = pbest[g].clone();
    let mut gcost = pcost[g];
    let mut trace = vec![gcost];
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        for p in 0..opts.swarm_size {
            for k in 0..d {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let mut vk = opts.inertia * v[p][k]
                    + opts.cognitive * r1 * (pbest[p][k] - x[p][k])
                    + opts.social * r2 * (gbest[k] - x[p][k]);
                vk = vk.clamp(-span[k], span[k]);
                let (lo, hi) = bounds[k];
                let mut xk = x[p][k] + vk;
                if xk > hi {
                    xk = hi - (xk - hi);
                    vk = -vk;
                } else if xk < lo {
                    xk = lo + (lo - xk);
                    vk = -vk;
                }
                x[p][k] = xk.clamp(lo, hi);
                v[p][k] = vk;
            }
        }
        fx = evaluate(&cost, &x);
        evaluations += fx.len();
        failures += fx.iter().filter(|&&c| c >= FAILED_COST).count();
        for p in 0..opts.swarm_size {
            if fx[p] < pcost[p] {
                pcost[p] = fx[p];
                pbest[p].clone_from(&x[p]);
            }
        }
        g = argmin(&pcost);
        if pcost[g] < gcost {
            gcost = pcost[g];
            gbest.clone_from(&pbest[g]);
        }
        trace.push(gcost);
        if opts.stall_iters > 0 && trace.len() > opts.stall_iters {
            let old = trace[trace.len() - 1 - opts.stall_iters];
            if old - gcost <= opts.stall_tol * old.abs() {
                break;
            }
        }
    }

    Ok(PsoResult {
        x: gbest,
        cost: gcost,
        iterations,
        evaluations,
        failures,
        trace,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &c) in v.iter().enumerate() {
        if c < v[best] {
            best = k;
        }
    }
    best
}
