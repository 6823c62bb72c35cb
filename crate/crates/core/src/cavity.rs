//! Population dynamics for the cavity field.
//!
//! The cavity field `h` is the fixed point in law of
//! `h = B + Σ_{i=1}^{K} ξ(h_i)` with `K ~ ρ`, `h_i` i.i.d. copies of `h`
//! and `ξ(h) = atanh(tanh(β) tanh(h))`. A population of samples stands in
//! for the law. Each generation draws every new sample from the previous
//! generation with replacement.
//!
//! Randomness is addressed by (seed, iteration, chunk), so a run is
//! reproducible for any number of worker threads.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degree_models::ForwardModel;
use crate::error::{Error, NonConvergence, Result};
use crate::rng::{tag, SeedStream, CHUNK};
use crate::stats::{ks_sorted, mean_estimate, Estimate};

/// Field value standing for `h = +∞` (a spin pinned to +1).
pub const SATURATED: f64 = f64::INFINITY;

/// Above this many children the sum over children is estimated from a
/// subsample and rescaled. Only reachable for laws with ν = ∞.
const MAX_EXPLICIT_CHILDREN: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsingParams {
    pub beta: f64,
    pub beta_hat: f64,
    #[serde(rename = "B")]
    pub field: f64,
}

impl IsingParams {
    pub fn new(beta: f64, field: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(field >= 0.0 && field.is_finite()) {
            return Err(Error::InvalidParameter(format!("B must be finite and >= 0, got {field}")));
        }
        Ok(IsingParams {
            beta,
            beta_hat: beta.tanh(),
            field,
        })
    }
}

/// ξ(h) = atanh(tanh(β) tanh(h)).
///
/// Small arguments use `atanh` directly. Otherwise the identity
/// `atanh(tanh a tanh b) = ½ log(cosh(a+b) / cosh(a-b))` is expanded so that
/// no large terms cancel; it also gives `ξ(+∞) = β` exactly.
#[inline]
pub fn xi(params: &IsingParams, h: f64) -> f64 {
    xi_raw(params.beta, params.beta_hat, h)
}

#[inline]
pub(crate) fn xi_raw(beta: f64, beta_hat: f64, h: f64) -> f64 {
    if h < 0.0 {
        return -xi_raw(beta, beta_hat, -h);
    }
    let x = beta_hat * h.tanh();
    if x <= 0.5 {
        return x.atanh();
    }
    let lead = h.min(beta);
    lead + 0.5 * ((-2.0 * (h + beta)).exp().ln_1p() - (-2.0 * (h - beta).abs()).exp().ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// h⁽⁰⁾ = B
    Free,
    /// h⁽⁰⁾ = +∞
    #[default]
    Plus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub population_size: usize,
    pub max_iters: usize,
    /// Iterations per convergence window.
    pub window: usize,
    /// Relative change of the windowed E[ξ(h)].
    pub tol: f64,
    /// KS distance between populations one window apart.
    pub shape_tol: f64,
    /// KS distance allowed between free and plus fixed points.
    pub ks_tol: f64,
    /// A change below `noise_z` standard errors of the windowed mean also
    /// counts as settled; 0 disables.
    pub noise_z: f64,
    /// Consecutive windows that must pass.
    pub patience: usize,
    pub check_uniqueness: bool,
    pub init: Init,
    /// Stratify the K draws within each chunk.
    pub stratified: bool,
    pub allow_infinite_nu: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            population_size: 200_000,
            max_iters: 4000,
            window: 10,
            tol: 1e-4,
            shape_tol: 0.005,
            ks_tol: 0.01,
            noise_z: 3.0,
            patience: 2,
            check_uniqueness: false,
            init: Init::Plus,
            stratified: true,
            allow_infinite_nu: false,
        }
    }
}

/// An empirical sample of the cavity field together with its history.
#[derive(Debug, Clone)]
pub struct CavityPopulation {
    samples: Vec<f64>,
    xi_values: Vec<f64>,
    params: IsingParams,
    model: Arc<ForwardModel>,
    iterations: usize,
    init: Init,
    converged: bool,
    trace: Vec<f64>,
    stream: SeedStream,
    stratified: bool,
}

impl CavityPopulation {
    /// Initial population. Rejects laws with ν = ∞; see
    /// [`CavityPopulation::new_allowing_infinite_nu`].
    pub fn new(
        model: Arc<ForwardModel>,
        params: IsingParams,
        size: usize,
        init: Init,
        stream: SeedStream,
    ) -> Result<Self> {
        if model.nu().is_infinite() {
            return Err(Error::DivergentMoment(
                "forward mean is infinite; opt in with allow_infinite_nu".into(),
            ));
        }
        Self::new_allowing_infinite_nu(model, params, size, init, stream)
    }

    pub fn new_allowing_infinite_nu(
        model: Arc<ForwardModel>,
        params: IsingParams,
        size: usize,
        init: Init,
        stream: SeedStream,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter("population size must be positive".into()));
        }
        let h0 = match init {
            Init::Free => params.field,
            Init::Plus => SATURATED,
        };
        let x0 = xi(&params, h0);
        Ok(CavityPopulation {
            samples: vec![h0; size],
            xi_values: vec![x0; size],
            params,
            model,
            iterations: 0,
            init,
            converged: false,
            trace: Vec::new(),
            stream,
            stratified: true,
        })
    }

    /// Population built from explicit samples.
    pub fn from_samples(
        model: Arc<ForwardModel>,
        params: IsingParams,
        samples: Vec<f64>,
        stream: SeedStream,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("population size must be positive".into()));
        }
        let xi_values = samples.iter().map(|&h| xi(&params, h)).collect();
        Ok(CavityPopulation {
            samples,
            xi_values,
            params,
            model,
            iterations: 0,
            init: Init::Free,
            converged: false,
            trace: Vec::new(),
            stream,
            stratified: true,
        })
    }

    /// Same samples under new parameters, for warm starts. The iteration
    /// counter keeps running so fresh random numbers are used.
    pub fn retarget(mut self, params: IsingParams) -> Self {
        self.params = params;
        self.xi_values = self.samples.par_iter().map(|&h| xi(&params, h)).collect();
        self.converged = false;
        self.trace.clear();
        self
    }

    pub fn with_stratification(mut self, on: bool) -> Self {
        self.stratified = on;
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// ξ(h) of every sample.
    pub fn xi_values(&self) -> &[f64] {
        &self.xi_values
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn params(&self) -> &IsingParams {
        &self.params
    }

    pub fn model(&self) -> &Arc<ForwardModel> {
        &self.model
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn init(&self) -> Init {
        self.init
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// E[ξ(h)] after each iteration.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn stream(&self) -> SeedStream {
        self.stream
    }

    pub fn mark_converged(&mut self, converged: bool) {
        self.converged = converged;
    }

    /// Mean of ξ over the current samples.
    pub fn mean_xi(&self) -> f64 {
        crate::stats::pairwise_sum(&self.xi_values) / self.xi_values.len() as f64
    }

    /// Uniformly chosen ξ(h_J).
    #[inline]
    pub fn draw_xi<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.xi_values[rng.gen_range(0..self.xi_values.len())]
    }

    /// Σ of `k` independent uniform draws of ξ(h_J).
    #[inline]
    pub fn sum_of_draws<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> f64 {
        let n = self.xi_values.len();
        if k > MAX_EXPLICIT_CHILDREN {
            let mut s = 0.0;
            for _ in 0..MAX_EXPLICIT_CHILDREN {
                s += self.xi_values[rng.gen_range(0..n)];
            }
            return s * (k as f64 / MAX_EXPLICIT_CHILDREN as f64);
        }
        let mut s = 0.0;
        for _ in 0..k {
            s += self.xi_values[rng.gen_range(0..n)];
        }
        s
    }
}

/// Advances the population by `steps` generations.
pub fn evolve(mut pop: CavityPopulation, steps: usize) -> CavityPopulation {
    for _ in 0..steps {
        pop = step(pop);
    }
    pop
}

fn step(pop: CavityPopulation) -> CavityPopulation {
    let n = pop.samples.len();
    let params = pop.params;
    let base = pop.stream.derive(tag::EVOLVE).derive(pop.iterations as u64);
    let mut next = vec![0.0; n];
    let mut next_xi = vec![0.0; n];
    next.par_chunks_mut(CHUNK)
        .zip(next_xi.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (out, out_xi))| {
            let mut rng = base.rng(c as u64);
            let m = out.len();
            let strata = if pop.stratified && m > 1 {
                let mut perm: Vec<u32> = (0..m as u32).collect();
                for i in (1..m).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                Some(perm)
            } else {
                None
            };
            for i in 0..m {
                let k = match &strata {
                    Some(perm) => {
                        let u = (perm[i] as f64 + rng.gen::<f64>()) / m as f64;
                        pop.model.quantile(u, &mut rng)
                    }
                    None => pop.model.sample(&mut rng),
                };
                let h = params.field + pop.sum_of_draws(k, &mut rng);
                out[i] = h;
                out_xi[i] = xi(&params, h);
            }
        });
    let mean_xi = crate::stats::pairwise_sum(&next_xi) / n as f64;
    let mut trace = pop.trace;
    trace.push(mean_xi);
    CavityPopulation {
        samples: next,
        xi_values: next_xi,
        iterations: pop.iterations + 1,
        converged: false,
        trace,
        ..pop
    }
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.par_sort_unstable_by(f64::total_cmp);
    v
}

/// Iterates `pop` until the convergence rule holds or `cfg.max_iters`
/// generations have been run.
///
/// Rule, checked once per window of `cfg.window` generations: the window
/// mean of E[ξ(h)] moved by less than `cfg.tol` relative (or by less than
/// `cfg.noise_z` standard errors), and the KS distance to the population one
/// window earlier is below `cfg.shape_tol`, for `cfg.patience` consecutive
/// windows.
pub fn converge(mut pop: CavityPopulation, cfg: &SolverConfig) -> Result<CavityPopulation> {
    let window = cfg.window.max(1);
    let start = pop.iterations;
    let mut snapshot: Option<Vec<f64>> = None;
    let mut passes = 0usize;
    pop.trace.clear();
    loop {
        pop = evolve(pop, window);
        let done = pop.iterations - start;
        let current = sorted_copy(&pop.samples);
        let t = &pop.trace;
        if t.len() >= 2 * window {
            let cur = t[t.len() - window..].iter().sum::<f64>() / window as f64;
            let prev = t[t.len() - 2 * window..t.len() - window].iter().sum::<f64>() / window as f64;
            let scale = cur.abs().max(f64::MIN_POSITIVE);
            let rel = (cur - prev).abs() / scale;
            let se = mean_estimate(&pop.xi_values).stderr;
            let noise = cfg.noise_z * se * (2.0 / window as f64).sqrt() / scale;
            let ks = snapshot.as_ref().map_or(1.0, |s| ks_sorted(s, &current));
            if rel < cfg.tol.max(noise) && ks < cfg.shape_tol {
                passes += 1;
            } else {
                passes = 0;
            }
            if passes >= cfg.patience.max(1) {
                pop.converged = true;
                return Ok(pop);
            }
        }
        snapshot = Some(current);
        if done >= cfg.max_iters {
            let trace = pop.trace.clone();
            return Err(Error::NonConvergence(Box::new(NonConvergence {
                iterations: done,
                trace,
                population: pop,
            })));
        }
    }
}

/// Solves for the cavity fixed point at `params` from scratch.
///
/// With `cfg.check_uniqueness` the free and plus initialisations are both
/// run and must agree within `cfg.ks_tol`; the plus population is returned.
pub fn fixed_point(
    model: &Arc<ForwardModel>,
    params: IsingParams,
    cfg: &SolverConfig,
    stream: SeedStream,
) -> Result<CavityPopulation> {
    if !(params.field > 0.0) {
        return Err(Error::InvalidParameter(
            "the fixed-point solver needs B > 0".into(),
        ));
    }
    let make = |init: Init, s: SeedStream| -> Result<CavityPopulation> {
        let p = if cfg.allow_infinite_nu {
            CavityPopulation::new_allowing_infinite_nu(model.clone(), params, cfg.population_size, init, s)?
        } else {
            CavityPopulation::new(model.clone(), params, cfg.population_size, init, s)?
        };
        Ok(p.with_stratification(cfg.stratified))
    };
    if cfg.check_uniqueness {
        let plus = converge(make(Init::Plus, stream.derive(tag::PLUS_INIT))?, cfg)?;
        let free = converge(make(Init::Free, stream.derive(tag::FREE_INIT))?, cfg)?;
        let ks = ks_sorted(&sorted_copy(plus.samples()), &sorted_copy(free.samples()));
        if ks >= cfg.ks_tol {
            return Err(Error::NonUniqueness { ks, tol: cfg.ks_tol });
        }
        return Ok(plus);
    }
    converge(make(cfg.init, stream)?, cfg)
}

/// Continues from an existing population under new parameters.
pub fn fixed_point_from(
    pop: CavityPopulation,
    params: IsingParams,
    cfg: &SolverConfig,
) -> Result<CavityPopulation> {
    if !(params.field > 0.0) {
        return Err(Error::InvalidParameter(
            "the fixed-point solver needs B > 0".into(),
        ));
    }
    converge(pop.retarget(params).with_stratification(cfg.stratified), cfg)
}

/// Free-vs-plus KS distance of two populations.
pub fn population_ks(a: &CavityPopulation, b: &CavityPopulation) -> f64 {
    ks_sorted(&sorted_copy(a.samples()), &sorted_copy(b.samples()))
}

/// Plug-in moments of a population with standard errors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PopulationMoments {
    pub mean_xi: Estimate,
    pub mean_xi2: Estimate,
    pub mean_xi3: Estimate,
    pub mean_h: Estimate,
    pub mean_h2: Estimate,
}

pub fn moments(pop: &CavityPopulation) -> PopulationMoments {
    let xs = pop.xi_values();
    let hs = pop.samples();
    let pow = |v: &[f64], p: i32| -> Vec<f64> { v.iter().map(|x| x.powi(p)).collect() };
    PopulationMoments {
        mean_xi: mean_estimate(xs),
        mean_xi2: mean_estimate(&pow(xs, 2)),
        mean_xi3: mean_estimate(&pow(xs, 3)),
        mean_h: mean_estimate(hs),
        mean_h2: mean_estimate(&pow(hs, 2)),
    }
}
