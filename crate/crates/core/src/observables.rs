//! Magnetization and susceptibility of the random Bethe tree from a cavity
//! population.
//!
//! The susceptibility has two estimators. Below the transition the closed
//! form `1 + E[D]β̂/(1-νβ̂)` is exact. Everywhere else a spine expansion is
//! sampled: the correlation between the root and a vertex at depth ℓ is a
//! product of per-edge factors along the path, and averaging over paths
//! turns the sum over vertices into size-biased degrees along a spine.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{self, xi, CavityPopulation, IsingParams, SolverConfig};
use crate::degree_models::{DegreeModel, ForwardModel};
use crate::error::{Error, Result};
use crate::rng::{tag, SeedStream, CHUNK};
use crate::stats::{combine_snapshots, pairwise_sum, Estimate};

/// Fewest draws accepted by [`magnetization`].
pub const MIN_MAGNETIZATION_SAMPLES: usize = 1000;
/// Cap on the supercritical spine length.
pub const MAX_SPINE_DEPTH: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChiMethod {
    ClosedFormSubcritical,
    PathMC,
}

impl std::fmt::Display for ChiMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChiMethod::ClosedFormSubcritical => f.write_str("ClosedFormSubcritical"),
            ChiMethod::PathMC => f.write_str("PathMC"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermoPoint {
    pub beta: f64,
    #[serde(rename = "B")]
    pub field: f64,
    #[serde(rename = "M")]
    pub m: Estimate,
    pub chi: Estimate,
    pub chi_method: ChiMethod,
    /// Bound on the neglected tail of the spine series (0 for the closed form).
    pub trunc_bound: f64,
    pub n_samples: usize,
    pub converged: bool,
    pub iterations: usize,
    pub warm_started: bool,
    /// "ok" or the reason the point failed.
    pub status: String,
}

/// One sampled spine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpineSample {
    pub depth: usize,
    /// 1 - tanh²(h_{v0}) with the spine-aware root field.
    pub root_term: f64,
    /// Π_{i=1}^{ℓ} (1 + sinh²(h_i)/cosh²β)^{-1}.
    pub weight: f64,
}

/// Magnetization with its standard error; `warning` is set when the
/// population did not meet the convergence rule.
#[derive(Debug, Clone, Serialize)]
pub struct Magnetization {
    pub value: f64,
    pub stderr: f64,
    pub warning: Option<String>,
}

impl Magnetization {
    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.value,
            stderr: self.stderr,
        }
    }
}

/// E[tanh(B + Σ_{i=1}^{D} ξ(h_i))] by Monte Carlo with `n` draws.
pub fn magnetization(
    model: &DegreeModel,
    pop: &CavityPopulation,
    n: usize,
    stream: SeedStream,
) -> Result<Magnetization> {
    if n < MIN_MAGNETIZATION_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "magnetization needs at least {MIN_MAGNETIZATION_SAMPLES} draws, got {n}"
        )));
    }
    let field = pop.params().field;
    let base = stream.derive(tag::MAGNETIZATION).derive(pop.iterations() as u64);
    let mut out = vec![0.0; n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, slot)| {
        let mut rng = base.rng(c as u64);
        let m = slot.len();
        let perm = permutation(m, &mut rng);
        for (i, s) in slot.iter_mut().enumerate() {
            let u = (perm[i] as f64 + rng.gen::<f64>()) / m as f64;
            let d = model.quantile(u, &mut rng);
            *s = (field + pop.sum_of_draws(d, &mut rng)).tanh();
        }
    });
    let est = chunked_mean(&out);
    Ok(Magnetization {
        value: est.value,
        stderr: est.stderr,
        warning: (!pop.converged()).then(|| "population not converged".to_string()),
    })
}

/// Random permutation of 0..m, used to stratify degree draws in a chunk.
pub(crate) fn permutation<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..m as u32).collect();
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

// Stratified draws are correlated within a chunk, so the error comes from
// the spread of chunk means.
fn chunked_mean(xs: &[f64]) -> Estimate {
    let value = pairwise_sum(xs) / xs.len() as f64;
    let means: Vec<f64> = xs.chunks(CHUNK).map(|c| pairwise_sum(c) / c.len() as f64).collect();
    let weights: Vec<f64> = xs.chunks(CHUNK).map(|c| c.len() as f64).collect();
    if means.len() < 2 {
        return crate::stats::mean_estimate(xs);
    }
    let total: f64 = weights.iter().sum();
    let mut ss = 0.0;
    for (m, w) in means.iter().zip(&weights) {
        ss += w * w * (m - value) * (m - value);
    }
    let g = means.len() as f64;
    Estimate {
        value,
        stderr: (ss * g / (g - 1.0)).sqrt() / total,
    }
}

/// χ(β, 0⁺) = 1 + E[D]β̂/(1 - νβ̂), valid for β̂ν < 1.
pub fn susceptibility_subcritical(fm: &ForwardModel, params: &IsingParams) -> Result<f64> {
    let nu = fm
        .nu()
        .finite()
        .ok_or_else(|| Error::DivergentMoment("closed-form susceptibility needs a finite nu".into()))?;
    let x = params.beta_hat * nu;
    if x >= 1.0 {
        return Err(Error::NotSubcritical(x));
    }
    Ok(1.0 + fm.parent().mean() * params.beta_hat / (1.0 - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathMcConfig {
    /// Total spine budget, split equally over depths 0..=ℓ_max.
    pub n_spines: usize,
    /// Fixed maximum depth; chosen automatically when absent.
    pub ell_max: Option<usize>,
    /// Relative tolerance for the automatic subcritical depth.
    pub tail_tol: f64,
    pub min_spines_per_depth: usize,
}

impl Default for PathMcConfig {
    fn default() -> Self {
        PathMcConfig {
            n_spines: 100_000,
            ell_max: None,
            tail_tol: 1e-4,
            min_spines_per_depth: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthTerm {
    pub depth: usize,
    pub spines: usize,
    /// E[root_term · weight] at this depth.
    pub mean: f64,
    pub stderr: f64,
    /// Contribution to χ including the depth prefactor.
    pub contribution: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathMcResult {
    pub chi: Estimate,
    pub ell_max: usize,
    /// Subcritical: geometric bound. Supercritical: extrapolated from the
    /// decay of the last depth terms (∞ when they do not decay).
    pub trunc_bound: f64,
    pub terms: Vec<DepthTerm>,
}

/// Spine depth used when none is configured.
pub fn default_ell_max(fm: &ForwardModel, params: &IsingParams, tail_tol: f64) -> Result<usize> {
    let nu = fm
        .nu()
        .finite()
        .ok_or_else(|| Error::DivergentMoment("spine expansion needs a finite nu".into()))?;
    let x = params.beta_hat * nu;
    if x < 1.0 {
        if x == 0.0 {
            return Ok(0);
        }
        let chi = susceptibility_subcritical(fm, params)?;
        // (x^{ℓ+1}/(1-x)) · E[D]/ν < tol · χ
        let scale = fm.parent().mean() / nu / (1.0 - x);
        let target = tail_tol * chi / scale;
        let ell = (target.ln() / x.ln() - 1.0).ceil().max(1.0);
        return Ok((ell as usize).min(MAX_SPINE_DEPTH));
    }
    let beta_c = (1.0 / nu).atanh();
    let gap = params.beta - beta_c;
    if gap <= 0.0 {
        return Ok(MAX_SPINE_DEPTH);
    }
    Ok(((4.0 / gap).ceil() as usize).clamp(1, MAX_SPINE_DEPTH))
}

/// Draws one spine of the given depth.
pub fn sample_spine<R: Rng + ?Sized>(
    model: &DegreeModel,
    fm: &ForwardModel,
    pop: &CavityPopulation,
    depth: usize,
    rng: &mut R,
) -> Result<SpineSample> {
    let p = pop.params();
    let field = p.field;
    if depth == 0 {
        let d = model.sample(rng);
        let h0 = field + pop.sum_of_draws(d, rng);
        let t = h0.tanh();
        return Ok(SpineSample {
            depth,
            root_term: 1.0 - t * t,
            weight: 1.0,
        });
    }
    let cosh_b2 = p.beta.cosh().powi(2);
    // the terminal vertex carries an ordinary cavity field
    let mut h = field + pop.sum_of_draws(fm.sample(rng), rng);
    let mut log_w = -(h.sinh().powi(2) / cosh_b2).ln_1p();
    for _ in 1..depth {
        let k = fm.sample_size_biased(rng)?;
        h = field + xi(p, h) + pop.sum_of_draws(k - 1, rng);
        log_w -= (h.sinh().powi(2) / cosh_b2).ln_1p();
    }
    let d = model.sample_size_biased(rng);
    let h0 = field + xi(p, h) + pop.sum_of_draws(d - 1, rng);
    let c = h0.cosh();
    let root_term = if c.is_finite() { 1.0 / (c * c) } else { 0.0 };
    let weight = if log_w.is_finite() { log_w.exp() } else { 0.0 };
    Ok(SpineSample {
        depth,
        root_term,
        weight,
    })
}

/// χ(β, B) from the spine expansion.
pub fn susceptibility_path_mc(
    model: &DegreeModel,
    fm: &ForwardModel,
    pop: &CavityPopulation,
    cfg: &PathMcConfig,
    stream: SeedStream,
) -> Result<PathMcResult> {
    let nu = fm
        .nu()
        .finite()
        .ok_or_else(|| Error::DivergentMoment("spine expansion needs a finite nu".into()))?;
    if !pop.converged() {
        return Err(Error::Unconverged);
    }
    let params = *pop.params();
    if params.beta_hat * nu >= 1.0 && !(params.field > 0.0) {
        return Err(Error::InvalidParameter("supercritical spine expansion needs B > 0".into()));
    }
    let ell_max = match cfg.ell_max {
        Some(l) => l,
        None => default_ell_max(fm, &params, cfg.tail_tol)?,
    };
    let per_depth = (cfg.n_spines / (ell_max + 1)).max(cfg.min_spines_per_depth).max(2);
    let base = stream.derive(tag::SPINE).derive(pop.iterations() as u64);
    let mean_d = model.mean();

    let spine_chunk = 256usize;
    let terms: Vec<Result<DepthTerm>> = (0..=ell_max)
        .into_par_iter()
        .map(|depth| {
            let ds = base.derive(depth as u64);
            let chunks = per_depth.div_ceil(spine_chunk);
            let values: Vec<Result<Vec<f64>>> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ds.rng(c as u64);
                    let len = spine_chunk.min(per_depth - c * spine_chunk);
                    (0..len)
                        .map(|_| sample_spine(model, fm, pop, depth, &mut rng).map(|s| s.root_term * s.weight))
                        .collect()
                })
                .collect();
            let mut all = Vec::with_capacity(per_depth);
            for v in values {
                all.extend(v?);
            }
            let est = crate::stats::mean_estimate(&all);
            let coeff = if depth == 0 {
                1.0
            } else {
                mean_d * nu.powi(depth as i32 - 1) * params.beta_hat.powi(depth as i32)
            };
            Ok(DepthTerm {
                depth,
                spines: all.len(),
                mean: est.value,
                stderr: est.stderr * coeff,
                contribution: est.value * coeff,
            })
        })
        .collect();
    let terms: Vec<DepthTerm> = terms.into_iter().collect::<Result<_>>()?;
    let contributions: Vec<f64> = terms.iter().map(|t| t.contribution).collect();
    let value = pairwise_sum(&contributions);
    let stderr = terms.iter().map(|t| t.stderr * t.stderr).sum::<f64>().sqrt();

    let x = params.beta_hat * nu;
    let trunc_bound = if x < 1.0 {
        mean_d / nu * x.powi(ell_max as i32 + 1) / (1.0 - x)
    } else {
        empirical_tail(&terms)
    };
    Ok(PathMcResult {
        chi: Estimate { value, stderr },
        ell_max,
        trunc_bound,
        terms,
    })
}

// Geometric extrapolation of the last depth contributions.
fn empirical_tail(terms: &[DepthTerm]) -> f64 {
    let n = terms.len();
    if n < 3 {
        return f64::INFINITY;
    }
    let span = (n / 4).clamp(1, 10);
    let last = terms[n - 1].contribution;
    let earlier = terms[n - 1 - span].contribution;
    if !(last > 0.0 && earlier > 0.0) {
        return if last == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let r = (last / earlier).powf(1.0 / span as f64);
    if r >= 1.0 {
        f64::INFINITY
    } else {
        last * r / (1.0 - r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub solver: SolverConfig,
    pub path_mc: PathMcConfig,
    /// Magnetization draws per snapshot.
    pub magnetization_samples: usize,
    pub warm_start: bool,
    /// Observables are averaged over this many snapshots of the converged
    /// dynamics, so their errors include the population's own fluctuation.
    pub snapshots: usize,
    /// Generations between snapshots.
    pub snapshot_every: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            solver: SolverConfig::default(),
            path_mc: PathMcConfig::default(),
            magnetization_samples: 200_000,
            warm_start: true,
            snapshots: 10,
            snapshot_every: 4,
        }
    }
}

/// One [`ThermoPoint`] per grid entry. With `cfg.warm_start` each solve
/// starts from the previous converged population. Failures are recorded in
/// the point's status and the sweep carries on.
pub fn thermo_sweep(
    fm: &Arc<ForwardModel>,
    grid: &[(f64, f64)],
    cfg: &SweepConfig,
    stream: SeedStream,
) -> Result<Vec<ThermoPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut previous: Option<CavityPopulation> = None;
    for (i, &(beta, field)) in grid.iter().enumerate() {
        let point_stream = stream.derive(tag::SWEEP).derive(i as u64);
        match sweep_point(fm, beta, field, cfg, point_stream, previous.take()) {
            Ok((point, pop)) => {
                if cfg.warm_start {
                    previous = pop;
                }
                out.push(point);
            }
            Err((err, pop)) => {
                if cfg.warm_start {
                    previous = pop;
                }
                out.push(failed_point(beta, field, &err));
            }
        }
    }
    Ok(out)
}

fn failed_point(beta: f64, field: f64, err: &Error) -> ThermoPoint {
    let nan = Estimate {
        value: f64::NAN,
        stderr: f64::NAN,
    };
    ThermoPoint {
        beta,
        field,
        m: nan,
        chi: nan,
        chi_method: ChiMethod::PathMC,
        trunc_bound: f64::NAN,
        n_samples: 0,
        converged: false,
        iterations: 0,
        warm_started: false,
        status: status_text(err),
    }
}

fn status_text(err: &Error) -> String {
    err.to_string().replace([',', '\n'], ";")
}

type PointOutcome = std::result::Result<(ThermoPoint, Option<CavityPopulation>), (Error, Option<CavityPopulation>)>;

fn sweep_point(
    fm: &Arc<ForwardModel>,
    beta: f64,
    field: f64,
    cfg: &SweepConfig,
    stream: SeedStream,
    previous: Option<CavityPopulation>,
) -> PointOutcome {
    let params = IsingParams::new(beta, field).map_err(|e| (e, previous.clone()))?;
    let subcritical = fm.nu().finite().is_some_and(|nu| params.beta_hat * nu < 1.0);

    if subcritical && field == 0.0 {
        let chi = susceptibility_subcritical(fm, &params).map_err(|e| (e, previous.clone()))?;
        return Ok((
            ThermoPoint {
                beta,
                field,
                m: Estimate::exact(0.0),
                chi: Estimate::exact(chi),
                chi_method: ChiMethod::ClosedFormSubcritical,
                trunc_bound: 0.0,
                n_samples: 0,
                converged: true,
                iterations: 0,
                warm_started: false,
                status: "ok".into(),
            },
            previous,
        ));
    }

    let warm = previous.is_some();
    let solved = match previous {
        Some(pop) => cavity::fixed_point_from(pop, params, &cfg.solver),
        None => cavity::fixed_point(fm, params, &cfg.solver, stream),
    };
    // an unconverged population still yields M, flagged in the status
    let (pop, status) = match solved {
        Ok(p) => (p, "ok".to_string()),
        Err(Error::NonConvergence(nc)) => {
            let status = format!("non_convergence after {} iterations", nc.iterations);
            (nc.population, status)
        }
        Err(e) => return Err((e, None)),
    };
    let converged = pop.converged();
    let snapshots = cfg.snapshots.max(1);
    // the spine budget is spread over the snapshots
    let mc = PathMcConfig {
        n_spines: (cfg.path_mc.n_spines / snapshots).max(1),
        ..cfg.path_mc
    };
    let (mut ms, mut chis, mut trunc) = (Vec::with_capacity(snapshots), Vec::new(), 0.0f64);
    let mut pop = pop;
    for k in 0..snapshots {
        if k > 0 {
            pop = cavity::evolve(pop, cfg.snapshot_every.max(1));
            pop.mark_converged(converged);
        }
        let s = stream.derive(k as u64);
        let keep = |e: Error, pop: &CavityPopulation| (e, Some(pop.clone()));
        ms.push(
            magnetization(fm.parent(), &pop, cfg.magnetization_samples, s)
                .map_err(|e| keep(e, &pop))?
                .estimate(),
        );
        if !subcritical && converged {
            let r = susceptibility_path_mc(fm.parent(), fm, &pop, &mc, s).map_err(|e| keep(e, &pop))?;
            chis.push(r.chi);
            trunc = trunc.max(r.trunc_bound);
        }
    }
    let m = combine_snapshots(&ms);
    let (chi, method) = if subcritical {
        let chi = susceptibility_subcritical(fm, &params).map_err(|e| (e, Some(pop.clone())))?;
        (Estimate::exact(chi), ChiMethod::ClosedFormSubcritical)
    } else if chis.is_empty() {
        trunc = f64::NAN;
        let nan = Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
        (nan, ChiMethod::PathMC)
    } else {
        (combine_snapshots(&chis), ChiMethod::PathMC)
    };
    let point = ThermoPoint {
        beta,
        field,
        m,
        chi,
        chi_method: method,
        trunc_bound: trunc,
        n_samples: cfg.magnetization_samples * snapshots,
        converged: pop.converged(),
        iterations: pop.iterations(),
        warm_started: warm,
        status,
    };
    Ok((point, Some(pop)))
}

/// Fixed CSV column order.
pub const CSV_COLUMNS: &str = "beta,B,M,M_se,chi,chi_se,chi_method,trunc_bound,seed,status";

/// Float formatting used in every CSV: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Renders points as CSV. `provenance` lines are written first as comments.
pub fn to_csv(points: &[ThermoPoint], seed: u64, provenance: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in provenance {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "{CSV_COLUMNS}");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_float(p.beta),
            fmt_float(p.field),
            fmt_float(p.m.value),
            fmt_float(p.m.stderr),
            fmt_float(p.chi.value),
            fmt_float(p.chi.stderr),
            p.chi_method,
            fmt_float(p.trunc_bound),
            seed,
            p.status
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::Init;
    use crate::degree_models::{forward, make_model, ModelSpec};

    fn fm(spec: ModelSpec) -> Arc<ForwardModel> {
        Arc::new(forward(&make_model(&spec).unwrap()).unwrap())
    }

    #[test]
    fn closed_form_regular_three() {
        let f = fm(ModelSpec::Regular { d: 3 });
        let p = IsingParams::new(0.2, 0.0).unwrap();
        let t = 0.2f64.tanh();
        let expect = 1.0 + 3.0 * t / (1.0 - 2.0 * t);
        assert!((susceptibility_subcritical(&f, &p).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 1.9784).abs() < 1e-4);
        let hot = IsingParams::new(0.0, 0.0).unwrap();
        assert_eq!(susceptibility_subcritical(&f, &hot).unwrap(), 1.0);
        let cold = IsingParams::new(0.6, 0.0).unwrap();
        assert!(matches!(susceptibility_subcritical(&f, &cold), Err(Error::NotSubcritical(_))));
    }

    #[test]
    fn magnetization_at_zero_coupling_is_tanh_field() {
        let f = fm(ModelSpec::Poisson { lambda: 3.0 });
        let p = IsingParams::new(0.0, 0.25).unwrap();
        let mut pop = CavityPopulation::new(f.clone(), p, 5000, Init::Free, SeedStream::new(3)).unwrap();
        pop.mark_converged(true);
        let m = magnetization(f.parent(), &pop, 5000, SeedStream::new(4)).unwrap();
        assert!((m.value - 0.25f64.tanh()).abs() < 1e-15);
        assert!(m.warning.is_none());
        assert!(magnetization(f.parent(), &pop, 10, SeedStream::new(4)).is_err());
    }

    #[test]
    fn spine_weights_are_bounded() {
        let f = fm(ModelSpec::Poisson { lambda: 3.0 });
        let p = IsingParams::new(0.5, 0.1).unwrap();
        let pop = cavity::evolve(
            CavityPopulation::new(f.clone(), p, 4096, Init::Plus, SeedStream::new(1)).unwrap(),
            30,
        );
        let mut rng = SeedStream::new(2).rng(0);
        for depth in 0..20 {
            let s = sample_spine(f.parent(), &f, &pop, depth, &mut rng).unwrap();
            assert!(s.weight > 0.0 && s.weight <= 1.0);
            assert!((0.0..=1.0).contains(&s.root_term));
        }
    }

    #[test]
    fn path_mc_rejects_unconverged_population() {
        let f = fm(ModelSpec::Regular { d: 3 });
        let p = IsingParams::new(0.2, 1e-8).unwrap();
        let pop = CavityPopulation::new(f.clone(), p, 100, Init::Free, SeedStream::new(1)).unwrap();
        let r = susceptibility_path_mc(f.parent(), &f, &pop, &PathMcConfig::default(), SeedStream::new(1));
        assert!(matches!(r, Err(Error::Unconverged)));
    }

    #[test]
    fn csv_floats_have_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        let x: f64 = fmt_float(std::f64::consts::PI).parse().unwrap();
        assert_eq!(x, std::f64::consts::PI);
    }
}
