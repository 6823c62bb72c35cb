//! The critical point and critical exponents.
//!
//! β_c = atanh(1/ν) is closed form. Exponents come from straight-line fits
//! on log-log scale:
//!
//! * β: M(β_c + ε, 0⁺) ~ ε^β, where each M(·, 0⁺) is extrapolated from a
//!   geometric grid of small fields;
//! * δ: M(β_c, B) ~ B^{1/δ};
//! * γ: χ(β_c − ε, 0⁺) ~ ε^{−γ} from the closed form;
//! * γ′: χ(β_c + ε, 0⁺) ~ ε^{−γ′} from the spine estimator.
//!
//! With `log_correction` the abscissa becomes x/log(1/x), which is the
//! scaling variable when the degree tail sits exactly at τ = 5.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cavity::{self, CavityPopulation, IsingParams, SolverConfig};
use crate::degree_models::{ForwardModel, Moment};
use crate::error::{Error, Result};
use crate::observables::{self, PathMcConfig};
use crate::rng::{tag, SeedStream};
use crate::stats::{combine_snapshots, t_quantile_975, weighted_line_fit, Estimate};

/// atanh(1/ν), 0 when ν = ∞ and +∞ when ν ≤ 1 (no transition).
pub fn critical_beta(fm: &ForwardModel) -> f64 {
    match fm.nu() {
        Moment::Infinite => 0.0,
        Moment::Finite(nu) if nu > 1.0 => (1.0 / nu).atanh(),
        Moment::Finite(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentName {
    Beta,
    Delta,
    Gamma,
    GammaPrimeLb,
}

impl std::fmt::Display for ExponentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExponentName::Beta => "beta",
            ExponentName::Delta => "delta",
            ExponentName::Gamma => "gamma",
            ExponentName::GammaPrimeLb => "gamma_prime_lb",
        })
    }
}

/// M at one field value.
#[derive(Debug, Clone, Serialize)]
pub struct FieldValue {
    #[serde(rename = "B")]
    pub field: f64,
    pub value: f64,
    pub stderr: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// One abscissa of a fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitPoint {
    /// ε = |β − β_c|, or B for δ.
    pub x: f64,
    pub value: f64,
    pub stderr: f64,
    /// |extrapolation from the two smallest fields − the one from the next
    /// pair|; 0 when there is no extrapolation.
    pub extrapolation_residual: f64,
    pub fields: Vec<FieldValue>,
    pub used: bool,
    pub status: String,
}

/// χ·ε extrapolated to ε → 0 next to two comparison constants.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantCheck {
    pub measured: f64,
    /// E[D] β̂_c / (1 − β̂_c²)
    pub reference: f64,
    pub reference_rel_error: f64,
    /// E[D] β̂_c² / (1 − β̂_c²), the limit of the closed form.
    pub closed_form_limit: f64,
    pub closed_form_rel_error: f64,
}

/// (β̂ν − 1)·χ against the conjectured E[D]/(2ν).
#[derive(Debug, Clone, Serialize)]
pub struct PlateauReport {
    pub label: String,
    pub conjectured: f64,
    /// (ε, (β̂ν − 1)χ) for every grid point.
    pub values: Vec<(f64, f64)>,
    /// Value at the smallest ε.
    pub plateau: f64,
    pub ratio_to_conjecture: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    #[serde(rename = "exponent")]
    pub exponent: ExponentName,
    pub estimate: f64,
    pub ci95: (f64, f64),
    #[serde(rename = "r2")]
    pub r_squared: f64,
    pub window: (f64, f64),
    pub log_correction: bool,
    pub points_used: usize,
    pub slope: f64,
    pub slope_stderr: f64,
    pub points: Vec<FitPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<ConstantCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau: Option<PlateauReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub solver: SolverConfig,
    /// ε window and point count for β.
    pub eps_min: f64,
    pub eps_max: f64,
    pub points: usize,
    /// Fields used for the B ↘ 0 extrapolation.
    pub b_grid: Vec<f64>,
    /// Field window and point count for δ.
    pub b_min: f64,
    pub b_max: f64,
    pub b_points: usize,
    /// ε window for γ (closed form, so no noise floor).
    pub gamma_eps_min: f64,
    pub gamma_eps_max: f64,
    /// ε window, point count and field for γ′.
    pub gamma_prime_eps_min: f64,
    pub gamma_prime_eps_max: f64,
    pub gamma_prime_points: usize,
    pub gamma_prime_field: f64,
    pub path_mc: PathMcConfig,
    pub log_correction: bool,
    pub magnetization_samples: usize,
    /// After convergence, M is averaged over this many further snapshots,
    /// `average_every` generations apart.
    pub average_snapshots: usize,
    pub average_every: usize,
    pub min_r_squared: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            solver: SolverConfig::default(),
            eps_min: 10f64.powf(-2.5),
            eps_max: 1e-1,
            points: 12,
            b_grid: vec![1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            b_min: 1e-4,
            b_max: 1e-2,
            b_points: 12,
            gamma_eps_min: 1e-4,
            gamma_eps_max: 1e-2,
            gamma_prime_eps_min: 1e-2,
            gamma_prime_eps_max: 1e-1,
            gamma_prime_points: 8,
            gamma_prime_field: 1e-8,
            path_mc: PathMcConfig::default(),
            log_correction: false,
            magnetization_samples: 200_000,
            average_snapshots: 10,
            average_every: 4,
            min_r_squared: 0.98,
        }
    }
}

/// `n` log-spaced values from `hi` down to `lo`.
pub fn log_grid_descending(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::InvalidParameter(format!(
            "log grid needs 0 < lo < hi and at least 2 points, got [{lo}, {hi}] with {n}"
        )));
    }
    let (a, b) = (hi.ln(), lo.ln());
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                lo
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

fn require_transition(fm: &ForwardModel) -> Result<(f64, f64)> {
    let bc = critical_beta(fm);
    match fm.nu() {
        Moment::Finite(nu) if bc.is_finite() && bc > 0.0 => Ok((bc, nu)),
        _ => Err(Error::InvalidParameter(format!(
            "exponent fits need 0 < beta_c < inf, got beta_c = {bc}"
        ))),
    }
}

/// Straight-line fit of log y against log x (or log(x / log(1/x))).
///
/// Points with `used == false` or non-positive values are skipped. The
/// weights are inverse variances of log y with a 1e-3 floor so exact
/// points do not dominate.
pub fn fit_points(
    exponent: ExponentName,
    points: Vec<FitPoint>,
    log_correction: bool,
) -> Result<ExponentFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in points.iter().filter(|p| p.used && p.value > 0.0 && p.x > 0.0) {
        let x = if log_correction {
            if p.x >= 1.0 {
                continue;
            }
            p.x / (1.0 / p.x).ln()
        } else {
            p.x
        };
        let sigma = if p.stderr.is_finite() { p.stderr / p.value } else { 0.0 };
        xs.push(x.ln());
        ys.push(p.value.ln());
        ws.push(1.0 / (sigma * sigma + 1e-6));
        lo = lo.min(p.x);
        hi = hi.max(p.x);
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "{exponent} fit needs at least 3 usable points, got {}",
            xs.len()
        )));
    }
    let line = weighted_line_fit(&xs, &ys, &ws);
    let t = t_quantile_975(line.n - 2);
    let (estimate, half) = match exponent {
        ExponentName::Beta => (line.slope, t * line.slope_stderr),
        ExponentName::Delta => (1.0 / line.slope, t * line.slope_stderr / (line.slope * line.slope)),
        ExponentName::Gamma | ExponentName::GammaPrimeLb => (-line.slope, t * line.slope_stderr),
    };
    Ok(ExponentFit {
        exponent,
        estimate,
        ci95: (estimate - half, estimate + half),
        r_squared: line.r_squared,
        window: (lo, hi),
        log_correction,
        points_used: line.n,
        slope: line.slope,
        slope_stderr: line.slope_stderr,
        points,
        constant: None,
        plateau: None,
        notes: Vec::new(),
    })
}

fn gate(fit: ExponentFit, threshold: f64) -> Result<ExponentFit> {
    if fit.r_squared < threshold {
        return Err(Error::FitRejected {
            fit: Box::new(fit),
            threshold,
        });
    }
    Ok(fit)
}

// Solves at `params`, warm-starting from `previous` when given. A population
// that hits the iteration cap is kept and flagged rather than dropped.
fn solve(
    fm: &Arc<ForwardModel>,
    params: IsingParams,
    cfg: &SolverConfig,
    previous: Option<CavityPopulation>,
    stream: SeedStream,
) -> Result<CavityPopulation> {
    let r = match previous {
        Some(p) => cavity::fixed_point_from(p, params, cfg),
        None => cavity::fixed_point(fm, params, cfg, stream),
    };
    match r {
        Ok(p) => Ok(p),
        Err(Error::NonConvergence(nc)) => Ok(nc.population),
        Err(e) => Err(e),
    }
}

/// Magnetization averaged over snapshots of the continued dynamics. The
/// error combines the snapshot scatter (with its autocorrelation time) and
/// the per-snapshot Monte Carlo error.
pub fn averaged_magnetization(
    fm: &ForwardModel,
    mut pop: CavityPopulation,
    cfg: &FitConfig,
    stream: SeedStream,
) -> Result<(Estimate, CavityPopulation)> {
    let converged = pop.converged();
    let snapshots = cfg.average_snapshots.max(1);
    let mut values = Vec::with_capacity(snapshots);
    for k in 0..snapshots {
        if k > 0 {
            pop = cavity::evolve(pop, cfg.average_every.max(1));
            pop.mark_converged(converged);
        }
        let m = observables::magnetization(fm.parent(), &pop, cfg.magnetization_samples, stream)?;
        values.push(m.estimate());
    }
    Ok((combine_snapshots(&values), pop))
}

/// M(β, 0⁺) by linear extrapolation in B from the two smallest fields.
fn extrapolate(fields: &[FieldValue]) -> (f64, f64, f64) {
    let mut f: Vec<&FieldValue> = fields.iter().collect();
    f.sort_by(|a, b| a.field.total_cmp(&b.field));
    if f.len() == 1 {
        return (f[0].value, f[0].stderr, 0.0);
    }
    let line = |a: &FieldValue, b: &FieldValue| -> (f64, f64) {
        let (b1, b2) = (a.field, b.field);
        let w1 = b2 / (b2 - b1);
        let w2 = -b1 / (b2 - b1);
        let v = w1 * a.value + w2 * b.value;
        let se = ((w1 * a.stderr).powi(2) + (w2 * b.stderr).powi(2)).sqrt();
        (v, se)
    };
    let (m0, se) = line(f[0], f[1]);
    let residual = if f.len() >= 3 { (line(f[1], f[2]).0 - m0).abs() } else { 0.0 };
    (m0, se, residual)
}

fn usable(p: &FitPoint) -> bool {
    p.fields.iter().all(|f| f.converged) && p.value.is_finite() && p.value > 0.0
}

/// Exponent 𝛃 from M(β_c + ε, 0⁺) over the configured ε window.
pub fn fit_exponent_beta(fm: &Arc<ForwardModel>, cfg: &FitConfig, stream: SeedStream) -> Result<ExponentFit> {
    let (bc, _) = require_transition(fm)?;
    let eps = log_grid_descending(cfg.eps_min, cfg.eps_max, cfg.points)?;
    let mut fields_desc = cfg.b_grid.clone();
    fields_desc.sort_by(|a, b| b.total_cmp(a));
    if fields_desc.is_empty() || fields_desc.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidParameter("b_grid must be nonempty and positive".into()));
    }
    let mut points = Vec::with_capacity(eps.len());
    let mut pop: Option<CavityPopulation> = None;
    for (i, &e) in eps.iter().enumerate() {
        let ps = stream.derive(tag::FIT).derive(i as u64);
        let mut fields = Vec::with_capacity(fields_desc.len());
        let mut status = "ok".to_string();
        for &b in &fields_desc {
            let params = IsingParams::new(bc + e, b)?;
            match solve(fm, params, &cfg.solver, pop.take(), ps) {
                Ok(p) => {
                    let (m, p) = averaged_magnetization(fm, p, cfg, ps)?;
                    fields.push(FieldValue {
                        field: b,
                        value: m.value,
                        stderr: m.stderr,
                        converged: p.converged(),
                        iterations: p.iterations(),
                    });
                    pop = Some(p);
                }
                Err(err) => {
                    status = err.to_string();
                    break;
                }
            }
        }
        let (value, stderr, residual) = if fields.len() == fields_desc.len() {
            extrapolate(&fields)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let mut p = FitPoint {
            x: e,
            value,
            stderr,
            extrapolation_residual: residual,
            fields,
            used: false,
            status,
        };
        p.used = usable(&p);
        if !p.used && p.status == "ok" {
            p.status = "unconverged or non-positive".into();
        }
        points.push(p);
    }
    let mut fit = fit_points(ExponentName::Beta, points, cfg.log_correction)?;
    fit.notes.push(format!(
        "M(beta,0+) from linear extrapolation in B over the two smallest of {:?}",
        fields_desc
    ));
    gate(fit, cfg.min_r_squared)
}

/// Exponent 𝛅 from M(β_c, B) over the configured field window.
pub fn fit_exponent_delta(fm: &Arc<ForwardModel>, cfg: &FitConfig, stream: SeedStream) -> Result<ExponentFit> {
    let (bc, _) = require_transition(fm)?;
    let grid = log_grid_descending(cfg.b_min, cfg.b_max, cfg.b_points)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut pop: Option<CavityPopulation> = None;
    for (i, &b) in grid.iter().enumerate() {
        let ps = stream.derive(tag::FIT).derive(i as u64);
        let params = IsingParams::new(bc, b)?;
        let point = match solve(fm, params, &cfg.solver, pop.take(), ps) {
            Ok(p) => {
                let (m, p) = averaged_magnetization(fm, p, cfg, ps)?;
                let fv = FieldValue {
                    field: b,
                    value: m.value,
                    stderr: m.stderr,
                    converged: p.converged(),
                    iterations: p.iterations(),
                };
                pop = Some(p);
                let mut fp = FitPoint {
                    x: b,
                    value: m.value,
                    stderr: m.stderr,
                    extrapolation_residual: 0.0,
                    fields: vec![fv],
                    used: false,
                    status: "ok".into(),
                };
                fp.used = usable(&fp);
                if !fp.used {
                    fp.status = "unconverged or non-positive".into();
                }
                fp
            }
            Err(err) => FitPoint {
                x: b,
                value: f64::NAN,
                stderr: f64::NAN,
                extrapolation_residual: f64::NAN,
                fields: Vec::new(),
                used: false,
                status: err.to_string(),
            },
        };
        points.push(point);
    }
    let fit = fit_points(ExponentName::Delta, points, cfg.log_correction)?;
    gate(fit, cfg.min_r_squared)
}

/// Exponent 𝛄 from the closed-form subcritical susceptibility, plus the
/// limiting constant of χ·(β_c − β).
pub fn fit_exponent_gamma(fm: &Arc<ForwardModel>, cfg: &FitConfig) -> Result<ExponentFit> {
    let (bc, nu) = require_transition(fm)?;
    let grid = log_grid_descending(cfg.gamma_eps_min, cfg.gamma_eps_max, cfg.points)?;
    let mut points = Vec::with_capacity(grid.len());
    for &e in &grid {
        let params = IsingParams::new(bc - e, 0.0)?;
        let chi = observables::susceptibility_subcritical(fm, &params)?;
        points.push(FitPoint {
            x: e,
            value: chi,
            stderr: 0.0,
            extrapolation_residual: 0.0,
            fields: Vec::new(),
            used: true,
            status: "ok".into(),
        });
    }
    // χ·ε is linear in ε near 0; extrapolate from the two smallest ε
    let (e1, c1) = (points[grid.len() - 1].x, points[grid.len() - 1].value * points[grid.len() - 1].x);
    let (e2, c2) = (points[grid.len() - 2].x, points[grid.len() - 2].value * points[grid.len() - 2].x);
    let measured = (e2 * c1 - e1 * c2) / (e2 - e1);
    let mean_d = fm.parent().mean();
    let bhc = 1.0 / nu;
    let reference = mean_d * bhc / (1.0 - bhc * bhc);
    let closed_form_limit = mean_d * bhc * bhc / (1.0 - bhc * bhc);
    let mut fit = fit_points(ExponentName::Gamma, points, cfg.log_correction)?;
    fit.constant = Some(ConstantCheck {
        measured,
        reference,
        reference_rel_error: (measured - reference).abs() / reference,
        closed_form_limit,
        closed_form_rel_error: (measured - closed_form_limit).abs() / closed_form_limit,
    });
    gate(fit, cfg.min_r_squared)
}

/// Supercritical susceptibility slope and the (β̂ν − 1)χ plateau.
///
/// The slope of log χ against log(β − β_c) is reported (expected ≈ −1, so
/// `estimate` ≈ 1 is the matching γ′). The plateau comparison is
/// exploratory.
pub fn gamma_prime_diagnostic(fm: &Arc<ForwardModel>, cfg: &FitConfig, stream: SeedStream) -> Result<ExponentFit> {
    let (bc, nu) = require_transition(fm)?;
    let grid = log_grid_descending(cfg.gamma_prime_eps_min, cfg.gamma_prime_eps_max, cfg.gamma_prime_points)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut plateau_values = Vec::with_capacity(grid.len());
    let mut pop: Option<CavityPopulation> = None;
    for (i, &e) in grid.iter().enumerate() {
        let ps = stream.derive(tag::FIT).derive(i as u64);
        let params = IsingParams::new(bc + e, cfg.gamma_prime_field)?;
        let p = solve(fm, params, &cfg.solver, pop.take(), ps)?;
        let converged = p.converged();
        let iterations = p.iterations();
        let point = if converged {
            let r = observables::susceptibility_path_mc(fm.parent(), fm, &p, &cfg.path_mc, ps)?;
            plateau_values.push((e, (params.beta_hat * nu - 1.0) * r.chi.value));
            FitPoint {
                x: e,
                value: r.chi.value,
                stderr: r.chi.stderr,
                extrapolation_residual: r.trunc_bound,
                fields: vec![FieldValue {
                    field: cfg.gamma_prime_field,
                    value: r.chi.value,
                    stderr: r.chi.stderr,
                    converged,
                    iterations,
                }],
                used: r.chi.value > 0.0,
                status: format!("ok (ell_max {})", r.ell_max),
            }
        } else {
            FitPoint {
                x: e,
                value: f64::NAN,
                stderr: f64::NAN,
                extrapolation_residual: f64::NAN,
                fields: Vec::new(),
                used: false,
                status: "unconverged".into(),
            }
        };
        points.push(point);
        pop = Some(p);
    }
    let conjectured = fm.parent().mean() / (2.0 * nu);
    let plateau = plateau_values.last().map_or(f64::NAN, |v| v.1);
    let mut fit = fit_points(ExponentName::GammaPrimeLb, points, false)?;
    fit.plateau = Some(PlateauReport {
        label: "EXPLORATORY".into(),
        conjectured,
        values: plateau_values,
        plateau,
        ratio_to_conjecture: plateau / conjectured,
    });
    fit.notes.push(format!(
        "chi from the spine estimator at B = {}; extrapolation_residual holds the truncation bound",
        cfg.gamma_prime_field
    ));
    gate(fit, cfg.min_r_squared)
}
