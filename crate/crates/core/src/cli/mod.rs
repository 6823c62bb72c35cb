//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 sweep with
//! failed points, 3 rejected fit, 64 bad usage or configuration.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::criticality::{self, ExponentFit, ExponentName};
use crate::degree_models::{forward, make_model, ForwardModel, Moment};
use crate::error::Error;
use crate::observables;
use crate::oracle::{suite, GraphInstance};
use crate::rng::SeedStream;
use config::LoadedConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_FIT_REJECTED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "ising-cavity", version, about = "Ising model on random trees and tree-like random graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "ISING_CAVITY_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward moments and the critical inverse temperature.
    Critical,
    /// Magnetization and susceptibility over a (β, B) grid, as CSV.
    Sweep,
    /// Critical exponent fits, as JSON.
    Exponents,
    /// Exact oracle equivalence checks.
    Oracle,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            code
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        message: message.into(),
    }
}

/// Everything a command needs besides its own section.
pub struct Context {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Context {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_sha256: self.loaded.hash.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn forward_model(&self) -> Result<Arc<ForwardModel>, Failure> {
        let spec = self.loaded.model().map_err(usage)?;
        let model = make_model(spec).map_err(|e| usage(e.to_string()))?;
        for w in model.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(Arc::new(forward(&model).map_err(|e| usage(e.to_string()))?))
    }
}

pub fn execute(cli: &Cli) -> Result<i32, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| usage("--config PATH is required"))?;
    let loaded = LoadedConfig::from_path(path).map_err(usage)?;
    let seed = cli
        .seed
        .or(loaded.config.seed)
        .ok_or_else(|| usage("a seed is required: set `seed` in the config or pass --seed"))?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("--workers must be positive"));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| loaded.config.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context { loaded, seed, out_dir };
    match cli.command {
        Command::Critical => cmd_critical(&ctx),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Exponents => cmd_exponents(&ctx),
        Command::Oracle => cmd_oracle(&ctx),
    }
}

fn moment_json(m: Moment) -> serde_json::Value {
    match m {
        Moment::Finite(x) => json!(x),
        Moment::Infinite => json!("inf"),
    }
}

pub fn cmd_critical(ctx: &Context) -> Result<i32, Failure> {
    let fm = ctx.forward_model()?;
    let beta_c = criticality::critical_beta(&fm);
    let beta_c_json = if beta_c.is_infinite() { json!("inf") } else { json!(beta_c) };
    let report = json!({
        "provenance": ctx.provenance(),
        "model": fm.parent().spec(),
        "mean_degree": fm.parent().mean(),
        "nu": moment_json(fm.nu()),
        "nu2": moment_json(fm.nu2()),
        "nu3": moment_json(fm.nu3()),
        "beta_c": beta_c_json,
        "warnings": fm.parent().warnings(),
    });
    let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    let path = ctx.write("critical.json", &text)?;
    println!("model   {}", fm.parent().spec());
    println!("E[D]    {}", fm.parent().mean());
    println!("nu      {}", fm.nu());
    println!("nu_2    {}", fm.nu2());
    println!("nu_3    {}", fm.nu3());
    if beta_c.is_infinite() {
        println!("beta_c  inf (nu <= 1, no transition)");
    } else {
        println!("beta_c  {beta_c:.12}");
    }
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

pub fn cmd_sweep(ctx: &Context) -> Result<i32, Failure> {
    let section = ctx
        .loaded
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| usage("config section `sweep` is required"))?;
    let grid = section.points().map_err(usage)?;
    let fm = ctx.forward_model()?;
    let cfg = ctx.loaded.sweep_config(section);
    let points = observables::thermo_sweep(&fm, &grid, &cfg, SeedStream::new(ctx.seed))
        .map_err(|e| runtime(e.to_string()))?;
    let p = ctx.provenance();
    let provenance = vec![
        ("config_sha256".to_string(), p.config_sha256),
        ("seed".to_string(), p.seed.to_string()),
        ("version".to_string(), p.version),
        ("model".to_string(), fm.parent().spec().to_string()),
        (
            "limits".to_string(),
            "each point solved at its own B > 0; ClosedFormSubcritical chi is the B -> 0+ value".to_string(),
        ),
        ("warm_start".to_string(), cfg.warm_start.to_string()),
        (
            "snapshots".to_string(),
            format!("{} every {} generations", cfg.snapshots, cfg.snapshot_every),
        ),
    ];
    let csv = observables::to_csv(&points, ctx.seed, &provenance);
    let path = ctx.write("sweep.csv", &csv)?;
    let bad = points.iter().filter(|p| p.status != "ok" || !p.converged).count();
    println!("wrote {} ({} points, {} flagged)", path.display(), points.len(), bad);
    Ok(if bad == 0 { EXIT_OK } else { EXIT_PARTIAL })
}

#[derive(Serialize)]
struct FitFailure {
    exponent: ExponentName,
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<ExponentFit>,
}

pub fn cmd_exponents(ctx: &Context) -> Result<i32, Failure> {
    let section = ctx
        .loaded
        .config
        .exponents
        .as_ref()
        .ok_or_else(|| usage("config section `exponents` is required"))?;
    if section.fits.is_empty() {
        return Err(usage("`exponents.fits` is empty"));
    }
    let fm = ctx.forward_model()?;
    let cfg = ctx.loaded.fit_config(section);
    let master = SeedStream::new(ctx.seed);
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    let mut code = EXIT_OK;
    for (i, &name) in section.fits.iter().enumerate() {
        let stream = master.derive(100 + i as u64);
        let r = match name {
            ExponentName::Beta => criticality::fit_exponent_beta(&fm, &cfg, stream),
            ExponentName::Delta => criticality::fit_exponent_delta(&fm, &cfg, stream),
            ExponentName::Gamma => criticality::fit_exponent_gamma(&fm, &cfg),
            ExponentName::GammaPrimeLb => criticality::gamma_prime_diagnostic(&fm, &cfg, stream),
        };
        match r {
            Ok(f) => {
                println!(
                    "{name}: {:.4} (95% CI {:.4} .. {:.4}, r2 {:.4}, {} points)",
                    f.estimate, f.ci95.0, f.ci95.1, f.r_squared, f.points_used
                );
                fits.push(f);
            }
            Err(Error::FitRejected { fit, threshold }) => {
                println!("{name}: rejected, r2 {:.4} < {threshold}", fit.r_squared);
                code = code.max(EXIT_FIT_REJECTED);
                failures.push(FitFailure {
                    exponent: name,
                    error: format!("fit rejected: r2 below {threshold}"),
                    fit: Some(*fit),
                });
            }
            Err(e) => {
                println!("{name}: error: {e}");
                if code == EXIT_OK {
                    code = EXIT_FAILURE;
                }
                failures.push(FitFailure {
                    exponent: name,
                    error: e.to_string(),
                    fit: None,
                });
            }
        }
    }
    let report = json!({
        "provenance": ctx.provenance(),
        "model": fm.parent().spec(),
        "note": "finite-budget fits; tolerances reflect pilot variance, not an error model",
        "fits": fits,
        "failures": failures,
    });
    let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    let path = ctx.write("exponents.json", &text)?;
    println!("wrote {}", path.display());
    Ok(code)
}

fn load_graph(base: &Path, entry: &config::GraphEntry) -> Result<GraphInstance, Failure> {
    let text = match (&entry.path, &entry.edge_list) {
        (Some(p), None) => {
            let full = if p.is_absolute() { p.clone() } else { base.join(p) };
            std::fs::read_to_string(&full).map_err(|e| usage(format!("{}: {e}", full.display())))?
        }
        (None, Some(t)) => t.clone(),
        _ => return Err(usage("each oracle graph needs exactly one of `path` or `edge_list`")),
    };
    GraphInstance::from_edge_list(&text).map_err(|e| usage(e.to_string()))
}

pub fn cmd_oracle(ctx: &Context) -> Result<i32, Failure> {
    let default_section = config::OracleSection {
        suite: Default::default(),
        graphs: Vec::new(),
    };
    let section = ctx.loaded.config.oracle.as_ref().unwrap_or(&default_section);
    let mut extra = Vec::new();
    for g in &section.graphs {
        extra.push((load_graph(&ctx.loaded.base_dir, g)?, g.beta, g.field));
    }
    let corpus = suite::build_corpus(&section.suite, SeedStream::new(ctx.seed)).map_err(|e| usage(e.to_string()))?;
    let report = suite::run_suite(&section.suite, &corpus, &extra);
    let mut summary = String::new();
    for c in &report.checks {
        let _ = writeln!(
            summary,
            "{:<32} {}  instances {:>4}  max error {:.3e} (tol {:.1e}){}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.instances,
            c.max_error,
            c.tolerance,
            c.message.as_ref().map(|m| format!("  {m}")).unwrap_or_default()
        );
    }
    print!("{summary}");
    let out = json!({
        "provenance": ctx.provenance(),
        "corrupt_xi": section.suite.corrupt_xi,
        "report": report,
    });
    let text = serde_json::to_string_pretty(&out).expect("serializable") + "\n";
    let path = ctx.write("oracle.json", &text)?;
    println!("wrote {}", path.display());
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}
