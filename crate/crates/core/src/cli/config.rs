//! Experiment configuration file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::cavity::SolverConfig;
use crate::criticality::{ExponentName, FitConfig};
use crate::degree_models::ModelSpec;
use crate::observables::{PathMcConfig, SweepConfig};
use crate::oracle::suite::OracleSuiteConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelSpec>,
    pub seed: Option<u64>,
    /// Overrides the solver settings of every section when present.
    pub solver: Option<SolverConfig>,
    pub sweep: Option<SweepSection>,
    pub exponents: Option<ExponentsSection>,
    pub oracle: Option<OracleSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit (β, B) pairs.
    pub grid: Option<Vec<(f64, f64)>>,
    /// Cartesian product `betas × fields`, β outermost.
    pub betas: Option<Vec<f64>>,
    pub fields: Option<Vec<f64>>,
    #[serde(default)]
    pub path_mc: PathMcConfig,
    pub magnetization_samples: Option<usize>,
    pub warm_start: Option<bool>,
    pub snapshots: Option<usize>,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsSection {
    pub fits: Vec<ExponentName>,
    #[serde(default)]
    pub settings: FitConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub suite: OracleSuiteConfig,
    /// Extra graphs to enumerate, as edge-list files or inline text.
    #[serde(default)]
    pub graphs: Vec<GraphEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEntry {
    pub path: Option<PathBuf>,
    pub edge_list: Option<String>,
    pub beta: f64,
    #[serde(rename = "B")]
    pub field: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// A parsed configuration together with the raw bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base_dir).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            format!(
                "line {} column {}, field `{}`: {}",
                inner.line(),
                inner.column(),
                path,
                inner
            )
        })?;
        let hash = Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(LoadedConfig { config, hash, base_dir })
    }

    pub fn model(&self) -> Result<&ModelSpec, String> {
        self.config.model.as_ref().ok_or_else(|| "config field `model` is required".to_string())
    }

    pub fn sweep_config(&self, section: &SweepSection) -> SweepConfig {
        let mut cfg = SweepConfig {
            path_mc: section.path_mc,
            ..SweepConfig::default()
        };
        if let Some(s) = &self.config.solver {
            cfg.solver = s.clone();
        }
        if let Some(n) = section.magnetization_samples {
            cfg.magnetization_samples = n;
        }
        if let Some(w) = section.warm_start {
            cfg.warm_start = w;
        }
        if let Some(n) = section.snapshots {
            cfg.snapshots = n;
        }
        if let Some(n) = section.snapshot_every {
            cfg.snapshot_every = n;
        }
        cfg
    }

    pub fn fit_config(&self, section: &ExponentsSection) -> FitConfig {
        let mut cfg = section.settings.clone();
        if let Some(s) = &self.config.solver {
            cfg.solver = s.clone();
        }
        cfg
    }
}

impl SweepSection {
    pub fn points(&self) -> Result<Vec<(f64, f64)>, String> {
        let grid = match (&self.grid, &self.betas, &self.fields) {
            (Some(g), None, None) => g.clone(),
            (None, Some(bs), Some(fs)) => bs.iter().flat_map(|&b| fs.iter().map(move |&f| (b, f))).collect(),
            _ => return Err("sweep needs either `grid` or both `betas` and `fields`".into()),
        };
        if grid.is_empty() {
            return Err("sweep grid is empty".into());
        }
        Ok(grid)
    }
}
