use thiserror::Error;

use crate::cavity::CavityPopulation;
use crate::criticality::ExponentFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A fixed-point solve that hit its iteration cap. The population is kept
/// so callers can still use it with a warning flag.
#[derive(Debug, Clone)]
pub struct NonConvergence {
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub population: CavityPopulation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("moment diverges: {0}")]
    DivergentMoment(String),

    #[error("fixed point did not converge after {} iterations", .0.iterations)]
    NonConvergence(Box<NonConvergence>),

    #[error("free and plus initialisations disagree (KS distance {ks:.4} > {tol})")]
    NonUniqueness { ks: f64, tol: f64 },

    #[error("population has not converged")]
    Unconverged,

    #[error("closed form requires tanh(beta)*nu < 1, got {0}")]
    NotSubcritical(f64),

    /// The fit is kept so its points can still be reported.
    #[error("fit rejected: r^2 = {:.4} below {threshold} ({})", .fit.r_squared, .fit.exponent)]
    FitRejected {
        fit: Box<ExponentFit>,
        threshold: f64,
    },

    #[error("enumeration over {n} spins exceeds the cap of {cap}")]
    TooLargeForEnumeration { n: usize, cap: usize },

    #[error("vertex {target} is not a descendant of the root")]
    NotADescendant { target: usize },

    #[error("tree exceeded the size cap of {cap} vertices")]
    SizeCapExceeded { cap: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
