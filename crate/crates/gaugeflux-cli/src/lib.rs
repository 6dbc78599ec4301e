//! Configuration-driven runner for the gaugeflux verification suites.

pub mod config;
pub mod report;
pub mod suites;

use std::collections::BTreeMap;
use std::fmt;

use gaugeflux::noether::reference::{offshell_flux, onshell_flux};
use gaugeflux::noether::{divergence_defect, offshell_identity_defect, FluxKind};
use serde::Serialize;

pub use config::SuiteConfig;
pub use report::{emit, Bound, Check, Format, Report};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad command line: unknown suite, malformed `--set`.
    Usage(String),
    /// Bad configuration, or a library refusal while running a suite.
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) | CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Validation(m) => write!(f, "invalid: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gaugeflux::Error> for CliError {
    fn from(e: gaugeflux::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Runs `f` on a pool of `workers` threads (`0` = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn verify(suite: &str, cfg: &SuiteConfig, echo: serde_json::Value) -> Result<Report, CliError> {
    if !suites::is_suite(suite) {
        return Err(CliError::Usage(format!("unknown suite `{suite}`; expected one of all, {}", suites::suite_names().join(", "))));
    }
    let checks = suites::run_suite(suite, cfg)?;
    Ok(Report::new(suite, echo, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceSummary {
    pub h: Vec<f64>,
    pub max: Vec<f64>,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoetherSummary {
    pub kind: String,
    /// `on-shell` when the reference system has an exact solution, else the off-shell identity.
    pub mode: &'static str,
    pub provenance: String,
    pub preconditions: BTreeMap<String, f64>,
    pub divergence: DivergenceSummary,
    pub pass: bool,
}

/// Divergence of one flux: on an exact solution where one exists, otherwise
/// the off-shell identity on random fields.
pub fn noether_summary(kind: FluxKind, cfg: &SuiteConfig) -> Result<NoetherSummary, CliError> {
    let (flux, mode) = match onshell_flux(kind, cfg.seed)? {
        Some(f) => (f, "on-shell"),
        None => (offshell_flux(kind, cfg.seed)?, "off-shell-identity"),
    };
    let pts = gaugeflux::fields::random_points(cfg.seed, flux.n_dims, cfg.points, cfg.grid.period);
    let rep = if mode == "on-shell" {
        divergence_defect(&flux, &pts, cfg.onshell_h0, cfg.levels)?
    } else {
        offshell_identity_defect(&flux, &pts, cfg.h0, cfg.levels)?
    };
    let bound_ok = mode != "on-shell" || rep.finest() <= 1e-4 * rep.scale;
    let pre_ok = flux.preconditions.iter().all(|p| p.holds());
    Ok(NoetherSummary {
        kind: kind.name().to_string(),
        mode,
        provenance: flux.provenance.clone(),
        preconditions: flux.preconditions.iter().map(|p| (p.name.clone(), p.measured)).collect(),
        divergence: DivergenceSummary {
            h: rep.levels.iter().map(|l| l.h).collect(),
            max: rep.levels.iter().map(|l| l.max_abs).collect(),
            order: rep.order,
        },
        pass: pre_ok && bound_ok && rep.converges(cfg.min_order),
    })
}
