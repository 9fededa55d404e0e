use thiserror::Error;

/// Crate-wide error type.
///
/// Contract violations (bad inputs, infeasible parameters) and resource caps
/// are reported through these variants; numerical verdicts that are legitimate
/// outcomes (e.g. "cohomology suspected") are ordinary return values instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid roof: {0}")]
    InvalidRoof(String),
    #[error("branch count would exceed cap {cap} at depth {depth}")]
    BranchCapExceeded { depth: usize, cap: usize },
    #[error("orbit hits a partition endpoint within tolerance at step {step} (x = {x})")]
    BoundaryHit { step: usize, x: f64 },
    #[error("point {x} outside domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },
    #[error("not covering within {cap} iterations (uncovered measure {deficit:.3e})")]
    NotCovering { cap: usize, deficit: f64 },
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("degenerate density: vanishing modulus at node {node}")]
    DegenerateDensity { node: usize },
    #[error("resolution {given} below phase policy (need at least {required} nodes)")]
    Resolution { given: usize, required: usize },
    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parameter search infeasible within budget: {0}")]
    InfeasibleWithinBudget(String),
    #[error("standard pair validation failed: {0}")]
    PairValidation(String),
    #[error("split infeasible: inf|rho| = {inf_mod:.6e} below 2c = {two_c:.6e}")]
    SplitInfeasible { inf_mod: f64, two_c: f64 },
    #[error("twist |b| = {b} below admissibility threshold b0 = {b0}")]
    BelowB0 { b: f64, b0: f64 },
    #[error("cannot reduce: {0}")]
    CannotReduce(String),
    #[error("missing rate fits: {0}")]
    MissingRates(String),
    #[error("underdetermined fit: {0}")]
    Underdetermined(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
