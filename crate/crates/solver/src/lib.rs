//! Linear programming for billopt: a sparse problem representation, a bundled
//! bounded-variable dual simplex, a free-format MPS writer/reader, and an
//! adapter for external solver executables.
//!
//! ```
//! use billopt_solver::{solve, LpProblem, Sense, SolverConfig, Status};
//!
//! let mut lp = LpProblem::<f64>::new("demo");
//! let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
//! lp.add_row("floor", vec![(x, 1.0)], Sense::Ge, 3.0);
//! let sol = solve(&lp, &SolverConfig::default()).unwrap();
//! assert_eq!(sol.status, Status::Optimal);
//! assert!((sol.objective - 3.0).abs() < 1e-9);
//! ```

#![allow(clippy::needless_range_loop)]

mod external;
mod lu;
pub mod mps;
mod problem;
mod scalar;
mod simplex;

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub use external::{parse_result_file, ExternalResult, EXTERNAL_SOLVER_ENV};
pub use problem::{Constraint, LpProblem, ProblemError, RowId, Sense, VarId, Variable};
pub use scalar::Scalar;
pub use simplex::{Basis, BasisStatus};

/// Which engine solves the LP.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Backend {
    /// The in-process dual simplex.
    #[default]
    Bundled,
    /// An executable invoked as `<command> <problem.mps> <result.txt>`.
    External { command: PathBuf },
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Bundled => f.write_str("bundled"),
            Backend::External { command } => write!(f, "external:{}", command.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub backend: Backend,
    pub feasibility_tolerance: f64,
    pub optimality_tolerance: f64,
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Bundled,
            feasibility_tolerance: 1e-7,
            optimality_tolerance: 1e-7,
            max_iterations: 1_000_000,
            time_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        for (name, v) in [
            ("feasibility_tolerance", self.feasibility_tolerance),
            ("optimality_tolerance", self.optimality_tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolverError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("max_iterations must be > 0".into()));
        }
        if self.time_limit == Some(Duration::ZERO) {
            return Err(SolverError::InvalidConfig("time_limit must be > 0".into()));
        }
        Ok(())
    }
}

/// Terminal status of a solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration/time limit or loss of numerical stability; the payload says which.
    NumericalFailure(String),
}

impl Status {
    pub fn is_optimal(&self) -> bool {
        matches!(self, Status::Optimal)
    }

    /// Short machine-readable label.
    pub fn label(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure(_) => "numerical-failure",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::NumericalFailure(why) => write!(f, "numerical-failure ({why})"),
            s => f.write_str(s.label()),
        }
    }
}

/// Solver output. `values` and `objective` are the last iterate and are only
/// meaningful when `status` is optimal.
#[derive(Debug, Clone)]
pub struct RawSolution<T> {
    pub status: Status,
    pub objective: T,
    pub values: Vec<T>,
    pub iterations: usize,
    /// Final basis (bundled backend, optimal solves only).
    pub basis: Option<Basis>,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("external solver: {0}")]
    External(String),
    #[error("i/o error talking to external solver: {0}")]
    Io(#[from] std::io::Error),
}

/// Solves `problem` with the backend named in `config`.
pub fn solve<T: Scalar>(
    problem: &LpProblem<T>,
    config: &SolverConfig,
) -> Result<RawSolution<T>, SolverError> {
    solve_with_basis(problem, config, None)
}

/// Like [`solve`], starting the bundled backend from `warm` when it matches the
/// problem's shape. External backends ignore the basis.
pub fn solve_with_basis<T: Scalar>(
    problem: &LpProblem<T>,
    config: &SolverConfig,
    warm: Option<&Basis>,
) -> Result<RawSolution<T>, SolverError> {
    config.validate()?;
    problem.validate()?;
    match &config.backend {
        Backend::Bundled => {
            let out = simplex::solve(problem, config, warm);
            Ok(RawSolution {
                status: out.status,
                objective: out.objective,
                values: out.values,
                iterations: out.iterations,
                basis: out.basis,
            })
        }
        Backend::External { command } => external::solve(problem, config, command),
    }
}
