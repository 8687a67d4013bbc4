//! Distributed primal decomposition for constraint-coupled mixed-integer
//! linear programs.
//!
//! A network of `N` agents cooperatively solves
//!
//! ```text
//! min  sum_i c_i' x_i
//! s.t. sum_i A_i x_i <= b          (S coupling rows)
//!      x_i in X_i                  (local mixed-integer polyhedra)
//! ```
//!
//! by running a primal-decomposition scheme on a convexified, *restricted*
//! version of the problem: each agent holds a resource allocation `y_i`
//! (with `sum_i y_i = b - sigma` for a tightening `sigma >= 0`), repeatedly
//! solves a local subproblem over `conv(X_i)` to obtain a multiplier `mu_i`,
//! and trades allocation with its graph neighbors via
//! `y_i <- y_i + alpha_t * sum_j (mu_i - mu_j)`. A two-stage local MILP then
//! recovers a mixed-integer point from the final allocation. The tightening
//! is sized so that the recovered points are feasible for the original
//! coupling constraint, and computable certificates bound their
//! suboptimality.
//!
//! Module map:
//! - [`model`]: problem data types, validation, random instance generation,
//!   JSON serialization, brute-force oracles for small instances.
//! - [`lp`]: dense two-phase revised simplex with exact multiplier
//!   extraction.
//! - [`milp`]: deterministic best-first branch-and-bound for small MILPs.
//! - [`subproblem`]: exact evaluation of the penalized local subproblem over
//!   the implicit convex hull via column generation.
//! - [`restriction`]: tightening quantities, the dual-decomposition baseline
//!   tightening, max-consensus, and the centralized restricted-LP solve used
//!   for feasibility prechecks.
//! - [`agent`]: per-agent state machine (allocation update, mixed-integer
//!   recovery).
//! - [`network`]: synchronous message-passing simulator, graph generation,
//!   run traces.
//! - [`bounds`]: suboptimality certificates.

pub mod agent;
pub mod bounds;
pub mod config;
pub mod lp;
pub mod milp;
pub mod model;
pub mod network;
pub mod restriction;
pub mod subproblem;

pub use config::Tolerances;

/// One named invariant violation found by [`model::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending block index, if the violation is block-local.
    pub block: Option<usize>,
    /// Field or invariant name.
    pub field: String,
    /// Human-readable reason.
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.block {
            Some(i) => write!(f, "block {}: {}: {}", i, self.field, self.reason),
            None => write!(f, "{}: {}", self.field, self.reason),
        }
    }
}

/// Error type shared by all modules of this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input (dimension mismatch, non-finite data, bad parameter).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// JSON input could not be parsed.
    #[error("parse error at line {line}, column {column} (byte offset {offset}): {msg}")]
    Parse {
        line: usize,
        column: usize,
        offset: usize,
        msg: String,
    },

    /// A parsed problem failed validation.
    #[error("validation failed with {} violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),

    /// An enumeration exceeded the configured cap.
    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    /// A local mixed-integer set is empty.
    #[error("infeasible block: {0}")]
    InfeasibleBlock(String),

    /// Joint oracle refused an instance that is too large.
    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    /// Branch-and-bound ran out of nodes.
    #[error("node budget exhausted after {explored} nodes")]
    NodeBudget { explored: usize },

    /// Column generation ran out of pricing rounds.
    #[error("pricing round cap exhausted after {rounds} rounds")]
    PricingCap { rounds: usize },

    /// The LP solver could not certify its solution at relaxed tolerances.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A problem expected to be bounded was not.
    #[error("unbounded: {0}")]
    Unbounded(String),

    /// Graph construction received a disconnected edge set.
    #[error("graph is not connected: {0}")]
    Disconnected(String),

    /// Random graph generation gave up.
    #[error("no connected graph found after {attempts} attempts (edge probability too small?)")]
    GraphGiveUp { attempts: usize },

    /// A suboptimality bound was requested without a Slater certificate.
    #[error("no Slater certificate available (zeta <= 0 for every candidate)")]
    MissingSlater,
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
