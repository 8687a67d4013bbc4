//! Shared numeric tolerances and resource caps.

/// Global tolerance bundle. A single instance is threaded through the
/// solvers so that every module agrees on what "integral" and "feasible"
/// mean.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Integrality slack for mixed-integer coordinates.
    pub int: f64,
    /// Constraint feasibility slack, relative to `1 + |rhs|`.
    pub feas: f64,
    /// Complementary-slackness residual cap.
    pub cs: f64,
    /// Reduced-cost threshold terminating column generation.
    pub rc: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            int: 1e-6,
            feas: 1e-7,
            cs: 1e-7,
            rc: 1e-7,
        }
    }
}

/// Enumeration refuses blocks with more integer variables than this.
pub const ENUM_MAX_INT_VARS: usize = 12;

/// Enumeration refuses integer grids with more points than this.
pub const ENUM_MAX_GRID: u128 = 1_000_000;

/// Default branch-and-bound node budget.
pub const MILP_NODE_BUDGET: usize = 1_000_000;

/// Default cap on pricing rounds per subproblem evaluation.
pub const PRICING_ROUND_CAP: usize = 500;

/// Default finite-difference step for the multiplier gradient check.
pub const GRADIENT_CHECK_STEP: f64 = 1e-4;

/// Attempts before random connected-graph generation gives up.
pub const GRAPH_MAX_ATTEMPTS: usize = 10_000;
