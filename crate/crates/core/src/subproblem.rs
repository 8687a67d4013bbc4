//! Exact evaluation of the penalized local subproblem over the implicit
//! convex hull of a block's mixed-integer set.
//!
//! The problem solved for agent `i` at allocation `y` is
//!
//! ```text
//! min  c' z + M v    s.t.  A z <= y + v 1,   z in conv(X_i),   v >= 0
//! ```
//!
//! with `mu` the multiplier of the allocation rows. `conv(X_i)` is handled
//! by column generation: a master LP optimizes over convex combinations of
//! generated points of `X_i`, and a pricing MILP (`min (c + A' mu)' x` over
//! `X_i`) either proves optimality or supplies a new point. Termination is
//! finite and exact, so the returned multiplier and optimal cost are the
//! true ones, not inner-loop estimates.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Tolerances, GRADIENT_CHECK_STEP, PRICING_ROUND_CAP};
use crate::lp::{solve_lp_with, LinearProgram, LpStatus};
use crate::milp::{solve_milp_with, MilpOptions, MilpStatus};
use crate::model::AgentBlock;
use crate::{Error, Result};

/// Generated points of one block's mixed-integer set, persisted across
/// outer iterations so later evaluations start warm.
#[derive(Debug, Clone, Default)]
pub struct ColumnPool {
    points: Vec<Array1<f64>>,
}

impl ColumnPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Array1<f64>] {
        &self.points
    }

    /// Insert unless an exact-coordinate duplicate is already present.
    pub fn insert(&mut self, x: Array1<f64>) -> bool {
        let dup = self
            .points
            .iter()
            .any(|p| p.len() == x.len() && p.iter().zip(x.iter()).all(|(a, b)| a == b));
        if dup {
            false
        } else {
            self.points.push(x);
            true
        }
    }
}

/// Exact optimum of the penalized subproblem at one allocation.
#[derive(Debug, Clone)]
pub struct SubproblemResult {
    /// Optimal cost `c' z + M v`.
    pub cost: f64,
    /// Relaxed primal point in `conv(X_i)`.
    pub z: Array1<f64>,
    /// Common violation of the allocation rows (zero when `y` is feasible).
    pub v: f64,
    /// Multiplier of the allocation rows; `mu >= 0` and `1' mu <= M`.
    pub mu: Array1<f64>,
    /// Convex weights over the pool points (aligned with the pool order).
    pub lambda: Vec<f64>,
    /// Pricing rounds spent in this evaluation.
    pub pricing_rounds: usize,
}

#[derive(Debug, Clone)]
pub struct SubproblemOptions {
    pub max_pricing_rounds: usize,
    pub tol: Tolerances,
    pub milp: MilpOptions,
}

impl Default for SubproblemOptions {
    fn default() -> Self {
        Self {
            max_pricing_rounds: PRICING_ROUND_CAP,
            tol: Tolerances::default(),
            milp: MilpOptions::default(),
        }
    }
}

/// Evaluate the subproblem at allocation `y` with penalty `m_penalty`,
/// growing `pool` as pricing discovers new points. Pool growth never
/// changes the returned optimum, only the number of pricing rounds.
pub fn evaluate(
    block: &AgentBlock,
    y: &Array1<f64>,
    m_penalty: f64,
    pool: &mut ColumnPool,
    opts: &SubproblemOptions,
) -> Result<SubproblemResult> {
    let s = block.num_coupling_rows();
    if y.len() != s {
        return Err(Error::InvalidInput(format!(
            "allocation has {} entries, block has {s} coupling rows",
            y.len()
        )));
    }
    if m_penalty <= 0.0 {
        return Err(Error::InvalidInput("penalty M must be positive".into()));
    }

    if pool.is_empty() {
        // Bootstrap: price with mu = 0.
        let first = price(block, &Array1::zeros(s), &opts.milp)?
            .ok_or_else(|| Error::InfeasibleBlock("mixed-integer set is empty".into()))?;
        pool.insert(first.1);
    }

    let mut rounds = 0;
    loop {
        let sol = solve_master(block, y, m_penalty, pool, &opts.tol)?;
        let mu = sol.dual_ineq.clone();
        // With the +nu(Ex - f) multiplier convention, a candidate column
        // x of X_i has reduced cost  c'x + mu'(A x) + nu.
        let eta = sol.dual_eq[0];

        if rounds >= opts.max_pricing_rounds {
            return Err(Error::PricingCap { rounds });
        }
        rounds += 1;

        let weights = block.coupling.t().dot(&mu);
        let priced = price_with_cost(block, &weights, &opts.milp)?;
        let (value, point) = match priced {
            Some(t) => t,
            None => return Err(Error::InfeasibleBlock("mixed-integer set is empty".into())),
        };
        let reduced = value + eta;
        if reduced >= -opts.tol.rc || !pool.insert(point) {
            // Optimal (or the pricer returned a known point, which proves
            // the same thing up to tolerance).
            let k = pool.len();
            let lambda: Vec<f64> = sol.x.iter().take(k).copied().collect();
            let v = sol.x[k].max(0.0);
            let mut z = Array1::zeros(block.num_vars());
            for (j, w) in lambda.iter().enumerate() {
                if *w != 0.0 {
                    z = z + pool.points()[j].mapv(|t| t * w);
                }
            }
            return Ok(SubproblemResult {
                cost: sol.obj,
                z,
                v,
                mu,
                lambda,
                pricing_rounds: rounds,
            });
        }
    }
}

/// Master LP over the current pool: variables are the convex weights plus
/// the violation `v` (last column).
fn solve_master(
    block: &AgentBlock,
    y: &Array1<f64>,
    m_penalty: f64,
    pool: &ColumnPool,
    tol: &Tolerances,
) -> Result<crate::lp::LpSolution> {
    let s = block.num_coupling_rows();
    let k = pool.len();
    let ncols = k + 1;

    let mut g = Array2::zeros((s, ncols));
    for (j, p) in pool.points().iter().enumerate() {
        let ap = block.coupling.dot(p);
        for r in 0..s {
            g[(r, j)] = ap[r];
        }
    }
    for r in 0..s {
        g[(r, k)] = -1.0;
    }
    let mut e = Array2::zeros((1, ncols));
    for j in 0..k {
        e[(0, j)] = 1.0;
    }
    let mut objective = Array1::zeros(ncols);
    for (j, p) in pool.points().iter().enumerate() {
        objective[j] = block.cost.dot(p);
    }
    objective[k] = m_penalty;

    let lp = LinearProgram {
        objective,
        g,
        h: y.clone(),
        e,
        f: Array1::from_elem(1, 1.0),
        lo: Array1::zeros(ncols),
        hi: Array1::from_elem(ncols, f64::INFINITY),
    };
    let sol = solve_lp_with(&lp, tol)?;
    if sol.status != LpStatus::Optimal {
        // The master is always feasible (v absorbs any violation) and
        // bounded (costs of a compact set plus M v with v at most the worst
        // row violation of pooled points).
        return Err(Error::Numerical(format!(
            "subproblem master LP returned {:?}",
            sol.status
        )));
    }
    Ok(sol)
}

fn price(
    block: &AgentBlock,
    mu: &Array1<f64>,
    milp_opts: &MilpOptions,
) -> Result<Option<(f64, Array1<f64>)>> {
    let weights = block.coupling.t().dot(mu);
    price_with_cost(block, &weights, milp_opts)
}

/// `min (c + weights)' x` over the block's mixed-integer set.
fn price_with_cost(
    block: &AgentBlock,
    weights: &Array1<f64>,
    milp_opts: &MilpOptions,
) -> Result<Option<(f64, Array1<f64>)>> {
    let objective = &block.cost + weights;
    let inst = block.milp_with_objective(objective);
    let sol = solve_milp_with(&inst, milp_opts)?;
    match sol.status {
        MilpStatus::Optimal => Ok(Some((sol.obj, sol.x))),
        MilpStatus::Infeasible => Ok(None),
    }
}

/// Per-coordinate comparison of `-mu` against central finite differences of
/// the subproblem value. The value function is piecewise linear in `y`, so
/// on a smooth piece forward and backward differences agree exactly; a
/// disagreement flags a kink, which is reported rather than failed.
#[derive(Debug, Clone)]
pub struct GradientReport {
    /// `|central difference + mu_s|` per coordinate.
    pub errors: Vec<f64>,
    /// Coordinates where forward and backward differences agree.
    pub smooth: Vec<bool>,
    /// Largest error over smooth coordinates (0 when none are smooth).
    pub max_smooth_error: f64,
    /// True when a smooth coordinate kept mismatching after resampling.
    pub persistent_mismatch: bool,
    /// Number of resampling retries consumed.
    pub retries: usize,
}

const GRADIENT_RETRIES: usize = 3;
const GRADIENT_PASS: f64 = 1e-3;

/// Check `-mu` against finite differences of [`evaluate`] at `y`. Retries
/// with a nearby resampled allocation when a smooth coordinate mismatches;
/// a mismatch that survives all retries sets `persistent_mismatch`.
pub fn gradient_check(
    block: &AgentBlock,
    y: &Array1<f64>,
    m_penalty: f64,
    pool: &mut ColumnPool,
    opts: &SubproblemOptions,
    seed: u64,
) -> Result<GradientReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = y.clone();
    let mut retries = 0;
    loop {
        let report = gradient_check_at(block, &point, m_penalty, pool, opts)?;
        if report.max_smooth_error <= GRADIENT_PASS || retries >= GRADIENT_RETRIES {
            return Ok(GradientReport {
                persistent_mismatch: report.max_smooth_error > GRADIENT_PASS,
                retries,
                ..report
            });
        }
        retries += 1;
        let scale = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        point = y.mapv(|v| v + rng.random_range(-0.01..0.01) * scale);
    }
}

fn gradient_check_at(
    block: &AgentBlock,
    y: &Array1<f64>,
    m_penalty: f64,
    pool: &mut ColumnPool,
    opts: &SubproblemOptions,
) -> Result<GradientReport> {
    let s = y.len();
    let h = GRADIENT_CHECK_STEP;
    let base = evaluate(block, y, m_penalty, pool, opts)?;
    let mut errors = Vec::with_capacity(s);
    let mut smooth = Vec::with_capacity(s);
    let mut max_smooth_error = 0.0f64;
    for coord in 0..s {
        let mut y_plus = y.clone();
        y_plus[coord] += h;
        let mut y_minus = y.clone();
        y_minus[coord] -= h;
        let up = evaluate(block, &y_plus, m_penalty, pool, opts)?.cost;
        let down = evaluate(block, &y_minus, m_penalty, pool, opts)?.cost;
        let fwd = (up - base.cost) / h;
        let bwd = (base.cost - down) / h;
        let central = (up - down) / (2.0 * h);
        let is_smooth = (fwd - bwd).abs() <= 1e-5 * (1.0 + central.abs());
        let err = (central + base.mu[coord]).abs();
        if is_smooth {
            max_smooth_error = max_smooth_error.max(err);
        }
        errors.push(err);
        smooth.push(is_smooth);
    }
    Ok(GradientReport {
        errors,
        smooth,
        max_smooth_error,
        persistent_mismatch: false,
        retries: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Polyhedron;
    use ndarray::arr1;

    fn interval_block(lo: f64, hi: f64, cost: f64, a_row: f64) -> AgentBlock {
        AgentBlock {
            cost: arr1(&[cost]),
            coupling: Array2::from_shape_vec((1, 1), vec![a_row]).unwrap(),
            poly: Polyhedron::from_box(arr1(&[lo]), arr1(&[hi])),
            int_idx: vec![0],
        }
    }

    #[test]
    fn slack_allocation_gives_zero_multiplier() {
        // x in {0,1,2}, c = 1, A = [1], y = 5: unconstrained minimum x = 0.
        let blk = interval_block(0.0, 2.0, 1.0, 1.0);
        let mut pool = ColumnPool::new();
        let res = evaluate(&blk, &arr1(&[5.0]), 10.0, &mut pool, &Default::default()).unwrap();
        assert!(res.cost.abs() < 1e-9);
        assert!(res.z[0].abs() < 1e-9);
        assert!(res.v.abs() < 1e-9);
        assert!(res.mu[0].abs() < 1e-9);
    }

    #[test]
    fn binding_allocation_pays_penalty() {
        // Same block, y = -1, M = 10: v = 1, z = 0, cost = 10, mu = [10].
        let blk = interval_block(0.0, 2.0, 1.0, 1.0);
        let mut pool = ColumnPool::new();
        let res = evaluate(&blk, &arr1(&[-1.0]), 10.0, &mut pool, &Default::default()).unwrap();
        assert!((res.cost - 10.0).abs() < 1e-8);
        assert!(res.z[0].abs() < 1e-8);
        assert!((res.v - 1.0).abs() < 1e-8);
        assert!((res.mu[0] - 10.0).abs() < 1e-8);
    }

    #[test]
    fn multiplier_respects_dual_feasibility() {
        let blk = interval_block(-2.0, 2.0, -3.0, 1.0);
        let mut pool = ColumnPool::new();
        for y in [-5.0, -1.0, 0.0, 0.5, 3.0] {
            let res = evaluate(&blk, &arr1(&[y]), 25.0, &mut pool, &Default::default()).unwrap();
            assert!(res.mu.iter().all(|&m| m >= -1e-9));
            assert!(res.mu.sum() <= 25.0 + 1e-9);
            // Allocation row feasibility with the returned violation.
            let az = blk.coupling.dot(&res.z);
            assert!(az[0] <= y + res.v + 1e-7);
            // Convex weights.
            let total: f64 = res.lambda.iter().sum();
            assert!((total - 1.0).abs() < 1e-8);
            assert!(res.lambda.iter().all(|&l| l >= -1e-9));
        }
    }

    #[test]
    fn pool_reuse_does_not_change_results() {
        let blk = interval_block(0.0, 2.0, 1.0, 1.0);
        let y = arr1(&[0.5]);
        let mut fresh = ColumnPool::new();
        let a = evaluate(&blk, &y, 10.0, &mut fresh, &Default::default()).unwrap();
        let b = evaluate(&blk, &y, 10.0, &mut fresh, &Default::default()).unwrap();
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.mu, b.mu);
        assert!(b.pricing_rounds <= a.pricing_rounds);
    }

    #[test]
    fn interior_allocation_has_flat_slope() {
        let blk = interval_block(0.0, 2.0, 1.0, 1.0);
        let mut pool = ColumnPool::new();
        let rep = gradient_check(
            &blk,
            &arr1(&[7.0]),
            10.0,
            &mut pool,
            &Default::default(),
            42,
        )
        .unwrap();
        assert!(rep.smooth[0]);
        assert!(rep.errors[0] < 1e-9);
        assert!(!rep.persistent_mismatch);
    }

    #[test]
    fn kink_is_flagged_not_failed() {
        // y exactly at a breakpoint of the value function: x = 0 becomes
        // infeasible below y = 0, so slopes differ on the two sides.
        let blk = interval_block(0.0, 2.0, 1.0, 1.0);
        let mut pool = ColumnPool::new();
        let rep =
            gradient_check_at(&blk, &arr1(&[0.0]), 10.0, &mut pool, &Default::default()).unwrap();
        assert!(!rep.smooth[0]);
    }
}
