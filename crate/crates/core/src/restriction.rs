//! Coupling-constraint tightening quantities and their distributed
//! computation, plus the centralized restricted-LP solve used to check that
//! a chosen tightening leaves the convexified problem feasible.
//!
//! Per agent the quantities are
//!
//! ```text
//! L_i[s]     = min over X_i of (A_i x)[s]                 (row lower bounds)
//! rho_max_i  = min over X_i of max_s (A_i x - L_i)[s]     (worst-case violation)
//! sigma_loc_i = min{ rho_max_i 1, max over X_i of (A_i x - L_i) }
//! ```
//!
//! and the problem-wide tightenings are `sigma_inf = S * max_i sigma_loc_i`,
//! `sigma_ft = sigma_inf + delta 1`, and the dual-decomposition baseline
//! `sigma_dd = S * max_i max_{x in X_i} (A_i x - L_i)`. Componentwise
//! `sigma_inf <= sigma_dd` on every instance.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::lp::{solve_lp_with, LinearProgram, LpStatus};
use crate::milp::{solve_milp_with, MilpInstance, MilpOptions, MilpStatus};
use crate::model::{AgentBlock, CoupledProblem};
use crate::network::Graph;
use crate::{Error, Result};

/// All tightening quantities of one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestrictionReport {
    /// Per-agent row lower bounds `L_i`.
    pub lower_bounds: Vec<Vec<f64>>,
    /// Per-agent worst-case violation `rho_max_i`.
    pub rho_max: Vec<f64>,
    /// Per-agent minimizer of the worst-case violation problem; a point of
    /// `X_i` with minimal resource usage, reused as a Slater candidate.
    pub rho_witness: Vec<Vec<f64>>,
    /// Per-agent saturated local tightening.
    pub sigma_loc: Vec<Vec<f64>>,
    pub sigma_inf: Vec<f64>,
    pub sigma_ft: Vec<f64>,
    pub sigma_dd: Vec<f64>,
    pub delta: f64,
}

impl RestrictionReport {
    pub fn sigma_inf_arr(&self) -> Array1<f64> {
        Array1::from_vec(self.sigma_inf.clone())
    }

    pub fn sigma_ft_arr(&self) -> Array1<f64> {
        Array1::from_vec(self.sigma_ft.clone())
    }

    pub fn sigma_dd_arr(&self) -> Array1<f64> {
        Array1::from_vec(self.sigma_dd.clone())
    }

    pub fn witnesses(&self) -> Vec<Array1<f64>> {
        self.rho_witness
            .iter()
            .map(|w| Array1::from_vec(w.clone()))
            .collect()
    }
}

fn block_milp_err(agent: usize, status: MilpStatus) -> Result<()> {
    match status {
        MilpStatus::Optimal => Ok(()),
        MilpStatus::Infeasible => Err(Error::InfeasibleBlock(format!(
            "agent {agent}: mixed-integer set is empty"
        ))),
    }
}

/// Row-wise lower bounds of the coupling usage over the block's
/// mixed-integer set: one MILP per coupling row.
pub fn compute_l(block: &AgentBlock, agent: usize, opts: &MilpOptions) -> Result<Array1<f64>> {
    let s = block.num_coupling_rows();
    let mut l = Array1::zeros(s);
    for r in 0..s {
        let sol = solve_milp_with(
            &block.milp_with_objective(block.coupling.row(r).to_owned()),
            opts,
        )?;
        block_milp_err(agent, sol.status)?;
        l[r] = sol.obj;
    }
    Ok(l)
}

/// Worst-case violation above `L_i`, plus the minimizer achieving it:
/// `min t  s.t.  A x - t 1 <= L,  x in X_i,  t >= 0`.
pub fn compute_rho_max(
    block: &AgentBlock,
    l: &Array1<f64>,
    agent: usize,
    opts: &MilpOptions,
) -> Result<(f64, Array1<f64>)> {
    let n = block.num_vars();
    let s = block.num_coupling_rows();
    let m = block.poly.num_rows();

    let mut g = Array2::zeros((m + s, n + 1));
    let mut h = Array1::zeros(m + s);
    for r in 0..m {
        for j in 0..n {
            g[(r, j)] = block.poly.mat[(r, j)];
        }
        h[r] = block.poly.rhs[r];
    }
    for r in 0..s {
        for j in 0..n {
            g[(m + r, j)] = block.coupling[(r, j)];
        }
        g[(m + r, n)] = -1.0;
        h[m + r] = l[r];
    }
    let mut objective = Array1::zeros(n + 1);
    objective[n] = 1.0;
    let mut lo = Array1::zeros(n + 1);
    let mut hi = Array1::zeros(n + 1);
    for j in 0..n {
        lo[j] = block.poly.lo[j];
        hi[j] = block.poly.hi[j];
    }
    lo[n] = 0.0;
    hi[n] = f64::INFINITY;

    let inst = MilpInstance {
        lp: LinearProgram::with_ineq(objective, g, h, lo, hi),
        int_idx: block.int_idx.clone(),
    };
    let sol = solve_milp_with(&inst, opts)?;
    block_milp_err(agent, sol.status)?;
    let witness = Array1::from_iter((0..n).map(|j| sol.x[j]));
    Ok((sol.obj.max(0.0), witness))
}

/// Saturated local tightening: componentwise
/// `min{ rho_max 1, max over X_i of (A_i x - L_i) }`, the maxima via one
/// MILP per coupling row.
pub fn compute_sigma_loc(
    block: &AgentBlock,
    l: &Array1<f64>,
    rho_max: f64,
    agent: usize,
    opts: &MilpOptions,
) -> Result<Array1<f64>> {
    let spread = compute_row_spread(block, l, agent, opts)?;
    Ok(spread.mapv(|u| u.min(rho_max)))
}

/// `max over X_i of (A_i x - L_i)`, componentwise.
fn compute_row_spread(
    block: &AgentBlock,
    l: &Array1<f64>,
    agent: usize,
    opts: &MilpOptions,
) -> Result<Array1<f64>> {
    let s = block.num_coupling_rows();
    let mut spread = Array1::zeros(s);
    for r in 0..s {
        let neg = block.coupling.row(r).mapv(|v| -v);
        let sol = solve_milp_with(&block.milp_with_objective(neg), opts)?;
        block_milp_err(agent, sol.status)?;
        spread[r] = -sol.obj - l[r];
    }
    Ok(spread)
}

/// Compute every tightening quantity for the instance. `delta >= 0` sizes
/// the finite-time enlargement.
pub fn compute_report(problem: &CoupledProblem, delta: f64) -> Result<RestrictionReport> {
    compute_report_with(problem, delta, &MilpOptions::default())
}

pub fn compute_report_with(
    problem: &CoupledProblem,
    delta: f64,
    opts: &MilpOptions,
) -> Result<RestrictionReport> {
    if delta < 0.0 {
        return Err(Error::InvalidInput("delta must be nonnegative".into()));
    }
    let s = problem.num_coupling_rows();
    let s_f = s as f64;

    let mut lower_bounds = Vec::new();
    let mut rho_max = Vec::new();
    let mut rho_witness = Vec::new();
    let mut sigma_loc = Vec::new();
    let mut max_loc = Array1::from_elem(s, f64::NEG_INFINITY);
    let mut max_spread = Array1::from_elem(s, f64::NEG_INFINITY);

    for (i, block) in problem.blocks.iter().enumerate() {
        let l = compute_l(block, i, opts)?;
        let (rho, witness) = compute_rho_max(block, &l, i, opts)?;
        let spread = compute_row_spread(block, &l, i, opts)?;
        let loc = spread.mapv(|u| u.min(rho));
        for r in 0..s {
            max_loc[r] = max_loc[r].max(loc[r]);
            max_spread[r] = max_spread[r].max(spread[r]);
        }
        lower_bounds.push(l.to_vec());
        rho_max.push(rho);
        rho_witness.push(witness.to_vec());
        sigma_loc.push(loc.to_vec());
    }

    let sigma_inf = max_loc.mapv(|v| s_f * v);
    let sigma_ft = sigma_inf.mapv(|v| v + delta);
    let sigma_dd = max_spread.mapv(|v| s_f * v);
    Ok(RestrictionReport {
        lower_bounds,
        rho_max,
        rho_witness,
        sigma_loc,
        sigma_inf: sigma_inf.to_vec(),
        sigma_ft: sigma_ft.to_vec(),
        sigma_dd: sigma_dd.to_vec(),
        delta,
    })
}

/// Synchronous componentwise max-consensus. Every agent ends up holding the
/// componentwise maximum after at most `diameter` rounds; running more
/// rounds is harmless.
pub fn max_consensus(values: &[Array1<f64>], graph: &Graph, rounds: usize) -> Vec<Array1<f64>> {
    let mut state: Vec<Array1<f64>> = values.to_vec();
    for _ in 0..rounds {
        let snapshot = state.clone();
        for i in 0..state.len() {
            for &j in graph.neighbors(i) {
                for (mine, theirs) in state[i].iter_mut().zip(snapshot[j].iter()) {
                    if *theirs > *mine {
                        *mine = *theirs;
                    }
                }
            }
        }
    }
    state
}

/// Distributed computation of `sigma_inf`: each agent contributes its local
/// tightening and runs max-consensus for `diameter` rounds.
pub fn sigma_inf_distributed(
    problem: &CoupledProblem,
    graph: &Graph,
    opts: &MilpOptions,
) -> Result<Vec<Array1<f64>>> {
    let s_f = problem.num_coupling_rows() as f64;
    let mut locals = Vec::with_capacity(problem.num_agents());
    for (i, block) in problem.blocks.iter().enumerate() {
        let l = compute_l(block, i, opts)?;
        let (rho, _) = compute_rho_max(block, &l, i, opts)?;
        locals.push(compute_sigma_loc(block, &l, rho, i, opts)?);
    }
    let rounds = graph.diameter();
    Ok(max_consensus(&locals, graph, rounds)
        .into_iter()
        .map(|v| v.mapv(|t| s_f * t))
        .collect())
}

// ---------------------------------------------------------------------------
// Centralized restricted-LP solve (column generation over all agents)
// ---------------------------------------------------------------------------

/// Outcome of solving the convexified problem with tightened resources:
/// `min sum_i c_i' z_i  s.t.  sum_i A_i z_i <= b - sigma, z_i in conv(X_i)`.
#[derive(Debug, Clone)]
pub enum RestrictedLp {
    Feasible {
        /// Optimal cost of the restricted convexified problem.
        cost: f64,
        /// Per-agent optimal points (convex combinations of generated
        /// columns, hence certified members of `conv(X_i)`).
        z: Vec<Array1<f64>>,
    },
    /// Least possible common row violation is positive.
    Infeasible { violation: f64 },
}

const DW_ROUND_CAP: usize = 1_000;

/// Solve the restricted convexified problem by column generation with one
/// convexity row per agent. Used for the feasibility precheck and for exact
/// optima at desk scale.
pub fn solve_restricted_lp(problem: &CoupledProblem, sigma: &Array1<f64>) -> Result<RestrictedLp> {
    solve_restricted_lp_with(
        problem,
        sigma,
        &MilpOptions::default(),
        &Tolerances::default(),
    )
}

pub fn solve_restricted_lp_with(
    problem: &CoupledProblem,
    sigma: &Array1<f64>,
    milp_opts: &MilpOptions,
    tol: &Tolerances,
) -> Result<RestrictedLp> {
    let s = problem.num_coupling_rows();
    if sigma.len() != s {
        return Err(Error::InvalidInput(format!(
            "sigma has {} entries, expected {s}",
            sigma.len()
        )));
    }
    let rhs = &problem.resource - sigma;

    // Bootstrap one column per agent.
    let mut pools: Vec<Vec<Array1<f64>>> = Vec::with_capacity(problem.num_agents());
    for (i, block) in problem.blocks.iter().enumerate() {
        let sol = solve_milp_with(&block.milp_with_objective(block.cost.clone()), milp_opts)?;
        block_milp_err(i, sol.status)?;
        pools.push(vec![sol.x]);
    }

    // Phase A: minimize the common violation w.
    let violation = dw_loop(
        problem,
        &rhs,
        &mut pools,
        milp_opts,
        tol,
        true,
        f64::INFINITY,
    )?;
    let feas_tol = tol.feas * (1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    if violation > feas_tol {
        return Ok(RestrictedLp::Infeasible { violation });
    }

    // Phase B: minimize the true cost with the violation capped at the
    // phase-A optimum (within feasibility tolerance of zero).
    let w_cap = violation.max(0.0);
    let _ = dw_loop(problem, &rhs, &mut pools, milp_opts, tol, false, w_cap)?;
    let (sol, k_offsets) = solve_dw_master(problem, &rhs, &pools, tol, false, w_cap)?;
    let mut z = Vec::with_capacity(problem.num_agents());
    for (i, pool) in pools.iter().enumerate() {
        let mut zi = Array1::zeros(problem.blocks[i].num_vars());
        for (j, point) in pool.iter().enumerate() {
            let w = sol.x[k_offsets[i] + j];
            if w != 0.0 {
                zi = zi + point.mapv(|t| t * w);
            }
        }
        z.push(zi);
    }
    Ok(RestrictedLp::Feasible { cost: sol.obj, z })
}

/// Run pricing rounds until no agent can improve the master; returns the
/// final master objective (phase A: the violation, phase B: the cost).
fn dw_loop(
    problem: &CoupledProblem,
    rhs: &Array1<f64>,
    pools: &mut [Vec<Array1<f64>>],
    milp_opts: &MilpOptions,
    tol: &Tolerances,
    phase_a: bool,
    w_cap: f64,
) -> Result<f64> {
    for _round in 0..DW_ROUND_CAP {
        let (sol, _) = solve_dw_master(problem, rhs, pools, tol, phase_a, w_cap)?;
        let pi = sol.dual_ineq.clone();
        let mut improved = false;
        for (i, block) in problem.blocks.iter().enumerate() {
            // Reduced cost of a candidate column x for agent i is
            // c'x + pi'(A x) + nu_i (zero cost term in phase A).
            let eta = sol.dual_eq[i];
            let mut weights = block.coupling.t().dot(&pi);
            if !phase_a {
                weights += &block.cost;
            }
            let inst = block.milp_with_objective(weights);
            let priced = solve_milp_with(&inst, milp_opts)?;
            block_milp_err(i, priced.status)?;
            if priced.obj + eta < -tol.rc {
                let dup = pools[i]
                    .iter()
                    .any(|p| p.iter().zip(priced.x.iter()).all(|(a, b)| a == b));
                if !dup {
                    pools[i].push(priced.x);
                    improved = true;
                }
            }
        }
        if !improved {
            return Ok(sol.obj);
        }
    }
    Err(Error::PricingCap {
        rounds: DW_ROUND_CAP,
    })
}

/// Build and solve the aggregated master over all pools. In phase A the
/// objective is the common violation `w`; in phase B it is the true cost
/// with `w` capped at `w_cap` (the phase-A optimum).
fn solve_dw_master(
    problem: &CoupledProblem,
    rhs: &Array1<f64>,
    pools: &[Vec<Array1<f64>>],
    tol: &Tolerances,
    phase_a: bool,
    w_cap: f64,
) -> Result<(crate::lp::LpSolution, Vec<usize>)> {
    let s = problem.num_coupling_rows();
    let n_agents = problem.num_agents();
    let total_cols: usize = pools.iter().map(|p| p.len()).sum::<usize>() + 1;
    let w_col = total_cols - 1;

    let mut offsets = Vec::with_capacity(n_agents);
    let mut g = Array2::zeros((s, total_cols));
    let mut e = Array2::zeros((n_agents, total_cols));
    let mut objective = Array1::zeros(total_cols);

    let mut col = 0;
    for (i, pool) in pools.iter().enumerate() {
        offsets.push(col);
        for point in pool {
            let ap = problem.blocks[i].coupling.dot(point);
            for r in 0..s {
                g[(r, col)] = ap[r];
            }
            e[(i, col)] = 1.0;
            if !phase_a {
                objective[col] = problem.blocks[i].cost.dot(point);
            }
            col += 1;
        }
    }
    for r in 0..s {
        g[(r, w_col)] = -1.0;
    }
    if phase_a {
        objective[w_col] = 1.0;
    }

    let mut lo = Array1::zeros(total_cols);
    let mut hi = Array1::from_elem(total_cols, f64::INFINITY);
    lo[w_col] = 0.0;
    hi[w_col] = if phase_a {
        f64::INFINITY
    } else if w_cap.is_finite() {
        w_cap
    } else {
        0.0
    };

    let lp = LinearProgram {
        objective,
        g,
        h: rhs.clone(),
        e,
        f: Array1::from_elem(n_agents, 1.0),
        lo,
        hi,
    };
    let sol = solve_lp_with(&lp, tol)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!(
            "aggregated master LP returned {:?}",
            sol.status
        )));
    }
    Ok((sol, offsets))
}
