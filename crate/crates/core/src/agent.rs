//! Per-agent state machine: allocation initialization, the multiplier-driven
//! allocation update, and two-stage mixed-integer recovery.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::lp::LinearProgram;
use crate::milp::{solve_milp_with, MilpInstance, MilpOptions, MilpStatus};
use crate::model::{AgentBlock, CoupledProblem, MixedIntegerPoint};
use crate::subproblem::{evaluate, ColumnPool, SubproblemOptions};
use crate::{Error, Result};

/// Diminishing step-size sequence. Both kinds satisfy
/// `sum alpha_t = inf` and `sum alpha_t^2 < inf`; the power kind requires an
/// exponent in `(0.5, 1]` for the square sum to stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSizeSchedule {
    /// `alpha0 / (t + 1)`.
    Harmonic { alpha0: f64 },
    /// `alpha0 / (t + 1)^exponent`.
    Power { alpha0: f64, exponent: f64 },
}

impl StepSizeSchedule {
    pub fn harmonic(alpha0: f64) -> Result<Self> {
        if alpha0 <= 0.0 {
            return Err(Error::InvalidInput("alpha0 must be positive".into()));
        }
        Ok(Self::Harmonic { alpha0 })
    }

    pub fn power(alpha0: f64, exponent: f64) -> Result<Self> {
        if alpha0 <= 0.0 {
            return Err(Error::InvalidInput("alpha0 must be positive".into()));
        }
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "exponent {exponent} outside (0.5, 1]: the squared step sum would diverge"
            )));
        }
        Ok(Self::Power { alpha0, exponent })
    }

    /// Default: `1 / (t + 1)^0.8`.
    pub fn default_power() -> Self {
        Self::Power {
            alpha0: 1.0,
            exponent: 0.8,
        }
    }

    pub fn value(&self, t: usize) -> f64 {
        let tp1 = (t + 1) as f64;
        match self {
            Self::Harmonic { alpha0 } => alpha0 / tp1,
            Self::Power { alpha0, exponent } => alpha0 / tp1.powf(*exponent),
        }
    }
}

/// Evenly split `b - sigma`, compensating rounding on the last agent so the
/// allocations sum to `b - sigma` exactly.
pub fn init_allocation(problem: &CoupledProblem, sigma: &Array1<f64>) -> Vec<Array1<f64>> {
    let n = problem.num_agents();
    let target = &problem.resource - sigma;
    let share = target.mapv(|v| v / n as f64);
    let mut out = vec![share.clone(); n];
    let mut partial: Array1<f64> = Array1::zeros(target.len());
    for y in out.iter().take(n - 1) {
        partial += y;
    }
    out[n - 1] = target - partial;
    out
}

/// One agent's run-time state.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: usize,
    pub block: Arc<AgentBlock>,
    /// Current allocation estimate.
    pub y: Array1<f64>,
    /// Multiplier from the latest subproblem solve.
    pub mu: Array1<f64>,
    /// Relaxed primal point from the latest subproblem solve.
    pub z: Array1<f64>,
    /// Violation from the latest subproblem solve.
    pub v: f64,
    /// Optimal subproblem cost (including the penalty term).
    pub lp_cost: f64,
    pub pool: ColumnPool,
}

impl AgentState {
    pub fn new(id: usize, block: Arc<AgentBlock>, y0: Array1<f64>) -> Self {
        let s = block.num_coupling_rows();
        let n = block.num_vars();
        Self {
            id,
            block,
            y: y0,
            mu: Array1::zeros(s),
            z: Array1::zeros(n),
            v: 0.0,
            lp_cost: f64::NAN,
            pool: ColumnPool::new(),
        }
    }

    /// Solve the penalized subproblem at the current allocation and store
    /// multiplier, primal point, violation and cost.
    pub fn solve_subproblem(&mut self, m_penalty: f64, opts: &SubproblemOptions) -> Result<()> {
        let res = evaluate(&self.block, &self.y, m_penalty, &mut self.pool, opts)
            .map_err(|e| contextualize(e, self.id))?;
        self.mu = res.mu;
        self.z = res.z;
        self.v = res.v;
        self.lp_cost = res.cost;
        Ok(())
    }

    /// `y <- y + alpha * sum_j (mu_self - mu_j)` over the received neighbor
    /// multipliers. Pairwise antisymmetry keeps the allocation sum constant
    /// across the network.
    pub fn update_allocation(&mut self, neighbor_mus: &[Array1<f64>], alpha: f64) {
        for mu_j in neighbor_mus {
            let diff = &self.mu - mu_j;
            self.y = &self.y + &diff.mapv(|d| alpha * d);
        }
    }

    /// Full synchronous round for callers that already hold this round's
    /// neighbor multipliers (single agents, tests). The network simulator
    /// drives the two phases separately instead.
    pub fn iterate(
        &mut self,
        neighbor_mus: &[Array1<f64>],
        alpha: f64,
        m_penalty: f64,
        opts: &SubproblemOptions,
    ) -> Result<()> {
        self.solve_subproblem(m_penalty, opts)?;
        self.update_allocation(neighbor_mus, alpha);
        Ok(())
    }
}

fn contextualize(e: Error, agent: usize) -> Error {
    match e {
        Error::InfeasibleBlock(msg) => Error::InfeasibleBlock(format!("agent {agent}: {msg}")),
        other => other,
    }
}

/// Stage-2 slack added to the stage-1 optimum so rounding noise cannot make
/// the second MILP infeasible.
const RECOVERY_RHO_SLACK: f64 = 1e-9;

/// Two-stage mixed-integer recovery at allocation `y`: first minimize the
/// common allocation-row violation `rho`, then re-optimize the true cost
/// with `rho` fixed. Returns the recovered point and `rho`.
pub fn recover_mixed_integer(
    block: &AgentBlock,
    y: &Array1<f64>,
    agent: usize,
    opts: &MilpOptions,
) -> Result<(MixedIntegerPoint, f64)> {
    let n = block.num_vars();
    let s = block.num_coupling_rows();
    let m = block.poly.num_rows();

    // Stage 1: min rho  s.t.  A x - rho 1 <= y, x in X_i, rho >= 0.
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
        h[m + r] = y[r];
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

    let stage1 = MilpInstance {
        lp: LinearProgram::with_ineq(objective, g.clone(), h.clone(), lo.clone(), hi.clone()),
        int_idx: block.int_idx.clone(),
    };
    let sol1 = solve_milp_with(&stage1, opts)?;
    if sol1.status == MilpStatus::Infeasible {
        return Err(Error::InfeasibleBlock(format!(
            "agent {agent}: mixed-integer set is empty"
        )));
    }
    let rho = sol1.obj.max(0.0);

    // Stage 2: fix rho and minimize the true cost.
    let mut objective2 = Array1::zeros(n + 1);
    for j in 0..n {
        objective2[j] = block.cost[j];
    }
    lo[n] = 0.0;
    hi[n] = rho + RECOVERY_RHO_SLACK;
    let stage2 = MilpInstance {
        lp: LinearProgram::with_ineq(objective2, g, h, lo, hi),
        int_idx: block.int_idx.clone(),
    };
    let sol2 = solve_milp_with(&stage2, opts)?;
    if sol2.status == MilpStatus::Infeasible {
        return Err(Error::Numerical(format!(
            "agent {agent}: stage-2 recovery infeasible at rho = {rho}"
        )));
    }
    let x = Array1::from_iter((0..n).map(|j| sol2.x[j]));
    Ok((MixedIntegerPoint { x, owner: agent }, rho))
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
    fn schedule_rejects_bad_exponents() {
        assert!(StepSizeSchedule::power(1.0, 0.5).is_err());
        assert!(StepSizeSchedule::power(1.0, 0.3).is_err());
        assert!(StepSizeSchedule::power(1.0, 1.1).is_err());
        assert!(StepSizeSchedule::power(0.0, 0.8).is_err());
        assert!(StepSizeSchedule::power(1.0, 0.8).is_ok());
        assert!(StepSizeSchedule::power(1.0, 1.0).is_ok());
        assert!(StepSizeSchedule::harmonic(2.0).is_ok());
    }

    #[test]
    fn schedule_values() {
        let s = StepSizeSchedule::harmonic(2.0).unwrap();
        assert!((s.value(0) - 2.0).abs() < 1e-12);
        assert!((s.value(3) - 0.5).abs() < 1e-12);
        let p = StepSizeSchedule::power(1.0, 0.8).unwrap();
        assert!((p.value(0) - 1.0).abs() < 1e-12);
        assert!(p.value(10) > p.value(100));
    }

    #[test]
    fn allocation_splits_evenly() {
        let problem = CoupledProblem {
            blocks: vec![
                interval_block(0.0, 2.0, 1.0, 1.0),
                interval_block(0.0, 2.0, 1.0, 1.0),
            ],
            resource: arr1(&[2.0]),
        };
        let ys = init_allocation(&problem, &arr1(&[0.0]));
        assert_eq!(ys[0], arr1(&[1.0]));
        assert_eq!(ys[1], arr1(&[1.0]));
    }

    #[test]
    fn allocation_sum_is_exact() {
        let problem = CoupledProblem {
            blocks: vec![
                interval_block(0.0, 2.0, 1.0, 1.0),
                interval_block(0.0, 2.0, 1.0, 1.0),
                interval_block(0.0, 2.0, 1.0, 1.0),
            ],
            resource: arr1(&[1.0]),
        };
        let sigma = arr1(&[0.1]);
        let ys = init_allocation(&problem, &sigma);
        let total = ys.iter().fold(Array1::<f64>::zeros(1), |acc, y| acc + y);
        // Exact by construction (last agent absorbs the rounding).
        assert_eq!(total[0], 0.9);
    }

    #[test]
    fn equal_multipliers_leave_allocation_fixed() {
        let blk = Arc::new(interval_block(0.0, 2.0, 1.0, 1.0));
        let mut st = AgentState::new(0, blk, arr1(&[1.0]));
        st.mu = arr1(&[3.0]);
        st.update_allocation(&[arr1(&[3.0]), arr1(&[3.0])], 0.1);
        assert_eq!(st.y, arr1(&[1.0]));
    }

    #[test]
    fn pairwise_update_moves_allocation_antisymmetrically() {
        let blk = Arc::new(interval_block(0.0, 2.0, 1.0, 1.0));
        let mut a = AgentState::new(0, blk.clone(), arr1(&[0.0]));
        let mut b = AgentState::new(1, blk, arr1(&[0.0]));
        a.mu = arr1(&[1.0]);
        b.mu = arr1(&[0.0]);
        a.update_allocation(std::slice::from_ref(&b.mu), 0.1);
        b.update_allocation(std::slice::from_ref(&a.mu), 0.1);
        assert!((a.y[0] - 0.1).abs() < 1e-15);
        assert!((b.y[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn recovery_with_slack_allocation() {
        // Plenty of allocation: rho = 0 and x is the plain local optimum.
        let blk = interval_block(0.0, 2.0, -1.0, 1.0);
        let (pt, rho) = recover_mixed_integer(&blk, &arr1(&[5.0]), 0, &Default::default()).unwrap();
        assert!(rho.abs() < 1e-9);
        assert!((pt.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn recovery_pays_minimal_violation() {
        // y = -1.5 but A x = x >= 0 on the block: stage 1 must lift rho to
        // 1.5, then stage 2 picks the cheapest point at that violation.
        let blk = interval_block(0.0, 2.0, -1.0, 1.0);
        let (pt, rho) =
            recover_mixed_integer(&blk, &arr1(&[-1.5]), 0, &Default::default()).unwrap();
        assert!((rho - 1.5).abs() < 1e-9);
        // A x <= y + rho = 0, so x = 0 is forced (up to the stage-2 slack).
        assert!(pt.x[0].abs() < 1e-6);
    }

    #[test]
    fn single_agent_iterate_keeps_allocation() {
        let blk = Arc::new(interval_block(0.0, 2.0, 1.0, 1.0));
        let mut st = AgentState::new(0, blk, arr1(&[4.0]));
        st.iterate(&[], 0.5, 10.0, &Default::default()).unwrap();
        assert_eq!(st.y, arr1(&[4.0]));
        assert!(st.lp_cost.abs() < 1e-9);
        st.iterate(&[], 0.25, 10.0, &Default::default()).unwrap();
        assert_eq!(st.y, arr1(&[4.0]));
    }
}
