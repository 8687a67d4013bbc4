//! Exact branch-and-bound for small mixed-integer linear programs.
//!
//! Best-first search on the LP relaxation bound with fully deterministic
//! tie-breaking: nodes with equal bounds pop in insertion order, branching
//! picks the most fractional integer variable (lowest index on ties), and
//! the down branch is inserted first. No cuts, no presolve; a node budget
//! guards pathological instances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array1;

use crate::config::{Tolerances, MILP_NODE_BUDGET};
use crate::lp::{solve_lp_with, LinearProgram, LpStatus};
use crate::{Error, Result};

/// A linear program plus the set of variable indices forced integral.
#[derive(Debug, Clone)]
pub struct MilpInstance {
    pub lp: LinearProgram,
    pub int_idx: Vec<usize>,
}

impl MilpInstance {
    pub fn validate(&self) -> Result<()> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        for &j in &self.int_idx {
            if j >= n {
                return Err(Error::InvalidInput(format!(
                    "integer index {j} out of range for {n} variables"
                )));
            }
            if !self.lp.lo[j].is_finite() || !self.lp.hi[j].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "integer variable {j} must have finite bounds"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub x: Array1<f64>,
    pub obj: f64,
    /// Number of branch-and-bound nodes whose relaxation was solved.
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub node_budget: usize,
    pub tol: Tolerances,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_budget: MILP_NODE_BUDGET,
            tol: Tolerances::default(),
        }
    }
}

struct Node {
    bound: f64,
    seq: u64,
    lo: Array1<f64>,
    hi: Array1<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; reverse so the smallest bound pops first,
    // insertion order on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub fn solve_milp(inst: &MilpInstance) -> Result<MilpSolution> {
    solve_milp_with(inst, &MilpOptions::default())
}

pub fn solve_milp_with(inst: &MilpInstance, opts: &MilpOptions) -> Result<MilpSolution> {
    inst.validate()?;
    let tol = &opts.tol;
    // Nodes whose bound cannot improve the incumbent by more than this are
    // pruned; kept tiny so the result stays exact to enumeration oracles.
    const PRUNE_EPS: f64 = 1e-9;

    let mut heap = BinaryHeap::new();
    let mut seq: u64 = 0;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        lo: inst.lp.lo.clone(),
        hi: inst.lp.hi.clone(),
    });

    let mut best: Option<(Array1<f64>, f64)> = None;
    let mut nodes = 0usize;

    while let Some(node) = heap.pop() {
        if let Some((_, best_obj)) = &best {
            if node.bound >= best_obj - PRUNE_EPS {
                break; // best-first: every remaining node is no better
            }
        }
        if nodes >= opts.node_budget {
            return Err(Error::NodeBudget { explored: nodes });
        }
        nodes += 1;

        let mut lp = inst.lp.clone();
        lp.lo = node.lo;
        lp.hi = node.hi;
        let sol = solve_lp_with(&lp, tol)?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(Error::Unbounded(
                    "MILP relaxation is unbounded below".into(),
                ))
            }
            LpStatus::Optimal => {}
        }
        if let Some((_, best_obj)) = &best {
            if sol.obj >= best_obj - PRUNE_EPS {
                continue;
            }
        }

        // Most fractional integer variable, lowest index on ties.
        let mut branch: Option<(usize, f64, f64)> = None; // (var, value, fractionality)
        let mut worst_exact: Option<(usize, f64, f64)> = None; // any fractionality > 0
        for &j in &inst.int_idx {
            let v = sol.x[j];
            let fl = v.floor();
            let frac = (v - fl).min(fl + 1.0 - v);
            if frac > tol.int {
                match branch {
                    Some((_, _, f)) if f >= frac => {}
                    _ => branch = Some((j, v, frac)),
                }
            } else if frac > 0.0 {
                match worst_exact {
                    Some((_, _, f)) if f >= frac => {}
                    _ => worst_exact = Some((j, v, frac)),
                }
            }
        }

        // Sub-tolerance fractionality is snapped before an incumbent is
        // accepted: the LP is re-solved with the integer coordinates fixed
        // at their rounded values, so incumbents are exactly integral and
        // re-solving the same set with a different objective cannot
        // disagree about feasibility. The node keeps branching on the
        // residual fractionality while its relaxation bound leaves room
        // below the incumbent, which keeps the search exact.
        if branch.is_none() {
            let snapped = snap_incumbent(inst, &lp, &sol.x, tol)?;
            let improved = match (&snapped, &best) {
                (Some((_, obj)), Some((_, best_obj))) => obj < best_obj,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if improved {
                best = snapped;
            }
            let room = match &best {
                Some((_, best_obj)) => sol.obj < best_obj - PRUNE_EPS,
                None => true,
            };
            match worst_exact {
                Some(b) if room => branch = Some(b),
                _ => continue, // node resolved
            }
        }

        match branch {
            None => unreachable!("integral nodes are handled above"),
            Some((j, v, _)) => {
                let fl = v.floor();
                // Down child first.
                let lo_d = lp.lo.clone();
                let mut hi_d = lp.hi.clone();
                hi_d[j] = fl;
                if lo_d[j] <= hi_d[j] {
                    seq += 1;
                    heap.push(Node {
                        bound: sol.obj,
                        seq,
                        lo: lo_d,
                        hi: hi_d,
                    });
                }
                let mut lo_u = lp.lo;
                let hi_u = lp.hi;
                lo_u[j] = fl + 1.0;
                if lo_u[j] <= hi_u[j] {
                    seq += 1;
                    heap.push(Node {
                        bound: sol.obj,
                        seq,
                        lo: lo_u,
                        hi: hi_u,
                    });
                }
            }
        }
    }

    match best {
        Some((x, obj)) => Ok(MilpSolution {
            status: MilpStatus::Optimal,
            x,
            obj,
            nodes,
        }),
        None => Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            x: Array1::zeros(inst.lp.num_vars()),
            obj: f64::NAN,
            nodes,
        }),
    }
}

/// Re-solve the node LP with every integer coordinate fixed at its rounded
/// value. `None` when the rounded assignment is infeasible.
fn snap_incumbent(
    inst: &MilpInstance,
    node_lp: &LinearProgram,
    x: &Array1<f64>,
    tol: &Tolerances,
) -> Result<Option<(Array1<f64>, f64)>> {
    let mut lp = node_lp.clone();
    lp.objective = inst.lp.objective.clone();
    let mut exact = true;
    for &j in &inst.int_idx {
        let v = x[j].round();
        exact &= v == x[j];
        lp.lo[j] = v;
        lp.hi[j] = v;
    }
    if exact && inst.lp.objective == node_lp.objective {
        // Already an exact integer point of this node's relaxation.
        return Ok(Some((x.clone(), inst.lp.objective.dot(x))));
    }
    let sol = solve_lp_with(&lp, tol)?;
    match sol.status {
        LpStatus::Optimal => {
            let mut out = sol.x;
            for &j in &inst.int_idx {
                out[j] = out[j].round();
            }
            let obj = inst.lp.objective.dot(&out);
            Ok(Some((out, obj)))
        }
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array2};

    fn bounded_ints(c: &[f64], lo: &[f64], hi: &[f64], int_idx: &[usize]) -> MilpInstance {
        let n = c.len();
        MilpInstance {
            lp: LinearProgram::with_ineq(
                arr1(c),
                Array2::zeros((0, n)),
                arr1(&[]),
                arr1(lo),
                arr1(hi),
            ),
            int_idx: int_idx.to_vec(),
        }
    }

    #[test]
    fn rounds_down_fractional_bound() {
        // min -x, x integer, 0 <= x <= 2.5 -> x = 2.
        let inst = bounded_ints(&[-1.0], &[0.0], &[2.5], &[0]);
        let sol = solve_milp(&inst).unwrap();
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.obj + 2.0).abs() < 1e-9);
    }

    #[test]
    fn integral_relaxation_needs_one_node() {
        // min -x, x integer, 0 <= x <= 3: the relaxation already sits at 3.
        let inst = bounded_ints(&[-1.0], &[0.0], &[3.0], &[0]);
        let sol = solve_milp(&inst).unwrap();
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert_eq!(sol.nodes, 1);
        assert!((sol.obj + 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_integer_infeasible_window() {
        // 0.3 <= x <= 0.7 with x integer has no point.
        let inst = bounded_ints(&[1.0], &[0.3], &[0.7], &[0]);
        let sol = solve_milp(&inst).unwrap();
        assert_eq!(sol.status, MilpStatus::Infeasible);
    }

    #[test]
    fn knapsack_small() {
        // max 3a + 4b s.t. 2a + 3b <= 5, a,b in {0,1}  -> a=b=1, value 7.
        let mut g = Array2::zeros((1, 2));
        g[(0, 0)] = 2.0;
        g[(0, 1)] = 3.0;
        let inst = MilpInstance {
            lp: LinearProgram::with_ineq(
                arr1(&[-3.0, -4.0]),
                g,
                arr1(&[5.0]),
                arr1(&[0.0, 0.0]),
                arr1(&[1.0, 1.0]),
            ),
            int_idx: vec![0, 1],
        };
        let sol = solve_milp(&inst).unwrap();
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.obj + 7.0).abs() < 1e-9);
    }

    #[test]
    fn requires_finite_integer_bounds() {
        let inst = bounded_ints(&[1.0], &[0.0], &[f64::INFINITY], &[0]);
        assert!(matches!(solve_milp(&inst), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn node_budget_error() {
        let inst = bounded_ints(&[-1.0], &[0.0], &[2.5], &[0]);
        let opts = MilpOptions {
            node_budget: 1,
            ..Default::default()
        };
        assert!(matches!(
            solve_milp_with(&inst, &opts),
            Err(Error::NodeBudget { .. })
        ));
    }
}
