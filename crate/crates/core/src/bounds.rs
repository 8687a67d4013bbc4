//! Suboptimality certificates for recovered mixed-integer solutions.
//!
//! All bounds hinge on a Slater point of the restricted convexified
//! problem: per-agent points `zhat_i in conv(X_i)` whose aggregate usage
//! leaves a positive margin `zeta` on every tightened row. Given one,
//!
//! ```text
//! B        = (S + N ||sigma||_inf / zeta) * max_i gamma_i        (a priori)
//! B'       = sum_{i in I_R} (c_i' xbar_i - c_i' z*_i)
//!            + (||sigma||_inf / zeta) (J_sl - sum_i c_i' z*_i)   (a posteriori)
//! B^t      = sum_i (c_i' x_i^t - J_i^t) + sum_i eps_i ||mu_i^t||_1
//!            + Gamma ||sigma||_inf                               (finite time)
//! ```
//!
//! with `gamma_i` the cost spread of block `i`, `I_R` the agents whose
//! relaxed point is not mixed-integer, and `Gamma = (N / zeta) sum_i
//! gamma_i`. Each bound dominates `recovered cost - optimal MILP cost`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::milp::{solve_milp_with, MilpOptions, MilpStatus};
use crate::model::{AgentBlock, CoupledProblem};
use crate::{Error, Result};

/// Cost spread `max c' x - min c' x` over the block's mixed-integer set.
pub fn gamma(block: &AgentBlock, agent: usize, opts: &MilpOptions) -> Result<f64> {
    let min_sol = solve_milp_with(&block.milp_with_objective(block.cost.clone()), opts)?;
    if min_sol.status == MilpStatus::Infeasible {
        return Err(Error::InfeasibleBlock(format!(
            "agent {agent}: mixed-integer set is empty"
        )));
    }
    let neg = block.cost.mapv(|v| -v);
    let max_sol = solve_milp_with(&block.milp_with_objective(neg), opts)?;
    if max_sol.status == MilpStatus::Infeasible {
        return Err(Error::InfeasibleBlock(format!(
            "agent {agent}: mixed-integer set is empty"
        )));
    }
    Ok((-max_sol.obj - min_sol.obj).max(0.0))
}

/// A verified Slater certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlaterCertificate {
    /// Minimum slack of the candidate on the tightened rows; positive.
    pub zeta: f64,
    /// Cost of the Slater point.
    pub j_sl: f64,
    /// The candidate points themselves (members of `conv(X_i)` by
    /// construction at the call site).
    pub points: Vec<Vec<f64>>,
}

/// Evaluate a Slater candidate: `zeta = min_s [b - sigma - sum_i A_i
/// zhat_i]_s`. Returns `None` when the margin is not strictly positive; the
/// candidate then simply fails to certify anything.
pub fn slater(
    problem: &CoupledProblem,
    sigma: &Array1<f64>,
    candidate: &[Array1<f64>],
) -> Option<SlaterCertificate> {
    assert_eq!(candidate.len(), problem.num_agents(), "one point per agent");
    let usage = problem.coupling_usage(candidate);
    let slackiest = &problem.resource - sigma - &usage;
    let zeta = slackiest.iter().copied().fold(f64::INFINITY, f64::min);
    if zeta <= 0.0 {
        return None;
    }
    Some(SlaterCertificate {
        zeta,
        j_sl: problem.total_cost(candidate),
        points: candidate.iter().map(|p| p.to_vec()).collect(),
    })
}

/// A-priori bound `B`. `sigma` is the tightening the run uses.
pub fn bound_apriori(
    problem: &CoupledProblem,
    sigma: &Array1<f64>,
    cert: Option<&SlaterCertificate>,
    gammas: &[f64],
) -> Result<f64> {
    let cert = cert.ok_or(Error::MissingSlater)?;
    let s = problem.num_coupling_rows() as f64;
    let n = problem.num_agents() as f64;
    let sigma_inf = sigma.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let gamma_max = gammas.iter().copied().fold(0.0f64, f64::max);
    Ok((s + n * sigma_inf / cert.zeta) * gamma_max)
}

/// A-posteriori bound `B'` together with the set `I_R` of agents whose
/// relaxed point is not mixed-integer.
pub fn bound_aposteriori(
    problem: &CoupledProblem,
    z_star: &[Array1<f64>],
    x_recovered: &[Array1<f64>],
    sigma: &Array1<f64>,
    cert: Option<&SlaterCertificate>,
    tol: &Tolerances,
) -> Result<(f64, Vec<usize>)> {
    let cert = cert.ok_or(Error::MissingSlater)?;
    let i_r = non_integer_agents(problem, z_star, tol);
    let mut adjustment = 0.0;
    for &i in &i_r {
        adjustment +=
            problem.blocks[i].cost.dot(&x_recovered[i]) - problem.blocks[i].cost.dot(&z_star[i]);
    }
    let z_cost = problem.total_cost(z_star);
    let sigma_inf = sigma.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok((
        adjustment + (sigma_inf / cert.zeta) * (cert.j_sl - z_cost),
        i_r,
    ))
}

/// Agents whose relaxed point violates integrality beyond `tol.int`. The
/// relaxed points live in `conv(X_i)`, so integrality alone decides
/// membership in the mixed-integer set.
pub fn non_integer_agents(
    problem: &CoupledProblem,
    z: &[Array1<f64>],
    tol: &Tolerances,
) -> Vec<usize> {
    problem
        .blocks
        .iter()
        .zip(z)
        .enumerate()
        .filter(|(_, (blk, zi))| {
            blk.int_idx
                .iter()
                .any(|&j| (zi[j] - zi[j].round()).abs() > tol.int)
        })
        .map(|(i, _)| i)
        .collect()
}

/// `Gamma = (N / zeta) * sum_i gamma_i`.
pub fn gamma_cap(problem: &CoupledProblem, cert: &SlaterCertificate, gammas: &[f64]) -> f64 {
    let n = problem.num_agents() as f64;
    n / cert.zeta * gammas.iter().sum::<f64>()
}

/// Finite-time bound `B^t` from one round of run data.
#[allow(clippy::too_many_arguments)]
pub fn bound_finite_time(
    problem: &CoupledProblem,
    x_round: &[Array1<f64>],
    lp_costs: &[f64],
    mus: &[Array1<f64>],
    epsilons: &[f64],
    sigma_ft: &Array1<f64>,
    cert: Option<&SlaterCertificate>,
    gammas: &[f64],
) -> Result<f64> {
    let cert = cert.ok_or(Error::MissingSlater)?;
    if epsilons.iter().any(|&e| e <= 0.0) {
        return Err(Error::InvalidInput("epsilons must be positive".into()));
    }
    let mut total = 0.0;
    for (i, blk) in problem.blocks.iter().enumerate() {
        total += blk.cost.dot(&x_round[i]) - lp_costs[i];
        total += epsilons[i] * mus[i].iter().map(|v| v.abs()).sum::<f64>();
    }
    let sigma_inf = sigma_ft.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(total + gamma_cap(problem, cert, gammas) * sigma_inf)
}

/// Everything the run summary reports about certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub gamma: Vec<f64>,
    pub zeta: Option<f64>,
    pub j_sl: Option<f64>,
    pub apriori: Option<f64>,
    pub aposteriori: Option<f64>,
    pub finite_time: Option<f64>,
    pub gamma_cap: Option<f64>,
    pub non_integer_agents: Vec<usize>,
    pub slater_points: Option<Vec<Vec<f64>>>,
}
