//! Deterministic synchronous message-passing simulator: graph generation,
//! per-round multiplier exchange, and run-trace capture.
//!
//! A round is a barrier: every agent solves its subproblem at the current
//! allocation, multipliers are exchanged as messages carrying the round
//! index, and only then do allocations update. The trace records per-round
//! state and (at the configured cadence) the recovered mixed-integer points
//! together with their aggregate coupling usage.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{init_allocation, recover_mixed_integer, AgentState, StepSizeSchedule};
use crate::config::{Tolerances, GRAPH_MAX_ATTEMPTS};
use crate::milp::MilpOptions;
use crate::model::{validate, CoupledProblem};
use crate::subproblem::SubproblemOptions;
use crate::{Error, Result};

/// Undirected, connected, simple graph.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Build from an edge list; rejects self-loops, duplicate edges,
    /// out-of-range endpoints and disconnected graphs.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("graph needs at least one node".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut adj = vec![Vec::new(); n];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({u},{v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::InvalidInput(format!(
                    "duplicate edge ({},{})",
                    key.0, key.1
                )));
            }
            normalized.push(key);
            adj[u].push(v);
            adj[v].push(u);
        }
        for nb in adj.iter_mut() {
            nb.sort_unstable();
        }
        let g = Self {
            n,
            edges: normalized,
            adj,
        };
        if !g.is_connected() {
            return Err(Error::Disconnected(format!(
                "{n} nodes, {} edges",
                g.edges.len()
            )));
        }
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    fn bfs_depths(&self, start: usize) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.n];
        depth[start] = Some(0);
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let du = depth[u].unwrap();
            for &v in &self.adj[u] {
                if depth[v].is_none() {
                    depth[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        depth
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_depths(0).iter().all(|d| d.is_some())
    }

    /// Largest BFS eccentricity; 0 for a single node.
    pub fn diameter(&self) -> usize {
        (0..self.n)
            .map(|s| {
                self.bfs_depths(s)
                    .iter()
                    .map(|d| d.expect("connected by construction"))
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }
}

/// Sample G(n, p) on a fresh seed stream per attempt until the draw is
/// connected. Deterministic in `seed`.
pub fn erdos_renyi_connected(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidInput("graph needs at least one node".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "edge probability {p} outside (0, 1]"
        )));
    }
    for attempt in 0..GRAPH_MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for nb in adj.iter_mut() {
            nb.sort_unstable();
        }
        let g = Graph { n, edges, adj };
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GraphGiveUp {
        attempts: GRAPH_MAX_ATTEMPTS,
    })
}

/// One delivered multiplier message.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage {
    pub from: usize,
    pub to: usize,
    pub round: usize,
    pub payload: Array1<f64>,
}

/// Recovery data recorded for one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub round: usize,
    /// Recovered mixed-integer point per agent.
    pub x: Vec<Vec<f64>>,
    /// Stage-1 violation per agent.
    pub rho: Vec<f64>,
    /// Aggregate coupling usage of the recovered points.
    pub usage: Vec<f64>,
    /// Total cost of the recovered points.
    pub cost: f64,
    /// Usage within `b` and every point mixed-integer feasible.
    pub feasible: bool,
}

/// Per-round state snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub y: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    /// Subproblem optimal cost per agent (penalty included).
    pub lp_cost: Vec<f64>,
    /// Subproblem violation per agent.
    pub v: Vec<f64>,
    /// Sum of the per-agent subproblem costs.
    pub master_cost: f64,
}

/// Full run history plus run-level diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrace {
    pub rounds: Vec<RoundRecord>,
    pub recoveries: Vec<RecoveryRecord>,
    /// Worst observed deviation of `sum_i y_i` from `b - sigma`.
    pub conservation_max_err: f64,
    /// Agents whose final subproblem violation stayed above tolerance,
    /// indicating the penalty M was chosen too small.
    pub penalty_violations: Vec<usize>,
    pub sigma: Vec<f64>,
    /// Round at which an early stop triggered, if any.
    pub stopped_early_at: Option<usize>,
}

/// Simulator knobs.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Recover mixed-integer points every k-th round (0 = final round only).
    pub recovery_cadence: usize,
    /// The feasibility monitor only inspects recoveries on rounds that are
    /// multiples of this cadence (0 = every recovery).
    pub monitor_cadence: usize,
    /// Stop as soon as a monitored recovery is feasible for `b`.
    pub stop_on_feasible: bool,
    /// Retain the per-round message log (memory-heavy on long runs).
    pub record_messages: bool,
    pub tol: Tolerances,
    pub subproblem: SubproblemOptions,
    pub milp: MilpOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            recovery_cadence: 1,
            monitor_cadence: 1,
            stop_on_feasible: false,
            record_messages: false,
            tol: Tolerances::default(),
            subproblem: SubproblemOptions::default(),
            milp: MilpOptions::default(),
        }
    }
}

/// Penalty default: `10 * max_i (||c_i||_1 + 1)`.
pub fn default_penalty(problem: &CoupledProblem) -> f64 {
    10.0 * problem
        .blocks
        .iter()
        .map(|b| b.cost.iter().map(|v| v.abs()).sum::<f64>() + 1.0)
        .fold(1.0f64, f64::max)
}

/// Execute `t_final + 1` synchronous rounds (t = 0..=t_final) and record the
/// trace. Returns the trace together with the final agent states and the
/// message log (empty unless requested).
pub fn run(
    problem: &CoupledProblem,
    graph: &Graph,
    sigma: &Array1<f64>,
    schedule: &StepSizeSchedule,
    m_penalty: f64,
    t_final: usize,
    opts: &RunOptions,
) -> Result<(RunTrace, Vec<AgentState>, Vec<RoundMessage>)> {
    let violations = validate(problem);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let n = problem.num_agents();
    if graph.num_nodes() != n {
        return Err(Error::InvalidInput(format!(
            "graph has {} nodes, problem has {n} agents",
            graph.num_nodes()
        )));
    }
    if sigma.len() != problem.num_coupling_rows() {
        return Err(Error::InvalidInput("sigma length != coupling rows".into()));
    }

    let target = &problem.resource - sigma;
    let y0 = init_allocation(problem, sigma);
    let mut states: Vec<AgentState> = problem
        .blocks
        .iter()
        .cloned()
        .enumerate()
        .zip(y0)
        .map(|((i, blk), y)| AgentState::new(i, Arc::new(blk), y))
        .collect();

    let mut trace = RunTrace {
        rounds: Vec::with_capacity(t_final + 1),
        recoveries: Vec::new(),
        conservation_max_err: 0.0,
        penalty_violations: Vec::new(),
        sigma: sigma.to_vec(),
        stopped_early_at: None,
    };
    let mut message_log = Vec::new();

    for t in 0..=t_final {
        // Conservation check before anything else this round.
        let mut sum_y: Array1<f64> = Array1::zeros(target.len());
        for st in &states {
            sum_y += &st.y;
        }
        let err = (&sum_y - &target)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        trace.conservation_max_err = trace.conservation_max_err.max(err);

        // Phase 1: every agent solves its subproblem at y^t.
        for st in states.iter_mut() {
            st.solve_subproblem(m_penalty, &opts.subproblem)?;
        }

        let master_cost = states.iter().map(|s| s.lp_cost).sum();
        trace.rounds.push(RoundRecord {
            round: t,
            y: states.iter().map(|s| s.y.to_vec()).collect(),
            mu: states.iter().map(|s| s.mu.to_vec()).collect(),
            lp_cost: states.iter().map(|s| s.lp_cost).collect(),
            v: states.iter().map(|s| s.v).collect(),
            master_cost,
        });

        // Optional recovery at this round's allocation.
        let recover_now = match opts.recovery_cadence {
            0 => t == t_final,
            k => t % k == 0 || t == t_final,
        };
        if recover_now {
            let rec = recover_round(problem, &states, t, opts)?;
            let feasible = rec.feasible;
            trace.recoveries.push(rec);
            let monitored = match opts.monitor_cadence {
                0 => true,
                k => t % k == 0,
            };
            if opts.stop_on_feasible && monitored && feasible {
                trace.stopped_early_at = Some(t);
                break;
            }
        }

        // Phase 2: exchange multipliers (same-round messages only) and
        // update allocations.
        let mut inboxes: Vec<Vec<Array1<f64>>> = vec![Vec::new(); n];
        for i in 0..n {
            for &j in graph.neighbors(i) {
                // Message from j to i carrying mu_j^t.
                if opts.record_messages {
                    message_log.push(RoundMessage {
                        from: j,
                        to: i,
                        round: t,
                        payload: states[j].mu.clone(),
                    });
                }
                inboxes[i].push(states[j].mu.clone());
            }
        }
        let alpha = schedule.value(t);
        for (st, inbox) in states.iter_mut().zip(&inboxes) {
            st.update_allocation(inbox, alpha);
        }
    }

    for st in &states {
        if st.v > opts.tol.feas * (1.0 + st.y.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            trace.penalty_violations.push(st.id);
        }
    }
    Ok((trace, states, message_log))
}

fn recover_round(
    problem: &CoupledProblem,
    states: &[AgentState],
    t: usize,
    opts: &RunOptions,
) -> Result<RecoveryRecord> {
    let mut xs = Vec::with_capacity(states.len());
    let mut rhos = Vec::with_capacity(states.len());
    for st in states {
        let (pt, rho) = recover_mixed_integer(&st.block, &st.y, st.id, &opts.milp)?;
        xs.push(pt.x);
        rhos.push(rho);
    }
    let usage = problem.coupling_usage(&xs);
    let cost = problem.total_cost(&xs);
    let tol = &opts.tol;
    let usage_ok = usage
        .iter()
        .zip(problem.resource.iter())
        .all(|(u, b)| *u <= b + tol.feas * (1.0 + b.abs()));
    let points_ok = problem
        .blocks
        .iter()
        .zip(&xs)
        .all(|(blk, x)| blk.contains(x, tol));
    Ok(RecoveryRecord {
        round: t,
        x: xs.iter().map(|x| x.to_vec()).collect(),
        rho: rhos,
        usage: usage.to_vec(),
        cost,
        feasible: usage_ok && points_ok,
    })
}

/// Smallest recorded round whose recovered points are feasible for the
/// original resource vector; `None` when no recorded recovery is.
pub fn feasibility_first_round(trace: &RunTrace) -> Option<usize> {
    trace
        .recoveries
        .iter()
        .find(|r| r.feasible)
        .map(|r| r.round)
}

/// CSV export: one row per (round, agent) with columns
/// `t,i,y_0..y_{S-1},mu_0..mu_{S-1},rho,cost`. `rho` is empty on rounds
/// without a recovery; `cost` is the agent's subproblem optimal cost.
pub fn write_trace_csv<W: Write>(trace: &RunTrace, s: usize, w: W) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "i".to_string()];
    for r in 0..s {
        header.push(format!("y_{r}"));
    }
    for r in 0..s {
        header.push(format!("mu_{r}"));
    }
    header.push("rho".into());
    header.push("cost".into());
    wtr.write_record(&header)?;

    for round in &trace.rounds {
        let recovery = trace.recoveries.iter().find(|r| r.round == round.round);
        for i in 0..round.y.len() {
            let mut rec = vec![round.round.to_string(), i.to_string()];
            for v in &round.y[i] {
                rec.push(v.to_string());
            }
            for v in &round.mu[i] {
                rec.push(v.to_string());
            }
            rec.push(match recovery {
                Some(r) => r.rho[i].to_string(),
                None => String::new(),
            });
            rec.push(round.lp_cost[i].to_string());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()
}
