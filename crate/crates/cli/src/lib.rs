//! Command implementations behind the `primal-decomp` binary. Each command
//! is a plain function over [`RunConfig`] so tests can drive the same code
//! paths that the CLI does.

pub mod config;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use primal_decomp::agent::recover_mixed_integer;
use primal_decomp::bounds::{
    bound_aposteriori, bound_apriori, bound_finite_time, gamma, gamma_cap, non_integer_agents,
    slater, BoundsReport, SlaterCertificate,
};
use primal_decomp::milp::{MilpOptions, MilpStatus};
use primal_decomp::model::{
    from_json, generate_random, oracle_global_milp, to_json, validate, CoupledProblem,
};
use primal_decomp::network::{
    default_penalty, erdos_renyi_connected, feasibility_first_round, run, write_trace_csv,
    RunOptions,
};
use primal_decomp::restriction::{
    compute_report, solve_restricted_lp, RestrictedLp, RestrictionReport,
};
use primal_decomp::Tolerances;

pub use config::{GeneratorConfig, RunConfig, SigmaMode};

pub fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn load_problem(cfg: &RunConfig) -> anyhow::Result<CoupledProblem> {
    match (&cfg.instance, &cfg.generator) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading instance {}", path.display()))?;
            Ok(from_json(&text)?)
        }
        (None, Some(gen)) => Ok(generate_random(&gen.params())),
        (None, None) => Ok(generate_random(&GeneratorConfig::default().params())),
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Write an instance file from the config's generator section (full-scale
/// recipe when absent).
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let gen = cfg
        .generator
        .clone()
        .unwrap_or_else(|| GeneratorConfig::paper(1, primal_decomp::model::ResourceMode::Loose));
    let problem = generate_random(&gen.params());
    let violations = validate(&problem);
    if !violations.is_empty() {
        bail!("generated instance fails validation: {}", violations[0]);
    }
    fs::write(out, to_json(&problem)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// Parse and validate an instance file; returns the violation messages
/// (empty when the file is well-formed).
pub fn cmd_validate(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match from_json(&text) {
        Ok(problem) => Ok(validate(&problem).iter().map(|v| v.to_string()).collect()),
        Err(primal_decomp::Error::Invalid(violations)) => {
            Ok(violations.iter().map(|v| v.to_string()).collect())
        }
        Err(e) => Err(e.into()),
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_agents: usize,
    pub coupling_rows: usize,
    pub sigma_mode: String,
    pub sigma: Vec<f64>,
    pub restriction: RestrictionReport,
    pub restricted_lp_feasible: bool,
    /// Optimal cost of the restricted convexified problem (when feasible).
    pub restricted_lp_cost: Option<f64>,
    pub restricted_lp_violation: Option<f64>,
    pub run: Option<RunStats>,
    pub recovered: Option<RecoveredSummary>,
    pub bounds: Option<BoundsReport>,
    pub oracle: Option<OracleSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunStats {
    pub t_final: usize,
    pub rounds_recorded: usize,
    pub master_cost_final: f64,
    pub conservation_max_err: f64,
    pub feasibility_first_round: Option<usize>,
    pub penalty_violations: Vec<usize>,
    pub stopped_early_at: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveredSummary {
    pub cost: f64,
    pub rho: Vec<f64>,
    pub usage: Vec<f64>,
    pub feasible_for_b: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSummary {
    pub j_milp: f64,
    /// recovered cost - J_milp.
    pub gap_recovered: Option<f64>,
}

/// Resolve the tightening vector for the configured mode.
pub fn resolve_sigma(
    cfg: &RunConfig,
    report: &RestrictionReport,
    s: usize,
) -> anyhow::Result<Array1<f64>> {
    Ok(match cfg.sigma.mode {
        SigmaMode::Inf => report.sigma_inf_arr(),
        SigmaMode::Ft => report.sigma_ft_arr(),
        SigmaMode::Dd => report.sigma_dd_arr(),
        SigmaMode::Custom => {
            let v = cfg
                .sigma
                .custom
                .as_ref()
                .context("sigma.mode = custom requires sigma.custom")?;
            if v.len() != s {
                bail!("sigma.custom has {} entries, expected {s}", v.len());
            }
            Array1::from_vec(v.clone())
        }
    })
}

/// Full pipeline: restriction, feasibility precheck, simulation, recovery,
/// bounds; writes `trace.csv` and `summary.json` into the output directory.
pub fn cmd_run(cfg: &RunConfig) -> anyhow::Result<RunSummary> {
    let problem = load_problem(cfg)?;
    let violations = validate(&problem);
    if !violations.is_empty() {
        bail!("instance fails validation: {}", violations[0]);
    }
    let s = problem.num_coupling_rows();
    let n = problem.num_agents();
    let tol = Tolerances::default();

    let delta = cfg.sigma.delta_for(s);
    let report = compute_report(&problem, delta)?;
    let sigma = resolve_sigma(cfg, &report, s)?;
    let sigma_mode = format!("{:?}", cfg.sigma.mode).to_lowercase();

    // Feasibility precheck of the restricted convexified problem.
    let restricted = solve_restricted_lp(&problem, &sigma)?;
    let (lp_feasible, lp_cost, lp_violation, z_star_central) = match &restricted {
        RestrictedLp::Feasible { cost, z } => (true, Some(*cost), None, Some(z.clone())),
        RestrictedLp::Infeasible { violation } => (false, None, Some(*violation), None),
    };

    let mut summary = RunSummary {
        n_agents: n,
        coupling_rows: s,
        sigma_mode,
        sigma: sigma.to_vec(),
        restriction: report.clone(),
        restricted_lp_feasible: lp_feasible,
        restricted_lp_cost: lp_cost,
        restricted_lp_violation: lp_violation,
        run: None,
        recovered: None,
        bounds: None,
        oracle: None,
    };

    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;

    if lp_feasible {
        let graph = erdos_renyi_connected(n, cfg.graph.p, cfg.graph.seed)?;
        let schedule = cfg.schedule.schedule()?;
        let m_penalty = cfg.m_penalty.unwrap_or_else(|| default_penalty(&problem));
        let opts = RunOptions {
            recovery_cadence: cfg.recovery_cadence,
            monitor_cadence: cfg.monitor_cadence,
            stop_on_feasible: cfg.stop_on_feasible,
            record_messages: false,
            ..Default::default()
        };
        let (trace, states, _) = run(
            &problem,
            &graph,
            &sigma,
            &schedule,
            m_penalty,
            cfg.t_final,
            &opts,
        )?;

        let last_round = trace.rounds.last().expect("at least one round");
        summary.run = Some(RunStats {
            t_final: cfg.t_final,
            rounds_recorded: trace.rounds.len(),
            master_cost_final: last_round.master_cost,
            conservation_max_err: trace.conservation_max_err,
            feasibility_first_round: feasibility_first_round(&trace),
            penalty_violations: trace.penalty_violations.clone(),
            stopped_early_at: trace.stopped_early_at,
        });

        let final_recovery = trace.recoveries.last().expect("final round recovery");
        summary.recovered = Some(RecoveredSummary {
            cost: final_recovery.cost,
            rho: final_recovery.rho.clone(),
            usage: final_recovery.usage.clone(),
            feasible_for_b: final_recovery.feasible,
        });

        if cfg.compute_bounds {
            summary.bounds = Some(compute_bounds_report(
                &problem,
                &sigma,
                &report,
                &states,
                final_recovery,
                delta,
                &tol,
            )?);
        }

        if cfg.oracle_milp {
            let oracle = oracle_global_milp(&problem)?;
            if oracle.status == MilpStatus::Optimal {
                summary.oracle = Some(OracleSummary {
                    j_milp: oracle.obj,
                    gap_recovered: Some(final_recovery.cost - oracle.obj),
                });
            }
        }

        let trace_path = cfg.output_dir.join("trace.csv");
        let file = fs::File::create(&trace_path)
            .with_context(|| format!("creating {}", trace_path.display()))?;
        write_trace_csv(&trace, s, file)?;
        let _ = z_star_central; // the run's own relaxed points feed the bounds
    }

    let summary_path = cfg.output_dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn compute_bounds_report(
    problem: &CoupledProblem,
    sigma: &Array1<f64>,
    report: &RestrictionReport,
    states: &[primal_decomp::agent::AgentState],
    final_recovery: &primal_decomp::network::RecoveryRecord,
    delta: f64,
    tol: &Tolerances,
) -> anyhow::Result<BoundsReport> {
    let milp_opts = MilpOptions::default();
    let mut gammas = Vec::with_capacity(problem.num_agents());
    for (i, blk) in problem.blocks.iter().enumerate() {
        gammas.push(gamma(blk, i, &milp_opts)?);
    }

    // Slater candidate: tightening witnesses first, final relaxed points as
    // the fallback (both certified members of conv(X_i) by construction).
    // A fallback certificate built from the relaxed points themselves can
    // only back the bounds that inflate with 1/zeta (B and B^t); the
    // a-posteriori bound needs a candidate independent of the optimum
    // estimate, otherwise its multiplier-mass term collapses to zero.
    let witness_cert = slater(problem, sigma, &report.witnesses());
    let witness_backed = witness_cert.is_some();
    let cert: Option<SlaterCertificate> = match witness_cert {
        Some(c) => Some(c),
        None => {
            let z_points: Vec<Array1<f64>> = states.iter().map(|st| st.z.clone()).collect();
            slater(problem, sigma, &z_points)
        }
    };

    let z_final: Vec<Array1<f64>> = states.iter().map(|st| st.z.clone()).collect();
    let x_final: Vec<Array1<f64>> = final_recovery
        .x
        .iter()
        .map(|x| Array1::from_vec(x.clone()))
        .collect();

    let mut out = BoundsReport {
        gamma: gammas.clone(),
        zeta: cert.as_ref().map(|c| c.zeta),
        j_sl: cert.as_ref().map(|c| c.j_sl),
        apriori: None,
        aposteriori: None,
        finite_time: None,
        gamma_cap: None,
        non_integer_agents: non_integer_agents(problem, &z_final, tol),
        slater_points: cert.as_ref().map(|c| c.points.clone()),
    };

    if let Some(c) = &cert {
        out.apriori = Some(bound_apriori(problem, sigma, Some(c), &gammas)?);
        if witness_backed {
            let (bp, _) = bound_aposteriori(problem, &z_final, &x_final, sigma, Some(c), tol)?;
            out.aposteriori = Some(bp);
        }
        out.gamma_cap = Some(gamma_cap(problem, c, &gammas));
        let n = problem.num_agents() as f64;
        let eps = if delta > 0.0 { delta / n } else { 1e-3 / n };
        let epsilons = vec![eps; problem.num_agents()];
        let lp_costs: Vec<f64> = states.iter().map(|st| st.lp_cost).collect();
        let mus: Vec<Array1<f64>> = states.iter().map(|st| st.mu.clone()).collect();
        out.finite_time = Some(bound_finite_time(
            problem,
            &x_final,
            &lp_costs,
            &mus,
            &epsilons,
            sigma,
            Some(c),
            &gammas,
        )?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// montecarlo
// ---------------------------------------------------------------------------

/// One trial row: both tightenings evaluated on the same instance at their
/// asymptotic solutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub ratio_inf: f64,
    pub ratio_dd: f64,
    pub solvable_inf: bool,
    pub solvable_dd: bool,
    pub subopt_inf: Option<f64>,
    pub subopt_dd: Option<f64>,
    pub feasible_inf: Option<bool>,
    pub feasible_dd: Option<bool>,
    pub cost_inf: Option<f64>,
    pub cost_dd: Option<f64>,
    pub q_inf: Option<f64>,
    pub q_dd: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MonteCarloAggregate {
    pub trials: usize,
    pub solvable_inf: usize,
    pub solvable_dd: usize,
    pub mean_ratio_inf: f64,
    pub mean_ratio_dd: f64,
    /// Means over each method's solvable trials.
    pub mean_subopt_inf: Option<f64>,
    pub mean_subopt_dd: Option<f64>,
    /// Means over trials where both methods are solvable.
    pub mean_subopt_inf_both: Option<f64>,
    pub mean_subopt_dd_both: Option<f64>,
    pub infeasible_recoveries_inf: usize,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub rows: Vec<TrialRow>,
    pub aggregate: MonteCarloAggregate,
}

/// Outcome of one tightening evaluated at its asymptotic solution.
#[derive(Debug, Clone)]
pub struct TighteningOutcome {
    pub solvable: bool,
    /// Total recovered cost.
    pub cost: Option<f64>,
    /// `(cost - q*) / |q*|` with `q*` the restricted-LP optimum.
    pub subopt: Option<f64>,
    /// Recovered points feasible for the original resources.
    pub feasible: Option<bool>,
    pub q_star: Option<f64>,
}

/// Evaluate one tightening on one instance at its asymptotic solution: the
/// restricted convexified problem is solved exactly, the induced optimal
/// allocation splits the aggregate slack evenly, and each agent recovers a
/// mixed-integer point from its own allocation.
pub fn evaluate_tightening(
    problem: &CoupledProblem,
    sigma: &Array1<f64>,
) -> anyhow::Result<TighteningOutcome> {
    let (solvable, cost, subopt, feasible, q_star) = evaluate_method(problem, sigma)?;
    Ok(TighteningOutcome {
        solvable,
        cost,
        subopt,
        feasible,
        q_star,
    })
}

type MethodOutcome = (bool, Option<f64>, Option<f64>, Option<bool>, Option<f64>);

fn evaluate_method(problem: &CoupledProblem, sigma: &Array1<f64>) -> anyhow::Result<MethodOutcome> {
    match solve_restricted_lp(problem, sigma)? {
        RestrictedLp::Infeasible { .. } => Ok((false, None, None, None, None)),
        RestrictedLp::Feasible { cost: q_star, z } => {
            let n = problem.num_agents() as f64;
            let usage = problem.coupling_usage(&z);
            let slack = (&problem.resource - sigma - &usage).mapv(|v| v / n);
            let milp_opts = MilpOptions::default();
            let tol = Tolerances::default();
            let mut xs = Vec::with_capacity(problem.num_agents());
            for (i, blk) in problem.blocks.iter().enumerate() {
                let y_i = blk.coupling.dot(&z[i]) + &slack;
                let (pt, _) = recover_mixed_integer(blk, &y_i, i, &milp_opts)?;
                xs.push(pt.x);
            }
            let cost = problem.total_cost(&xs);
            let total_usage = problem.coupling_usage(&xs);
            let feasible = total_usage
                .iter()
                .zip(problem.resource.iter())
                .all(|(u, b)| *u <= b + tol.feas * (1.0 + b.abs()))
                && problem
                    .blocks
                    .iter()
                    .zip(&xs)
                    .all(|(blk, x)| blk.contains(x, &tol));
            let subopt = (cost - q_star) / q_star.abs().max(1e-12);
            Ok((true, Some(cost), Some(subopt), Some(feasible), Some(q_star)))
        }
    }
}

/// Compare the asymptotic tightening against the dual-decomposition
/// baseline tightening over `n_trials` random instances. Per-trial seeds
/// derive from the generator seed plus the trial index, so parallel and
/// serial execution would give identical rows.
pub fn cmd_montecarlo(cfg: &RunConfig, n_trials: usize) -> anyhow::Result<MonteCarloResult> {
    if n_trials == 0 {
        bail!("n_trials must be >= 1");
    }
    let base = cfg.generator.clone().unwrap_or_default();
    let mut rows = Vec::with_capacity(n_trials);
    let mut agg = MonteCarloAggregate {
        trials: n_trials,
        ..Default::default()
    };
    let mut ratio_inf_sum = 0.0;
    let mut ratio_dd_sum = 0.0;
    let mut subopt_inf = Vec::new();
    let mut subopt_dd = Vec::new();
    let mut subopt_inf_both = Vec::new();
    let mut subopt_dd_both = Vec::new();

    for trial in 0..n_trials {
        let seed = base.seed.wrapping_add(trial as u64);
        let mut gen = base.clone();
        gen.seed = seed;
        let problem = generate_random(&gen.params());
        let report = match compute_report(&problem, 0.0) {
            Ok(r) => r,
            Err(_) => {
                agg.failed_trials += 1;
                continue;
            }
        };
        let sigma_inf = report.sigma_inf_arr();
        let sigma_dd = report.sigma_dd_arr();
        let b_norm = problem.resource.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = |v: &Array1<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ratio_inf = norm(&sigma_inf) / b_norm;
        let ratio_dd = norm(&sigma_dd) / b_norm;

        let (solv_inf, cost_inf, so_inf, feas_inf, q_inf) = evaluate_method(&problem, &sigma_inf)?;
        let (solv_dd, cost_dd, so_dd, feas_dd, q_dd) = evaluate_method(&problem, &sigma_dd)?;

        ratio_inf_sum += ratio_inf;
        ratio_dd_sum += ratio_dd;
        if solv_inf {
            agg.solvable_inf += 1;
            subopt_inf.push(so_inf.unwrap());
            if feas_inf == Some(false) {
                agg.infeasible_recoveries_inf += 1;
            }
        }
        if solv_dd {
            agg.solvable_dd += 1;
            subopt_dd.push(so_dd.unwrap());
        }
        if solv_inf && solv_dd {
            subopt_inf_both.push(so_inf.unwrap());
            subopt_dd_both.push(so_dd.unwrap());
        }
        rows.push(TrialRow {
            trial,
            seed,
            ratio_inf,
            ratio_dd,
            solvable_inf: solv_inf,
            solvable_dd: solv_dd,
            subopt_inf: so_inf,
            subopt_dd: so_dd,
            feasible_inf: feas_inf,
            feasible_dd: feas_dd,
            cost_inf,
            cost_dd,
            q_inf,
            q_dd,
        });
    }

    let done = rows.len().max(1) as f64;
    agg.mean_ratio_inf = ratio_inf_sum / done;
    agg.mean_ratio_dd = ratio_dd_sum / done;
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    agg.mean_subopt_inf = mean(&subopt_inf);
    agg.mean_subopt_dd = mean(&subopt_dd);
    agg.mean_subopt_inf_both = mean(&subopt_inf_both);
    agg.mean_subopt_dd_both = mean(&subopt_dd_both);

    Ok(MonteCarloResult {
        rows,
        aggregate: agg,
    })
}

/// CSV export for a Monte Carlo result; column order matches `TrialRow`.
pub fn write_montecarlo_csv<W: std::io::Write>(
    result: &MonteCarloResult,
    w: W,
) -> anyhow::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "trial",
        "seed",
        "ratio_inf",
        "ratio_dd",
        "solvable_inf",
        "solvable_dd",
        "subopt_inf",
        "subopt_dd",
        "feasible_inf",
        "feasible_dd",
        "cost_inf",
        "cost_dd",
        "q_inf",
        "q_dd",
    ])?;
    let opt_num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_bool = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &result.rows {
        wtr.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.ratio_inf.to_string(),
            r.ratio_dd.to_string(),
            r.solvable_inf.to_string(),
            r.solvable_dd.to_string(),
            opt_num(r.subopt_inf),
            opt_num(r.subopt_dd),
            opt_bool(r.feasible_inf),
            opt_bool(r.feasible_dd),
            opt_num(r.cost_inf),
            opt_num(r.cost_dd),
            opt_num(r.q_inf),
            opt_num(r.q_dd),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
