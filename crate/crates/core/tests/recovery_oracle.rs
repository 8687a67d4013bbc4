//! Recovery and joint-oracle checks against exhaustive enumeration.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use primal_decomp::agent::recover_mixed_integer;
use primal_decomp::lp::LinearProgram;
use primal_decomp::milp::{MilpInstance, MilpStatus};
use primal_decomp::model::oracle_global_milp;
use primal_decomp::network::{feasibility_first_round, RecoveryRecord, RunTrace};
use primal_decomp_oracles::{
    global_milp_by_enumeration, milp_min_by_enumeration, small_block, small_problem,
    SmallBlockParams,
};

/// Stage-1 instance of the recovery problem, rebuilt for the oracle.
fn stage1_instance(block: &primal_decomp::model::AgentBlock, y: &Array1<f64>) -> MilpInstance {
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
    // The oracle enumerates the integer grid, so a finite rho cap is fine:
    // no violation can exceed the worst row excess over the box.
    hi[n] = 1e3;
    MilpInstance {
        lp: LinearProgram::with_ineq(objective, g, h, lo, hi),
        int_idx: block.int_idx.clone(),
    }
}

#[test]
fn recovery_rho_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..15 {
        let block = small_block(&SmallBlockParams::default(), &mut rng);
        // Starved allocations force positive violations.
        let y = Array1::from_iter((0..2).map(|_| rng.random_range(-8.0..-2.0)));
        let (pt, rho) = match recover_mixed_integer(&block, &y, 0, &Default::default()) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let oracle = milp_min_by_enumeration(&stage1_instance(&block, &y)).expect("block nonempty");
        assert!(
            (rho - oracle.0).abs() <= 1e-6 * (1.0 + oracle.0.abs()),
            "stage-1 rho {rho} vs enumeration {}",
            oracle.0
        );
        // The recovered point respects the lifted allocation.
        let ax = block.coupling.dot(&pt.x);
        for r in 0..2 {
            assert!(ax[r] <= y[r] + rho + 1e-6);
        }
    }
}

#[test]
fn integral_feasible_relaxation_point_dominates_recovery_cost() {
    // If some feasible mixed-integer point satisfies A x <= y, recovery at
    // rho = 0 must weakly beat it on cost.
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..10 {
        let block = small_block(
            &SmallBlockParams {
                cont_vars: 0,
                ..Default::default()
            },
            &mut rng,
        );
        let candidates = primal_decomp_oracles::enumerate_hull_points(&block);
        let Some(z) = candidates.first() else {
            continue;
        };
        let y = block.coupling.dot(z);
        let (pt, rho) = recover_mixed_integer(&block, &y, 0, &Default::default()).unwrap();
        assert!(rho <= 1e-9);
        assert!(block.cost.dot(&pt.x) <= block.cost.dot(z) + 1e-7);
    }
}

#[test]
fn global_oracle_matches_exhaustive_enumeration() {
    for seed in 0..4u64 {
        let problem = small_problem(
            3,
            &SmallBlockParams {
                int_vars: 2,
                cont_vars: 1,
                local_rows: 2,
                box_lo: -1.0,
                box_hi: 1.0,
                coupling_rows: 2,
            },
            (-3.0, 1.0),
            90 + seed,
        );
        let fast = oracle_global_milp(&problem).unwrap();
        let slow = global_milp_by_enumeration(&problem);
        match (fast.status, slow) {
            (MilpStatus::Optimal, Some((obj, _))) => {
                assert!(
                    (fast.obj - obj).abs() <= 1e-6 * (1.0 + obj.abs()),
                    "seed {seed}: joint solve {} vs enumeration {obj}",
                    fast.obj
                );
            }
            (MilpStatus::Infeasible, None) => {}
            (status, slow) => panic!(
                "seed {seed}: {status:?} vs enumeration feasible = {}",
                slow.is_some()
            ),
        }
    }
}

fn synthetic_trace(recoveries: Vec<(usize, bool)>) -> RunTrace {
    RunTrace {
        rounds: Vec::new(),
        recoveries: recoveries
            .into_iter()
            .map(|(round, feasible)| RecoveryRecord {
                round,
                x: Vec::new(),
                rho: Vec::new(),
                usage: Vec::new(),
                cost: 0.0,
                feasible,
            })
            .collect(),
        conservation_max_err: 0.0,
        penalty_violations: Vec::new(),
        sigma: Vec::new(),
        stopped_early_at: None,
    }
}

#[test]
fn first_feasible_round_edges() {
    assert_eq!(
        feasibility_first_round(&synthetic_trace(vec![(0, true), (5, true)])),
        Some(0)
    );
    assert_eq!(
        feasibility_first_round(&synthetic_trace(vec![(0, false), (5, false)])),
        None
    );
    assert_eq!(
        feasibility_first_round(&synthetic_trace(vec![(0, false), (5, true), (10, true)])),
        Some(5)
    );
}
