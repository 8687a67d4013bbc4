//! Branch-and-bound checked against exhaustive enumeration.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use primal_decomp::lp::{solve_lp, LinearProgram, LpStatus};
use primal_decomp::milp::{solve_milp, MilpInstance, MilpStatus};
use primal_decomp::model::oracle_min_over_x;
use primal_decomp_oracles::{milp_min_by_enumeration, small_block, SmallBlockParams};

fn random_milp(rng: &mut ChaCha8Rng, vars: usize, ints: usize, rows: usize) -> MilpInstance {
    let mut g = Array2::zeros((rows, vars));
    for r in 0..rows {
        for j in 0..vars {
            g[(r, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let mut h = Array1::zeros(rows);
    for r in 0..rows {
        h[r] = rng.random_range(0.5..5.0);
    }
    let mut c = Array1::zeros(vars);
    for j in 0..vars {
        c[j] = rng.random_range(-3.0..3.0);
    }
    MilpInstance {
        lp: LinearProgram::with_ineq(
            c,
            g,
            h,
            Array1::from_elem(vars, -2.0),
            Array1::from_elem(vars, 2.0),
        ),
        int_idx: (0..ints).collect(),
    }
}

#[test]
fn random_milps_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut solved = 0;
    for trial in 0..80 {
        let ints = 1 + trial % 3;
        let vars = ints + trial % 2;
        let inst = random_milp(&mut rng, vars, ints, 2 + trial % 3);
        let sol = solve_milp(&inst).unwrap();
        let oracle = milp_min_by_enumeration(&inst);
        match (sol.status, oracle) {
            (MilpStatus::Optimal, Some((obj, _))) => {
                assert!(
                    (sol.obj - obj).abs() <= 1e-6 * (1.0 + obj.abs()),
                    "trial {trial}: {} vs {obj}",
                    sol.obj
                );
                solved += 1;
            }
            (MilpStatus::Infeasible, None) => {}
            (status, oracle) => panic!(
                "trial {trial}: {status:?} vs oracle feasible={}",
                oracle.is_some()
            ),
        }
    }
    assert!(solved >= 50, "only {solved} feasible instances drawn");
}

#[test]
fn block_pricing_matches_block_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..25 {
        let block = small_block(&SmallBlockParams::default(), &mut rng);
        let mut w = Array1::zeros(block.num_vars());
        for j in 0..block.num_vars() {
            w[j] = rng.random_range(-2.0..2.0);
        }
        let inst = block.milp_with_objective(w.clone());
        let sol = solve_milp(&inst).unwrap();
        match (sol.status, oracle_min_over_x(&block, &w)) {
            (MilpStatus::Optimal, Ok((obj, _))) => {
                assert!((sol.obj - obj).abs() <= 1e-6 * (1.0 + obj.abs()));
            }
            (MilpStatus::Infeasible, Err(_)) => {}
            (status, oracle) => {
                panic!("{status:?} vs oracle {:?}", oracle.map(|(v, _)| v))
            }
        }
    }
}

#[test]
fn bound_monotonicity_against_root_relaxation() {
    // Every branch-and-bound optimum dominates the root LP bound.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..25 {
        let inst = random_milp(&mut rng, 3, 2, 3);
        let root = solve_lp(&inst.lp).unwrap();
        let sol = solve_milp(&inst).unwrap();
        if sol.status == MilpStatus::Optimal && root.status == LpStatus::Optimal {
            assert!(sol.obj >= root.obj - 1e-8 * (1.0 + root.obj.abs()));
        }
    }
}

#[test]
fn oracle_never_beats_solver_points() {
    // w'x for any solver-produced x is at least the oracle minimum.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..15 {
        let block = small_block(&SmallBlockParams::default(), &mut rng);
        let mut w = Array1::zeros(block.num_vars());
        for j in 0..block.num_vars() {
            w[j] = rng.random_range(-2.0..2.0);
        }
        let inst = block.milp_with_objective(w.clone());
        let sol = solve_milp(&inst).unwrap();
        if sol.status != MilpStatus::Optimal {
            continue;
        }
        let (oracle_val, _) = oracle_min_over_x(&block, &w).unwrap();
        assert!(oracle_val <= w.dot(&sol.x) + 1e-8);
    }
}
