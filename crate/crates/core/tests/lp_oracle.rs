//! Random LPs checked against brute-force vertex enumeration.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use primal_decomp::lp::{solve_lp, LinearProgram, LpStatus};
use primal_decomp_oracles::lp_min_by_vertex_enumeration;

fn random_lp(rng: &mut ChaCha8Rng, rows: usize, vars: usize) -> LinearProgram {
    let mut g = Array2::zeros((rows, vars));
    for r in 0..rows {
        for j in 0..vars {
            g[(r, j)] = rng.random_range(-1.0..1.0);
        }
    }
    // Right-hand sides clear the box center so most draws are feasible.
    let mut h = Array1::zeros(rows);
    for r in 0..rows {
        h[r] = rng.random_range(0.5..4.0);
    }
    let mut c = Array1::zeros(vars);
    for j in 0..vars {
        c[j] = rng.random_range(-2.0..2.0);
    }
    LinearProgram::with_ineq(
        c,
        g,
        h,
        Array1::from_elem(vars, -5.0),
        Array1::from_elem(vars, 5.0),
    )
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut optimal = 0;
    for trial in 0..60 {
        let vars = 2 + (trial % 3);
        let rows = 3 + (trial % 4);
        let lp = random_lp(&mut rng, rows, vars);
        let sol = solve_lp(&lp).unwrap();
        let oracle = lp_min_by_vertex_enumeration(&lp);
        match (sol.status, oracle) {
            (LpStatus::Optimal, Some((obj, _))) => {
                assert!(
                    (sol.obj - obj).abs() <= 1e-7 * (1.0 + obj.abs()),
                    "trial {trial}: solver {} vs oracle {obj}",
                    sol.obj
                );
                optimal += 1;
            }
            (LpStatus::Infeasible, None) => {}
            (status, oracle) => panic!(
                "trial {trial}: solver says {status:?}, oracle {}",
                if oracle.is_some() {
                    "found a vertex"
                } else {
                    "found none"
                }
            ),
        }
    }
    assert!(
        optimal >= 40,
        "only {optimal} feasible draws, generator too harsh"
    );
}

#[test]
fn five_by_eight_lp_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let lp = random_lp(&mut rng, 5, 3);
        let sol = solve_lp(&lp).unwrap();
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let (obj, _) = lp_min_by_vertex_enumeration(&lp).expect("oracle agrees on feasibility");
        assert!((sol.obj - obj).abs() <= 1e-7 * (1.0 + obj.abs()));
    }
}

#[test]
fn duality_gap_is_tight_on_random_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let lp = random_lp(&mut rng, 4, 3);
        let sol = solve_lp(&lp).unwrap();
        if sol.status != LpStatus::Optimal {
            continue;
        }
        // Dual objective reconstructed from the reported multipliers:
        // obj = -mu'h + sum over active-bound reduced costs, checked via
        // complementary slackness instead (multiplier * slack ~ 0).
        let slack = lp.h.clone() - lp.g.dot(&sol.x);
        for r in 0..lp.g.nrows() {
            assert!(sol.dual_ineq[r] >= 0.0);
            assert!(
                sol.dual_ineq[r] * slack[r].max(0.0) <= 1e-7 * (1.0 + sol.obj.abs()),
                "complementary slackness violated on row {r}"
            );
        }
    }
}
