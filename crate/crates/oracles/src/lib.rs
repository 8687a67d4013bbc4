//! Brute-force oracles and small-instance builders used by the test suites.
//!
//! Everything here trades speed for independence: LP optima come from basic
//! feasible solution enumeration with a self-contained Gaussian solver, MILP
//! optima from integer-grid enumeration, and hull optima from one monolithic
//! LP over explicitly enumerated points. None of it shares search logic with
//! the solvers under test.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use primal_decomp::lp::{solve_lp, LinearProgram, LpStatus};
use primal_decomp::milp::MilpInstance;
use primal_decomp::model::{AgentBlock, CoupledProblem, Polyhedron};

/// Solve a square linear system by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[(r, col)].abs() > m[(piv, col)].abs() {
                piv = r;
            }
        }
        if m[(piv, col)].abs() < 1e-11 {
            return None;
        }
        if piv != col {
            for t in 0..n {
                let tmp = m[(col, t)];
                m[(col, t)] = m[(piv, t)];
                m[(piv, t)] = tmp;
            }
            rhs.swap(col, piv);
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)] / m[(col, col)];
                if f != 0.0 {
                    for t in col..n {
                        m[(r, t)] -= f * m[(col, t)];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
    }
    let mut x = Array1::zeros(n);
    for i in 0..n {
        x[i] = rhs[i] / m[(i, i)];
    }
    Some(x)
}

/// All vertices of `{x : G x <= h, lo <= x <= hi}` (finite box), by
/// enumerating every choice of `n` active constraints. Intended for tiny
/// dimensions only.
pub fn enumerate_vertices(
    g: &Array2<f64>,
    h: &Array1<f64>,
    lo: &Array1<f64>,
    hi: &Array1<f64>,
) -> Vec<Array1<f64>> {
    let n = lo.len();
    let mg = g.nrows();
    // Constraint list: rows, then lower bounds, then upper bounds.
    let total = mg + 2 * n;
    let row = |k: usize| -> (Array1<f64>, f64) {
        if k < mg {
            (g.row(k).to_owned(), h[k])
        } else if k < mg + n {
            let j = k - mg;
            let mut a = Array1::zeros(n);
            a[j] = -1.0;
            (a, -lo[j])
        } else {
            let j = k - mg - n;
            let mut a = Array1::zeros(n);
            a[j] = 1.0;
            (a, hi[j])
        }
    };

    let mut vertices: Vec<Array1<f64>> = Vec::new();
    let mut choice: Vec<usize> = (0..n).collect();
    if n == 0 || total < n {
        return vertices;
    }
    loop {
        let mut a = Array2::zeros((n, n));
        let mut b = Array1::zeros(n);
        for (i, &k) in choice.iter().enumerate() {
            let (ar, br) = row(k);
            for j in 0..n {
                a[(i, j)] = ar[j];
            }
            b[i] = br;
        }
        if let Some(x) = solve_square(&a, &b) {
            if point_feasible(&x, g, h, lo, hi, 1e-7) {
                let dup = vertices
                    .iter()
                    .any(|v| v.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-7));
                if !dup {
                    vertices.push(x);
                }
            }
        }
        // Next combination of `n` constraints out of `total`.
        let mut i = n;
        loop {
            if i == 0 {
                return vertices;
            }
            i -= 1;
            if choice[i] < total - (n - i) {
                choice[i] += 1;
                for t in i + 1..n {
                    choice[t] = choice[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn point_feasible(
    x: &Array1<f64>,
    g: &Array2<f64>,
    h: &Array1<f64>,
    lo: &Array1<f64>,
    hi: &Array1<f64>,
    tol: f64,
) -> bool {
    for j in 0..x.len() {
        let span = 1.0 + x[j].abs();
        if x[j] < lo[j] - tol * span || x[j] > hi[j] + tol * span {
            return false;
        }
    }
    if g.nrows() > 0 {
        let gx = g.dot(x);
        for r in 0..g.nrows() {
            if gx[r] > h[r] + tol * (1.0 + h[r].abs()) {
                return false;
            }
        }
    }
    true
}

/// LP minimum by vertex enumeration. `None` when no vertex is feasible.
/// Requires a finite box so the minimum is attained at a vertex.
pub fn lp_min_by_vertex_enumeration(lp: &LinearProgram) -> Option<(f64, Array1<f64>)> {
    assert!(
        lp.e.nrows() == 0,
        "vertex enumeration oracle handles inequality-form LPs"
    );
    let vertices = enumerate_vertices(&lp.g, &lp.h, &lp.lo, &lp.hi);
    vertices
        .into_iter()
        .map(|v| (lp.objective.dot(&v), v))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Integer ranges of a MILP's integer variables.
fn integer_ranges(inst: &MilpInstance) -> Vec<(i64, i64)> {
    inst.int_idx
        .iter()
        .map(|&j| {
            (
                (inst.lp.lo[j] - 1e-9).ceil() as i64,
                (inst.lp.hi[j] + 1e-9).floor() as i64,
            )
        })
        .collect()
}

/// MILP minimum by exhaustive enumeration of the integer grid; continuous
/// coordinates handled by an LP per assignment (or a direct feasibility
/// check when there are none). `None` when infeasible.
pub fn milp_min_by_enumeration(inst: &MilpInstance) -> Option<(f64, Array1<f64>)> {
    let n = inst.lp.num_vars();
    let cont_idx: Vec<usize> = (0..n).filter(|j| !inst.int_idx.contains(j)).collect();
    let ranges = integer_ranges(inst);
    let mut assignment: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return None;
    }
    let mut best: Option<(f64, Array1<f64>)> = None;

    loop {
        let mut x = Array1::zeros(n);
        for (k, &j) in inst.int_idx.iter().enumerate() {
            x[j] = assignment[k] as f64;
        }
        if cont_idx.is_empty() {
            if point_feasible(&x, &inst.lp.g, &inst.lp.h, &inst.lp.lo, &inst.lp.hi, 1e-9) {
                let val = inst.lp.objective.dot(&x);
                if best.as_ref().is_none_or(|(b, _)| val < *b) {
                    best = Some((val, x.clone()));
                }
            }
        } else {
            // LP over the continuous coordinates with integers fixed.
            let mg = inst.lp.g.nrows();
            let mut g = Array2::zeros((mg, cont_idx.len()));
            let mut h = Array1::zeros(mg);
            for r in 0..mg {
                let mut shift = inst.lp.h[r];
                for &j in &inst.int_idx {
                    shift -= inst.lp.g[(r, j)] * x[j];
                }
                h[r] = shift;
                for (cj, &j) in cont_idx.iter().enumerate() {
                    g[(r, cj)] = inst.lp.g[(r, j)];
                }
            }
            let sub = LinearProgram::with_ineq(
                Array1::from_iter(cont_idx.iter().map(|&j| inst.lp.objective[j])),
                g,
                h,
                Array1::from_iter(cont_idx.iter().map(|&j| inst.lp.lo[j])),
                Array1::from_iter(cont_idx.iter().map(|&j| inst.lp.hi[j])),
            );
            if let Ok(sol) = solve_lp(&sub) {
                if sol.status == LpStatus::Optimal {
                    let fixed: f64 = inst
                        .int_idx
                        .iter()
                        .map(|&j| inst.lp.objective[j] * x[j])
                        .sum();
                    let val = fixed + sol.obj;
                    if best.as_ref().is_none_or(|(b, _)| val < *b) {
                        for (cj, &j) in cont_idx.iter().enumerate() {
                            x[j] = sol.x[cj];
                        }
                        best = Some((val, x.clone()));
                    }
                }
            }
        }

        // Odometer.
        let mut k = ranges.len();
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if assignment[k] < ranges[k].1 {
                assignment[k] += 1;
                for t in k + 1..ranges.len() {
                    assignment[t] = ranges[t].0;
                }
                break;
            }
        }
    }
}

/// Every candidate extreme point of `conv(X_i)`: for each integer
/// assignment, the vertices of the continuous slice (or the point itself
/// when the block is pure-integer). The convex hull of the returned set is
/// exactly `conv(X_i)`.
pub fn enumerate_hull_points(block: &AgentBlock) -> Vec<Array1<f64>> {
    let n = block.num_vars();
    let cont_idx: Vec<usize> = (0..n).filter(|j| !block.int_idx.contains(j)).collect();
    let ranges: Vec<(i64, i64)> = block
        .int_idx
        .iter()
        .map(|&j| {
            (
                (block.poly.lo[j] - 1e-9).ceil() as i64,
                (block.poly.hi[j] + 1e-9).floor() as i64,
            )
        })
        .collect();
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return Vec::new();
    }
    let mut assignment: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut out = Vec::new();

    loop {
        let mut x = Array1::zeros(n);
        for (k, &j) in block.int_idx.iter().enumerate() {
            x[j] = assignment[k] as f64;
        }
        if cont_idx.is_empty() {
            if point_feasible(
                &x,
                &block.poly.mat,
                &block.poly.rhs,
                &block.poly.lo,
                &block.poly.hi,
                1e-9,
            ) {
                out.push(x.clone());
            }
        } else {
            let m = block.poly.num_rows();
            let mut g = Array2::zeros((m, cont_idx.len()));
            let mut h = Array1::zeros(m);
            for r in 0..m {
                let mut shift = block.poly.rhs[r];
                for &j in &block.int_idx {
                    shift -= block.poly.mat[(r, j)] * x[j];
                }
                h[r] = shift;
                for (cj, &j) in cont_idx.iter().enumerate() {
                    g[(r, cj)] = block.poly.mat[(r, j)];
                }
            }
            let lo = Array1::from_iter(cont_idx.iter().map(|&j| block.poly.lo[j]));
            let hi = Array1::from_iter(cont_idx.iter().map(|&j| block.poly.hi[j]));
            for vert in enumerate_vertices(&g, &h, &lo, &hi) {
                let mut full = x.clone();
                for (cj, &j) in cont_idx.iter().enumerate() {
                    full[j] = vert[cj];
                }
                out.push(full);
            }
        }

        let mut k = ranges.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if assignment[k] < ranges[k].1 {
                assignment[k] += 1;
                for t in k + 1..ranges.len() {
                    assignment[t] = ranges[t].0;
                }
                break;
            }
        }
    }
}

/// Full-enumeration oracle for the penalized subproblem: one LP over all
/// hull points of the block. Returns the optimal cost.
pub fn subproblem_oracle(block: &AgentBlock, y: &Array1<f64>, m_penalty: f64) -> Option<f64> {
    let points = enumerate_hull_points(block);
    if points.is_empty() {
        return None;
    }
    let s = block.num_coupling_rows();
    let k = points.len();
    let mut g = Array2::zeros((s, k + 1));
    for (j, p) in points.iter().enumerate() {
        let ap = block.coupling.dot(p);
        for r in 0..s {
            g[(r, j)] = ap[r];
        }
    }
    for r in 0..s {
        g[(r, k)] = -1.0;
    }
    let mut e = Array2::zeros((1, k + 1));
    for j in 0..k {
        e[(0, j)] = 1.0;
    }
    let mut objective = Array1::zeros(k + 1);
    for (j, p) in points.iter().enumerate() {
        objective[j] = block.cost.dot(p);
    }
    objective[k] = m_penalty;
    let lp = LinearProgram {
        objective,
        g,
        h: y.clone(),
        e,
        f: Array1::from_elem(1, 1.0),
        lo: Array1::zeros(k + 1),
        hi: Array1::from_elem(k + 1, f64::INFINITY),
    };
    let sol = solve_lp(&lp).ok()?;
    (sol.status == LpStatus::Optimal).then_some(sol.obj)
}

/// Full-enumeration oracle for the restricted convexified problem: one LP
/// over all agents' hull points. Returns cost and per-agent optimal points,
/// or `None` when infeasible.
pub fn restricted_lp_oracle(
    problem: &CoupledProblem,
    sigma: &Array1<f64>,
) -> Option<(f64, Vec<Array1<f64>>)> {
    let s = problem.num_coupling_rows();
    let n_agents = problem.num_agents();
    let pools: Vec<Vec<Array1<f64>>> = problem.blocks.iter().map(enumerate_hull_points).collect();
    if pools.iter().any(|p| p.is_empty()) {
        return None;
    }
    let total: usize = pools.iter().map(|p| p.len()).sum();

    let mut g = Array2::zeros((s, total));
    let mut e = Array2::zeros((n_agents, total));
    let mut objective = Array1::zeros(total);
    let mut offsets = Vec::with_capacity(n_agents);
    let mut col = 0;
    for (i, pool) in pools.iter().enumerate() {
        offsets.push(col);
        for p in pool {
            let ap = problem.blocks[i].coupling.dot(p);
            for r in 0..s {
                g[(r, col)] = ap[r];
            }
            e[(i, col)] = 1.0;
            objective[col] = problem.blocks[i].cost.dot(p);
            col += 1;
        }
    }
    let lp = LinearProgram {
        objective,
        g,
        h: &problem.resource - sigma,
        e,
        f: Array1::from_elem(n_agents, 1.0),
        lo: Array1::zeros(total),
        hi: Array1::from_elem(total, f64::INFINITY),
    };
    let sol = solve_lp(&lp).ok()?;
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let mut z = Vec::with_capacity(n_agents);
    for (i, pool) in pools.iter().enumerate() {
        let mut zi = Array1::zeros(problem.blocks[i].num_vars());
        for (j, p) in pool.iter().enumerate() {
            let w = sol.x[offsets[i] + j];
            if w != 0.0 {
                zi = zi + p.mapv(|t| t * w);
            }
        }
        z.push(zi);
    }
    Some((sol.obj, z))
}

/// Exhaustive optimum of the whole coupled MILP: enumerate the product of
/// all agents' integer grids and solve one joint LP over the continuous
/// coordinates per profile. Exact, and exponentially expensive; only usable
/// on very small instances.
pub fn global_milp_by_enumeration(problem: &CoupledProblem) -> Option<(f64, Vec<Array1<f64>>)> {
    let s = problem.num_coupling_rows();

    // Flatten the integer coordinates of all agents into one odometer.
    let mut ranges: Vec<(usize, usize, i64, i64)> = Vec::new(); // (agent, var, lo, hi)
    for (i, block) in problem.blocks.iter().enumerate() {
        for &j in &block.int_idx {
            let lo = (block.poly.lo[j] - 1e-9).ceil() as i64;
            let hi = (block.poly.hi[j] + 1e-9).floor() as i64;
            if lo > hi {
                return None;
            }
            ranges.push((i, j, lo, hi));
        }
    }
    let mut assignment: Vec<i64> = ranges.iter().map(|r| r.2).collect();

    // Continuous layout: per agent, its continuous indices, flattened.
    let cont: Vec<Vec<usize>> = problem
        .blocks
        .iter()
        .map(|b| {
            (0..b.num_vars())
                .filter(|j| !b.int_idx.contains(j))
                .collect()
        })
        .collect();
    let cont_offsets: Vec<usize> = cont
        .iter()
        .scan(0usize, |acc, c| {
            let out = *acc;
            *acc += c.len();
            Some(out)
        })
        .collect();
    let n_cont: usize = cont.iter().map(|c| c.len()).sum();

    let mut best: Option<(f64, Vec<Array1<f64>>)> = None;
    loop {
        // Fixed integer parts.
        let mut xs: Vec<Array1<f64>> = problem
            .blocks
            .iter()
            .map(|b| Array1::zeros(b.num_vars()))
            .collect();
        for (k, &(i, j, _, _)) in ranges.iter().enumerate() {
            xs[i][j] = assignment[k] as f64;
        }

        let m_local: usize = problem.blocks.iter().map(|b| b.poly.num_rows()).sum();
        let mut g = Array2::zeros((m_local + s, n_cont.max(1)));
        let mut h = Array1::zeros(m_local + s);
        let mut objective = Array1::zeros(n_cont.max(1));
        let mut lo = Array1::zeros(n_cont.max(1));
        let mut hi = Array1::from_elem(n_cont.max(1), 0.0);
        let mut fixed_cost = 0.0;
        let mut row = 0;
        let mut pure_ok = true;
        for (i, block) in problem.blocks.iter().enumerate() {
            fixed_cost += block
                .int_idx
                .iter()
                .map(|&j| block.cost[j] * xs[i][j])
                .sum::<f64>();
            for (cj, &j) in cont[i].iter().enumerate() {
                objective[cont_offsets[i] + cj] = block.cost[j];
                lo[cont_offsets[i] + cj] = block.poly.lo[j];
                hi[cont_offsets[i] + cj] = block.poly.hi[j];
            }
            for r in 0..block.poly.num_rows() {
                let mut shift = block.poly.rhs[r];
                for &j in &block.int_idx {
                    shift -= block.poly.mat[(r, j)] * xs[i][j];
                }
                h[row] = shift;
                for (cj, &j) in cont[i].iter().enumerate() {
                    g[(row, cont_offsets[i] + cj)] = block.poly.mat[(r, j)];
                }
                if n_cont == 0 && shift < -1e-9 {
                    pure_ok = false;
                }
                row += 1;
            }
        }
        for r in 0..s {
            let mut shift = problem.resource[r];
            for (i, block) in problem.blocks.iter().enumerate() {
                for &j in &block.int_idx {
                    shift -= block.coupling[(r, j)] * xs[i][j];
                }
                for (cj, &j) in cont[i].iter().enumerate() {
                    g[(m_local + r, cont_offsets[i] + cj)] = block.coupling[(r, j)];
                }
            }
            h[m_local + r] = shift;
            if n_cont == 0 && shift < -1e-9 {
                pure_ok = false;
            }
        }

        if n_cont == 0 {
            if pure_ok && best.as_ref().is_none_or(|(b, _)| fixed_cost < *b) {
                best = Some((fixed_cost, xs.clone()));
            }
        } else {
            let lp = LinearProgram::with_ineq(objective, g, h, lo, hi);
            if let Ok(sol) = solve_lp(&lp) {
                if sol.status == LpStatus::Optimal {
                    let val = fixed_cost + sol.obj;
                    if best.as_ref().is_none_or(|(b, _)| val < *b) {
                        for (i, c) in cont.iter().enumerate() {
                            for (cj, &j) in c.iter().enumerate() {
                                xs[i][j] = sol.x[cont_offsets[i] + cj];
                            }
                        }
                        best = Some((val, xs.clone()));
                    }
                }
            }
        }

        // Odometer over all integer coordinates.
        let mut k = ranges.len();
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if assignment[k] < ranges[k].3 {
                assignment[k] += 1;
                for t in k + 1..ranges.len() {
                    assignment[t] = ranges[t].2;
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Small-instance builders
// ---------------------------------------------------------------------------

/// Parameters for enumerable random blocks: narrow boxes so integer grids
/// and slice-vertex enumerations stay tiny.
#[derive(Debug, Clone, Copy)]
pub struct SmallBlockParams {
    pub int_vars: usize,
    pub cont_vars: usize,
    pub local_rows: usize,
    pub box_lo: f64,
    pub box_hi: f64,
    pub coupling_rows: usize,
}

impl Default for SmallBlockParams {
    fn default() -> Self {
        Self {
            int_vars: 2,
            cont_vars: 1,
            local_rows: 2,
            box_lo: -3.0,
            box_hi: 3.0,
            coupling_rows: 2,
        }
    }
}

/// One random enumerable block. Local rows have entries in `[-1, 1]` with
/// right-hand sides in `[1, 6]` (so the box center stays feasible), costs
/// in `[-5, 5]`, coupling entries in `[-1, 1]`.
pub fn small_block(params: &SmallBlockParams, rng: &mut ChaCha8Rng) -> AgentBlock {
    let n = params.int_vars + params.cont_vars;
    let mut mat = Array2::zeros((params.local_rows, n));
    for r in 0..params.local_rows {
        for j in 0..n {
            mat[(r, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let mut rhs = Array1::zeros(params.local_rows);
    for r in 0..params.local_rows {
        rhs[r] = rng.random_range(1.0..6.0);
    }
    let mut cost = Array1::zeros(n);
    for j in 0..n {
        cost[j] = rng.random_range(-5.0..5.0);
    }
    let mut coupling = Array2::zeros((params.coupling_rows, n));
    for r in 0..params.coupling_rows {
        for j in 0..n {
            coupling[(r, j)] = rng.random_range(-1.0..1.0);
        }
    }
    AgentBlock {
        cost,
        coupling,
        poly: Polyhedron {
            mat,
            rhs,
            lo: Array1::from_elem(n, params.box_lo),
            hi: Array1::from_elem(n, params.box_hi),
        },
        int_idx: (0..params.int_vars).collect(),
    }
}

/// A small random coupled problem from enumerable blocks. The resource
/// vector is drawn per row from `resource_range`.
pub fn small_problem(
    n_agents: usize,
    params: &SmallBlockParams,
    resource_range: (f64, f64),
    seed: u64,
) -> CoupledProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<AgentBlock> = (0..n_agents)
        .map(|_| small_block(params, &mut rng))
        .collect();
    let mut resource = Array1::zeros(params.coupling_rows);
    for r in 0..params.coupling_rows {
        resource[r] = rng.random_range(resource_range.0..resource_range.1);
    }
    CoupledProblem { blocks, resource }
}
