//! Problem data types, validation, random instance generation, JSON
//! serialization and brute-force oracles for desk-scale verification.
//!
//! All types are immutable after construction; generators take explicit
//! seeds and there is no hidden global state.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Tolerances, ENUM_MAX_GRID, ENUM_MAX_INT_VARS};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::milp::{solve_milp_with, MilpInstance, MilpOptions, MilpStatus};
use crate::{Error, Result, Violation};

/// `{ x : mat x <= rhs, lo <= x <= hi }`. The box must be finite so the set
/// is compact.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub mat: Array2<f64>,
    pub rhs: Array1<f64>,
    pub lo: Array1<f64>,
    pub hi: Array1<f64>,
}

impl Polyhedron {
    pub fn num_vars(&self) -> usize {
        self.lo.len()
    }

    pub fn num_rows(&self) -> usize {
        self.mat.nrows()
    }

    /// Box-only polyhedron (no inequality rows).
    pub fn from_box(lo: Array1<f64>, hi: Array1<f64>) -> Self {
        let n = lo.len();
        Self {
            mat: Array2::zeros((0, n)),
            rhs: Array1::zeros(0),
            lo,
            hi,
        }
    }

    /// Membership within the feasibility tolerance (rows scaled by rhs size).
    pub fn contains(&self, x: &Array1<f64>, tol: &Tolerances) -> bool {
        if x.len() != self.num_vars() {
            return false;
        }
        for j in 0..x.len() {
            let span = 1.0 + x[j].abs();
            if x[j] < self.lo[j] - tol.feas * span || x[j] > self.hi[j] + tol.feas * span {
                return false;
            }
        }
        if self.num_rows() > 0 {
            let ax = self.mat.dot(x);
            for r in 0..self.num_rows() {
                if ax[r] > self.rhs[r] + tol.feas * (1.0 + self.rhs[r].abs()) {
                    return false;
                }
            }
        }
        true
    }
}

/// One agent's private data: cost vector, coupling rows, local polyhedron
/// and the indices of integer-constrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBlock {
    pub cost: Array1<f64>,
    pub coupling: Array2<f64>,
    pub poly: Polyhedron,
    pub int_idx: Vec<usize>,
}

impl AgentBlock {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_integer(&self) -> usize {
        self.int_idx.len()
    }

    pub fn num_coupling_rows(&self) -> usize {
        self.coupling.nrows()
    }

    /// True iff `x` lies in the mixed-integer set (polyhedron membership
    /// plus integrality on `int_idx`).
    pub fn contains(&self, x: &Array1<f64>, tol: &Tolerances) -> bool {
        if !self.poly.contains(x, tol) {
            return false;
        }
        self.int_idx
            .iter()
            .all(|&j| (x[j] - x[j].round()).abs() <= tol.int)
    }

    /// MILP over the block's mixed-integer set with the given objective.
    pub fn milp_with_objective(&self, objective: Array1<f64>) -> MilpInstance {
        MilpInstance {
            lp: LinearProgram::with_ineq(
                objective,
                self.poly.mat.clone(),
                self.poly.rhs.clone(),
                self.poly.lo.clone(),
                self.poly.hi.clone(),
            ),
            int_idx: self.int_idx.clone(),
        }
    }
}

/// `N` agent blocks plus the shared resource vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledProblem {
    pub blocks: Vec<AgentBlock>,
    pub resource: Array1<f64>,
}

impl CoupledProblem {
    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_coupling_rows(&self) -> usize {
        self.resource.len()
    }

    /// Total cost of one point per agent.
    pub fn total_cost(&self, xs: &[Array1<f64>]) -> f64 {
        self.blocks.iter().zip(xs).map(|(b, x)| b.cost.dot(x)).sum()
    }

    /// Aggregate coupling usage of one point per agent.
    pub fn coupling_usage(&self, xs: &[Array1<f64>]) -> Array1<f64> {
        let mut usage = Array1::zeros(self.num_coupling_rows());
        for (b, x) in self.blocks.iter().zip(xs) {
            usage = usage + b.coupling.dot(x);
        }
        usage
    }
}

/// A point of one agent's mixed-integer set.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedIntegerPoint {
    pub x: Array1<f64>,
    pub owner: usize,
}

/// Diagnostic validation; the empty list means every invariant holds.
pub fn validate(problem: &CoupledProblem) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |block: Option<usize>, field: &str, reason: String| {
        out.push(Violation {
            block,
            field: field.to_string(),
            reason,
        });
    };

    let n_agents = problem.num_agents();
    let s = problem.num_coupling_rows();
    if n_agents == 0 {
        push(None, "blocks", "no agents (N must be >= 1)".into());
    }
    if s == 0 {
        push(None, "b", "no coupling rows (S must be >= 1)".into());
    }
    if problem.resource.iter().any(|v| !v.is_finite()) {
        push(None, "b", "resource vector has non-finite entries".into());
    }

    for (i, blk) in problem.blocks.iter().enumerate() {
        let n = blk.num_vars();
        let p = &blk.poly;
        if p.lo.len() != n || p.hi.len() != n {
            push(Some(i), "lo/hi", format!("bound length != {n}"));
            continue;
        }
        for j in 0..n {
            if !p.lo[j].is_finite() || !p.hi[j].is_finite() {
                push(
                    Some(i),
                    "lo/hi",
                    format!("component {j} is not finite (compactness requires a box)"),
                );
            } else if p.lo[j] > p.hi[j] {
                push(
                    Some(i),
                    "lo/hi",
                    format!("lo > hi on component {j} ({} > {})", p.lo[j], p.hi[j]),
                );
            }
        }
        if p.mat.nrows() != p.rhs.len() {
            push(
                Some(i),
                "D/d",
                format!("{} rows vs {} rhs entries", p.mat.nrows(), p.rhs.len()),
            );
        }
        if p.mat.nrows() > 0 && p.mat.ncols() != n {
            push(
                Some(i),
                "D",
                format!("{} columns, expected {n}", p.mat.ncols()),
            );
        }
        if p.mat.iter().any(|v| !v.is_finite()) || p.rhs.iter().any(|v| !v.is_finite()) {
            push(Some(i), "D/d", "non-finite entries".into());
        }
        if blk.coupling.nrows() != s {
            push(
                Some(i),
                "A",
                format!("{} coupling rows, expected {s}", blk.coupling.nrows()),
            );
        }
        if blk.coupling.nrows() > 0 && blk.coupling.ncols() != n {
            push(
                Some(i),
                "A",
                format!("{} columns, expected {n}", blk.coupling.ncols()),
            );
        }
        if blk.coupling.iter().any(|v| !v.is_finite()) {
            push(Some(i), "A", "non-finite entries".into());
        }
        if blk.cost.iter().any(|v| !v.is_finite()) {
            push(Some(i), "c", "non-finite entries".into());
        }
        let mut seen = vec![false; n];
        for &j in &blk.int_idx {
            if j >= n {
                push(Some(i), "int_idx", format!("index {j} out of range"));
            } else if seen[j] {
                push(Some(i), "int_idx", format!("duplicate index {j}"));
            } else {
                seen[j] = true;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Random instance generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceMode {
    Loose,
    Tight,
}

/// Intervals (as per-agent coefficients, multiplied by `N`) from which the
/// resource vector is drawn. The paper-scale defaults produce instances with
/// 15 variables per agent; desk-scale instances have far fewer variables per
/// agent, so their resource coefficients are rescaled to keep the loose /
/// tight regimes meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceScale {
    pub loose: (f64, f64),
    pub tight: (f64, f64),
}

impl ResourceScale {
    /// Intervals for the full-scale recipe (p=10, q=5, m=20).
    pub fn paper() -> Self {
        Self {
            loose: (-20.0, -15.0),
            tight: (-180.0, -175.0),
        }
    }

    /// Intervals calibrated for desk instances (p=2, q=1, m=4).
    pub fn desk() -> Self {
        Self {
            loose: (-30.0, -25.0),
            tight: (-80.0, -75.0),
        }
    }
}

/// Parameters of the random generator. `int_vars`/`cont_vars`/`local_rows`
/// are per-agent sizes, shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n_agents: usize,
    pub coupling_rows: usize,
    pub int_vars: usize,
    pub cont_vars: usize,
    pub local_rows: usize,
    pub seed: u64,
    pub resource_mode: ResourceMode,
    pub scale: ResourceScale,
    /// Add a tiny uniform perturbation in `[-1e-6, 1e-6]` to each cost
    /// vector so the convexified problem has a unique (vertex) optimum.
    pub perturb_costs: bool,
}

impl GeneratorParams {
    /// Full-scale recipe: 300 agents, 5 coupling rows, 10 integer and 5
    /// continuous variables per agent, 20 local rows.
    pub fn paper(seed: u64, resource_mode: ResourceMode) -> Self {
        Self {
            n_agents: 300,
            coupling_rows: 5,
            int_vars: 10,
            cont_vars: 5,
            local_rows: 20,
            seed,
            resource_mode,
            scale: ResourceScale::paper(),
            perturb_costs: true,
        }
    }

    /// Desk-scale preset: 20 agents, 2 coupling rows, 2 integer and 1
    /// continuous variable per agent, 4 local rows.
    pub fn desk(seed: u64, resource_mode: ResourceMode) -> Self {
        Self {
            n_agents: 20,
            coupling_rows: 2,
            int_vars: 2,
            cont_vars: 1,
            local_rows: 4,
            seed,
            resource_mode,
            scale: ResourceScale::desk(),
            perturb_costs: true,
        }
    }
}

const BOX_HALF_WIDTH: f64 = 60.0;
const COST_PERTURBATION: f64 = 1e-6;

/// Draw a random instance. Local rows have entries in `[0,1]` with
/// right-hand sides in `[20,40]`, boxes are `[-60, 60]`, costs are
/// `D' c_hat` with `c_hat` in `[0,5]`, coupling entries in `[0,1]`, and the
/// resource vector is drawn from the mode's interval scaled by `N`.
/// Identical parameters (including the seed) give bit-identical instances.
///
/// Panics if any size parameter except `cont_vars` is zero.
pub fn generate_random(params: &GeneratorParams) -> CoupledProblem {
    assert!(params.n_agents >= 1, "n_agents must be >= 1");
    assert!(params.coupling_rows >= 1, "coupling_rows must be >= 1");
    assert!(params.int_vars >= 1, "int_vars must be >= 1");
    assert!(params.local_rows >= 1, "local_rows must be >= 1");

    let n = params.int_vars + params.cont_vars;
    let m = params.local_rows;
    let s = params.coupling_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut blocks = Vec::with_capacity(params.n_agents);
    for _ in 0..params.n_agents {
        let mut mat = Array2::zeros((m, n));
        for r in 0..m {
            for j in 0..n {
                mat[(r, j)] = rng.random_range(0.0..1.0);
            }
        }
        let mut rhs = Array1::zeros(m);
        for r in 0..m {
            rhs[r] = rng.random_range(20.0..40.0);
        }
        let mut c_hat = Array1::zeros(m);
        for r in 0..m {
            c_hat[r] = rng.random_range(0.0..5.0);
        }
        let mut coupling = Array2::zeros((s, n));
        for r in 0..s {
            for j in 0..n {
                coupling[(r, j)] = rng.random_range(0.0..1.0);
            }
        }
        let mut cost = mat.t().dot(&c_hat);
        if params.perturb_costs {
            for j in 0..n {
                cost[j] += rng.random_range(-COST_PERTURBATION..COST_PERTURBATION);
            }
        }
        blocks.push(AgentBlock {
            cost,
            coupling,
            poly: Polyhedron {
                mat,
                rhs,
                lo: Array1::from_elem(n, -BOX_HALF_WIDTH),
                hi: Array1::from_elem(n, BOX_HALF_WIDTH),
            },
            int_idx: (0..params.int_vars).collect(),
        });
    }

    let (lo_coef, hi_coef) = match params.resource_mode {
        ResourceMode::Loose => params.scale.loose,
        ResourceMode::Tight => params.scale.tight,
    };
    let n_f = params.n_agents as f64;
    let mut resource = Array1::zeros(s);
    for r in 0..s {
        resource[r] = rng.random_range(lo_coef * n_f..hi_coef * n_f);
    }

    CoupledProblem { blocks, resource }
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------
//
// On-disk schema (documented in the repository README):
//
//   { "N": usize, "S": usize, "b": [f64; S],
//     "blocks": [ { "c": [f64; n], "A": [[f64; n]; S], "D": [[f64; n]; m],
//                   "d": [f64; m], "lo": [f64; n], "hi": [f64; n],
//                   "int_idx": [usize] } ] }
//
// Matrices are stored row-major as arrays of rows; indices are 0-based.

#[derive(Serialize, Deserialize)]
struct BlockSchema {
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d_mat: Vec<Vec<f64>>,
    d: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    int_idx: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ProblemSchema {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "S")]
    s: usize,
    b: Vec<f64>,
    blocks: Vec<BlockSchema>,
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).to_vec()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], ncols_hint: usize) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(ncols_hint, |r| r.len());
    let mut m = Array2::zeros((nrows, ncols));
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::InvalidInput(format!(
                "ragged matrix: row {r} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for (j, v) in row.iter().enumerate() {
            m[(r, j)] = *v;
        }
    }
    Ok(m)
}

/// Serialize to the documented JSON schema. Numbers round-trip exactly
/// (shortest decimal representation recovering the same bits).
pub fn to_json(problem: &CoupledProblem) -> String {
    let schema = ProblemSchema {
        n: problem.num_agents(),
        s: problem.num_coupling_rows(),
        b: problem.resource.to_vec(),
        blocks: problem
            .blocks
            .iter()
            .map(|b| BlockSchema {
                c: b.cost.to_vec(),
                a: matrix_to_rows(&b.coupling),
                d_mat: matrix_to_rows(&b.poly.mat),
                d: b.poly.rhs.to_vec(),
                lo: b.poly.lo.to_vec(),
                hi: b.poly.hi.to_vec(),
                int_idx: b.int_idx.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&schema).expect("schema serialization cannot fail")
}

/// Parse and validate a problem from its JSON representation.
pub fn from_json(text: &str) -> Result<CoupledProblem> {
    let schema: ProblemSchema = serde_json::from_str(text).map_err(|e| {
        let line = e.line();
        let column = e.column();
        let offset = byte_offset(text, line, column);
        Error::Parse {
            line,
            column,
            offset,
            msg: e.to_string(),
        }
    })?;

    let mut blocks = Vec::with_capacity(schema.blocks.len());
    for blk in &schema.blocks {
        let n = blk.c.len();
        blocks.push(AgentBlock {
            cost: Array1::from_vec(blk.c.clone()),
            coupling: rows_to_matrix(&blk.a, n)?,
            poly: Polyhedron {
                mat: rows_to_matrix(&blk.d_mat, n)?,
                rhs: Array1::from_vec(blk.d.clone()),
                lo: Array1::from_vec(blk.lo.clone()),
                hi: Array1::from_vec(blk.hi.clone()),
            },
            int_idx: blk.int_idx.clone(),
        });
    }
    let problem = CoupledProblem {
        blocks,
        resource: Array1::from_vec(schema.b),
    };
    if problem.num_agents() != schema.n {
        return Err(Error::Invalid(vec![Violation {
            block: None,
            field: "N".into(),
            reason: format!(
                "declares {} but {} blocks given",
                schema.n,
                problem.num_agents()
            ),
        }]));
    }
    if problem.num_coupling_rows() != schema.s {
        return Err(Error::Invalid(vec![Violation {
            block: None,
            field: "S".into(),
            reason: format!(
                "declares {} but b has {} entries",
                schema.s,
                problem.num_coupling_rows()
            ),
        }]));
    }
    let violations = validate(&problem);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    Ok(problem)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (idx, l) in text.split('\n').enumerate() {
        if idx + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

// ---------------------------------------------------------------------------
// Enumeration and oracles
// ---------------------------------------------------------------------------

/// Iterator over all integer assignments of a block's integer coordinates,
/// lexicographic from the lower bounds.
#[derive(Debug, Clone)]
pub struct IntegerGrid {
    ranges: Vec<(i64, i64)>,
    current: Vec<i64>,
    done: bool,
}

impl IntegerGrid {
    pub fn size(&self) -> u128 {
        self.ranges
            .iter()
            .map(|(lo, hi)| (hi - lo + 1) as u128)
            .product()
    }
}

impl Iterator for IntegerGrid {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        // Advance like an odometer, last coordinate fastest.
        let mut k = self.ranges.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            if self.current[k] < self.ranges[k].1 {
                self.current[k] += 1;
                for reset in k + 1..self.ranges.len() {
                    self.current[reset] = self.ranges[reset].0;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Enumerate every assignment of the integer coordinates within the box.
/// The assignment vector is ordered like `block.int_idx`. Errors when the
/// block exceeds the enumeration caps or an integer range is empty.
pub fn enumerate_integer_points(block: &AgentBlock) -> Result<IntegerGrid> {
    let p = block.num_integer();
    if p > ENUM_MAX_INT_VARS {
        return Err(Error::CapExceeded(format!(
            "{p} integer variables exceed the cap of {ENUM_MAX_INT_VARS}"
        )));
    }
    let mut ranges = Vec::with_capacity(p);
    for &j in &block.int_idx {
        let lo = (block.poly.lo[j] - 1e-9).ceil() as i64;
        let hi = (block.poly.hi[j] + 1e-9).floor() as i64;
        if lo > hi {
            return Err(Error::InfeasibleBlock(format!(
                "integer coordinate {j} has empty range [{}, {}]",
                block.poly.lo[j], block.poly.hi[j]
            )));
        }
        ranges.push((lo, hi));
    }
    let grid = IntegerGrid {
        current: ranges.iter().map(|(lo, _)| *lo).collect(),
        done: ranges.is_empty(),
        ranges,
    };
    if grid.ranges.is_empty() {
        // A block without integer coordinates yields the single empty
        // assignment.
        return Ok(IntegerGrid {
            ranges: Vec::new(),
            current: Vec::new(),
            done: false,
        });
    }
    if grid.size() > ENUM_MAX_GRID {
        return Err(Error::CapExceeded(format!(
            "integer grid has {} points, cap is {ENUM_MAX_GRID}",
            grid.size()
        )));
    }
    Ok(grid)
}

/// Exact minimizer of `w' x` over the block's mixed-integer set, by
/// enumerating integer assignments and solving the continuous-coordinate LP
/// for each. Ties resolve to the first assignment in enumeration order.
pub fn oracle_min_over_x(block: &AgentBlock, w: &Array1<f64>) -> Result<(f64, MixedIntegerPoint)> {
    oracle_min_over_x_owned(block, w, 0)
}

fn oracle_min_over_x_owned(
    block: &AgentBlock,
    w: &Array1<f64>,
    owner: usize,
) -> Result<(f64, MixedIntegerPoint)> {
    let n = block.num_vars();
    if w.len() != n {
        return Err(Error::InvalidInput(format!(
            "objective has {} entries, block has {n} variables",
            w.len()
        )));
    }
    let tol = Tolerances::default();
    let cont_idx: Vec<usize> = (0..n).filter(|j| !block.int_idx.contains(j)).collect();
    let mut best: Option<(f64, Array1<f64>)> = None;

    for assignment in enumerate_integer_points(block)? {
        let mut x = Array1::zeros(n);
        for (k, &j) in block.int_idx.iter().enumerate() {
            x[j] = assignment[k] as f64;
        }
        if cont_idx.is_empty() {
            if block.poly.contains(&x, &tol) {
                let val = w.dot(&x);
                if best.as_ref().is_none_or(|(b, _)| val < b - 1e-12) {
                    best = Some((val, x));
                }
            }
            continue;
        }

        // LP over the continuous coordinates with integers substituted.
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
        let lp = LinearProgram::with_ineq(
            Array1::from_iter(cont_idx.iter().map(|&j| w[j])),
            g,
            h,
            Array1::from_iter(cont_idx.iter().map(|&j| block.poly.lo[j])),
            Array1::from_iter(cont_idx.iter().map(|&j| block.poly.hi[j])),
        );
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let mut fixed: f64 = block.int_idx.iter().map(|&j| w[j] * x[j]).sum();
        fixed += sol.obj;
        if best.as_ref().is_none_or(|(b, _)| fixed < b - 1e-12) {
            for (cj, &j) in cont_idx.iter().enumerate() {
                x[j] = sol.x[cj];
            }
            best = Some((fixed, x));
        }
    }

    match best {
        Some((val, x)) => Ok((val, MixedIntegerPoint { x, owner })),
        None => Err(Error::InfeasibleBlock(format!(
            "block {owner}: no integer assignment admits a feasible continuous completion"
        ))),
    }
}

/// Optimum of the full coupled MILP, intended for tests and acceptance runs
/// on small instances only.
#[derive(Debug, Clone)]
pub struct GlobalMilp {
    pub status: MilpStatus,
    pub obj: f64,
    pub x: Vec<Array1<f64>>,
}

const GLOBAL_MAX_INT_VARS: usize = 30;
const GLOBAL_MAX_VARS: usize = 80;

/// Solve the coupled problem exactly by stacking every block into one joint
/// MILP. Refuses instances beyond the size caps.
pub fn oracle_global_milp(problem: &CoupledProblem) -> Result<GlobalMilp> {
    let n_total: usize = problem.blocks.iter().map(|b| b.num_vars()).sum();
    let p_total: usize = problem.blocks.iter().map(|b| b.num_integer()).sum();
    if n_total > GLOBAL_MAX_VARS || p_total > GLOBAL_MAX_INT_VARS {
        return Err(Error::SizeCap(format!(
            "joint instance has {n_total} variables ({p_total} integer); caps are \
             {GLOBAL_MAX_VARS}/{GLOBAL_MAX_INT_VARS}"
        )));
    }
    let s = problem.num_coupling_rows();
    let m_local: usize = problem.blocks.iter().map(|b| b.poly.num_rows()).sum();
    let m = m_local + s;

    let mut g = Array2::zeros((m, n_total));
    let mut h = Array1::zeros(m);
    let mut c = Array1::zeros(n_total);
    let mut lo = Array1::zeros(n_total);
    let mut hi = Array1::zeros(n_total);
    let mut int_idx = Vec::new();

    let mut col = 0;
    let mut row = 0;
    for blk in &problem.blocks {
        let n = blk.num_vars();
        for r in 0..blk.poly.num_rows() {
            for j in 0..n {
                g[(row, col + j)] = blk.poly.mat[(r, j)];
            }
            h[row] = blk.poly.rhs[r];
            row += 1;
        }
        for r in 0..s {
            for j in 0..n {
                g[(m_local + r, col + j)] = blk.coupling[(r, j)];
            }
        }
        for j in 0..n {
            c[col + j] = blk.cost[j];
            lo[col + j] = blk.poly.lo[j];
            hi[col + j] = blk.poly.hi[j];
        }
        for &j in &blk.int_idx {
            int_idx.push(col + j);
        }
        col += n;
    }
    for r in 0..s {
        h[m_local + r] = problem.resource[r];
    }

    let inst = MilpInstance {
        lp: LinearProgram::with_ineq(c, g, h, lo, hi),
        int_idx,
    };
    let sol = solve_milp_with(&inst, &MilpOptions::default())?;
    let mut xs = Vec::with_capacity(problem.num_agents());
    let mut col = 0;
    for blk in &problem.blocks {
        let n = blk.num_vars();
        xs.push(Array1::from_iter((col..col + n).map(|j| sol.x[j])));
        col += n;
    }
    Ok(GlobalMilp {
        status: sol.status,
        obj: sol.obj,
        x: xs,
    })
}
