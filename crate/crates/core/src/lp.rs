//! Dense linear programming with exact multiplier extraction.
//!
//! Two-phase revised simplex over bounded variables. The implementation is
//! deliberately dense and deterministic: entering variables are chosen by
//! largest reduced-cost violation with ties broken by lowest column index,
//! the ratio test breaks ties by largest pivot magnitude then lowest basis
//! position, and the solver falls back to Bland's rule after a long
//! degenerate stall. Duals are read off the final basis, so multipliers of
//! named inequality rows are exact basis duals.

use ndarray::{Array1, Array2};

use crate::config::Tolerances;
use crate::{Error, Result};

/// `min c'x  s.t.  G x <= h,  E x = f,  lo <= x <= hi`.
///
/// Bounds may be infinite on either side; a variable with `lo == hi` is
/// fixed. Empty `g`/`e` matrices (zero rows) are fine.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Array1<f64>,
    pub g: Array2<f64>,
    pub h: Array1<f64>,
    pub e: Array2<f64>,
    pub f: Array1<f64>,
    pub lo: Array1<f64>,
    pub hi: Array1<f64>,
}

impl LinearProgram {
    /// Inequality-only program with box bounds.
    pub fn with_ineq(
        objective: Array1<f64>,
        g: Array2<f64>,
        h: Array1<f64>,
        lo: Array1<f64>,
        hi: Array1<f64>,
    ) -> Self {
        let n = objective.len();
        Self {
            objective,
            g,
            h,
            e: Array2::zeros((0, n)),
            f: Array1::zeros(0),
            lo,
            hi,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.g.ncols() != n && self.g.nrows() > 0 {
            return bad(format!("G has {} columns, expected {n}", self.g.ncols()));
        }
        if self.g.nrows() != self.h.len() {
            return bad(format!(
                "G has {} rows but h has {} entries",
                self.g.nrows(),
                self.h.len()
            ));
        }
        if self.e.ncols() != n && self.e.nrows() > 0 {
            return bad(format!("E has {} columns, expected {n}", self.e.ncols()));
        }
        if self.e.nrows() != self.f.len() {
            return bad(format!(
                "E has {} rows but f has {} entries",
                self.e.nrows(),
                self.f.len()
            ));
        }
        if self.lo.len() != n || self.hi.len() != n {
            return bad("bound vectors do not match the variable count".into());
        }
        for j in 0..n {
            if self.lo[j].is_nan() || self.hi[j].is_nan() {
                return bad(format!("NaN bound on variable {j}"));
            }
            if self.lo[j] > self.hi[j] {
                return bad(format!(
                    "lo > hi on variable {j} ({} > {})",
                    self.lo[j], self.hi[j]
                ));
            }
        }
        let finite = |a: &Array1<f64>| a.iter().all(|v| v.is_finite());
        if !finite(&self.objective) || !finite(&self.h) || !finite(&self.f) {
            return bad("objective and right-hand sides must be finite".into());
        }
        if self.g.iter().any(|v| !v.is_finite()) || self.e.iter().any(|v| !v.is_finite()) {
            return bad("constraint matrices must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. Primal and dual data are only meaningful when
/// `status == Optimal`; `ray` carries an unbounded improving direction in
/// the structural variables when `status == Unbounded`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Array1<f64>,
    pub obj: f64,
    /// Multiplier of each `G x <= h` row, nonnegative.
    pub dual_ineq: Array1<f64>,
    /// Multiplier of each `E x = f` row, free.
    pub dual_eq: Array1<f64>,
    /// Reduced cost of each structural variable.
    pub dual_bounds: Array1<f64>,
    pub ray: Option<Array1<f64>>,
    pub iterations: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, n: usize, mg: usize, me: usize, iters: usize) -> Self {
        Self {
            status,
            x: Array1::zeros(n),
            obj: f64::NAN,
            dual_ineq: Array1::zeros(mg),
            dual_eq: Array1::zeros(me),
            dual_bounds: Array1::zeros(n),
            ray: None,
            iterations: iters,
        }
    }
}

/// Solve with default tolerances.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_lp_with(lp, &Tolerances::default())
}

pub fn solve_lp_with(lp: &LinearProgram, tol: &Tolerances) -> Result<LpSolution> {
    lp.validate()?;
    Simplex::new(lp, *tol).run()
}

const PIVOT_TOL: f64 = 1e-10;
const DUAL_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 128;
const STALL_LIMIT: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLo,
    AtHi,
    Free,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    tol: Tolerances,
    n: usize,
    mg: usize,
    m: usize,
    ncols: usize,
    /// Column-major constraint matrix: row `j` of `acols` is column `j`.
    acols: Array2<f64>,
    rhs: Array1<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Array2<f64>,
    xb: Vec<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
    stall: usize,
    bland: bool,
}

enum Step {
    Optimal,
    Unbounded { entering: usize, dir: f64 },
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, tol: Tolerances) -> Self {
        let n = lp.num_vars();
        let mg = lp.g.nrows();
        let me = lp.e.nrows();
        let m = mg + me;
        let ncols = n + mg + m;

        let mut acols = Array2::zeros((ncols, m));
        for j in 0..n {
            for r in 0..mg {
                acols[(j, r)] = lp.g[(r, j)];
            }
            for r in 0..me {
                acols[(j, mg + r)] = lp.e[(r, j)];
            }
        }
        for r in 0..mg {
            acols[(n + r, r)] = 1.0; // slack
        }
        // artificial signs are filled in once the initial residual is known

        let mut rhs = Array1::zeros(m);
        for r in 0..mg {
            rhs[r] = lp.h[r];
        }
        for r in 0..me {
            rhs[mg + r] = lp.f[r];
        }

        let mut lo = Vec::with_capacity(ncols);
        let mut hi = Vec::with_capacity(ncols);
        let mut state = Vec::with_capacity(ncols);
        for j in 0..n {
            lo.push(lp.lo[j]);
            hi.push(lp.hi[j]);
            state.push(if lp.lo[j].is_finite() {
                VarState::AtLo
            } else if lp.hi[j].is_finite() {
                VarState::AtHi
            } else {
                VarState::Free
            });
        }
        for _ in 0..mg {
            lo.push(0.0);
            hi.push(f64::INFINITY);
            state.push(VarState::AtLo);
        }
        for _ in 0..m {
            lo.push(0.0);
            hi.push(f64::INFINITY);
            state.push(VarState::AtLo); // placeholder, becomes basic below
        }

        let mut sim = Self {
            lp,
            tol,
            n,
            mg,
            m,
            ncols,
            acols,
            rhs,
            lo,
            hi,
            cost: vec![0.0; ncols],
            state,
            basis: vec![0; m],
            binv: Array2::eye(m),
            xb: vec![0.0; m],
            iterations: 0,
            pivots_since_refactor: 0,
            stall: 0,
            bland: false,
        };

        // Initial residuals determine artificial signs and the start basis.
        let art0 = n + mg;
        for r in 0..m {
            let mut resid = sim.rhs[r];
            for j in 0..art0 {
                let v = sim.nb_value(j);
                if v != 0.0 {
                    resid -= sim.acols[(j, r)] * v;
                }
            }
            let sign = if resid >= 0.0 { 1.0 } else { -1.0 };
            sim.acols[(art0 + r, r)] = sign;
            sim.basis[r] = art0 + r;
            sim.state[art0 + r] = VarState::Basic(r);
            sim.binv[(r, r)] = sign;
            sim.xb[r] = resid.abs();
        }
        sim
    }

    fn nb_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLo => self.lo[j],
            VarState::AtHi => self.hi[j],
            VarState::Free => 0.0,
            VarState::Basic(_) => unreachable!("nb_value on basic column"),
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.hi[j]
    }

    fn run(mut self) -> Result<LpSolution> {
        let me = self.m - self.mg;

        // Phase 1: minimize the artificial sum.
        let art0 = self.n + self.mg;
        for j in art0..self.ncols {
            self.cost[j] = 1.0;
        }
        match self.optimize()? {
            Step::Optimal => {}
            Step::Unbounded { .. } => {
                return Err(Error::Numerical("phase-1 objective unbounded".into()))
            }
        }
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let phase1_obj: f64 = self
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &k)| k >= art0)
            .map(|(i, _)| self.xb[i])
            .sum();
        if phase1_obj > self.tol.feas * scale {
            return Ok(LpSolution::non_optimal(
                LpStatus::Infeasible,
                self.n,
                self.mg,
                me,
                self.iterations,
            ));
        }

        // Pivot remaining artificials out where possible; redundant rows keep
        // a fixed artificial in the basis.
        self.evict_artificials()?;
        for j in art0..self.ncols {
            self.cost[j] = 0.0;
            self.lo[j] = 0.0;
            self.hi[j] = 0.0;
        }

        // Phase 2: real costs.
        for j in 0..self.n {
            self.cost[j] = self.lp.objective[j];
        }
        for j in self.n..art0 {
            self.cost[j] = 0.0;
        }
        self.bland = false;
        self.stall = 0;
        match self.optimize()? {
            Step::Optimal => self.extract(),
            Step::Unbounded { entering, dir } => {
                let mut sol = LpSolution::non_optimal(
                    LpStatus::Unbounded,
                    self.n,
                    self.mg,
                    me,
                    self.iterations,
                );
                sol.ray = Some(self.ray(entering, dir));
                Ok(sol)
            }
        }
    }

    fn evict_artificials(&mut self) -> Result<()> {
        let art0 = self.n + self.mg;
        for r in 0..self.m {
            if self.basis[r] < art0 {
                continue;
            }
            let mut entering = None;
            for j in 0..art0 {
                if matches!(self.state[j], VarState::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                let mut u = 0.0;
                for t in 0..self.m {
                    u += self.binv[(r, t)] * self.acols[(j, t)];
                }
                if u.abs() > 1e-8 {
                    entering = Some(j);
                    break;
                }
            }
            if let Some(j) = entering {
                let art = self.basis[r];
                let d = self.ftran(j);
                self.pivot(j, 1.0, r, 0.0, &d);
                self.state[art] = VarState::AtLo;
            }
        }
        Ok(())
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.m];
        for (i, di) in d.iter_mut().enumerate() {
            let mut acc = 0.0;
            for t in 0..self.m {
                acc += self.binv[(i, t)] * self.acols[(j, t)];
            }
            *di = acc;
        }
        d
    }

    fn duals(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (i, &k) in self.basis.iter().enumerate() {
            let ck = self.cost[k];
            if ck != 0.0 {
                for t in 0..self.m {
                    y[t] += ck * self.binv[(i, t)];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, y: &[f64], j: usize) -> f64 {
        let mut acc = self.cost[j];
        for t in 0..self.m {
            acc -= y[t] * self.acols[(j, t)];
        }
        acc
    }

    fn optimize(&mut self) -> Result<Step> {
        let iter_cap = 10_000 + 200 * (self.m + self.ncols);
        let mut clean = false;
        loop {
            if self.iterations > iter_cap {
                return Err(Error::Numerical(format!(
                    "simplex iteration cap ({iter_cap}) exceeded"
                )));
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                clean = true;
            }

            let y = self.duals();
            let art0 = self.n + self.mg;
            let mut entering: Option<(usize, f64, f64)> = None; // (col, dir, score)
            for j in 0..self.ncols {
                if matches!(self.state[j], VarState::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                if j >= art0 {
                    continue; // artificials never re-enter
                }
                let r = self.reduced_cost(&y, j);
                let cand = match self.state[j] {
                    VarState::AtLo if r < -DUAL_TOL => Some((1.0, -r)),
                    VarState::AtHi if r > DUAL_TOL => Some((-1.0, r)),
                    VarState::Free if r < -DUAL_TOL => Some((1.0, -r)),
                    VarState::Free if r > DUAL_TOL => Some((-1.0, r)),
                    _ => None,
                };
                if let Some((dir, score)) = cand {
                    if self.bland {
                        entering = Some((j, dir, score));
                        break;
                    }
                    match entering {
                        Some((_, _, best)) if best >= score => {}
                        _ => entering = Some((j, dir, score)),
                    }
                }
            }

            let (e, dir, _) = match entering {
                Some(t) => t,
                None => {
                    if clean {
                        return Ok(Step::Optimal);
                    }
                    // Re-verify optimality against a freshly factorized basis.
                    self.refactor()?;
                    clean = true;
                    continue;
                }
            };

            let d = self.ftran(e);
            let ent_cap = if self.lo[e].is_finite() && self.hi[e].is_finite() {
                self.hi[e] - self.lo[e]
            } else {
                f64::INFINITY
            };

            let mut theta = f64::INFINITY;
            let mut leave: Option<(usize, f64)> = None; // (position, pivot magnitude)
            for i in 0..self.m {
                let k = self.basis[i];
                let delta = -dir * d[i]; // d x_k / d theta
                let (limit, _to_lower) = if delta < -PIVOT_TOL {
                    if self.lo[k].is_finite() {
                        ((self.xb[i] - self.lo[k]) / -delta, true)
                    } else {
                        continue;
                    }
                } else if delta > PIVOT_TOL {
                    if self.hi[k].is_finite() {
                        ((self.hi[k] - self.xb[i]) / delta, false)
                    } else {
                        continue;
                    }
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < theta,
                    Some((pos, mag)) => {
                        if self.bland {
                            limit < theta - 1e-12
                                || (limit < theta + 1e-12 && self.basis[i] < self.basis[pos])
                        } else {
                            limit < theta - 1e-12 || (limit < theta + 1e-12 && delta.abs() > mag)
                        }
                    }
                };
                if better {
                    theta = limit;
                    leave = Some((i, delta.abs()));
                }
            }

            if theta.is_infinite() && ent_cap.is_infinite() {
                return Ok(Step::Unbounded { entering: e, dir });
            }

            if ent_cap <= theta {
                // Bound flip, no basis change.
                for i in 0..self.m {
                    self.xb[i] += -dir * d[i] * ent_cap;
                }
                self.state[e] = match self.state[e] {
                    VarState::AtLo => VarState::AtHi,
                    VarState::AtHi => VarState::AtLo,
                    s => s,
                };
                self.iterations += 1;
                self.note_progress(ent_cap);
                clean = false;
                continue;
            }

            let (r, _) = leave.expect("finite theta requires a blocking row");
            self.pivot(e, dir, r, theta, &d);
            self.note_progress(theta);
            clean = false;
        }
    }

    fn note_progress(&mut self, theta: f64) {
        if theta <= 1e-12 {
            self.stall += 1;
            if self.stall > STALL_LIMIT {
                self.bland = true;
            }
        } else {
            self.stall = 0;
        }
    }

    fn pivot(&mut self, e: usize, dir: f64, r: usize, theta: f64, d: &[f64]) {
        let entering_value = match self.state[e] {
            VarState::Free => dir * theta,
            _ => self.nb_value(e) + dir * theta,
        };
        let leaving = self.basis[r];
        let delta_r = -dir * d[r];
        self.state[leaving] = if delta_r < 0.0 {
            VarState::AtLo
        } else {
            VarState::AtHi
        };

        for i in 0..self.m {
            if i != r {
                self.xb[i] += -dir * d[i] * theta;
            }
        }
        self.xb[r] = entering_value;
        self.basis[r] = e;
        self.state[e] = VarState::Basic(r);

        // Gauss-Jordan update of the basis inverse.
        let p = d[r];
        for t in 0..self.m {
            self.binv[(r, t)] /= p;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = d[i];
            if factor != 0.0 {
                for t in 0..self.m {
                    self.binv[(i, t)] -= factor * self.binv[(r, t)];
                }
            }
        }
        self.iterations += 1;
        self.pivots_since_refactor += 1;
    }

    /// Recompute the basis inverse and basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut aug = Array2::zeros((m, 2 * m));
        for (i, &k) in self.basis.iter().enumerate() {
            for r in 0..m {
                aug[(r, i)] = self.acols[(k, r)];
            }
        }
        for r in 0..m {
            aug[(r, m + r)] = 1.0;
        }
        // Gauss-Jordan with partial pivoting.
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if aug[(r, col)].abs() > aug[(piv, col)].abs() {
                    piv = r;
                }
            }
            if aug[(piv, col)].abs() < 1e-12 {
                return Err(Error::Numerical(
                    "singular basis during refactorization".into(),
                ));
            }
            if piv != col {
                for t in 0..2 * m {
                    let tmp = aug[(col, t)];
                    aug[(col, t)] = aug[(piv, t)];
                    aug[(piv, t)] = tmp;
                }
            }
            let p = aug[(col, col)];
            for t in 0..2 * m {
                aug[(col, t)] /= p;
            }
            for r in 0..m {
                if r != col {
                    let factor = aug[(r, col)];
                    if factor != 0.0 {
                        for t in 0..2 * m {
                            aug[(r, t)] -= factor * aug[(col, t)];
                        }
                    }
                }
            }
        }
        for r in 0..m {
            for t in 0..m {
                self.binv[(r, t)] = aug[(r, m + t)];
            }
        }
        // xb = binv * (rhs - sum over nonbasic of a_j * value_j)
        let mut resid = self.rhs.to_vec();
        for j in 0..self.ncols {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.nb_value(j);
            if v != 0.0 {
                for (r, res) in resid.iter_mut().enumerate() {
                    *res -= self.acols[(j, r)] * v;
                }
            }
        }
        for i in 0..m {
            let mut acc = 0.0;
            for t in 0..m {
                acc += self.binv[(i, t)] * resid[t];
            }
            self.xb[i] = acc;
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn ray(&self, entering: usize, dir: f64) -> Array1<f64> {
        let d = self.ftran(entering);
        let mut ray = Array1::zeros(self.n);
        if entering < self.n {
            ray[entering] = dir;
        }
        for (i, &k) in self.basis.iter().enumerate() {
            if k < self.n {
                ray[k] = -dir * d[i];
            }
        }
        ray
    }

    fn extract(mut self) -> Result<LpSolution> {
        self.refactor()?;
        let me = self.m - self.mg;
        let mut x = Array1::zeros(self.n);
        for j in 0..self.n {
            x[j] = match self.state[j] {
                VarState::Basic(i) => self.xb[i],
                _ => self.nb_value(j),
            };
        }
        let obj = self.lp.objective.dot(&x);

        let y = self.duals();
        let mut dual_ineq = Array1::zeros(self.mg);
        for r in 0..self.mg {
            dual_ineq[r] = -y[r];
        }
        let mut dual_eq = Array1::zeros(me);
        for r in 0..me {
            dual_eq[r] = -y[self.mg + r];
        }
        let mut dual_bounds = Array1::zeros(self.n);
        for j in 0..self.n {
            dual_bounds[j] = match self.state[j] {
                VarState::Basic(_) => 0.0,
                _ => self.reduced_cost(&y, j),
            };
        }

        self.verify(&x, obj, &mut dual_ineq, &dual_bounds)?;

        Ok(LpSolution {
            status: LpStatus::Optimal,
            x,
            obj,
            dual_ineq,
            dual_eq,
            dual_bounds,
            ray: None,
            iterations: self.iterations,
        })
    }

    /// Certify the claimed optimum; relaxed by 10x before reporting failure.
    fn verify(
        &self,
        x: &Array1<f64>,
        obj: f64,
        dual_ineq: &mut Array1<f64>,
        dual_bounds: &Array1<f64>,
    ) -> Result<()> {
        let tol = &self.tol;
        let lp = self.lp;
        let mut worst_feas = 0.0f64;
        let slack = lp.h.clone() - lp.g.dot(x);
        for r in 0..self.mg {
            worst_feas = worst_feas.max(-slack[r] / (1.0 + lp.h[r].abs()));
        }
        let eq_res = lp.e.dot(x) - &lp.f;
        for r in 0..eq_res.len() {
            worst_feas = worst_feas.max(eq_res[r].abs() / (1.0 + lp.f[r].abs()));
        }
        for j in 0..self.n {
            let span = 1.0 + x[j].abs();
            if lp.lo[j].is_finite() {
                worst_feas = worst_feas.max((lp.lo[j] - x[j]) / span);
            }
            if lp.hi[j].is_finite() {
                worst_feas = worst_feas.max((x[j] - lp.hi[j]) / span);
            }
        }
        if worst_feas > 10.0 * tol.feas {
            return Err(Error::Numerical(format!(
                "primal residual {worst_feas:.3e} exceeds 10x feasibility tolerance"
            )));
        }

        let mut worst_dual = 0.0f64;
        for r in 0..self.mg {
            worst_dual = worst_dual.max(-dual_ineq[r]);
        }
        if worst_dual > 10.0 * tol.feas {
            return Err(Error::Numerical(format!(
                "inequality multiplier below zero by {worst_dual:.3e}"
            )));
        }
        for r in 0..self.mg {
            if dual_ineq[r] < 0.0 {
                dual_ineq[r] = 0.0;
            }
        }

        let mut worst_cs = 0.0f64;
        for r in 0..self.mg {
            worst_cs = worst_cs.max(dual_ineq[r] * slack[r].max(0.0) / (1.0 + obj.abs()));
        }
        if worst_cs > 10.0 * tol.cs {
            return Err(Error::Numerical(format!(
                "complementary slackness residual {worst_cs:.3e}"
            )));
        }

        // Strong duality: dual objective read off the same basis.
        let y = self.duals();
        let mut dual_obj = 0.0;
        for r in 0..self.m {
            dual_obj += y[r] * self.rhs[r];
        }
        for j in 0..self.n {
            if !matches!(self.state[j], VarState::Basic(_)) {
                dual_obj += dual_bounds[j] * self.nb_value(j);
            }
        }
        let gap = (obj - dual_obj).abs() / (1.0 + obj.abs());
        if gap > 10.0 * tol.feas {
            return Err(Error::Numerical(format!("duality gap {gap:.3e}")));
        }
        Ok(())
    }
}
