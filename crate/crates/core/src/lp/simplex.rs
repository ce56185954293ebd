//! Revised simplex over `[A | -I] (x, s) = 0` with bounds on every column.
//!
//! Each row `i` owns a logical column `s_i = a_i·x` whose bounds encode the
//! relation. The basis inverse is held densely and updated in product form;
//! refactorization only inverts the structural kernel of the basis, which is
//! small when most logicals are basic.

use super::{LinearProgram, LpSolution, LpStatus, Relation, VarStatus, FEAS_TOL, PIVOT_TOL};
use crate::error::{Error, Result};

const OPT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;
const REFACTOR_INTERVAL: usize = 100;
/// Updates after which a non-strict solve recomputes values before returning.
const VERIFY_INTERVAL: usize = 30;
pub(crate) const STALL_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    /// The dual objective passed the caller's cutoff.
    Cutoff,
}

enum DualEnd {
    Optimal,
    Infeasible,
    Cutoff,
    LostDualFeasibility,
}

enum PrimalEnd {
    Optimal,
    Infeasible,
    Unbounded,
}

enum Step {
    Flip,
    Pivot { row: usize, t: f64, to_upper: bool },
    Unbounded,
}

pub(crate) struct Simplex {
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    pos: Vec<usize>,
    x: Vec<f64>,
    binv: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    binv_valid: bool,
    /// Basic values agree with the current inverse and nonbasic values.
    xb_ok: bool,
    /// `y` and `d` agree with the current basis.
    duals_ok: bool,
    /// Recompute values from the inverse before declaring optimality.
    strict: bool,
    /// Squared row norms of the inverse (dual steepest-edge weights).
    weights: Vec<f64>,
    updates: usize,
    stall: usize,
    bland: bool,
    pub iterations: usize,
    max_iterations: usize,
    /// Value of `iterations` when the current solve started.
    solve_start: usize,
}

impl Simplex {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars;
        let m = lp.constraints.len();
        let mut rows = Vec::with_capacity(m);
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in lp.constraints.iter().enumerate() {
            let mut entries = row.coeffs.clone();
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (j, a) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += a,
                    _ => merged.push((j, a)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            for &(j, a) in &merged {
                cols[j].push((i, a));
            }
            rows.push(merged);
        }
        let mut cost = lp.objective.clone();
        cost.resize(n + m, 0.0);
        let mut lb = lp.lower.clone();
        let mut ub = lp.upper.clone();
        for row in &lp.constraints {
            let (lo, hi) = match row.relation {
                Relation::Le => (f64::NEG_INFINITY, row.rhs),
                Relation::Ge => (row.rhs, f64::INFINITY),
                Relation::Eq => (row.rhs, row.rhs),
            };
            lb.push(lo);
            ub.push(hi);
        }
        let mut s = Self {
            n,
            m,
            cols,
            rows,
            cost,
            lb,
            ub,
            status: vec![VarStatus::AtLower; n + m],
            head: (n..n + m).collect(),
            pos: vec![usize::MAX; n + m],
            x: vec![0.0; n + m],
            binv: vec![0.0; m * m],
            y: vec![0.0; m],
            d: vec![0.0; n + m],
            binv_valid: false,
            xb_ok: false,
            duals_ok: false,
            strict: true,
            weights: vec![1.0; m],
            updates: 0,
            stall: 0,
            bland: false,
            iterations: 0,
            max_iterations: 50_000 + 20 * (n + m),
            solve_start: 0,
        };
        for k in 0..m {
            s.status[n + k] = VarStatus::Basic;
            s.pos[n + k] = k;
        }
        s.sync_nonbasic();
        s
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    /// Changes structural bounds. The basis is kept, so a following solve
    /// warm-starts from it.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lb[j] = lower;
        self.ub[j] = upper;
    }

    pub fn basis(&self) -> Vec<VarStatus> {
        self.status.clone()
    }

    /// Installs a basis previously read with [`Simplex::basis`]. Returns
    /// false and leaves the engine untouched when the statuses do not fit.
    pub fn set_basis(&mut self, basis: &[VarStatus]) -> bool {
        if basis.len() != self.n + self.m
            || basis.iter().filter(|s| **s == VarStatus::Basic).count() != self.m
        {
            return false;
        }
        let same_basic_set = basis
            .iter()
            .zip(&self.status)
            .all(|(a, b)| (*a == VarStatus::Basic) == (*b == VarStatus::Basic));
        if same_basic_set {
            // the inverse stays valid; only nonbasic positions change
            self.status.copy_from_slice(basis);
            return true;
        }
        self.status.copy_from_slice(basis);
        self.xb_ok = false;
        self.duals_ok = false;
        self.head.clear();
        self.pos.iter_mut().for_each(|p| *p = usize::MAX);
        for (j, s) in self.status.iter().enumerate() {
            if *s == VarStatus::Basic {
                self.pos[j] = self.head.len();
                self.head.push(j);
            }
        }
        self.binv_valid = false;
        true
    }

    pub fn status(&self, j: usize) -> VarStatus {
        self.status[j]
    }

    pub fn reduced_cost(&self, j: usize) -> f64 {
        self.d[j]
    }

    pub fn primal(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub fn solve_to_solution(&mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let outcome = self.solve(None)?;
        Ok(match outcome {
            Outcome::Optimal => self.solution(),
            Outcome::Infeasible => {
                LpSolution::without_solution(LpStatus::Infeasible, lp, self.iterations)
            }
            Outcome::Unbounded | Outcome::Cutoff => {
                LpSolution::without_solution(LpStatus::Unbounded, lp, self.iterations)
            }
        })
    }

    /// Snapshot of the current (optimal) basis as an [`LpSolution`].
    pub fn solution(&self) -> LpSolution {
        let mut rc = self.d[..self.n].to_vec();
        for (j, r) in rc.iter_mut().enumerate() {
            if self.status[j] == VarStatus::Basic {
                *r = 0.0;
            }
        }
        LpSolution {
            status: LpStatus::Optimal,
            primal: self.x[..self.n].to_vec(),
            objective: self.objective(),
            duals: self.y.clone(),
            reduced_costs: rc,
            basis: self.status.clone(),
            iterations: self.iterations,
        }
    }

    pub fn solve(&mut self, cutoff: Option<f64>) -> Result<Outcome> {
        self.solve_start = self.iterations;
        if !self.binv_valid {
            self.refactor();
        }
        self.sync_nonbasic();
        if !self.xb_ok {
            self.compute_xb();
        }
        self.stall = 0;
        self.bland = false;
        for _ in 0..4 {
            if !self.duals_ok {
                self.compute_duals();
            }
            if self.max_primal_infeasibility() > FEAS_TOL && self.make_dual_feasible() {
                match self.dual(cutoff)? {
                    DualEnd::Optimal | DualEnd::LostDualFeasibility => {}
                    DualEnd::Infeasible => return Ok(Outcome::Infeasible),
                    DualEnd::Cutoff => return Ok(Outcome::Cutoff),
                }
            }
            match self.primal_simplex()? {
                PrimalEnd::Optimal => {}
                PrimalEnd::Infeasible => return Ok(Outcome::Infeasible),
                PrimalEnd::Unbounded => return Ok(Outcome::Unbounded),
            }
            // recompute from the current inverse; refactor only on failure
            if self.strict || self.updates >= VERIFY_INTERVAL {
                self.compute_xb();
                self.compute_duals();
            }
            if self.max_primal_infeasibility() <= FEAS_TOL && self.max_dual_infeasibility() <= OPT_TOL * 10.0 {
                if let Some(c) = cutoff {
                    if self.objective() > c + 1e-9 * c.abs().max(1.0) {
                        return Ok(Outcome::Cutoff);
                    }
                }
                return Ok(Outcome::Optimal);
            }
            self.refactor();
            self.compute_xb();
        }
        Err(Error::NumericalBreakdown(
            "optimal basis failed verification after refactorization".into(),
        ))
    }

    fn sync_nonbasic(&mut self) {
        for j in 0..self.n + self.m {
            let (l, u) = (self.lb[j], self.ub[j]);
            let st = match self.status[j] {
                VarStatus::Basic => continue,
                VarStatus::AtUpper if u.is_finite() => VarStatus::AtUpper,
                VarStatus::Free | VarStatus::AtLower | VarStatus::AtUpper => {
                    if l.is_finite() {
                        VarStatus::AtLower
                    } else if u.is_finite() {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::Free
                    }
                }
            };
            self.status[j] = st;
            let v = match st {
                VarStatus::AtLower => l,
                VarStatus::AtUpper => u,
                _ => 0.0,
            };
            self.shift_nonbasic(j, v);
        }
    }

    /// Moves nonbasic `j` to `value`, keeping basic values consistent.
    fn shift_nonbasic(&mut self, j: usize, value: f64) {
        let delta = value - self.x[j];
        if delta == 0.0 {
            return;
        }
        self.x[j] = value;
        if !self.xb_ok {
            return;
        }
        let m = self.m;
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                let f = a * delta;
                for k in 0..m {
                    let b = self.binv[k * m + i];
                    if b != 0.0 {
                        self.x[self.head[k]] -= b * f;
                    }
                }
            }
        } else {
            let i = j - self.n;
            for k in 0..m {
                let b = self.binv[k * m + i];
                if b != 0.0 {
                    self.x[self.head[k]] += b * delta;
                }
            }
        }
    }

    /// Lets callers skip the final recomputation from the inverse.
    pub fn set_strict(&mut self, strict: bool) {
        self.strict = strict;
    }

    #[inline]
    fn col_dot(&self, v: &[f64], j: usize) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * v[i]).sum()
        } else {
            -v[j - self.n]
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                for (k, o) in out.iter_mut().enumerate() {
                    *o += a * self.binv[k * m + i];
                }
            }
        } else {
            let i = j - self.n;
            for (k, o) in out.iter_mut().enumerate() {
                *o = -self.binv[k * m + i];
            }
        }
        out
    }

    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &c) in cb.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (yi, b) in y.iter_mut().zip(row) {
                    *yi += c * b;
                }
            }
        }
        y
    }

    fn compute_duals(&mut self) {
        let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        self.y = self.btran(&cb);
        for j in 0..self.n + self.m {
            self.d[j] = if self.status[j] == VarStatus::Basic {
                0.0
            } else {
                self.cost[j] - self.col_dot(&self.y, j)
            };
        }
        self.duals_ok = true;
    }

    fn compute_xb(&mut self) {
        let m = self.m;
        let mut r = vec![0.0; m];
        for j in 0..self.n {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] += a * self.x[j];
                }
            }
        }
        for i in 0..m {
            let j = self.n + i;
            if self.status[j] != VarStatus::Basic {
                r[i] -= self.x[j];
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&r).map(|(b, ri)| b * ri).sum();
            self.x[self.head[k]] = -v;
        }
        self.xb_ok = true;
    }

    /// Rebuilds the dense inverse from scratch. Singular structural columns
    /// are swapped out for logicals of uncovered rows.
    fn refactor(&mut self) {
        loop {
            match self.try_refactor() {
                Ok(()) => break,
                Err(replaced) => log::debug!("basis repair replaced {replaced} columns"),
            }
        }
        let m = self.m;
        for k in 0..m {
            self.weights[k] = self.binv[k * m..(k + 1) * m].iter().map(|a| a * a).sum();
        }
        self.binv_valid = true;
        self.xb_ok = false;
        self.duals_ok = false;
        self.updates = 0;
    }

    fn try_refactor(&mut self) -> std::result::Result<(), usize> {
        let (n, m) = (self.n, self.m);
        let mut covered = vec![false; m];
        let mut struct_pos = Vec::new();
        for k in 0..m {
            let j = self.head[k];
            if j >= n {
                covered[j - n] = true;
            } else {
                struct_pos.push(k);
            }
        }
        let t_rows: Vec<usize> = (0..m).filter(|&i| !covered[i]).collect();
        let q = t_rows.len();
        debug_assert_eq!(q, struct_pos.len());
        let mut row_index = vec![usize::MAX; m];
        for (a, &i) in t_rows.iter().enumerate() {
            row_index[i] = a;
        }

        // Gauss-Jordan on [K | I] where K = A[t_rows, basic structurals].
        let w = 2 * q;
        let mut aug = vec![0.0; q * w];
        for (c, &k) in struct_pos.iter().enumerate() {
            for &(i, a) in &self.cols[self.head[k]] {
                let r = row_index[i];
                if r != usize::MAX {
                    aug[r * w + c] = a;
                }
            }
        }
        for r in 0..q {
            aug[r * w + q + r] = 1.0;
        }
        let mut pivoted = vec![false; q];
        let mut piv_row = vec![usize::MAX; q];
        let mut dependent = Vec::new();
        for c in 0..q {
            let mut best = SINGULAR_TOL;
            let mut p = usize::MAX;
            for r in 0..q {
                if !pivoted[r] {
                    let v = aug[r * w + c].abs();
                    if v > best {
                        best = v;
                        p = r;
                    }
                }
            }
            if p == usize::MAX {
                dependent.push(c);
                continue;
            }
            pivoted[p] = true;
            piv_row[c] = p;
            let inv = 1.0 / aug[p * w + c];
            for v in &mut aug[p * w..(p + 1) * w] {
                *v *= inv;
            }
            let pivot_row: Vec<f64> = aug[p * w..(p + 1) * w].to_vec();
            for r in 0..q {
                if r == p {
                    continue;
                }
                let f = aug[r * w + c];
                if f != 0.0 {
                    for (v, pv) in aug[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }

        if !dependent.is_empty() {
            let free_rows: Vec<usize> = (0..q).filter(|&r| !pivoted[r]).collect();
            for (&c, &r) in dependent.iter().zip(&free_rows) {
                let k = struct_pos[c];
                let leaving = self.head[k];
                let entering = n + t_rows[r];
                let (l, u) = (self.lb[leaving], self.ub[leaving]);
                self.status[leaving] = if l.is_finite() {
                    VarStatus::AtLower
                } else if u.is_finite() {
                    VarStatus::AtUpper
                } else {
                    VarStatus::Free
                };
                self.x[leaving] = match self.status[leaving] {
                    VarStatus::AtLower => l,
                    VarStatus::AtUpper => u,
                    _ => 0.0,
                };
                self.pos[leaving] = usize::MAX;
                self.head[k] = entering;
                self.pos[entering] = k;
                self.status[entering] = VarStatus::Basic;
            }
            return Err(dependent.len());
        }

        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for (c, &k) in struct_pos.iter().enumerate() {
            let src = &aug[piv_row[c] * w + q..piv_row[c] * w + w];
            for (a, &i) in t_rows.iter().enumerate() {
                self.binv[k * m + i] = src[a];
            }
        }
        for k in 0..m {
            let j = self.head[k];
            if j < n {
                continue;
            }
            let i = j - n;
            let mut acc = vec![0.0; m];
            for &(jj, a) in &self.rows[i] {
                if self.status[jj] == VarStatus::Basic {
                    let pk = self.pos[jj];
                    let src = &self.binv[pk * m..(pk + 1) * m];
                    for (v, s) in acc.iter_mut().zip(src) {
                        *v += a * s;
                    }
                }
            }
            acc[i] -= 1.0;
            self.binv[k * m..(k + 1) * m].copy_from_slice(&acc);
        }
        Ok(())
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let leaving = self.head[row];
        let inv = 1.0 / alpha[row];
        let pivot_row: Vec<f64> = self.binv[row * m..(row + 1) * m]
            .iter()
            .map(|v| v * inv)
            .collect();
        for (k, &a) in alpha.iter().enumerate() {
            if k == row || a == 0.0 {
                continue;
            }
            let mut norm = 0.0;
            for (v, p) in self.binv[k * m..(k + 1) * m].iter_mut().zip(&pivot_row) {
                *v -= a * p;
                norm += *v * *v;
            }
            self.weights[k] = norm;
        }
        self.weights[row] = pivot_row.iter().map(|p| p * p).sum();
        self.binv[row * m..(row + 1) * m].copy_from_slice(&pivot_row);
        self.head[row] = entering;
        self.pos[entering] = row;
        self.pos[leaving] = usize::MAX;
        self.status[entering] = VarStatus::Basic;
        self.updates += 1;
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.head
            .iter()
            .map(|&j| (self.lb[j] - self.x[j]).max(self.x[j] - self.ub[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn dual_violation(&self, j: usize) -> f64 {
        let d = self.d[j];
        if self.lb[j] == self.ub[j] {
            return 0.0;
        }
        match self.status[j] {
            VarStatus::Basic => 0.0,
            VarStatus::AtLower => (-d).max(0.0),
            VarStatus::AtUpper => d.max(0.0),
            VarStatus::Free => d.abs(),
        }
    }

    fn max_dual_infeasibility(&self) -> f64 {
        (0..self.n + self.m)
            .map(|j| self.dual_violation(j))
            .fold(0.0, f64::max)
    }

    /// Flips boxed nonbasics with wrong-signed reduced costs. Returns false
    /// when some violation cannot be repaired by a flip.
    fn make_dual_feasible(&mut self) -> bool {
        for j in 0..self.n + self.m {
            if self.dual_violation(j) <= OPT_TOL {
                continue;
            }
            let (l, u) = (self.lb[j], self.ub[j]);
            if !(l.is_finite() && u.is_finite()) {
                return false;
            }
            match self.status[j] {
                VarStatus::AtLower => {
                    self.status[j] = VarStatus::AtUpper;
                    self.shift_nonbasic(j, u);
                }
                VarStatus::AtUpper => {
                    self.status[j] = VarStatus::AtLower;
                    self.shift_nonbasic(j, l);
                }
                _ => return false,
            }
        }
        if !self.xb_ok {
            self.compute_xb();
        }
        true
    }

    fn check_iterations(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations - self.solve_start > self.max_iterations {
            return Err(Error::NumericalBreakdown(format!(
                "no convergence after {} simplex iterations",
                self.max_iterations
            )));
        }
        if self.updates >= REFACTOR_INTERVAL {
            self.refactor();
            self.compute_xb();
        }
        Ok(())
    }

    fn note_step(&mut self, t: f64) {
        if t <= 1e-12 {
            self.stall += 1;
            if self.stall > STALL_THRESHOLD && !self.bland {
                log::debug!("degenerate stall, switching to Bland's rule");
                self.bland = true;
            }
        } else {
            self.stall = 0;
            self.bland = false;
        }
    }

    fn dual(&mut self, cutoff: Option<f64>) -> Result<DualEnd> {
        let mut retried = false;
        let mut row_alpha: Vec<(usize, f64)> = Vec::new();
        loop {
            self.check_iterations()?;
            if !self.duals_ok {
                self.compute_duals();
            }
            if self.max_dual_infeasibility() > OPT_TOL && !self.make_dual_feasible() {
                return Ok(DualEnd::LostDualFeasibility);
            }
            if let Some(c) = cutoff {
                if self.objective() > c + 1e-9 * c.abs().max(1.0) {
                    return Ok(DualEnd::Cutoff);
                }
            }

            // leaving row: dual steepest edge, the weights being the exact
            // squared row norms of the basis inverse
            let m = self.m;
            let mut row = usize::MAX;
            let mut best = 0.0;
            for (k, &j) in self.head.iter().enumerate() {
                let v = (self.lb[j] - self.x[j]).max(self.x[j] - self.ub[j]);
                if v <= FEAS_TOL {
                    continue;
                }
                if self.bland {
                    if row == usize::MAX || j < self.head[row] {
                        row = k;
                    }
                    continue;
                }
                let score = v * v / self.weights[k].max(1e-12);
                if score > best {
                    best = score;
                    row = k;
                }
            }
            if row == usize::MAX {
                return Ok(DualEnd::Optimal);
            }
            let leaving = self.head[row];
            let below = self.x[leaving] < self.lb[leaving];
            let s = if below { 1.0 } else { -1.0 };
            let target = if below {
                self.lb[leaving]
            } else {
                self.ub[leaving]
            };

            let rho: Vec<f64> = self.binv[row * m..(row + 1) * m].to_vec();
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            let mut tmax = f64::INFINITY;
            row_alpha.clear();
            for j in 0..self.n + self.m {
                let st = self.status[j];
                if st == VarStatus::Basic {
                    continue;
                }
                let a = self.col_dot(&rho, j);
                if a != 0.0 {
                    row_alpha.push((j, a));
                }
                if a.abs() <= PIVOT_TOL || self.lb[j] == self.ub[j] {
                    continue;
                }
                let eligible = match st {
                    VarStatus::AtLower => s * a < 0.0,
                    VarStatus::AtUpper => s * a > 0.0,
                    VarStatus::Free => true,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                let dj = self.d[j].abs();
                tmax = tmax.min((dj + OPT_TOL) / a.abs());
                cands.push((j, a, dj / a.abs()));
            }
            if cands.is_empty() {
                if !retried && self.updates > 0 {
                    retried = true;
                    self.refactor();
                    self.compute_xb();
                    continue;
                }
                return Ok(DualEnd::Infeasible);
            }
            let mut entering = usize::MAX;
            let mut entering_alpha: f64 = 0.0;
            let mut entering_ratio = f64::INFINITY;
            for &(j, a, ratio) in &cands {
                let better = if self.bland {
                    ratio < entering_ratio - 1e-15 || (ratio <= entering_ratio + 1e-15 && j < entering)
                } else {
                    ratio <= tmax && a.abs() > entering_alpha.abs()
                };
                if better {
                    entering = j;
                    entering_alpha = a;
                    entering_ratio = ratio;
                }
            }
            retried = false;

            let alpha = self.ftran(entering);
            if (alpha[row] - entering_alpha).abs() > 1e-6 * (1.0 + entering_alpha.abs()) {
                // row and column disagree: the inverse has drifted
                self.refactor();
                self.compute_xb();
                continue;
            }
            let delta = (self.x[leaving] - target) / alpha[row];
            for (k, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let j = self.head[k];
                    self.x[j] -= a * delta;
                }
            }
            self.x[entering] += delta;
            self.x[leaving] = target;
            self.note_step(entering_ratio);
            // dual update along the pivot row: d -= theta * alpha_r, y += theta * rho
            let theta = self.d[entering] / entering_alpha;
            for &(j, a) in &row_alpha {
                self.d[j] -= theta * a;
            }
            for (yi, r) in self.y.iter_mut().zip(&rho) {
                *yi += theta * r;
            }
            self.d[entering] = 0.0;
            self.d[leaving] = -theta;
            self.pivot(row, entering, &alpha);
            self.status[leaving] = if below {
                VarStatus::AtLower
            } else {
                VarStatus::AtUpper
            };

        }
    }

    fn primal_simplex(&mut self) -> Result<PrimalEnd> {
        let mut retried = false;
        loop {
            self.check_iterations()?;
            let infeasible = self.max_primal_infeasibility() > FEAS_TOL;
            let dj: Vec<f64> = if infeasible {
                let cb: Vec<f64> = self
                    .head
                    .iter()
                    .map(|&j| {
                        if self.x[j] < self.lb[j] - FEAS_TOL {
                            -1.0
                        } else if self.x[j] > self.ub[j] + FEAS_TOL {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let y = self.btran(&cb);
                (0..self.n + self.m)
                    .map(|j| {
                        if self.status[j] == VarStatus::Basic {
                            0.0
                        } else {
                            -self.col_dot(&y, j)
                        }
                    })
                    .collect()
            } else {
                if !self.duals_ok {
                    self.compute_duals();
                }
                self.d.clone()
            };

            // pricing
            let mut entering = usize::MAX;
            let mut dir = 0.0;
            let mut best = OPT_TOL;
            for j in 0..self.n + self.m {
                if self.lb[j] == self.ub[j] {
                    continue;
                }
                let d = dj[j];
                let cand = match self.status[j] {
                    VarStatus::Basic => None,
                    VarStatus::AtLower => (d < -OPT_TOL).then_some(1.0),
                    VarStatus::AtUpper => (d > OPT_TOL).then_some(-1.0),
                    VarStatus::Free => (d.abs() > OPT_TOL).then(|| -d.signum()),
                };
                if let Some(s) = cand {
                    if self.bland {
                        entering = j;
                        dir = s;
                        break;
                    }
                    if d.abs() > best {
                        best = d.abs();
                        entering = j;
                        dir = s;
                    }
                }
            }
            if entering == usize::MAX {
                if infeasible {
                    if !retried && self.updates > 0 {
                        retried = true;
                        self.refactor();
                        self.compute_xb();
                        continue;
                    }
                    return Ok(PrimalEnd::Infeasible);
                }
                return Ok(PrimalEnd::Optimal);
            }
            retried = false;

            let alpha = self.ftran(entering);
            match self.primal_ratio(entering, dir, &alpha) {
                Step::Unbounded => {
                    if infeasible {
                        return Err(Error::NumericalBreakdown(
                            "phase one ray without blocking variable".into(),
                        ));
                    }
                    return Ok(PrimalEnd::Unbounded);
                }
                Step::Flip => {
                    let t = self.ub[entering] - self.lb[entering];
                    self.apply_move(entering, dir, t, &alpha);
                    self.status[entering] = if dir > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.x[entering] = if dir > 0.0 {
                        self.ub[entering]
                    } else {
                        self.lb[entering]
                    };
                    self.note_step(t);
                }
                Step::Pivot { row, t, to_upper } => {
                    let leaving = self.head[row];
                    self.apply_move(entering, dir, t, &alpha);
                    self.x[leaving] = if to_upper {
                        self.ub[leaving]
                    } else {
                        self.lb[leaving]
                    };
                    self.note_step(t);
                    self.pivot(row, entering, &alpha);
                    self.duals_ok = false;
                    self.status[leaving] = if to_upper {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                }
            }
        }
    }

    fn apply_move(&mut self, entering: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t == 0.0 {
            return;
        }
        self.x[entering] += dir * t;
        for (k, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let j = self.head[k];
                self.x[j] -= dir * a * t;
            }
        }
    }

    /// Two-pass Harris ratio test. Infeasible basics (phase one) block where
    /// they regain feasibility.
    fn primal_ratio(&self, entering: usize, dir: f64, alpha: &[f64]) -> Step {
        let range = self.ub[entering] - self.lb[entering];
        // (row, exact ratio, |alpha|, to_upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        let mut tmax = f64::INFINITY;
        for (k, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.head[k];
            let rate = -dir * a;
            let xv = self.x[j];
            let (l, u) = (self.lb[j], self.ub[j]);
            let (bound, to_upper) = if rate < 0.0 {
                if xv > u + FEAS_TOL {
                    (u, true)
                } else if xv >= l - FEAS_TOL && l.is_finite() {
                    (l, false)
                } else {
                    continue;
                }
            } else if xv < l - FEAS_TOL {
                (l, false)
            } else if xv <= u + FEAS_TOL && u.is_finite() {
                (u, true)
            } else {
                continue;
            };
            let gap = (bound - xv) / rate;
            let relaxed = ((bound - xv).abs() + HARRIS_TOL) / rate.abs();
            tmax = tmax.min(relaxed);
            cands.push((k, gap.max(0.0), a.abs(), to_upper));
        }
        if cands.is_empty() {
            return if range.is_finite() {
                Step::Flip
            } else {
                Step::Unbounded
            };
        }
        let mut chosen: Option<(usize, f64, f64, bool)> = None;
        if self.bland {
            for c in &cands {
                let take = match chosen {
                    None => true,
                    Some(b) => {
                        c.1 < b.1 - 1e-15 || (c.1 <= b.1 + 1e-15 && self.head[c.0] < self.head[b.0])
                    }
                };
                if take {
                    chosen = Some(*c);
                }
            }
        } else {
            for c in &cands {
                if c.1 <= tmax && chosen.is_none_or(|b| c.2 > b.2) {
                    chosen = Some(*c);
                }
            }
        }
        let (row, t, _, to_upper) = chosen.expect("at least one candidate");
        if range <= t {
            return Step::Flip;
        }
        Step::Pivot { row, t, to_upper }
    }
}
