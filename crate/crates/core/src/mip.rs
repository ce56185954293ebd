//! Branch-and-bound for mixed-integer linear programs.
//!
//! Nodes are solved with the dual simplex, warm-started from the parent
//! basis. Node selection is best-bound with depth-first plunging; branching
//! picks the most fractional variable.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::simplex::{Outcome, Simplex};
use crate::lp::{Constraint, LinearProgram, Relation, VarStatus, FEAS_TOL};

/// Integrality tolerance used for branching and rounding.
pub const INT_TOL: f64 = 1e-6;
/// Smallest reduced cost used for bound tightening.
const RC_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipProblem {
    pub base: LinearProgram,
    pub integrality: Vec<VarKind>,
    /// Per-variable pinned value; overrides the bounds of `base`.
    pub fixed_values: Vec<Option<f64>>,
    /// Rows appended after those of `base`.
    pub extra_constraints: Vec<Constraint>,
}

impl MipProblem {
    pub fn new(base: LinearProgram, integrality: Vec<VarKind>) -> Self {
        let n = base.num_vars;
        Self {
            base,
            integrality,
            fixed_values: vec![None; n],
            extra_constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.base.num_vars
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let n = self.num_vars();
        if self.integrality.len() != n || self.fixed_values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} variables but {} integrality flags and {} pins",
                self.integrality.len(),
                self.fixed_values.len()
            )));
        }
        for j in 0..n {
            let (l, u) = (self.base.lower[j], self.base.upper[j]);
            if self.integrality[j] == VarKind::Binary && (l < 0.0 || u > 1.0) {
                return Err(Error::InvalidProblem(format!(
                    "binary variable {j} has bounds [{l}, {u}]"
                )));
            }
            if let Some(v) = self.fixed_values[j] {
                if !v.is_finite() || v < l || v > u {
                    return Err(Error::InvalidProblem(format!(
                        "variable {j} pinned to {v} outside [{l}, {u}]"
                    )));
                }
                if self.integrality[j] != VarKind::Continuous && v.fract() != 0.0 {
                    return Err(Error::InvalidProblem(format!(
                        "integer variable {j} pinned to {v}"
                    )));
                }
            }
        }
        for (i, row) in self.extra_constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidProblem(format!("extra row {i} has rhs {}", row.rhs)));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::InvalidProblem(format!(
                        "extra row {i} has entry ({j}, {a})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Effective bounds after pins and, for integer variables, rounding
    /// inward to the nearest integers.
    pub fn bounds(&self, j: usize) -> (f64, f64) {
        if let Some(v) = self.fixed_values[j] {
            return (v, v);
        }
        let (l, u) = (self.base.lower[j], self.base.upper[j]);
        match self.integrality[j] {
            VarKind::Continuous => (l, u),
            _ => ((l - INT_TOL).ceil(), (u + INT_TOL).floor()),
        }
    }

    /// The continuous relaxation with pins and extra rows folded in.
    pub fn to_lp(&self) -> LinearProgram {
        let mut lp = self.base.clone();
        for j in 0..self.num_vars() {
            let (l, u) = self.bounds(j);
            lp.lower[j] = l;
            lp.upper[j] = u;
        }
        lp.constraints.extend(self.extra_constraints.iter().cloned());
        lp
    }

    /// Largest violation of bounds, pins, integrality or rows at `x`. Rows
    /// are evaluated directly from the problem data.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate().take(self.num_vars()) {
            let (l, u) = self.bounds(j);
            worst = worst.max(l - v).max(v - u);
            if self.integrality[j] != VarKind::Continuous {
                worst = worst.max((v - v.round()).abs());
            }
        }
        for row in self.base.constraints.iter().chain(&self.extra_constraints) {
            worst = worst.max(row.violation(x) / row.rhs.abs().max(1.0));
        }
        worst
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        x.len() == self.num_vars() && self.max_violation(x) <= FEAS_TOL
    }
}

/// Returns a copy of `problem` with `zeros` pinned to 0 and `ones` pinned to 1.
pub fn apply_fixings(problem: &MipProblem, zeros: &[usize], ones: &[usize]) -> Result<MipProblem> {
    let n = problem.num_vars();
    if let Some(&j) = zeros.iter().find(|j| ones.contains(j)) {
        return Err(Error::ConflictingFix(j));
    }
    let mut out = problem.clone();
    for (set, value) in [(zeros, 0.0), (ones, 1.0)] {
        for &j in set {
            if j >= n {
                return Err(Error::InvalidProblem(format!("fixing index {j} out of range")));
            }
            out.fixed_values[j] = Some(value);
        }
    }
    Ok(out)
}

/// Appends the row `objective <= ub`. An infinite `ub` leaves the problem as is.
pub fn add_cutoff(problem: &MipProblem, ub: f64) -> MipProblem {
    let mut out = problem.clone();
    if ub.is_finite() {
        let coeffs = problem
            .base
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (j, *c))
            .collect();
        out.extra_constraints.push(Constraint::new(coeffs, Relation::Le, ub));
    }
    out
}

/// Appends `sum_{j in bucket} x_j >= 1` over binary variables.
pub fn add_piercing_cut(problem: &MipProblem, bucket: &[usize]) -> Result<MipProblem> {
    if bucket.is_empty() {
        return Err(Error::EmptyBucket);
    }
    if let Some(&j) = bucket
        .iter()
        .find(|&&j| problem.integrality.get(j) != Some(&VarKind::Binary))
    {
        return Err(Error::InvalidProblem(format!("piercing cut on non-binary variable {j}")));
    }
    let mut out = problem.clone();
    out.extra_constraints.push(Constraint::new(
        bucket.iter().map(|&j| (j, 1.0)).collect(),
        Relation::Ge,
        1.0,
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Seconds; checked before every node.
    pub time_limit: f64,
    /// Relative optimality gap at which the search stops.
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
    /// Determinism token. The search itself draws no random numbers.
    pub seed: u64,
    /// Branch on fractional binaries before general integers.
    pub binaries_first: bool,
    /// Extra seconds past `time_limit` granted while no incumbent exists.
    pub incumbent_grace: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            time_limit: f64::INFINITY,
            gap_tol: 1e-6,
            node_limit: None,
            seed: 0,
            binaries_first: true,
            incumbent_grace: 0.0,
        }
    }
}

impl SolveConfig {
    pub fn exact() -> Self {
        Self {
            gap_tol: 0.0,
            ..Self::default()
        }
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit = seconds;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MipStatus {
    Optimal,
    FeasibleTimeLimit,
    Infeasible,
    NoSolutionTimeLimit,
}

/// Snapshot taken whenever the global bound or the incumbent changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub nodes: usize,
    pub best_bound: f64,
    pub incumbent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipResult {
    pub status: MipStatus,
    pub incumbent: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub best_bound: f64,
    pub nodes: usize,
    pub wall_time: f64,
    pub lp_iterations: usize,
    pub progress: Vec<Progress>,
}

struct BoundChange {
    var: usize,
    lower: f64,
    upper: f64,
    parent: Option<Rc<BoundChange>>,
}

struct Node {
    bound: f64,
    id: u64,
    depth: usize,
    changes: Option<Rc<BoundChange>>,
    basis: Option<Rc<Vec<VarStatus>>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then oldest node
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    problem: &'a MipProblem,
    lp: LinearProgram,
    engine: Simplex,
    root_bounds: Vec<(f64, f64)>,
    /// Variables whose engine bounds currently differ from the root.
    touched: Vec<usize>,
    discrete: Vec<usize>,
    has_continuous: bool,
    config: SolveConfig,
    incumbent: Option<(Vec<f64>, f64)>,
    /// Smallest bound among nodes discarded by the gap test.
    pruned_bound: f64,
    nodes: usize,
    lp_iterations: usize,
    next_id: u64,
    progress: Vec<Progress>,
    reported_bound: f64,
}

enum NodeEnd {
    Pruned,
    Branch(Node, Node),
}

impl<'a> Search<'a> {
    fn threshold(&self) -> f64 {
        match &self.incumbent {
            None => f64::INFINITY,
            Some((_, v)) => {
                let scale = v.abs().max(1.0);
                v - (self.config.gap_tol * scale).max(1e-9 * scale)
            }
        }
    }

    /// Notes the bound of a discarded node. Bounds within numerical
    /// tolerance of the incumbent count as the incumbent value.
    fn prune(&mut self, bound: f64) {
        let eff = match &self.incumbent {
            Some((_, v)) if bound >= v - 1e-9 * v.abs().max(1.0) => *v,
            _ => bound,
        };
        self.pruned_bound = self.pruned_bound.min(eff);
    }

    fn record(&mut self, open_bound: f64) {
        let inc = self.incumbent.as_ref().map(|i| i.1);
        let mut bound = open_bound.min(self.pruned_bound);
        if let Some(v) = inc {
            bound = bound.min(v);
        }
        let bound = bound.max(self.reported_bound);
        let last = self.progress.last();
        if last.is_none_or(|p| p.best_bound != bound || p.incumbent != inc) {
            self.reported_bound = bound;
            self.progress.push(Progress {
                nodes: self.nodes,
                best_bound: bound,
                incumbent: inc,
            });
        }
    }

    fn load_bounds(&mut self, changes: &Option<Rc<BoundChange>>) {
        for &j in &self.touched {
            let (l, u) = self.root_bounds[j];
            self.engine.set_bounds(j, l, u);
        }
        self.touched.clear();
        let mut seen = Vec::new();
        let mut cur = changes.as_ref();
        while let Some(c) = cur {
            // the newest change of a variable wins
            if !seen.contains(&c.var) {
                seen.push(c.var);
                self.engine.set_bounds(c.var, c.lower, c.upper);
                self.touched.push(c.var);
            }
            cur = c.parent.as_ref();
        }
    }

    fn fresh_engine(&mut self) {
        self.lp_iterations += self.engine.iterations;
        let mut engine = Simplex::new(&self.lp);
        engine.set_strict(false);
        for &j in &self.touched {
            let (l, u) = self.engine.bounds(j);
            engine.set_bounds(j, l, u);
        }
        self.engine = engine;
    }

    fn solve_node(&mut self, cutoff: Option<f64>) -> Result<Outcome> {
        match self.engine.solve(cutoff) {
            Ok(o) => Ok(o),
            Err(e) => {
                debug!("node LP failed ({e}); retrying from a slack basis");
                self.fresh_engine();
                self.engine.solve(cutoff)
            }
        }
    }

    fn try_incumbent(&mut self, x: &[f64]) -> Result<()> {
        let mut cand = x.to_vec();
        for &j in &self.discrete {
            cand[j] = cand[j].round();
        }
        if !self.problem.is_feasible(&cand) && self.has_continuous {
            // re-solve the continuous part with the integers held fixed
            let mut lp = self.lp.clone();
            for &j in &self.discrete {
                lp.lower[j] = cand[j];
                lp.upper[j] = cand[j];
            }
            let sol = crate::lp::solve_lp(&lp)?;
            if sol.status == crate::lp::LpStatus::Optimal {
                cand = sol.primal;
                for &j in &self.discrete {
                    cand[j] = cand[j].round();
                }
            }
        }
        if !self.problem.is_feasible(&cand) {
            warn!(
                "rejecting integral LP point with violation {:.3e}",
                self.problem.max_violation(&cand)
            );
            return Ok(());
        }
        let value = self.lp.objective_value(&cand);
        if self.incumbent.as_ref().is_none_or(|i| value < i.1) {
            debug!("new incumbent {value} at node {}", self.nodes);
            self.incumbent = Some((cand, value));
        }
        Ok(())
    }

    fn process(&mut self, node: Node) -> Result<NodeEnd> {
        self.nodes += 1;
        self.load_bounds(&node.changes);
        if let Some(b) = &node.basis {
            self.engine.set_basis(b);
        }
        let threshold = self.threshold();
        let cutoff = threshold.is_finite().then_some(threshold);
        match self.solve_node(cutoff)? {
            Outcome::Infeasible => return Ok(NodeEnd::Pruned),
            Outcome::Cutoff => {
                self.prune(threshold.max(node.bound));
                return Ok(NodeEnd::Pruned);
            }
            Outcome::Unbounded => {
                return Err(Error::InvalidProblem("LP relaxation is unbounded".into()));
            }
            Outcome::Optimal => {}
        }
        let obj = self.engine.objective().max(node.bound);
        if obj >= threshold {
            self.prune(obj);
            return Ok(NodeEnd::Pruned);
        }
        let x = self.engine.primal().to_vec();
        // most fractional, binaries before general integers when configured
        let mut branch: Option<(usize, f64)> = None;
        let mut best_key = (false, INT_TOL);
        for &j in &self.discrete {
            let f = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
            if f <= INT_TOL {
                continue;
            }
            let class = self.config.binaries_first && self.problem.integrality[j] == VarKind::Binary;
            if (class, f) > best_key {
                best_key = (class, f);
                branch = Some((j, x[j]));
            }
        }
        let Some((j, v)) = branch else {
            self.try_incumbent(&x)?;
            return Ok(NodeEnd::Pruned);
        };
        let basis = Rc::new(self.engine.basis());
        let (l, u) = self.engine.bounds(j);
        let mut changes = node.changes.clone();
        if threshold.is_finite() {
            // reduced-cost tightening, valid for the whole subtree
            let room = threshold - obj;
            for &k in &self.discrete {
                let d = self.engine.reduced_cost(k);
                let (lk, uk) = self.engine.bounds(k);
                let (lower, upper) = match self.engine.status(k) {
                    VarStatus::AtLower if d > RC_TOL => (lk, lk + (room / d + 1e-6).floor()),
                    VarStatus::AtUpper if d < -RC_TOL => (uk - (room / -d + 1e-6).floor(), uk),
                    _ => continue,
                };
                if lower > lk || upper < uk {
                    changes = Some(Rc::new(BoundChange {
                        var: k,
                        lower: lower.max(lk),
                        upper: upper.min(uk),
                        parent: changes,
                    }));
                }
            }
        }
        let mut child = |lower: f64, upper: f64| {
            self.next_id += 1;
            Node {
                bound: obj,
                id: self.next_id,
                depth: node.depth + 1,
                changes: Some(Rc::new(BoundChange {
                    var: j,
                    lower,
                    upper,
                    parent: changes.clone(),
                })),
                basis: Some(basis.clone()),
            }
        };
        let down = child(l, v.floor());
        let up = child(v.ceil(), u);
        // dive up on binaries, toward the nearer rounding otherwise
        let up_first = self.problem.integrality[j] == VarKind::Binary || v - v.floor() >= 0.5;
        Ok(if up_first {
            NodeEnd::Branch(up, down)
        } else {
            NodeEnd::Branch(down, up)
        })
    }
}

/// Solves `problem` to optimality within `config` limits.
pub fn solve_mip(problem: &MipProblem, config: &SolveConfig) -> Result<MipResult> {
    let start = Instant::now();
    problem.validate()?;
    if !(config.time_limit > 0.0) || !(config.gap_tol >= 0.0) || !(config.incumbent_grace >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "time_limit {}, gap_tol {} and incumbent_grace {} must be positive, non-negative and non-negative",
            config.time_limit, config.gap_tol, config.incumbent_grace
        )));
    }
    let lp = problem.to_lp();
    let n = lp.num_vars;
    let discrete: Vec<usize> = (0..n)
        .filter(|&j| problem.integrality[j] != VarKind::Continuous)
        .collect();
    let infeasible_result = |nodes, start: Instant| MipResult {
        status: MipStatus::Infeasible,
        incumbent: None,
        objective: None,
        best_bound: f64::INFINITY,
        nodes,
        wall_time: start.elapsed().as_secs_f64(),
        lp_iterations: 0,
        progress: Vec::new(),
    };
    if (0..n).any(|j| lp.lower[j] > lp.upper[j]) {
        return Ok(infeasible_result(0, start));
    }
    let mut engine = Simplex::new(&lp);
    engine.set_strict(false);
    let mut search = Search {
        problem,
        root_bounds: (0..n).map(|j| (lp.lower[j], lp.upper[j])).collect(),
        has_continuous: discrete.len() < n,
        lp,
        engine,
        touched: Vec::new(),
        discrete,
        config: *config,
        incumbent: None,
        pruned_bound: f64::INFINITY,
        nodes: 0,
        lp_iterations: 0,
        next_id: 0,
        progress: Vec::new(),
        reported_bound: f64::NEG_INFINITY,
    };

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut dive: Option<Node> = Some(Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        depth: 0,
        changes: None,
        basis: None,
    });
    // sibling of the current dive node, taken next if the dive dies
    let mut sibling: Option<Node> = None;
    let mut limit_hit = false;
    loop {
        let node = match dive.take().or_else(|| sibling.take()) {
            Some(d) => d,
            None => match heap.pop() {
                Some(d) => d,
                None => break,
            },
        };
        if node.bound >= search.threshold() {
            search.prune(node.bound);
            continue;
        }
        let elapsed = start.elapsed().as_secs_f64();
        let limit = match search.incumbent {
            Some(_) => config.time_limit,
            None => config.time_limit + config.incumbent_grace,
        };
        if elapsed >= limit || config.node_limit.is_some_and(|l| search.nodes >= l) {
            heap.push(node);
            heap.extend(sibling.take());
            limit_hit = true;
            break;
        }
        match search.process(node)? {
            NodeEnd::Pruned => {}
            NodeEnd::Branch(first, second) => {
                if let Some(s) = sibling.replace(second) {
                    heap.push(s);
                }
                dive = Some(first);
            }
        }
        let open = heap
            .peek()
            .map_or(f64::INFINITY, |b| b.bound)
            .min(dive.as_ref().map_or(f64::INFINITY, |d| d.bound))
            .min(sibling.as_ref().map_or(f64::INFINITY, |d| d.bound));
        search.record(open);
    }

    let open_bound = heap.peek().map_or(f64::INFINITY, |b| b.bound);
    search.record(open_bound);
    let lp_iterations = search.lp_iterations + search.engine.iterations;
    let inc = search.incumbent.take();
    let mut best_bound = open_bound.min(search.pruned_bound);
    if let Some((_, v)) = &inc {
        best_bound = best_bound.min(*v);
    }
    best_bound = best_bound.max(search.reported_bound);
    let status = match (&inc, limit_hit) {
        (Some(_), false) => MipStatus::Optimal,
        (Some(_), true) => MipStatus::FeasibleTimeLimit,
        (None, false) => MipStatus::Infeasible,
        (None, true) => MipStatus::NoSolutionTimeLimit,
    };
    let (incumbent, objective) = match inc {
        Some((x, v)) => (Some(x), Some(v)),
        None => (None, None),
    };
    debug!(
        "branch-and-bound finished: {status:?}, {} nodes, objective {objective:?}, bound {best_bound}",
        search.nodes
    );
    Ok(MipResult {
        status,
        incumbent,
        objective,
        best_bound: if status == MipStatus::Infeasible { f64::INFINITY } else { best_bound },
        nodes: search.nodes,
        wall_time: start.elapsed().as_secs_f64(),
        lp_iterations,
        progress: search.progress,
    })
}
