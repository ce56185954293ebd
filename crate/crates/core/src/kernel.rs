//! Kernel search over the server activation binaries, with optional
//! reduced-cost variable fixing.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpSolution, LpStatus, Relation};
use crate::mip::{add_cutoff, add_piercing_cut, solve_mip, MipProblem, MipResult, MipStatus, SolveConfig, INT_TOL};
use crate::model::{build_mip, check_plan, plan_cost, Instance, Plan, VarMap, VmcpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// No fixing.
    Ksf,
    /// Reduced-cost fixing of binaries.
    Ksfv,
    /// Reduced-cost fixing of binaries and general integers.
    Ksfvg,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ksf, Variant::Ksfv, Variant::Ksfvg];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ksf => "KSF",
            Variant::Ksfv => "KSFV",
            Variant::Ksfvg => "KSFVG",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ksf" => Ok(Variant::Ksf),
            "ksfv" => Ok(Variant::Ksfv),
            "ksfvg" => Ok(Variant::Ksfvg),
            _ => Err(Error::InvalidInput(format!("unknown kernel search variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelSizeRule {
    /// Binaries with a positive LP value, at least `min(10, available)`.
    PositiveLp,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BucketSizeRule {
    /// Same size as the initial kernel.
    KernelSize,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsParams {
    /// Overall time budget in seconds, including the LP relaxation.
    pub t_max: f64,
    /// Maximum number of buckets analyzed; `None` analyzes all.
    pub n_bar: Option<usize>,
    pub epsilon: f64,
    pub omega: f64,
    pub kernel_size_rule: KernelSizeRule,
    pub bucket_size_rule: BucketSizeRule,
    pub variant: Variant,
    /// Relative gap of every restricted solve.
    pub gap_tol: f64,
    pub seed: u64,
}

impl Default for KsParams {
    fn default() -> Self {
        Self {
            t_max: 60.0,
            n_bar: None,
            epsilon: 1e-4,
            omega: 1.0,
            kernel_size_rule: KernelSizeRule::PositiveLp,
            bucket_size_rule: BucketSizeRule::KernelSize,
            variant: Variant::Ksfvg,
            gap_tol: 1e-4,
            seed: 0,
        }
    }
}

impl KsParams {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) || !(self.epsilon > 0.0) || !(self.omega > 0.0) || !(self.gap_tol >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "t_max {}, epsilon {}, omega {} must be positive and gap_tol {} non-negative",
                self.t_max, self.epsilon, self.omega, self.gap_tol
            )));
        }
        if matches!(self.kernel_size_rule, KernelSizeRule::Fixed(0))
            || matches!(self.bucket_size_rule, BucketSizeRule::Fixed(0))
        {
            return Err(Error::InvalidInput("fixed kernel and bucket sizes must be positive".into()));
        }
        Ok(())
    }
}

/// A fixed variable and the reduced cost that justified fixing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedVar {
    pub index: usize,
    pub reduced_cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixingSets {
    pub zeros_binary: Vec<FixedVar>,
    pub ones_binary: Vec<FixedVar>,
    pub zeros_integer: Vec<FixedVar>,
}

impl FixingSets {
    pub fn is_empty(&self) -> bool {
        self.zeros_binary.is_empty() && self.ones_binary.is_empty() && self.zeros_integer.is_empty()
    }

    pub fn zero_binaries(&self) -> Vec<usize> {
        self.zeros_binary.iter().map(|f| f.index).collect()
    }

    pub fn one_binaries(&self) -> Vec<usize> {
        self.ones_binary.iter().map(|f| f.index).collect()
    }

    pub fn zero_integers(&self) -> Vec<usize> {
        self.zeros_integer.iter().map(|f| f.index).collect()
    }
}

/// Reduced-cost fixing. Binaries with `r >= eps` go to zero and those with
/// `r <= -eps` go to one (`Ksfv`, `Ksfvg`); general integers with `r >= eps`
/// go to zero (`Ksfvg` only).
pub fn fix_variables(lp: &LpSolution, inst: &Instance, eps: f64, variant: Variant) -> FixingSets {
    let vars = var_map(inst);
    let mut out = FixingSets::default();
    if variant == Variant::Ksf {
        return out;
    }
    for j in vars.binaries() {
        let r = lp.reduced_costs[j];
        if r >= eps {
            out.zeros_binary.push(FixedVar { index: j, reduced_cost: r });
        } else if r <= -eps {
            out.ones_binary.push(FixedVar { index: j, reduced_cost: r });
        }
    }
    if variant == Variant::Ksfvg {
        for j in vars.integers() {
            let r = lp.reduced_costs[j];
            if r >= eps {
                out.zeros_integer.push(FixedVar { index: j, reduced_cost: r });
            }
        }
    }
    out
}

fn var_map(inst: &Instance) -> VarMap {
    VarMap {
        num_vm_types: inst.num_vm_types(),
        num_servers: inst.num_servers(),
    }
}

/// LP value descending, then |reduced cost| ascending, then index.
pub fn sort_binaries(lp: &LpSolution, unfixed: &[usize]) -> Vec<usize> {
    let mut v = unfixed.to_vec();
    v.sort_by(|&a, &b| {
        lp.primal[b]
            .total_cmp(&lp.primal[a])
            .then(lp.reduced_costs[a].abs().total_cmp(&lp.reduced_costs[b].abs()))
            .then(a.cmp(&b))
    });
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelState {
    pub kernel: Vec<usize>,
    pub buckets: Vec<Vec<usize>>,
    /// Binaries free in the next restricted problem, kernel first.
    pub working_set: Vec<usize>,
    pub zeros: Vec<usize>,
    pub ones: Vec<usize>,
    pub ub_min: f64,
    pub incumbent: Option<Plan>,
    /// Index of the next bucket to analyze.
    pub bucket_cursor: usize,
    /// Size used when buckets are rebuilt after a kernel expansion.
    pub bucket_size: usize,
}

impl KernelState {
    pub fn remaining_buckets(&self) -> &[Vec<usize>] {
        &self.buckets[self.bucket_cursor.min(self.buckets.len())..]
    }

    /// True when the working set, the remaining buckets, and the two fixed
    /// sets cover `binaries` exactly once, and the kernel lies in the
    /// working set.
    pub fn partition_holds(&self, binaries: std::ops::Range<usize>) -> bool {
        let mut count = vec![0usize; binaries.len()];
        let all = self
            .working_set
            .iter()
            .chain(self.remaining_buckets().iter().flatten())
            .chain(&self.zeros)
            .chain(&self.ones);
        for &j in all {
            if !binaries.contains(&j) {
                return false;
            }
            count[j - binaries.start] += 1;
        }
        count.iter().all(|&c| c == 1) && self.kernel.iter().all(|j| self.working_set.contains(j))
    }
}

/// Splits `sorted` into an initial kernel and equally sized buckets.
/// `lp_values` is the full LP primal vector.
pub fn build_kernel_and_buckets(sorted: &[usize], lp_values: &[f64], params: &KsParams) -> KernelState {
    let len = sorted.len();
    let kernel_size = match params.kernel_size_rule {
        KernelSizeRule::PositiveLp => {
            let positive = sorted.iter().filter(|&&j| lp_values[j] > INT_TOL).count();
            positive.clamp(len.min(10), len)
        }
        KernelSizeRule::Fixed(k) => k.min(len),
    };
    let bucket_size = match params.bucket_size_rule {
        BucketSizeRule::KernelSize => kernel_size.max(1),
        BucketSizeRule::Fixed(b) => b,
    };
    let kernel = sorted[..kernel_size].to_vec();
    let buckets = sorted[kernel_size..].chunks(bucket_size).map(|c| c.to_vec()).collect();
    KernelState {
        working_set: kernel.clone(),
        kernel,
        buckets,
        zeros: Vec::new(),
        ones: Vec::new(),
        ub_min: f64::INFINITY,
        incumbent: None,
        bucket_cursor: 0,
        bucket_size,
    }
}

/// MIP(U): binaries outside the working set, the bucket and the ones-set are
/// pinned to zero, together with the assignment variables of those servers.
pub fn make_restricted(
    model: &VmcpModel,
    state: &KernelState,
    fixings: &FixingSets,
    bucket: Option<&[usize]>,
    ub: Option<f64>,
) -> Result<MipProblem> {
    let vars = &model.vars;
    let mut p = model.problem.clone();
    let mut open = vec![false; vars.num_vars()];
    for &j in state.working_set.iter().chain(bucket.unwrap_or(&[])) {
        open[j] = true;
    }
    for f in &fixings.ones_binary {
        p.fixed_values[f.index] = Some(1.0);
        open[f.index] = true;
    }
    for f in &fixings.zeros_integer {
        p.fixed_values[f.index] = Some(0.0);
    }
    let closed: Vec<usize> = vars.binaries().filter(|&j| !open[j]).collect();
    for &j in &closed {
        p.fixed_values[j] = Some(0.0);
    }
    // with y = 0, a row `sum a_k x_k - s y <= 0` over non-negative terms pins every x_k
    for row in &model.problem.base.constraints {
        if row.relation != Relation::Le || row.rhs != 0.0 {
            continue;
        }
        let pinned = row.coeffs.iter().any(|&(k, _)| closed.binary_search(&k).is_ok());
        let others_nonneg = row
            .coeffs
            .iter()
            .all(|&(k, a)| vars.binaries().contains(&k) || (a >= 0.0 && p.base.lower[k] >= 0.0));
        let ys = row.coeffs.iter().filter(|&&(k, _)| vars.binaries().contains(&k)).count();
        if pinned && others_nonneg && ys == 1 {
            for &(k, a) in &row.coeffs {
                if a > 0.0 && !vars.binaries().contains(&k) {
                    p.fixed_values[k] = Some(0.0);
                }
            }
        }
    }
    if let Some(ub) = ub {
        p = add_cutoff(&p, ub);
    }
    if let Some(b) = bucket {
        p = add_piercing_cut(&p, b)?;
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Kernel,
    Expansion,
    Fallback,
    Bucket,
}

/// One restricted solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub phase: Phase,
    /// 1-based bucket index for `Bucket` records.
    pub bucket: Option<usize>,
    pub working_set_size: usize,
    pub status: MipStatus,
    pub ub: Option<f64>,
    pub ub_min: f64,
    pub nodes: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixingStats {
    pub zeros_binary: usize,
    pub ones_binary: usize,
    pub zeros_integer: usize,
    /// 0 when no fallback was needed; 1 after unfixing integers; 2 after
    /// dropping all fixings.
    pub fallback_level: usize,
    pub expansions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KsStatus {
    Solved,
    NoSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub status: KsStatus,
    pub ub_min: f64,
    pub plan: Option<Plan>,
    pub trace: Vec<SolveRecord>,
    pub fixing_stats: FixingStats,
    pub lp_bound: f64,
    pub wall_time: f64,
}

struct Run<'a> {
    inst: &'a Instance,
    model: VmcpModel,
    params: KsParams,
    start: Instant,
    trace: Vec<SolveRecord>,
    /// Passed to every solve as `SolveConfig::incumbent_grace`.
    grace: f64,
}

impl Run<'_> {
    fn remaining(&self) -> f64 {
        self.params.t_max - self.start.elapsed().as_secs_f64()
    }

    /// Solves with `limit` seconds; `limit` is not capped by the remaining
    /// budget, callers do that.
    fn solve(&mut self, problem: &MipProblem, limit: f64) -> Result<MipResult> {
        let cfg = SolveConfig {
            time_limit: limit.max(1e-3),
            gap_tol: self.params.gap_tol,
            seed: self.params.seed,
            incumbent_grace: self.grace,
            ..SolveConfig::default()
        };
        solve_mip(problem, &cfg)
    }

    /// Solves MIP(U) and records it. Accepts the incumbent when it strictly
    /// improves `state.ub_min`.
    fn restricted(
        &mut self,
        state: &mut KernelState,
        fixings: &FixingSets,
        bucket: Option<(usize, &[usize])>,
        phase: Phase,
        limit: f64,
    ) -> Result<MipResult> {
        let ub = (bucket.is_some() && state.ub_min.is_finite()).then_some(state.ub_min);
        let problem = make_restricted(&self.model, state, fixings, bucket.map(|b| b.1), ub)?;
        let t = Instant::now();
        let limit = if phase == Phase::Fallback { limit } else { limit.min(self.remaining()) };
        let r = self.solve(&problem, limit)?;
        if let (Some(x), Some(obj)) = (&r.incumbent, r.objective) {
            let tol = 1e-9 * obj.abs().max(1.0);
            if obj < state.ub_min - tol {
                let plan = Plan::from_solution(&self.model.vars, x);
                debug_assert!(check_plan(self.inst, &plan).map(|v| v.is_empty()).unwrap_or(false));
                state.ub_min = obj;
                state.incumbent = Some(plan);
            }
        }
        self.trace.push(SolveRecord {
            phase,
            bucket: bucket.map(|b| b.0 + 1),
            working_set_size: state.working_set.len() + bucket.map_or(0, |b| b.1.len()),
            status: r.status,
            ub: r.objective,
            ub_min: state.ub_min,
            nodes: r.nodes,
            wall_time: t.elapsed().as_secs_f64(),
        });
        debug!(
            "{phase:?} solve: |U| = {}, {:?}, UB = {:?}, UB_min = {}",
            state.working_set.len(),
            r.status,
            r.objective,
            state.ub_min
        );
        Ok(r)
    }
}

/// Grows the working set by `ceil(|K| omega)` binaries per step, in bucket
/// order, until MIP(U) yields a solution. The kernel then becomes U and the
/// untouched binaries are re-bucketed.
pub fn expand_kernel_until_feasible(
    inst: &Instance,
    state: KernelState,
    fixings: &FixingSets,
    params: &KsParams,
) -> Result<KernelState> {
    let mut run = Run {
        inst,
        model: build_mip(inst),
        params: *params,
        start: Instant::now(),
        trace: Vec::new(),
        grace: 0.0,
    };
    let limit = params.t_max;
    expand(&mut run, state, fixings, limit)
}

fn expand(run: &mut Run<'_>, mut state: KernelState, fixings: &FixingSets, limit: f64) -> Result<KernelState> {
    if state.incumbent.is_some() {
        return Ok(state);
    }
    let step = ((state.kernel.len() as f64 * run.params.omega).ceil() as usize).max(1);
    let mut pool: Vec<usize> = state.remaining_buckets().iter().flatten().copied().collect();
    loop {
        if pool.is_empty() || run.remaining() <= 0.0 {
            return Err(Error::StillInfeasible);
        }
        let take = step.min(pool.len());
        state.working_set.extend(pool.drain(..take));
        state.buckets = vec![pool.clone()];
        state.bucket_cursor = 0;
        run.restricted(&mut state, fixings, None, Phase::Expansion, limit)?;
        if state.incumbent.is_some() {
            state.kernel = state.working_set.clone();
            let size = state.bucket_size.max(1);
            state.buckets = pool.chunks(size).map(|c| c.to_vec()).collect();
            state.bucket_cursor = 0;
            return Ok(state);
        }
    }
}

/// Runs the kernel search end to end.
pub fn run_kernel_search(inst: &Instance, params: &KsParams) -> Result<KsResult> {
    params.validate()?;
    inst.validate()?;
    let start = Instant::now();
    let model = build_mip(inst);
    let vars = model.vars;
    let lp = solve_lp(&model.problem.to_lp())?;
    let mut run = Run {
        inst,
        model,
        params: *params,
        start,
        trace: Vec::new(),
        grace: 0.0,
    };
    let no_solution = |run: Run<'_>, stats: FixingStats, lp_bound: f64| KsResult {
        status: KsStatus::NoSolution,
        ub_min: f64::INFINITY,
        plan: None,
        trace: run.trace,
        fixing_stats: stats,
        lp_bound,
        wall_time: run.start.elapsed().as_secs_f64(),
    };
    if lp.status != LpStatus::Optimal {
        return Ok(no_solution(run, FixingStats::default(), f64::INFINITY));
    }

    let mut fixings = fix_variables(&lp, inst, params.epsilon, params.variant);
    let mut stats = FixingStats {
        zeros_binary: fixings.zeros_binary.len(),
        ones_binary: fixings.ones_binary.len(),
        zeros_integer: fixings.zeros_integer.len(),
        ..FixingStats::default()
    };
    let (zeros, ones) = (fixings.zero_binaries(), fixings.one_binaries());
    let unfixed: Vec<usize> = vars
        .binaries()
        .filter(|j| !zeros.contains(j) && !ones.contains(j))
        .collect();
    let sorted = sort_binaries(&lp, &unfixed);
    let mut state = build_kernel_and_buckets(&sorted, &lp.primal, params);
    state.zeros = zeros;
    state.ones = ones;
    let n = state.buckets.len();
    let t_i = run.remaining() / (n + 1) as f64;
    info!(
        "{}: kernel {}, {} buckets, fixed {}/{}/{}, T_i = {:.3}s",
        params.variant,
        state.kernel.len(),
        n,
        stats.zeros_binary,
        stats.ones_binary,
        stats.zeros_integer,
        t_i
    );

    run.restricted(&mut state, &fixings, None, Phase::Kernel, t_i)?;
    let mut t_i = t_i;
    if state.incumbent.is_none() {
        let before = run.trace.len();
        let expanded = expand(&mut run, state.clone(), &fixings, t_i);
        stats.expansions = run.trace.len() - before;
        state = match expanded {
            Ok(s) => s,
            Err(Error::StillInfeasible) => {
                // fallback ladder: unfix integers, then drop all fixings
                let mut all_open = state.clone();
                all_open.working_set = vars
                    .binaries()
                    .filter(|j| !all_open.zeros.contains(j) && !all_open.ones.contains(j))
                    .collect();
                all_open.buckets.clear();
                all_open.bucket_cursor = 0;
                fixings.zeros_integer.clear();
                stats.fallback_level = 1;
                // each rung may overrun t_max by at most half of T_1
                let limit = run.remaining().max(t_i / 2.0);
                run.restricted(&mut all_open, &fixings, None, Phase::Fallback, limit)?;
                if all_open.incumbent.is_none() {
                    fixings = FixingSets::default();
                    stats.fallback_level = 2;
                    all_open.working_set = vars.binaries().collect();
                    all_open.zeros.clear();
                    all_open.ones.clear();
                    let limit = run.remaining().max(t_i / 2.0);
                    // the last rung keeps searching, up to t_max more, until it has a plan
                    run.grace = params.t_max;
                    run.restricted(&mut all_open, &fixings, None, Phase::Fallback, limit)?;
                    run.grace = 0.0;
                }
                all_open.kernel = all_open.working_set.clone();
                all_open
            }
            Err(e) => return Err(e),
        };
        let todo = state.buckets.len().min(params.n_bar.unwrap_or(usize::MAX));
        t_i = run.remaining() / todo.max(1) as f64;
    }

    let todo = state.buckets.len().min(params.n_bar.unwrap_or(usize::MAX));
    for b in 0..todo {
        if run.remaining() <= 0.0 {
            break;
        }
        let bucket = state.buckets[b].clone();
        state.bucket_cursor = b;
        run.restricted(&mut state, &fixings, Some((b, &bucket)), Phase::Bucket, t_i)?;
        state.working_set.extend_from_slice(&bucket);
        state.bucket_cursor = b + 1;
    }

    let Some(plan) = state.incumbent.take() else {
        return Ok(no_solution(run, stats, lp.objective));
    };
    let violations = check_plan(inst, &plan)?;
    if !violations.is_empty() {
        return Err(Error::NumericalBreakdown(format!(
            "kernel search incumbent violates {} constraints",
            violations.len()
        )));
    }
    let cost = plan_cost(inst, &plan)?;
    Ok(KsResult {
        status: KsStatus::Solved,
        ub_min: cost,
        plan: Some(plan),
        trace: run.trace,
        fixing_stats: stats,
        lp_bound: lp.objective,
        wall_time: run.start.elapsed().as_secs_f64(),
    })
}
