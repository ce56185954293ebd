//! Benchmark harness: error metrics, per-cell aggregation and reports.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{generate_instance, GenParams};
use crate::kernel::{run_kernel_search, KsParams, KsStatus, Variant};
use crate::mip::{solve_mip, MipStatus, SolveConfig};
use crate::model::{build_mip, check_plan, Instance, Plan};

/// `100 (f_h - f_star) / f_star`.
pub fn error_pct(f_h: f64, f_star: f64) -> Result<f64> {
    if !(f_star > 0.0 && f_star.is_finite()) || !f_h.is_finite() {
        return Err(Error::InvalidInput(format!(
            "error_pct needs finite values and f_star > 0, got f_h = {f_h}, f_star = {f_star}"
        )));
    }
    Ok(100.0 * (f_h - f_star) / f_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Shifted geometric mean of the errors, `exp(mean ln(1 + e)) - 1`.
    pub gp: f64,
    /// Worst error.
    pub wgp: f64,
    /// Geometric mean of the times.
    pub tt: f64,
    /// Arithmetic mean of the errors.
    pub mean_error: f64,
}

pub fn aggregate_cell(errors: &[f64], times: &[f64]) -> Result<CellStats> {
    if errors.is_empty() || times.is_empty() {
        return Err(Error::InvalidInput("aggregate_cell needs non-empty lists".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > -1.0 && e.is_finite())) {
        return Err(Error::InvalidInput(format!("error {e} outside (-1, inf)")));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!("time {t} is not positive")));
    }
    let mean = |v: &mut dyn Iterator<Item = f64>, n: usize| v.sum::<f64>() / n as f64;
    let gp = mean(&mut errors.iter().map(|e| e.ln_1p()), errors.len()).exp_m1();
    let wgp = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tt = mean(&mut times.iter().map(|t| t.ln()), times.len()).exp();
    let mean_error = mean(&mut errors.iter().copied(), errors.len());
    // Rounding can push the mean a hair above the maximum.
    Ok(CellStats { gp: gp.min(wgp), wgp, tt, mean_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exact,
    Ksf,
    Ksfv,
    Ksfvg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Exact, Algorithm::Ksf, Algorithm::Ksfv, Algorithm::Ksfvg];

    pub fn variant(self) -> Option<Variant> {
        match self {
            Algorithm::Exact => None,
            Algorithm::Ksf => Some(Variant::Ksf),
            Algorithm::Ksfv => Some(Variant::Ksfv),
            Algorithm::Ksfvg => Some(Variant::Ksfvg),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Exact => "exact",
            Algorithm::Ksf => "ksf",
            Algorithm::Ksfv => "ksfv",
            Algorithm::Ksfvg => "ksfvg",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown algorithm {s:?}, expected exact|ksf|ksfv|ksfvg")))
    }
}

/// Settings shared by `solve` and `bench` for one algorithm run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoSettings {
    /// Seconds per run; the exact solver stops here, kernel search uses it as `t_max`.
    pub time_limit: f64,
    /// Gap tolerance; `None` keeps each algorithm's default (0 for exact).
    pub gap_tol: Option<f64>,
    pub n_bar: Option<usize>,
    pub omega: f64,
    pub epsilon: f64,
}

impl Default for AlgoSettings {
    fn default() -> Self {
        let ks = KsParams::default();
        Self {
            time_limit: ks.t_max,
            gap_tol: None,
            n_bar: None,
            omega: ks.omega,
            epsilon: ks.epsilon,
        }
    }
}

impl AlgoSettings {
    pub fn ks_params(&self, variant: Variant) -> KsParams {
        let mut p = KsParams {
            t_max: self.time_limit,
            n_bar: self.n_bar,
            omega: self.omega,
            epsilon: self.epsilon,
            ..KsParams::default()
        }
        .with_variant(variant);
        if let Some(g) = self.gap_tol {
            p.gap_tol = g;
        }
        p
    }

    pub fn exact_config(&self) -> SolveConfig {
        SolveConfig {
            gap_tol: self.gap_tol.unwrap_or(0.0),
            ..SolveConfig::exact().with_time_limit(self.time_limit)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Exact solver proved optimality.
    Optimal,
    /// A feasible plan, without an optimality proof.
    Feasible,
    Infeasible,
    NoSolution,
}

/// Kernel search bookkeeping kept in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub solves: usize,
    pub fixed_zero_binaries: usize,
    pub fixed_one_binaries: usize,
    pub fixed_zero_integers: usize,
    pub expansions: usize,
    pub fallback_level: usize,
    pub lp_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algo: Algorithm,
    pub status: RunStatus,
    pub objective: Option<f64>,
    /// Proven lower bound, exact solver only.
    pub best_bound: Option<f64>,
    pub plan: Option<Plan>,
    /// Seconds from model build to algorithm return.
    pub time: f64,
    pub nodes: Option<usize>,
    pub trace: Option<TraceSummary>,
}

/// Runs one algorithm on one instance. The plan, when present, has passed
/// `check_plan`.
pub fn run_algorithm(inst: &Instance, algo: Algorithm, settings: &AlgoSettings) -> Result<RunResult> {
    inst.validate()?;
    let out = match algo.variant() {
        None => {
            let start = Instant::now();
            let model = build_mip(inst);
            let r = solve_mip(&model.problem, &settings.exact_config())?;
            let time = start.elapsed().as_secs_f64();
            let status = match r.status {
                MipStatus::Optimal => RunStatus::Optimal,
                MipStatus::FeasibleTimeLimit => RunStatus::Feasible,
                MipStatus::Infeasible => RunStatus::Infeasible,
                MipStatus::NoSolutionTimeLimit => RunStatus::NoSolution,
            };
            RunResult {
                algo,
                status,
                objective: r.objective.map(|o| o + model.objective_offset),
                best_bound: Some(r.best_bound + model.objective_offset),
                plan: r.incumbent.as_ref().map(|x| Plan::from_solution(&model.vars, x)),
                time,
                nodes: Some(r.nodes),
                trace: None,
            }
        }
        Some(v) => {
            let r = run_kernel_search(inst, &settings.ks_params(v))?;
            let solved = r.status == KsStatus::Solved;
            RunResult {
                algo,
                status: if solved { RunStatus::Feasible } else { RunStatus::NoSolution },
                objective: solved.then_some(r.ub_min),
                best_bound: None,
                plan: r.plan,
                time: r.wall_time,
                nodes: Some(r.trace.iter().map(|t| t.nodes).sum()),
                trace: Some(TraceSummary {
                    solves: r.trace.len(),
                    fixed_zero_binaries: r.fixing_stats.zeros_binary,
                    fixed_one_binaries: r.fixing_stats.ones_binary,
                    fixed_zero_integers: r.fixing_stats.zeros_integer,
                    expansions: r.fixing_stats.expansions,
                    fallback_level: r.fixing_stats.fallback_level,
                    lp_bound: r.lp_bound,
                }),
            }
        }
    };
    if let Some(plan) = &out.plan {
        let violations = check_plan(inst, plan)?;
        if !violations.is_empty() {
            return Err(Error::NumericalBreakdown(format!(
                "{algo} returned a plan with {} violations",
                violations.len()
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub num_servers: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub cells: Vec<Cell>,
    pub instances_per_cell: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub algorithms: Vec<Algorithm>,
    /// Settings for the listed algorithms.
    pub settings: AlgoSettings,
    /// Time limit of the exact reference run that supplies `f_star`.
    pub reference_time_limit: f64,
    /// Instance `k` of every cell uses seed `seed_base + k`.
    pub seed_base: u64,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cells: vec![
                Cell { num_servers: 10, beta: 0.2 },
                Cell { num_servers: 10, beta: 0.4 },
            ],
            instances_per_cell: 5,
            alpha: 0.5,
            gamma: 0.5,
            algorithms: vec![Algorithm::Ksf, Algorithm::Ksfv, Algorithm::Ksfvg],
            settings: AlgoSettings::default(),
            reference_time_limit: 600.0,
            seed_base: 0,
            threads: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances_per_cell == 0 {
            return Err(Error::InvalidInput("instances_per_cell must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidInput("at least one algorithm is required".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidInput("at least one cell is required".into()));
        }
        if !(self.reference_time_limit > 0.0) || !(self.settings.time_limit > 0.0) {
            return Err(Error::InvalidInput("time limits must be positive".into()));
        }
        for c in &self.cells {
            GenParams::new(c.num_servers, self.alpha, c.beta, self.gamma, 0).validate()?;
        }
        Ok(())
    }

    pub fn gen_params(&self, cell: usize, instance: usize) -> GenParams {
        let c = self.cells[cell];
        GenParams::new(c.num_servers, self.alpha, c.beta, self.gamma, self.seed_base + instance as u64)
    }
}

/// One (instance, algorithm) record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub cell: usize,
    pub num_servers: usize,
    pub beta: f64,
    pub instance: usize,
    pub seed: u64,
    pub algo: Algorithm,
    pub status: RunStatus,
    pub f_h: Option<f64>,
    pub f_star: Option<f64>,
    /// False when the reference run stopped before proving optimality; `f_star`
    /// is then the best objective seen on this instance.
    pub f_star_proven: bool,
    pub error: Option<f64>,
    pub time: f64,
    pub trace: Option<TraceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub num_servers: usize,
    pub beta: f64,
    pub algo: Algorithm,
    pub gp: Option<f64>,
    pub wgp: Option<f64>,
    pub tt: f64,
    pub mean_error: Option<f64>,
    pub n_instances: usize,
    /// Runs that returned a feasible plan.
    pub n_solved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub reference: String,
    pub timing: String,
    pub config: BenchConfig,
    pub instances: Vec<InstanceRecord>,
    pub aggregates: Vec<AggregateRow>,
}

struct InstanceOutcome {
    cell: usize,
    index: usize,
    params: GenParams,
    instance: Instance,
    records: Vec<InstanceRecord>,
}

fn bench_instance(config: &BenchConfig, cell: usize, index: usize) -> Result<InstanceOutcome> {
    let params = config.gen_params(cell, index);
    let instance = generate_instance(&params)?;
    let mut runs = Vec::new();
    for &algo in &config.algorithms {
        runs.push(run_algorithm(&instance, algo, &config.settings)?);
    }
    let listed_exact = runs
        .iter()
        .find(|r| r.algo == Algorithm::Exact && config.settings.gap_tol.unwrap_or(0.0) == 0.0)
        .filter(|_| config.settings.time_limit >= config.reference_time_limit);
    let reference = match listed_exact {
        Some(r) => r.clone(),
        None => {
            let s = AlgoSettings {
                time_limit: config.reference_time_limit,
                gap_tol: Some(0.0),
                ..config.settings
            };
            run_algorithm(&instance, Algorithm::Exact, &s)?
        }
    };
    let proven = reference.status == RunStatus::Optimal;
    let f_star = if proven {
        reference.objective
    } else {
        runs.iter()
            .chain(std::iter::once(&reference))
            .filter_map(|r| r.objective)
            .min_by(f64::total_cmp)
    };
    let c = config.cells[cell];
    let mut records = Vec::new();
    for r in runs {
        let error = match (r.objective, f_star) {
            (Some(h), Some(s)) => Some(error_pct(h, s)?),
            _ => None,
        };
        records.push(InstanceRecord {
            cell,
            num_servers: c.num_servers,
            beta: c.beta,
            instance: index,
            seed: params.seed,
            algo: r.algo,
            status: r.status,
            f_h: r.objective,
            f_star,
            f_star_proven: proven,
            error,
            time: r.time,
            trace: r.trace,
        });
    }
    Ok(InstanceOutcome { cell, index, params, instance, records })
}

fn aggregate(config: &BenchConfig, records: &[InstanceRecord]) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    for (ci, c) in config.cells.iter().enumerate() {
        for &algo in &config.algorithms {
            let recs: Vec<_> = records.iter().filter(|r| r.cell == ci && r.algo == algo).collect();
            let errors: Vec<f64> = recs.iter().filter_map(|r| r.error).collect();
            let times: Vec<f64> = recs.iter().map(|r| r.time.max(1e-6)).collect();
            let stats = if errors.is_empty() {
                None
            } else {
                Some(aggregate_cell(&errors, &times)?)
            };
            let tt = aggregate_cell(&vec![0.0; times.len()], &times)?.tt;
            rows.push(AggregateRow {
                num_servers: c.num_servers,
                beta: c.beta,
                algo,
                gp: stats.map(|s| s.gp),
                wgp: stats.map(|s| s.wgp),
                tt,
                mean_error: stats.map(|s| s.mean_error),
                n_instances: recs.len(),
                n_solved: recs.iter().filter(|r| r.f_h.is_some()).count(),
            });
        }
    }
    Ok(rows)
}

/// File name used for instance `index` of cell `cell`.
pub fn instance_file_name(config: &BenchConfig, cell: usize, index: usize) -> String {
    let c = config.cells[cell];
    format!("k{}_b{}_i{:03}_s{}.json", c.num_servers, c.beta, index, config.seed_base + index as u64)
}

/// Runs every (cell, instance) pair, in parallel, and writes the generated
/// instances to `instance_dir` when given.
pub fn run_bench(config: &BenchConfig, instance_dir: Option<&Path>) -> Result<BenchReport> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.cells.len())
        .flat_map(|c| (0..config.instances_per_cell).map(move |i| (c, i)))
        .collect();
    let work = || -> Result<Vec<InstanceOutcome>> {
        jobs.par_iter().map(|&(c, i)| bench_instance(config, c, i)).collect()
    };
    let mut outcomes = if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work)?
    } else {
        work()?
    };
    outcomes.sort_by_key(|o| (o.cell, o.index));
    if let Some(dir) = instance_dir {
        fs::create_dir_all(dir).map_err(io_err)?;
        for o in &outcomes {
            debug_assert_eq!(o.instance.generator.as_ref().map(|g| g.params), Some(o.params));
            write_json(&dir.join(instance_file_name(config, o.cell, o.index)), &o.instance)?;
        }
    }
    let instances: Vec<InstanceRecord> = outcomes.into_iter().flat_map(|o| o.records).collect();
    let aggregates = aggregate(config, &instances)?;
    Ok(BenchReport {
        reference: format!(
            "f_star: bundled branch-and-bound, gap_tol 0, time limit {} s; when optimality is not proven, \
             f_star is the best objective found on the instance by any run (f_star_proven = false)",
            config.reference_time_limit
        ),
        timing: "seconds from model build to algorithm return, instance generation excluded".into(),
        config: config.clone(),
        instances,
        aggregates,
    })
}

impl BenchReport {
    /// One row per cell and algorithm.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from("num_servers,beta,algo,GP,WGP,TT,n_instances\n");
        for r in &self.aggregates {
            s += &format!(
                "{},{},{},{},{},{:.6},{}\n",
                r.num_servers,
                r.beta,
                r.algo,
                opt(r.gp),
                opt(r.wgp),
                r.tt,
                r.n_instances
            );
        }
        s
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("i/o error: {e}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Removes timing fields, recursively, so two reports can be compared.
pub fn strip_timing(value: &mut serde_json::Value) {
    const TIMING: [&str; 3] = ["time", "tt", "wall_time"];
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !TIMING.contains(&k.as_str()));
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
