use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use vmc_core::bench::{
    read_json, run_algorithm, run_bench, write_json, AlgoSettings, Algorithm, BenchConfig, Cell, RunStatus,
    TraceSummary,
};
use vmc_core::generator::{generate_instance, GenParams};
use vmc_core::model::{build_mip, check_plan, plan_cost, Instance, Plan};
use vmc_core::Error;

#[derive(Parser)]
#[command(name = "vmc", version, about = "Virtual machine consolidation solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Generate(GenerateArgs),
    /// Solve one instance and print a result record.
    Solve(SolveArgs),
    /// Validate a plan against an instance.
    Check(CheckArgs),
    /// Run a benchmark grid and write CSV and JSON reports.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    servers: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Seconds per run (kernel search: total budget).
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    /// Number of buckets to analyze; all when omitted.
    #[arg(long)]
    nbar: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Relative gap; 0 for exact, 1e-4 for kernel search subproblems when omitted.
    #[arg(long)]
    gap_tol: Option<f64>,
}

impl SolverArgs {
    fn settings(&self) -> AlgoSettings {
        AlgoSettings {
            time_limit: self.time_limit,
            gap_tol: self.gap_tol,
            n_bar: self.nbar,
            omega: self.omega,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value = "ksfvg")]
    algo: Algorithm,
    #[command(flatten)]
    solver: SolverArgs,
    /// Plan output file.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the MILP as a text listing and exit.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    instance: PathBuf,
    plan: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "10")]
    servers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4")]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Instances per (servers, beta) cell.
    #[arg(long, default_value_t = 5)]
    instances: usize,
    #[arg(long, value_delimiter = ',', default_value = "ksf,ksfv,ksfvg")]
    algo: Vec<Algorithm>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Time limit of the exact reference run.
    #[arg(long, default_value_t = 600.0)]
    reference_time_limit: f64,
    /// Seed of instance 0 in every cell.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(short, long, default_value = "bench_out")]
    output: PathBuf,
}

#[derive(Serialize)]
struct SolveRecord {
    instance: String,
    algo: Algorithm,
    status: RunStatus,
    objective: Option<f64>,
    best_bound: Option<f64>,
    time: f64,
    nodes: Option<usize>,
    violations: usize,
    trace: Option<TraceSummary>,
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalBreakdown(_) | Error::StillInfeasible | Error::NoSolution => Failure::Solver(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Failure::Input(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let inst = generate_instance(&GenParams::new(a.servers, a.alpha, a.beta, a.gamma, a.seed))?;
    match a.output {
        Some(p) => write_json(&p, &inst)?,
        None => print_json(&inst)?,
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let inst: Instance = read_json(&a.instance)?;
    inst.validate()?;
    if let Some(path) = a.dump_lp {
        let lp = build_mip(&inst).problem.to_lp();
        fs::write(&path, lp.to_string()).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        return Ok(());
    }
    let r = run_algorithm(&inst, a.algo, &a.solver.settings())?;
    let violations = match &r.plan {
        Some(p) => check_plan(&inst, p)?.len(),
        None => 0,
    };
    if let (Some(path), Some(plan)) = (&a.output, &r.plan) {
        write_json(path, plan)?;
    }
    print_json(&SolveRecord {
        instance: a.instance.display().to_string(),
        algo: r.algo,
        status: r.status,
        objective: r.objective,
        best_bound: r.best_bound,
        time: r.time,
        nodes: r.nodes,
        violations,
        trace: r.trace,
    })?;
    match r.status {
        RunStatus::Optimal | RunStatus::Feasible => Ok(()),
        s => Err(Failure::Solver(format!("{} found no feasible plan ({s:?})", r.algo))),
    }
}

fn check(a: CheckArgs) -> Result<(), Failure> {
    let inst: Instance = read_json(&a.instance)?;
    let plan: Plan = read_json(&a.plan)?;
    let violations = check_plan(&inst, &plan)?;
    for v in &violations {
        println!("{v:?}");
    }
    if violations.is_empty() {
        println!("ok: 0 violations, cost {}", plan_cost(&inst, &plan)?);
        Ok(())
    } else {
        Err(Failure::Input(format!("{} violations", violations.len())))
    }
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let cells = a
        .servers
        .iter()
        .flat_map(|&n| a.beta.iter().map(move |&b| Cell { num_servers: n, beta: b }))
        .collect();
    let config = BenchConfig {
        cells,
        instances_per_cell: a.instances,
        alpha: a.alpha,
        gamma: a.gamma,
        algorithms: a.algo,
        settings: a.solver.settings(),
        reference_time_limit: a.reference_time_limit,
        seed_base: a.seed,
        threads: a.threads,
    };
    config.validate()?;
    fs::create_dir_all(&a.output).map_err(|e| Failure::Input(format!("{}: {e}", a.output.display())))?;
    let report = run_bench(&config, Some(&a.output.join("instances")))?;
    write_json(&a.output.join("report.json"), &report)?;
    fs::write(a.output.join("report.csv"), report.to_csv()).map_err(|e| Failure::Input(e.to_string()))?;
    info!("wrote {}", a.output.display());
    print!("{}", report.to_csv());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VMC_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Check(a) => check(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
