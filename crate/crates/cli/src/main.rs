use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use mplq::bench::{
    improvement_rate, run_grid, sweep_factor, write_grid_plotdata, write_sweep_csv, write_sweep_plotdata, Budget,
    Factor, GridConfig, Solver, SweepConfig,
};
use mplq::ga::{run_ga, GaParams};
use mplq::hqm::{run_hqm, HqmParams, SolverConfig};
use mplq::instance::{assign_customers, generate_instance, validate_instance, GeneratorConfig};
use mplq::oracle::{brute_force_best, OracleLimit};
use mplq::routing::check_feasibility;
use mplq::taskgen::build_tasks;
use mplq::{AdjustmentPolicy, Evaluator, Instance, SearchState};

/// Mobile parcel locker location-routing toolkit.
#[derive(Debug, Parser)]
#[command(name = "mplq", version, about)]
struct Cli {
    /// Worker threads for parallel sections; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Random seed for generation and search.
    #[arg(long, global = true, env = "MPLQ_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random instance file.
    Generate(GenerateArgs),
    /// Solve an instance and write plan, history and state.
    Solve(SolveArgs),
    /// Check an instance, and optionally a solution, against the model constraints.
    Validate(ValidateArgs),
    /// Find the exact optimum of a tiny instance by enumeration.
    Oracle(OracleArgs),
    /// Run the spaces x locations comparison grid.
    Bench(BenchArgs),
    /// Sweep one generator factor and record the mean service delay.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output instance file.
    #[arg(long)]
    out: PathBuf,
    /// TOML file of generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spaces: Option<usize>,
    #[arg(long)]
    locations: Option<usize>,
    #[arg(long)]
    max_lockers: Option<usize>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "hqm")]
    solver: Solver,
    /// Adjustment policy; defaults to the config file's, then hcps.
    #[arg(long)]
    policy: Option<AdjustmentPolicy>,
    /// Agents (HQM) or population (GA).
    #[arg(long)]
    agents: Option<usize>,
    /// Timesteps (HQM) or generations (GA).
    #[arg(long)]
    iters: Option<usize>,
    /// Named agent and iteration budget: desk or paper.
    #[arg(long, default_value = "paper", value_parser = parse_budget)]
    budget: Budget,
    /// TOML solver config (agents, timesteps, gamma, tol, seed, policy).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for plan.csv, history.csv, tasks.csv and state.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Solution written by `solve`; when omitted only the instance is checked.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Policy used to rebuild the plan; defaults to the one recorded in the
    /// state file, then hcps.
    #[arg(long)]
    policy: Option<AdjustmentPolicy>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "hcps")]
    policy: AdjustmentPolicy,
    /// Largest number of states to enumerate.
    #[arg(long, default_value_t = 10_000_000)]
    limit: u128,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [5, 6, 7, 8, 9, 10])]
    spaces: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20])]
    locations: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    replications: usize,
    #[arg(long, default_value = "desk", value_parser = parse_budget)]
    budget: Budget,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// One of t_s, t_p, capacity, speed, spaces, locations, rho_l, rho_c.
    #[arg(long)]
    factor: Factor,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, default_value = "hqm")]
    solver: Solver,
    #[arg(long, default_value = "hcps")]
    policy: AdjustmentPolicy,
    #[arg(long, default_value = "desk", value_parser = parse_budget)]
    budget: Budget,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    Budget::named(s).map_err(|e| e.to_string())
}

/// Prints the resolved configuration as the first output line and returns it
/// for reuse in file headers.
fn header(command: &str, config: &Value) -> String {
    let line = format!("# mplq {command} {config}");
    println!("{line}");
    line
}

fn metrics(pairs: &[(&str, String)]) {
    let line: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{}", line.join(" "));
}

fn create_with_header(path: &Path, header: &str) -> anyhow::Result<BufWriter<fs::File>> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{header}")?;
    Ok(w)
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    Ok(Instance::load(path)?)
}

fn generate(args: GenerateArgs, seed: Option<u64>) -> anyhow::Result<u8> {
    let mut config = match &args.config {
        Some(path) => GeneratorConfig::from_toml(&fs::read_to_string(path)?)?,
        None => GeneratorConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(n) = args.spaces {
        config.num_spaces = n;
    }
    if let Some(n) = args.locations {
        config.locations_per_space = n;
    }
    if let Some(n) = args.max_lockers {
        config.fleet.max_lockers = n;
    }
    header("generate", &serde_json::to_value(&config)?);
    let instance = generate_instance(&config)?;
    instance.save(&args.out)?;
    metrics(&[
        ("spaces", instance.spaces.len().to_string()),
        ("customers", instance.customers.len().to_string()),
        ("out", args.out.display().to_string()),
    ]);
    Ok(0)
}

fn solve(args: SolveArgs, seed: Option<u64>) -> anyhow::Result<u8> {
    let file = match &args.config {
        Some(path) => Some(SolverConfig::load(path)?),
        None => None,
    };
    let base = file.clone().unwrap_or_default();
    let agents = args.agents.or(file.as_ref().map(|c| c.agents)).unwrap_or(args.budget.agents);
    let iterations = args.iters.or(file.as_ref().map(|c| c.timesteps)).unwrap_or(args.budget.iterations);
    let seed = seed.or(file.as_ref().map(|c| c.seed)).unwrap_or(0);
    let policy = args.policy.unwrap_or(base.policy);

    let config = json!({
        "instance": args.instance,
        "solver": args.solver.to_string(),
        "policy": policy.to_string(),
        "agents": agents,
        "iterations": iterations,
        "gamma": base.gamma,
        "tol": base.tol,
        "seed": seed,
    });
    let head = header("solve", &config);

    let instance = load_instance(&args.instance)?;
    let assignment = assign_customers(&instance);
    let pool = build_tasks(&instance, &assignment);
    let eval = Evaluator::new(&instance, &pool, policy)?;
    let out = match args.solver {
        Solver::Hqm => run_hqm(
            &eval,
            &HqmParams {
                agents,
                timesteps: iterations,
                seed,
                ..base.hqm_params()
            },
        )?,
        Solver::Ga => run_ga(
            &eval,
            &GaParams {
                population: agents,
                generations: iterations,
                seed,
                ..GaParams::default()
            },
        )?,
    };
    let report = check_feasibility(&out.plan, &out.state, &pool, &instance);

    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        out.plan.write_csv(create_with_header(&dir.join("plan.csv"), &head)?)?;
        out.history.write_csv(create_with_header(&dir.join("history.csv"), &head)?)?;
        pool.write_csv(create_with_header(&dir.join("tasks.csv"), &head)?)?;
        let mut state = serde_json::to_value(&out.state)?;
        state["config"] = config;
        fs::write(dir.join("state.json"), serde_json::to_string_pretty(&state)? + "\n")?;
    }

    for v in &report.violations {
        println!("{v}");
    }
    let improvement = improvement_rate(&out.history).map_or("nan".to_string(), |r| r.to_string());
    metrics(&[
        ("solver", args.solver.to_string()),
        ("policy", policy.to_string()),
        ("seed", seed.to_string()),
        ("tasks", pool.len().to_string()),
        ("unservable", (pool.unservable.len() + pool.unassignable.len()).to_string()),
        ("lockers", out.plan.dispatched.to_string()),
        ("distance_km", out.plan.total_distance.to_string()),
        ("delay_min", out.plan.average_lateness.to_string()),
        ("objective", out.cost.objective.to_string()),
        ("reward", out.cost.reward.to_string()),
        ("initial_best", out.history.initial_best.to_string()),
        ("improvement_pct", improvement),
        ("steps", out.history.best.len().to_string()),
        ("hard_violations", report.hard().count().to_string()),
    ]);
    Ok(if report.has_hard() { 1 } else { 0 })
}

fn validate(args: ValidateArgs) -> anyhow::Result<u8> {
    let state = match &args.state {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let raw: Value = serde_json::from_str(&text).map_err(mplq::Error::from)?;
            let recorded = raw
                .pointer("/config/policy")
                .and_then(Value::as_str)
                .map(str::parse::<AdjustmentPolicy>)
                .transpose()?;
            let state: SearchState = serde_json::from_value(raw).map_err(mplq::Error::from)?;
            Some((state, recorded))
        }
        None => None,
    };
    let policy = args
        .policy
        .or(state.as_ref().and_then(|(_, p)| *p))
        .unwrap_or(AdjustmentPolicy::Hcps);
    header(
        "validate",
        &json!({ "instance": args.instance, "state": args.state, "policy": policy.to_string() }),
    );
    let instance = load_instance(&args.instance)?;
    let problems = validate_instance(&instance);
    for p in &problems {
        println!("instance: {p}");
    }
    let mut hard = 0;
    let mut soft = 0;
    if let Some((state, _)) = &state {
        let pool = build_tasks(&instance, &assign_customers(&instance));
        let (plan, _) = Evaluator::new(&instance, &pool, policy)?.evaluate(state)?;
        let report = check_feasibility(&plan, state, &pool, &instance);
        for v in &report.violations {
            println!("{v}");
        }
        hard = report.hard().count();
        soft = report.violations.len() - hard;
    }
    metrics(&[
        ("instance_violations", problems.len().to_string()),
        ("hard_violations", hard.to_string()),
        ("soft_violations", soft.to_string()),
    ]);
    Ok(if problems.is_empty() && hard == 0 { 0 } else { 1 })
}

fn oracle(args: OracleArgs) -> anyhow::Result<u8> {
    header(
        "oracle",
        &json!({ "instance": args.instance, "policy": args.policy.to_string(), "limit": args.limit.to_string() }),
    );
    let instance = load_instance(&args.instance)?;
    let pool = build_tasks(&instance, &assign_customers(&instance));
    let eval = Evaluator::new(&instance, &pool, args.policy)?;
    let best = brute_force_best(&eval, OracleLimit { max_states: args.limit })?;
    let (plan, cost) = eval.evaluate(&best.state)?;
    metrics(&[
        ("states", best.enumerated.to_string()),
        ("x1", format!("{:?}", best.state.x1).replace(' ', "")),
        ("x2", format!("{:?}", best.state.x2).replace(' ', "")),
        ("lockers", plan.dispatched.to_string()),
        ("distance_km", plan.total_distance.to_string()),
        ("objective", cost.objective.to_string()),
        ("reward", best.reward.to_string()),
    ]);
    Ok(0)
}

fn bench(args: BenchArgs, seed: Option<u64>) -> anyhow::Result<u8> {
    let grid = GridConfig {
        spaces: args.spaces,
        locations: args.locations,
        replications: args.replications,
        seed: seed.unwrap_or(1),
        budget: args.budget,
        ..GridConfig::default()
    };
    let head = header("bench", &serde_json::to_value(&grid)?);
    let result = run_grid(&grid)?;
    fs::create_dir_all(&args.out_dir)?;
    result.write_csv(create_with_header(&args.out_dir.join("grid.csv"), &head)?)?;
    write_grid_plotdata(&args.out_dir.join("plotdata"), &result)?;
    for row in &result.overall {
        metrics(&[
            ("solver", row.solver.to_string()),
            ("policy", row.policy.to_string()),
            ("lockers", row.lockers.to_string()),
            ("distance_km", row.distance_km.to_string()),
            ("delay_min", row.delay_min.to_string()),
            ("reward", row.reward.to_string()),
            ("improvement_pct", row.improvement_pct.to_string()),
            ("reward_gap", row.reward_gap.map_or(String::new(), |g| g.to_string())),
        ]);
    }
    Ok(0)
}

fn sweep(args: SweepArgs, seed: Option<u64>) -> anyhow::Result<u8> {
    let config = SweepConfig {
        replications: args.replications,
        solver: args.solver,
        policy: args.policy,
        budget: args.budget,
        seed: seed.unwrap_or(1),
        ..SweepConfig::new(args.factor, args.values)
    };
    let head = header("sweep", &serde_json::to_value(&config)?);
    let rows = sweep_factor(&config)?;
    fs::create_dir_all(&args.out_dir)?;
    write_sweep_csv(&rows, create_with_header(&args.out_dir.join("sweep.csv"), &head)?)?;
    write_sweep_plotdata(
        &args.out_dir.join("plotdata"),
        &rows,
        &format!("{}-{}", config.solver, config.policy),
    )?;
    let points: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{}", mplq::bench::factor_value(r), r.mean_delay))
        .collect();
    metrics(&[("factor", config.factor.to_string()), ("mean_delay", points.join(","))]);
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let Cli { seed, command, .. } = cli;
    match command {
        Command::Generate(a) => generate(a, seed),
        Command::Solve(a) => solve(a, seed),
        Command::Validate(a) => validate(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a, seed),
        Command::Sweep(a) => sweep(a, seed),
    }
}

#[cfg(feature = "parallel")]
fn run_with_jobs(cli: Cli) -> anyhow::Result<u8> {
    if cli.jobs == 0 {
        return run(cli);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
    pool.install(|| run(cli))
}

#[cfg(not(feature = "parallel"))]
fn run_with_jobs(cli: Cli) -> anyhow::Result<u8> {
    if cli.jobs > 1 {
        log::warn!("built without the parallel feature; --jobs {} ignored", cli.jobs);
    }
    run(cli)
}

/// 2 for unreadable input or configuration, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mplq::Error>() {
        Some(mplq::Error::Parse { .. } | mplq::Error::Config(_) | mplq::Error::Json(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run_with_jobs(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
