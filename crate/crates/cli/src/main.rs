//! `blockq`: confirmation-latency toolkit for PoW blockchains. Evaluates
//! the batch-service queue model, estimates the latency-minimizing block
//! size, runs the discrete-event simulator, and drives sweep/validation
//! experiments with machine-readable output.
//!
//! Exit codes: 0 success, 1 usage error, 2 model-unstable, 3 I/O error.

mod output;
mod sweep;
mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use blockq_core::queue::QueueModelOptions;
use blockq_core::sim::default_warmup;
use blockq_core::{
    confirmation_latency, optimize_block_size, run_replications, run_simulation_traced,
    ModelError, ModelOptions, ScenarioParams, ServiceRateMode, SimConfig, SizeConvention,
};

use output::{write_rows, SweepRow, TableFormat, SWEEP_HEADER};
use validate::{summarize, write_report, Preset};

/// Command failure with a stable exit-code class.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Unstable(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Unstable(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Unstable(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter { .. }
            | ModelError::InsufficientNodes { .. }
            | ModelError::DuplicateNode { .. }
            | ModelError::ScenarioFile(_) => Failure::Usage(e.to_string()),
            ModelError::ModelUnstable { .. }
            | ModelError::ForkSaturated { .. }
            | ModelError::SingularSystem
            | ModelError::DegenerateChain { .. }
            | ModelError::DivisionDegenerate => Failure::Unstable(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "blockq",
    version,
    about = "PoW confirmation-latency toolkit: queue model, block size optimizer, simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioFlags {
    /// Transaction arrival rate, tx/s
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Per-miner mining rate, Hz
    #[arg(long, default_value_t = 0.25)]
    lambda: f64,
    /// Number of miners M
    #[arg(long, default_value_t = 1)]
    miners: u32,
    /// Pool capacity K, transactions
    #[arg(long, default_value_t = 10)]
    queue_size: usize,
    /// Block size b, transactions
    #[arg(long, default_value_t = 5)]
    block_size: usize,
    /// Block formation timer tau, seconds
    #[arg(long, default_value_t = 100.0)]
    timer: f64,
    /// P2P capacity C, bits/s
    #[arg(long, default_value_t = 5e6)]
    capacity_bps: f64,
    /// Block header size h, bits
    #[arg(long, default_value_t = 20_000.0)]
    header_bits: f64,
    /// Per-transaction size t, bits
    #[arg(long, default_value_t = 5_000.0)]
    tx_bits: f64,
    /// Non-conflicting transactions surviving a fork
    #[arg(long, default_value_t = 0)]
    fork_valid_tx: usize,
    /// Queue service rate: 'aggregate' (M*lambda) or 'per-miner'
    #[arg(long, default_value = "aggregate", value_parser = parse_rate_mode)]
    service_rate_mode: ServiceRateMode,
}

fn parse_rate_mode(s: &str) -> Result<ServiceRateMode, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<TableFormat, String> {
    s.parse()
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}

impl ScenarioFlags {
    fn to_params(&self) -> Result<ScenarioParams, Failure> {
        ScenarioParams {
            mu: self.mu,
            lambda: self.lambda,
            miners: self.miners,
            queue_size: self.queue_size,
            block_size_tx: self.block_size,
            timer: self.timer,
            header_bits: self.header_bits,
            tx_bits: self.tx_bits,
            capacity_bps: self.capacity_bps,
            fork_valid_tx: self.fork_valid_tx,
            service_rate_mode: self.service_rate_mode,
        }
        .validate()
        .map_err(Failure::from)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the analytical latency model for one scenario
    Model(ModelCmd),
    /// Run the discrete-event simulator for one scenario
    Simulate(SimulateCmd),
    /// Estimate the latency-minimizing block size
    Optimize(OptimizeCmd),
    /// Run a parameter sweep described by a JSON spec file
    Sweep(SweepCmd),
    /// Run a figure-reproduction preset on both backends
    Validate(ValidateCmd),
}

#[derive(Args)]
struct ModelCmd {
    #[command(flatten)]
    scenario: ScenarioFlags,
    /// Treat the formation timer as never firing
    #[arg(long)]
    assumption1: bool,
    /// Print a single JSON object instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    scenario: ScenarioFlags,
    /// First seed; replication i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Horizon in simulated seconds
    #[arg(long, default_value_t = 100_000.0)]
    sim_time: f64,
    /// Number of independent replications
    #[arg(long, default_value_t = 1)]
    replications: u64,
    /// Write a per-event trace (single replication only)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print a single JSON object instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OptimizeCmd {
    #[command(flatten)]
    scenario: ScenarioFlags,
    /// Interpolation node budget (>= 3)
    #[arg(long, default_value_t = 5)]
    nodes: usize,
    /// Largest block size considered
    #[arg(long, default_value_t = 10)]
    bmax: usize,
    /// Accepted for symmetry; node evaluation always ignores the timer
    #[arg(long)]
    assumption1: bool,
    /// Print a single JSON object instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepCmd {
    /// JSON spec file with base, axes, backends, seeds, output
    spec: PathBuf,
    /// Override the output path from the spec file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the table format from the spec file
    #[arg(long, value_parser = parse_format)]
    format: Option<TableFormat>,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct ValidateCmd {
    /// Preset grid: fig3, fig4, or fig5
    #[arg(value_parser = parse_preset)]
    preset: Preset,
    /// Report path (default: validate_<preset>.csv)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Horizon per simulator run, seconds
    #[arg(long, default_value_t = 100_000.0)]
    sim_time: f64,
    /// Simulator replications per cell (seeds 1..=N)
    #[arg(long, default_value_t = 3)]
    replications: u64,
    /// Table format of the report file
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: TableFormat,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(failure) = run(cli.command) {
        eprintln!("error: {}", failure.message());
        std::process::exit(failure.exit_code());
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Model(cmd) => cmd_model(cmd),
        Command::Simulate(cmd) => cmd_simulate(cmd),
        Command::Optimize(cmd) => cmd_optimize(cmd),
        Command::Sweep(cmd) => cmd_sweep(cmd),
        Command::Validate(cmd) => cmd_validate(cmd),
    }
}

fn cmd_model(cmd: ModelCmd) -> Result<(), Failure> {
    let params = cmd.scenario.to_params()?;
    let options = ModelOptions {
        queue: QueueModelOptions {
            timer_disabled: cmd.assumption1,
            ..Default::default()
        },
        ..Default::default()
    };
    let (lat, sol) = confirmation_latency(&params, options)?;
    let mut diags = Vec::new();
    if sol.diagnostics.saturated {
        diags.push("saturated");
    }
    if sol.diagnostics.negative_mass_clamped {
        diags.push("clamped");
    }
    let diag = if diags.is_empty() {
        "ok".to_string()
    } else {
        diags.join(";")
    };
    if cmd.json {
        let value = serde_json::json!({
            "t_q": lat.t_q,
            "t_bg": lat.t_bg,
            "t_bp": lat.t_bp,
            "p_fork": lat.p_fork,
            "t_bc": lat.t_bc,
            "blocking_probability": sol.blocking_probability(),
            "diag": diag,
        });
        println!("{value}");
    } else {
        println!("t_q      = {} s", lat.t_q);
        println!("t_bg     = {} s", lat.t_bg);
        println!("t_bp     = {} s", lat.t_bp);
        println!("p_fork   = {}", lat.p_fork);
        println!("t_bc     = {} s", lat.t_bc);
        println!("blocking = {}", sol.blocking_probability());
        println!("diag     = {diag}");
    }
    if sol.diagnostics.saturated {
        // past the load the steady-state conversion can describe
        return Err(Failure::Unstable(format!(
            "model-unstable: queue saturated (blocking probability = {})",
            sol.blocking_probability()
        )));
    }
    Ok(())
}

fn cmd_simulate(cmd: SimulateCmd) -> Result<(), Failure> {
    let params = cmd.scenario.to_params()?;
    if cmd.replications < 1 {
        return Err(Failure::Usage("replications must be >= 1".to_string()));
    }
    let config = SimConfig {
        scenario: params,
        sim_time: cmd.sim_time,
        warmup: default_warmup(cmd.sim_time),
        seed: cmd.seed,
        ..Default::default()
    };
    config.validate().map_err(Failure::from)?;
    if let Some(path) = &cmd.trace {
        if cmd.replications != 1 {
            return Err(Failure::Usage(
                "--trace requires --replications 1".to_string(),
            ));
        }
        let file = std::fs::File::create(path).map_err(|e| Failure::Io(e.to_string()))?;
        let mut writer = std::io::BufWriter::new(file);
        let result = run_simulation_traced(&config, &mut writer).map_err(Failure::from)?;
        use std::io::Write;
        writer.flush().map_err(|e| Failure::Io(e.to_string()))?;
        println!("{}", serde_json::to_string(&result).unwrap());
        return Ok(());
    }
    let seeds: Vec<u64> = (0..cmd.replications).map(|i| cmd.seed + i).collect();
    let agg = run_replications(&config, &seeds);
    if cmd.json {
        let value = serde_json::json!({
            "summary": agg.result,
            "per_seed": agg.per_seed,
        });
        println!("{value}");
        return Ok(());
    }
    for (seed, r) in &agg.per_seed {
        println!(
            "seed {seed}: pool_delay={} confirmation={} fork_rate={} drops={} blocks={}",
            opt(r.mean_pool_delay),
            opt(r.mean_confirmation_latency),
            r.fork_rate,
            r.drop_count,
            r.blocks_mined
        );
    }
    let s = &agg.result;
    println!("mean_pool_delay           = {}", opt(s.mean_pool_delay));
    println!("ci95_pool_delay           = {}", opt(s.ci_pool_delay));
    println!(
        "mean_confirmation_latency = {}",
        opt(s.mean_confirmation_latency)
    );
    println!(
        "ci95_confirmation_latency = {}",
        opt(s.ci_confirmation_latency)
    );
    println!("fork_rate                 = {}", s.fork_rate);
    println!("ci95_fork_rate            = {}", opt(s.ci_fork_rate));
    println!("mean_drop_count           = {}", s.mean_drop_count);
    println!("mean_blocks_mined         = {}", s.mean_blocks_mined);
    println!(
        "mean_transactions_committed = {}",
        s.mean_transactions_committed
    );
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".to_string())
}

fn cmd_optimize(cmd: OptimizeCmd) -> Result<(), Failure> {
    let params = cmd.scenario.to_params()?;
    let result = optimize_block_size(
        &params,
        cmd.nodes,
        cmd.bmax,
        SizeConvention::default(),
        true,
    )?;
    if cmd.json {
        println!("{}", serde_json::to_string(&result).unwrap());
        return Ok(());
    }
    println!("b_star            = {}", result.b_star);
    println!("b_star_continuous = {}", result.b_star_continuous);
    println!("t_bc_hat          = {} s", result.t_bc_hat);
    let nodes: Vec<String> = result
        .nodes
        .iter()
        .map(|(b, y)| format!("({b}, {y})"))
        .collect();
    println!("nodes             = {}", nodes.join(" "));
    if !result.dropped_nodes.is_empty() {
        let dropped: Vec<String> = result
            .dropped_nodes
            .iter()
            .map(|(b, why)| format!("({b}: {why})"))
            .collect();
        println!("dropped_nodes     = {}", dropped.join(" "));
    }
    println!("candidates:");
    for (b, v) in &result.candidates {
        println!("  b={b:<3} t_bc={v}");
    }
    Ok(())
}

fn cmd_sweep(cmd: SweepCmd) -> Result<(), Failure> {
    let plan = sweep::load_plan(&cmd.spec)?;
    let rows = sweep::run_plan(&plan, cmd.jobs)?;
    let format = cmd.format.unwrap_or(plan.format);
    let output = cmd.output.or_else(|| plan.output.clone());
    write_rows(
        &rows,
        SWEEP_HEADER,
        SweepRow::csv_line,
        format,
        output.as_deref(),
    )
    .map_err(|e| Failure::Io(e.to_string()))?;
    if let Some(path) = &output {
        println!("wrote {} rows to {}", rows.len(), path.display());
    }
    Ok(())
}

fn cmd_validate(cmd: ValidateCmd) -> Result<(), Failure> {
    if cmd.replications < 1 {
        return Err(Failure::Usage("replications must be >= 1".to_string()));
    }
    let seeds: Vec<u64> = (1..=cmd.replications).collect();
    let rows = validate::run_preset(cmd.preset, cmd.sim_time, &seeds, cmd.jobs)?;
    let output = cmd
        .output
        .unwrap_or_else(|| PathBuf::from(format!("validate_{}.csv", cmd.preset.name())));
    write_report(&rows, cmd.format, Some(&output))?;
    println!("wrote {} rows to {}", rows.len(), output.display());
    for line in summarize(&rows) {
        println!("{line}");
    }
    Ok(())
}
