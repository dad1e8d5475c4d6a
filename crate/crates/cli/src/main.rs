//! `rmlearn`: simulate tasks, infer reward machines from traces, run the
//! active learner, and check results.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 infeasible, 3 timeout,
//! 4 schema error. A one-line status JSON goes to stderr on every exit.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmlearn::env::{EnvSpec, Variant};
use rmlearn::Granularity;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "rmlearn", version, about = "Learn minimal reward machines from non-Markov reward traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a uniformly random policy and write its traces.
    Simulate(SimulateArgs),
    /// Solve for a minimal machine over a trace file.
    Infer(InferArgs),
    /// Run the active learner on a gridworld task.
    Learn(LearnArgs),
    /// Turn an external solver's assignment into a machine.
    Extract(ExtractArgs),
    /// Replay traces against a machine, or check a solution.
    Verify(VerifyArgs),
    /// Write the 0-1 program in CPLEX LP format.
    ExportLp(ExportLpArgs),
    /// Run the learner over many seeds and aggregate.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct EnvArgs {
    /// officeworld:b..e, breakfastworld:b|c or corridor.
    #[arg(long)]
    env: EnvSpec,
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// Replacement map in the bundled text format.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    triangle: bool,
    /// Defaults to the trace file's granularity.
    #[arg(long)]
    granularity: Option<Granularity>,
}

#[derive(Args)]
struct BudgetArgs {
    /// Seconds per solve, or `none`.
    #[arg(long, default_value = "600")]
    budget: String,
    /// Node limit per solve.
    #[arg(long)]
    budget_nodes: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 10)]
    episodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = rmlearn::env::DEFAULT_STEP_CAP)]
    step_cap: usize,
    #[arg(long, default_value = "state")]
    granularity: Granularity,
    /// Trace file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the hidden machine as JSON.
    #[arg(long)]
    out_rm: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum KChoice {
    Auto,
    Fixed(u32),
}

fn parse_k(text: &str) -> Result<KChoice, String> {
    match text {
        "auto" => Ok(KChoice::Auto),
        n => match n.parse::<u32>() {
            Ok(0) | Err(_) => Err(format!("expected `auto` or a positive integer, got `{n}`")),
            Ok(k) => Ok(KChoice::Fixed(k)),
        },
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Number of machine states, or `auto` to deepen from 1.
    #[arg(long = "k", visible_alias = "K", default_value = "auto", value_parser = parse_k)]
    k: KChoice,
    /// Largest K tried by `auto`.
    #[arg(long, default_value_t = 10)]
    max_k: u32,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    out_rm: Option<PathBuf>,
    #[arg(long)]
    out_dot: Option<PathBuf>,
    #[arg(long)]
    solver_log: Option<PathBuf>,
    #[arg(long)]
    dump_armdp: Option<PathBuf>,
    /// Re-read every written file and validate it.
    #[arg(long)]
    self_check: bool,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// key=value overrides of the run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    exploit_after: Option<u64>,
    /// Seconds per solve, or `none`; overrides the config file.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    budget_nodes: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    solver_log: Option<PathBuf>,
    /// Defaults to `armdp.json` in the output directory.
    #[arg(long)]
    dump_armdp: Option<PathBuf>,
    #[arg(long)]
    self_check: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    traces: PathBuf,
    /// `name=value` lines using the names of `export-lp`.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long = "k", visible_alias = "K")]
    k: u32,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out_rm: Option<PathBuf>,
    #[arg(long)]
    out_dot: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, visible_alias = "model-from")]
    traces: PathBuf,
    /// Machine JSON, keyed by trace keys or by map symbols (needs --env).
    #[arg(long, conflicts_with = "solution")]
    rm: Option<PathBuf>,
    /// Environment whose map labels steps for a symbol-keyed machine.
    #[arg(long)]
    env: Option<EnvSpec>,
    #[arg(long)]
    map: Option<PathBuf>,
    /// External `name=value` assignment to check against the model.
    #[arg(long, required_unless_present = "rm")]
    solution: Option<PathBuf>,
    #[arg(long = "k", visible_alias = "K", required_unless_present = "rm")]
    k: Option<u32>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ExportLpArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long = "k", visible_alias = "K")]
    k: u32,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Align {
    Raw,
    FirstConflict,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    exploit_after: Option<u64>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    budget_nodes: Option<u64>,
    #[arg(long, value_enum, default_value = "raw")]
    align: Align,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    self_check: bool,
}

/// Why a command did not succeed; carries the status fields to report.
pub enum Failure {
    Infeasible(Value),
    Timeout(Value),
    Schema(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Timeout(_) => 3,
            Failure::Schema(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (name, result) = match cli.command {
        Command::Simulate(args) => ("simulate", commands::simulate(args)),
        Command::Infer(args) => ("infer", commands::infer(args)),
        Command::Learn(args) => ("learn", commands::learn(args)),
        Command::Extract(args) => ("extract", commands::extract(args)),
        Command::Verify(args) => ("verify", commands::verify(args)),
        Command::ExportLp(args) => ("export-lp", commands::export_lp(args)),
        Command::Experiment(args) => ("experiment", commands::experiment(args)),
    };
    let (code, mut status) = match result {
        Ok(fields) => (0, with_status(fields, "ok")),
        Err(failure) => {
            let code = failure.code();
            let status = match failure {
                Failure::Infeasible(fields) => with_status(fields, "infeasible"),
                Failure::Timeout(fields) => with_status(fields, "timeout"),
                Failure::Schema(message) => {
                    eprintln!("error: {message}");
                    json!({ "status": "schema_error", "error": message })
                }
                Failure::Other(message) => {
                    eprintln!("error: {message}");
                    json!({ "status": "error", "error": message })
                }
            };
            (code, status)
        }
    };
    status["command"] = json!(name);
    status["exit_code"] = json!(code);
    eprintln!("{status}");
    ExitCode::from(code)
}

fn with_status(mut fields: Value, status: &str) -> Value {
    if fields.get("status").is_none() {
        fields["status"] = json!(status);
    }
    fields
}
