use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rmlearn::armdp::{ars, construct_armdp, extract_rm, named_rm, rs, unit_weight};
use rmlearn::env::{random_traces, EnvSpec, GridMap, Nmrdp};
use rmlearn::experiment::{median, reward_curve, run_trials, Alignment, Summary};
use rmlearn::ilp::{IlpModel, ImportError};
use rmlearn::rl::{armdpq_learning, RunConfig, RunResult, RunStatus};
use rmlearn::solver::{solve_deepening, verify_solution, Budget, Solution, SolveOutcome};
use rmlearn::trace_file::{self, TraceFileError};
use rmlearn::{Key, RewardMachine, TraceSet};
use serde_json::{json, Value};

use crate::{
    Align, BudgetArgs, EnvArgs, ExperimentArgs, ExportLpArgs, ExtractArgs, Failure, InferArgs, KChoice, LearnArgs,
    SimulateArgs, VerifyArgs,
};

type Outcome = Result<Value, Failure>;

const METRICS_HEADER: &str = "episode,reward,window_avg_reward,K,size_T_o,cumulative_solve_nodes,conflict_flag";

fn io_error(path: &Path, err: std::io::Error) -> Failure {
    Failure::Other(format!("{}: {err}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn load_traces(path: &Path) -> Result<TraceSet, Failure> {
    trace_file::load_traces(path).map_err(|err| match err {
        TraceFileError::Io(e) => io_error(path, e),
        other => Failure::Schema(format!("{}: {other}", path.display())),
    })
}

fn load_map(path: &Path) -> Result<GridMap, Failure> {
    read(path)?.parse().map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))
}

fn build_env(args: &EnvArgs) -> Result<Nmrdp, Failure> {
    let map = args.map.as_deref().map(load_map).transpose()?;
    Ok(args.env.build(args.variant, map))
}

fn parse_budget(text: &str, nodes: Option<u64>) -> Result<Budget, Failure> {
    let time = match text {
        "none" => None,
        secs => {
            let secs: f64 = secs.parse().map_err(|_| Failure::Other(format!("bad --budget `{secs}`")))?;
            if !secs.is_finite() || secs <= 0.0 {
                return Err(Failure::Other(format!("--budget must be positive, got {secs}")));
            }
            Some(Duration::from_secs_f64(secs))
        }
    };
    Ok(Budget { time, nodes })
}

fn budget_of(args: &BudgetArgs) -> Result<Budget, Failure> {
    parse_budget(&args.budget, args.budget_nodes)
}

/// Task defaults, then the config file, then flags.
fn run_config(
    spec: EnvSpec,
    file: Option<&Path>,
    episodes: Option<u64>,
    exploit_after: Option<u64>,
    budget: Option<&str>,
    budget_nodes: Option<u64>,
) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::for_env(spec);
    if let Some(path) = file {
        config.apply_kv(&read(path)?).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))?;
    }
    if let Some(n) = episodes {
        config.episodes = n;
        if exploit_after.is_none() && config.exploit_after > n {
            config.exploit_after = n * 9 / 10;
        }
    }
    if let Some(n) = exploit_after {
        config.exploit_after = n;
    }
    if let Some(text) = budget {
        config.solve_budget.time = parse_budget(text, None)?.time;
    }
    if budget_nodes.is_some() {
        config.solve_budget.nodes = budget_nodes;
    }
    config.validate().map_err(Failure::Schema)?;
    Ok(config)
}

fn model_error(err: impl std::fmt::Display) -> Failure {
    Failure::Schema(err.to_string())
}

pub fn simulate(args: SimulateArgs) -> Outcome {
    let env = build_env(&args.env)?.with_step_cap(args.step_cap);
    let traces = random_traces(&env, args.episodes, args.seed, args.granularity);
    write(&args.out, &trace_file::write_traces(&traces))?;
    if let Some(path) = &args.out_rm {
        write(path, &env.ground_truth().to_json())?;
    }
    let conflicts = traces.conflicts().len();
    println!(
        "{} episodes, {} steps, {} conflicting keys -> {}",
        traces.len(),
        traces.total_steps(),
        conflicts,
        args.out.display()
    );
    Ok(json!({ "episodes": traces.len(), "steps": traces.total_steps(), "conflicting_keys": conflicts }))
}

fn check_rm_file(path: &Path, traces: &TraceSet) -> Result<(), Failure> {
    let rm = RewardMachine::<Key>::from_json(&read(path)?)
        .map_err(|e| Failure::Schema(format!("self-check {}: {e}", path.display())))?;
    for (m, t) in traces.trajectories().iter().enumerate() {
        if !rm.replay(t, |s| Some(traces.key_of(s))).consistent {
            return Err(Failure::Schema(format!("self-check {}: trajectory {} diverges", path.display(), m + 1)));
        }
    }
    Ok(())
}

fn check_json_file(path: &Path) -> Result<(), Failure> {
    serde_json::from_str::<Value>(&read(path)?)
        .map(|_| ())
        .map_err(|e| Failure::Schema(format!("self-check {}: {e}", path.display())))
}

fn check_metrics_file(path: &Path) -> Result<(), Failure> {
    let text = read(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Failure::Schema(format!("self-check {}: unexpected header", path.display())));
    }
    let columns = METRICS_HEADER.split(',').count();
    for (n, line) in lines.enumerate() {
        if line.split(',').count() != columns {
            return Err(Failure::Schema(format!("self-check {}: row {} has the wrong width", path.display(), n + 1)));
        }
    }
    Ok(())
}

pub fn infer(args: InferArgs) -> Outcome {
    let traces = load_traces(&args.traces)?;
    let granularity = args.model.granularity.unwrap_or(traces.granularity());
    let budget = budget_of(&args.budget)?;
    let (k_start, max_k) = match args.k {
        KChoice::Auto => (1, args.max_k.max(1)),
        KChoice::Fixed(k) => (k, k),
    };
    let run =
        solve_deepening(&traces, k_start, max_k, args.model.triangle, granularity, budget).map_err(model_error)?;
    if let Some(path) = &args.solver_log {
        let mut log = String::new();
        for (k, report) in &run.attempts {
            let _ = writeln!(log, "# K={k} {}", report.outcome.status());
            log.push_str(&report.log());
        }
        write(path, &log)?;
    }
    for (k, report) in &run.attempts {
        println!("K={k}: {} after {} nodes in {:.3}s", report.outcome.status(), report.nodes, report.seconds);
    }
    let k = run.attempts.last().map_or(k_start, |(k, _)| *k);
    let mut fields = json!({
        "k": k,
        "trajectories": traces.len(),
        "nodes": run.nodes(),
        "seconds": run.seconds(),
    });
    let solution = match &run.last().outcome {
        SolveOutcome::Feasible(solution) => solution,
        SolveOutcome::Infeasible => return Err(Failure::Infeasible(fields)),
        SolveOutcome::TimedOut { incumbent, reason } => {
            fields["reason"] = json!(reason.to_string());
            fields["incumbent_z"] = json!(incumbent.as_ref().map(|s| s.z));
            return Err(Failure::Timeout(fields));
        }
    };
    let rm = extract_rm(solution, &traces);
    println!("minimal machine: |U|={} with z={} triggers", rm.num_states(), solution.z);
    fields["z"] = json!(solution.z);
    fields["states"] = json!(rm.num_states());
    fields["status"] = json!("feasible");
    if let Some(path) = &args.out_rm {
        write(path, &rm.to_json())?;
        if args.self_check {
            check_rm_file(path, &traces)?;
        }
    }
    if let Some(path) = &args.out_dot {
        write(path, &named_rm(&rm, &traces).to_dot())?;
    }
    if let Some(path) = &args.dump_armdp {
        let armdp = construct_armdp(&traces, &run.model, solution).map_err(|e| Failure::Other(e.to_string()))?;
        write(path, &armdp.to_json())?;
        if args.self_check {
            check_json_file(path)?;
        }
    }
    Ok(fields)
}

/// Output files of one learner run.
fn write_run(dir: &Path, result: &RunResult, env: &Nmrdp, armdp_path: Option<&Path>) -> Result<Vec<PathBuf>, Failure> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let traces = result.traces.clone().with_names(env.map().state_names(), GridMap::action_names());
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<(), Failure> {
        let path = dir.join(name);
        write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put("metrics.csv", &result.metrics_csv())?;
    put("solves.csv", &result.solves_csv())?;
    put("rm.json", &result.final_rm.to_json())?;
    put("rm.dot", &named_rm(&result.final_rm, &traces).to_dot())?;
    put("traces.jsonl", &trace_file::write_traces(&traces))?;
    if let Some(armdp) = &result.armdp {
        let path = armdp_path.map_or_else(|| dir.join("armdp.json"), Path::to_path_buf);
        write(&path, &armdp.to_json())?;
        written.push(path);
    }
    Ok(written)
}

fn self_check_run(dir: &Path, result: &RunResult) -> Result<(), Failure> {
    check_metrics_file(&dir.join("metrics.csv"))?;
    let traces = load_traces(&dir.join("traces.jsonl"))?;
    if traces.trajectories() != result.traces.trajectories() {
        return Err(Failure::Schema("self-check traces.jsonl: round trip changed the corpus".into()));
    }
    if result.status == RunStatus::Completed {
        check_rm_file(&dir.join("rm.json"), &traces)?;
    }
    Ok(())
}

fn run_fields(result: &RunResult, config: &RunConfig) -> Value {
    json!({
        "run_status": result.status.to_string(),
        "seed": config.seed,
        "final_k": result.final_k,
        "states": result.final_rm.num_states(),
        "size_t_o": result.traces.len(),
        "episodes_run": result.metrics.len(),
        "solves": result.solves.len(),
        "solve_seconds": result.solve_seconds(),
        "solve_nodes": result.solve_nodes(),
        "post_exploit_reward": result.mean_reward_from(config.exploit_after + 1),
    })
}

fn status_of(result: &RunResult, fields: Value) -> Outcome {
    match result.status {
        RunStatus::Completed => Ok(fields),
        RunStatus::TimedOut(_) => Err(Failure::Timeout(fields)),
        RunStatus::InfeasibleAtCap => Err(Failure::Infeasible(fields)),
    }
}

pub fn learn(args: LearnArgs) -> Outcome {
    let env = build_env(&args.env)?;
    let mut config = run_config(
        args.env.env,
        args.config.as_deref(),
        args.episodes,
        args.exploit_after,
        args.budget.as_deref(),
        args.budget_nodes,
    )?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let result = armdpq_learning(&env, &config);
    write_run(&args.out_dir, &result, &env, args.dump_armdp.as_deref())?;
    write(&args.out_dir.join("config.txt"), &config.to_kv())?;
    if let Some(path) = &args.solver_log {
        let mut log = String::new();
        for s in &result.solves {
            let _ = writeln!(log, "# episode={} K={} trajectories={} {}", s.episode, s.k, s.trajectories, s.status);
            for event in &s.events {
                let _ = writeln!(log, "{event}");
            }
        }
        write(path, &log)?;
    }
    if args.self_check {
        self_check_run(&args.out_dir, &result)?;
    }
    println!(
        "{} {}: {} after {} episodes; |U|={} K={} |T_o|={} solve time {:.2}s",
        args.env.env,
        args.env.variant,
        result.status,
        result.metrics.len(),
        result.final_rm.num_states(),
        result.final_k,
        result.traces.len(),
        result.solve_seconds()
    );
    let mut fields = run_fields(&result, &config);
    fields["env"] = json!(args.env.env.to_string());
    fields["variant"] = json!(args.env.variant.to_string());
    status_of(&result, fields)
}

fn import(model: &IlpModel, path: &Path) -> Result<Vec<bool>, Failure> {
    model.load_assignment(path).map_err(|err| match err {
        ImportError::Io(e) => io_error(path, e),
        other => Failure::Schema(format!("{}: {other}", path.display())),
    })
}

pub fn extract(args: ExtractArgs) -> Outcome {
    let traces = load_traces(&args.traces)?;
    let granularity = args.model.granularity.unwrap_or(traces.granularity());
    let model = IlpModel::build(&traces, args.k, args.model.triangle, granularity).map_err(model_error)?;
    let bits = import(&model, &args.solution)?;
    let solution = Solution::from_bits(&model, &bits)
        .map_err(|v| Failure::Other(format!("{}: not a valid solution: {v}", args.solution.display())))?;
    let rm = extract_rm(&solution, &traces);
    if let Some(path) = &args.out_rm {
        write(path, &rm.to_json())?;
    }
    if let Some(path) = &args.out_dot {
        write(path, &named_rm(&rm, &traces).to_dot())?;
    }
    println!("|U|={} z={}", rm.num_states(), solution.z);
    Ok(json!({ "k": args.k, "z": solution.z, "states": rm.num_states() }))
}

pub fn verify(args: VerifyArgs) -> Outcome {
    let traces = load_traces(&args.traces)?;
    match &args.rm {
        Some(path) => verify_rm(&args, &traces, path),
        None => verify_solution_file(&args, &traces),
    }
}

fn verify_rm(args: &VerifyArgs, traces: &TraceSet, path: &Path) -> Outcome {
    let text = read(path)?;
    let report = match RewardMachine::<Key>::from_json(&text) {
        Ok(rm) => replay_report(traces, |t| rm.state_path(t, |s| Some(traces.key_of(s)))),
        Err(key_err) => {
            let rm = RewardMachine::<String>::from_json(&text)
                .map_err(|e| Failure::Schema(format!("{}: {key_err}; as a symbol machine: {e}", path.display())))?;
            let map = match (&args.map, args.env) {
                (Some(file), _) => load_map(file)?,
                (None, Some(spec)) => spec.default_map(),
                (None, None) => return Err(Failure::Other("a symbol-keyed machine needs --env or --map".into())),
            };
            replay_report(traces, |t| rm.state_path(t, |s| map.label(s.s_next).map(String::from)))
        }
    };
    let fields = json!({ "trajectories": traces.len(), "divergent": report });
    if report == 0 {
        Ok(fields)
    } else {
        Err(Failure::Other(format!("{report} of {} trajectories diverge", traces.len())))
    }
}

/// Prints one line per trajectory and returns how many diverge.
fn replay_report(
    traces: &TraceSet,
    path_of: impl Fn(&rmlearn::Trajectory) -> Vec<(rmlearn::RmState, rmlearn::reward_machine::RmTransition)>,
) -> usize {
    let mut divergent = 0;
    for (m, t) in traces.trajectories().iter().enumerate() {
        let path = path_of(t);
        let observed = rs(t, unit_weight).map_or("overflow".to_string(), |r| r.to_string());
        let predicted: rmlearn::Reward = path.iter().map(|(_, tr)| tr.reward).sum();
        let first = t.steps.iter().zip(&path).position(|(step, (_, tr))| tr.reward != step.r);
        match first {
            None if path.len() == t.len() => {
                println!("trajectory {}: RS={observed} machine={predicted} consistent", m + 1);
            }
            None => {
                divergent += 1;
                println!("trajectory {}: machine stopped after step {}", m + 1, path.len());
            }
            Some(n) => {
                divergent += 1;
                println!(
                    "trajectory {}: RS={observed} machine={predicted} divergence at step {} (observed {}, machine {})",
                    m + 1,
                    n + 1,
                    t.steps[n].r,
                    path[n].1.reward
                );
            }
        }
    }
    divergent
}

fn verify_solution_file(args: &VerifyArgs, traces: &TraceSet) -> Outcome {
    let (Some(path), Some(k)) = (&args.solution, args.k) else {
        return Err(Failure::Other("--solution and --k are required without --rm".into()));
    };
    let granularity = args.model.granularity.unwrap_or(traces.granularity());
    let model = IlpModel::build(traces, k, args.model.triangle, granularity).map_err(model_error)?;
    let bits = import(&model, path)?;
    let solution = match Solution::from_bits(&model, &bits) {
        Ok(solution) => solution,
        Err(violation) => {
            println!("verify_solution: false ({violation})");
            return Err(Failure::Other(format!("{}: {violation}", path.display())));
        }
    };
    let valid = verify_solution(&model, &solution);
    println!("verify_solution: {valid} (z={})", solution.z);
    let mut unequal = 0;
    for (m, t) in traces.trajectories().iter().enumerate() {
        let (a, b) = (rs(t, unit_weight), ars(t, &solution, m, unit_weight));
        let verdict = if a.is_some() && a == b { "equal" } else { "DIFFERENT" };
        if verdict != "equal" {
            unequal += 1;
        }
        let show = |r: Option<rmlearn::Reward>| r.map_or("overflow".to_string(), |r| r.to_string());
        println!("trajectory {}: RS={} ARS={} {verdict}", m + 1, show(a), show(b));
    }
    let rm = extract_rm(&solution, traces);
    let divergent = replay_report(traces, |t| rm.state_path(t, |s| Some(traces.key_of(s))));
    let fields = json!({ "z": solution.z, "valid": valid, "rs_ars_mismatches": unequal, "divergent": divergent });
    if valid && unequal == 0 && divergent == 0 {
        Ok(fields)
    } else {
        Err(Failure::Other("solution does not check out".into()))
    }
}

pub fn export_lp(args: ExportLpArgs) -> Outcome {
    let traces = load_traces(&args.traces)?;
    let granularity = args.model.granularity.unwrap_or(traces.granularity());
    let model = IlpModel::build(&traces, args.k, args.model.triangle, granularity).map_err(model_error)?;
    model.export_lp(&args.out).map_err(|e| io_error(&args.out, e))?;
    let stats = model.stats();
    println!("{}", stats.to_json());
    Ok(json!({ "vars": stats.vars, "constraints": stats.total_constraints, "out": args.out.display().to_string() }))
}

pub fn experiment(args: ExperimentArgs) -> Outcome {
    let env = build_env(&args.env)?;
    let config = run_config(
        args.env.env,
        args.config.as_deref(),
        args.episodes,
        args.exploit_after,
        args.budget.as_deref(),
        args.budget_nodes,
    )?;
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = run_trials(&env, &config, &seeds, threads);
    fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    for (seed, result) in seeds.iter().zip(&results) {
        let dir = args.out_dir.join(format!("seed_{seed}"));
        write_run(&dir, result, &env, None)?;
        if args.self_check {
            self_check_run(&dir, result)?;
        }
    }
    let summary = Summary::new(&results, &seeds, config.exploit_after);
    write(&args.out_dir.join("summary.json"), &summary.to_json())?;
    write(&args.out_dir.join("summary.txt"), &summary.table())?;
    write(&args.out_dir.join("config.txt"), &config.to_kv())?;
    let alignment = match args.align {
        Align::Raw => Alignment::Raw,
        Align::FirstConflict => Alignment::FirstConflict,
    };
    write(&args.out_dir.join("curve.csv"), &reward_curve(&results, alignment))?;
    print!("{}", summary.table());
    let seconds: Vec<f64> = results.iter().map(RunResult::solve_seconds).collect();
    let fields = json!({
        "env": args.env.env.to_string(),
        "variant": args.env.variant.to_string(),
        "seeds": seeds.len(),
        "completed": summary.completed,
        "median_size_t_o": summary.median_size_t_o,
        "median_solve_seconds": median(&seconds),
    });
    if results.iter().any(|r| matches!(r.status, RunStatus::TimedOut(_))) {
        Err(Failure::Timeout(fields))
    } else if results.iter().any(|r| r.status == RunStatus::InfeasibleAtCap) {
        Err(Failure::Infeasible(fields))
    } else {
        Ok(fields)
    }
}
