//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line straight to stdout (bypassing the
//! harness capture) before asserting.
//!
//! Criterion 6 needs hours of solver time and is ignored by default:
//! `cargo test --release -p rmlearn --test acceptance -- --ignored`.

use std::io::Write;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmlearn::armdp::{ars, extract_rm, rs, unit_weight};
use rmlearn::env::{BreakfastTask, EnvSpec, OfficeTask, Variant};
use rmlearn::experiment::{median, run_trials};
use rmlearn::fixtures::RandomCorpus;
use rmlearn::ilp::IlpModel;
use rmlearn::rl::{armdpq_learning, RunConfig, RunResult, RunStatus};
use rmlearn::solver::{
    brute_force_optimum, brute_force_size, check_solution, solve, Budget, SolveOutcome, BRUTE_FORCE_LIMIT,
};
use rmlearn::{Granularity, Reward, Step, TraceSet};

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {criterion}: {verdict} {detail}");
    let _ = out.flush();
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn trials(spec: EnvSpec, variant: Variant, seeds: &[u64], tweak: impl FnOnce(&mut RunConfig)) -> Vec<RunResult> {
    let env = spec.build(variant, None);
    let mut config = RunConfig::for_env(spec);
    tweak(&mut config);
    run_trials(&env, &config, seeds, threads())
}

/// Every trajectory in the run's own corpus replays without a reward
/// divergence on the final machine.
fn replays_own_corpus(result: &RunResult) -> bool {
    result.traces.trajectories().iter().all(|t| result.final_rm.replay(t, |s| Some(result.traces.key_of(s))).consistent)
}

fn medians(results: &[RunResult], f: impl Fn(&RunResult) -> f64) -> f64 {
    median(&results.iter().map(f).collect::<Vec<_>>()).expect("nonempty")
}

/// Small instances for criteria 1-3, with K, triangle toggle and a
/// granularity drawn per instance and kept under the brute-force guard.
fn small_instances(count: usize, seed: u64) -> Vec<(TraceSet, u32, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = RandomCorpus::default();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let granularity = if rng.gen_bool(0.5) { Granularity::State } else { Granularity::Transition };
        let traces = shape.sample(&mut rng, granularity);
        let k = rng.gen_range(1..=3);
        let triangle = rng.gen_bool(0.5);
        let model = IlpModel::build(&traces, k, triangle, granularity).unwrap();
        if brute_force_size(&model) <= BRUTE_FORCE_LIMIT {
            out.push((traces, k, triangle));
        }
    }
    out
}

/// Non-uniform transition weights with exact decimal products.
fn skewed_weight(step: &Step) -> Reward {
    ["1", "0.5", "0.25", "0.125"][(step.s + step.a + step.s_next) as usize % 4].parse().unwrap()
}

#[test]
fn criterion_1_rs_equals_ars() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = RandomCorpus::default();
    let (mut corpora, mut checked, mut failures) = (0, 0, 0);
    while corpora < 1000 {
        let traces = shape.sample(&mut rng, Granularity::State);
        corpora += 1;
        for k in 1..=3 {
            let model = IlpModel::build(&traces, k, true, Granularity::State).unwrap();
            let SolveOutcome::Feasible(solution) = solve(&model, Budget::unlimited()).outcome else { continue };
            check_solution(&model, &solution).unwrap();
            for (m, t) in traces.trajectories().iter().enumerate() {
                for weight in [unit_weight as fn(&Step) -> Reward, skewed_weight] {
                    checked += 1;
                    if rs(t, weight) != ars(t, &solution, m, weight) || rs(t, weight).is_none() {
                        failures += 1;
                    }
                }
            }
        }
    }
    let pass = failures == 0 && checked > 1000;
    report(1, pass, &format!("{corpora} corpora, {checked} RS/ARS comparisons, {failures} mismatches"));
    assert!(pass);
}

#[test]
fn criterion_2_solver_matches_oracle() {
    let mut disagreements = Vec::new();
    let instances = small_instances(200, 2);
    let mut feasible = 0;
    for (n, (traces, k, triangle)) in instances.iter().enumerate() {
        let model = IlpModel::build(traces, *k, *triangle, traces.granularity()).unwrap();
        let fast = solve(&model, Budget::unlimited()).outcome;
        let slow = brute_force_optimum(&model).unwrap();
        let agree = match (&fast, &slow) {
            (SolveOutcome::Feasible(a), SolveOutcome::Feasible(b)) => {
                feasible += 1;
                a.z == b.z && check_solution(&model, a).is_ok()
            }
            (SolveOutcome::Infeasible, SolveOutcome::Infeasible) => true,
            _ => false,
        };
        if !agree {
            disagreements.push(n);
        }
    }
    let pass = disagreements.is_empty();
    report(
        2,
        pass,
        &format!("{} instances ({feasible} feasible), disagreements at {disagreements:?}", instances.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_3_extracted_machines_replay() {
    let mut divergent = 0;
    let mut replayed = 0;
    for (traces, k, triangle) in small_instances(200, 2) {
        let model = IlpModel::build(&traces, k, triangle, traces.granularity()).unwrap();
        let SolveOutcome::Feasible(solution) = solve(&model, Budget::unlimited()).outcome else { continue };
        let rm = extract_rm(&solution, &traces);
        for t in traces.trajectories() {
            replayed += 1;
            if !rm.replay(t, |s| Some(traces.key_of(s))).consistent {
                divergent += 1;
            }
        }
    }
    // The experiment outputs are checked again inside criteria 4, 5, 7, 8.
    let runs = trials(EnvSpec::Officeworld(OfficeTask::B), Variant::Full, &[0, 1], |_| {});
    let runs_ok = runs.iter().all(replays_own_corpus);
    let pass = divergent == 0 && runs_ok;
    report(
        3,
        pass,
        &format!("{replayed} small-instance replays, {divergent} divergent; officeworld:b runs consistent: {runs_ok}"),
    );
    assert!(pass);
}

fn office(task: OfficeTask, criterion: u32, need_states_in: usize, max_median_t_o: f64) {
    let runs = trials(EnvSpec::Officeworld(task), Variant::Full, &SEEDS, |_| {});
    let exploit = RunConfig::for_env(EnvSpec::Officeworld(task)).exploit_after;
    let two_states = runs.iter().filter(|r| r.final_rm.num_states() == 2).count();
    let median_t_o = medians(&runs, |r| r.traces.len() as f64);
    let optimal = runs.iter().filter(|r| r.all_rewards_from(exploit + 1, Reward::ONE)).count();
    let consistent = runs.iter().all(|r| r.status == RunStatus::Completed && replays_own_corpus(r));
    let pass = two_states >= need_states_in && median_t_o <= max_median_t_o && optimal == SEEDS.len() && consistent;
    let sizes: Vec<usize> = runs.iter().map(|r| r.traces.len()).collect();
    report(
        criterion,
        pass,
        &format!(
            "officeworld:{}: |U|=2 in {two_states}/10, |T_o| {sizes:?} (median {median_t_o}), \
             reward 1.0 after exploitation in {optimal}/10, replay consistent: {consistent}",
            format!("{task:?}").to_lowercase()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_officeworld_b() {
    office(OfficeTask::B, 4, 9, 15.0);
}

#[test]
fn criterion_5_officeworld_c() {
    office(OfficeTask::C, 5, 10, 25.0);
}

#[test]
#[ignore = "stretch: hours of solver time"]
fn criterion_6_officeworld_d_e() {
    let hours: f64 = std::env::var("RMLEARN_STRETCH_BUDGET_SECS").ok().and_then(|v| v.parse().ok()).unwrap_or(14_400.0);
    let seeds = [0, 1, 2];
    let budget = |c: &mut RunConfig| c.solve_budget = Budget::time(Duration::from_secs_f64(hours));
    let d = trials(EnvSpec::Officeworld(OfficeTask::D), Variant::Full, &seeds, budget);
    let e = trials(EnvSpec::Officeworld(OfficeTask::E), Variant::Full, &seeds, budget);
    let exploit = RunConfig::default().exploit_after;
    let d_sizes: Vec<usize> = d.iter().map(|r| r.final_rm.num_states()).collect();
    let e_sizes: Vec<usize> = e.iter().map(|r| r.final_rm.num_states()).collect();
    let d_ok = d.iter().all(|r| r.status == RunStatus::Completed && (3..=4).contains(&r.final_rm.num_states()));
    let e_ok = e.iter().all(|r| {
        r.status == RunStatus::Completed && r.final_rm.num_states() == 4 && r.all_rewards_from(exploit + 1, Reward::ONE)
    });
    let pass = d_ok && e_ok;
    report(6, pass, &format!("officeworld:d |U| {d_sizes:?}, officeworld:e |U| {e_sizes:?}"));
    assert!(pass);
}

#[test]
fn criterion_7_breakfast_ordering() {
    let spec = EnvSpec::Breakfastworld(BreakfastTask::B);
    let full = trials(spec, Variant::Full, &SEEDS, |_| {});
    let cumulative = trials(spec, Variant::Cumulative, &SEEDS, |_| {});
    let size = |r: &RunResult| r.traces.len() as f64;
    let (full_t_o, cum_t_o) = (medians(&full, size), medians(&cumulative, size));
    let (full_s, cum_s) = (medians(&full, RunResult::solve_seconds), medians(&cumulative, RunResult::solve_seconds));
    let consistent = full.iter().chain(&cumulative).all(|r| r.status == RunStatus::Completed && replays_own_corpus(r));
    let pass = full_t_o < cum_t_o && full_s < cum_s && consistent;
    report(
        7,
        pass,
        &format!(
            "breakfastworld:b median |T_o| full {full_t_o} < cumulative {cum_t_o}; \
             median solve seconds full {full_s:.3} < cumulative {cum_s:.3}; replay consistent: {consistent}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_breakfast_c() {
    let spec = EnvSpec::Breakfastworld(BreakfastTask::C);
    let truth = spec.ground_truth(Variant::Full).num_states();
    let full = trials(spec, Variant::Full, &[0, 1, 2], |_| {});
    let exploit = RunConfig::for_env(spec).exploit_after;
    let full_ok = full
        .iter()
        .all(|r| r.status == RunStatus::Completed && r.final_rm.num_states() == truth && replays_own_corpus(r));
    let rewards: Vec<Option<f64>> = full.iter().map(|r| r.mean_reward_from(exploit + 1)).collect();
    let short = |c: &mut RunConfig| c.solve_budget = Budget::time(Duration::from_secs(5));
    let cumulative = trials(spec, Variant::Cumulative, &[0], short);
    let timed_out = cumulative.iter().all(|r| {
        matches!(r.status, RunStatus::TimedOut(_))
            && r.status.to_string() == "timeout"
            && r.solves.last().is_some_and(|s| s.status == "timeout")
            && r.metrics.last().is_some_and(|m| m.conflict)
    });
    let pass = full_ok && timed_out;
    report(
        8,
        pass,
        &format!(
            "breakfastworld:c full |U| {:?} (truth {truth}), post-exploitation reward {rewards:?}; \
             cumulative with a 5 s budget: {}",
            full.iter().map(|r| r.final_rm.num_states()).collect::<Vec<_>>(),
            cumulative[0].status
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_determinism() {
    let cases = [
        (EnvSpec::Officeworld(OfficeTask::B), Variant::Full, 3),
        (EnvSpec::Breakfastworld(BreakfastTask::B), Variant::Cumulative, 4),
        (EnvSpec::Corridor, Variant::Full, 5),
    ];
    let mut identical = 0;
    for (spec, variant, seed) in cases {
        let env = spec.build(variant, None);
        let mut config = RunConfig::for_env(spec);
        config.seed = seed;
        let a = armdpq_learning(&env, &config);
        let b = armdpq_learning(&env, &config);
        if a.metrics_csv() == b.metrics_csv() && a.final_rm.to_json() == b.final_rm.to_json() {
            identical += 1;
        }
    }
    let pass = identical == cases.len();
    report(9, pass, &format!("{identical}/{} reruns byte-identical in metrics CSV and RM JSON", cases.len()));
    assert!(pass);
}
