//! Tabular Q-learning over abstract states and the active loop that
//! re-infers the reward machine whenever an observed reward contradicts it.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::armdp::{construct_armdp, extract_rm, Armdp};
use crate::env::{Action, EnvSpec, Nmrdp, OfficeTask};
use crate::ilp::IlpModel;
use crate::reward::Reward;
use crate::reward_machine::{RewardMachine, RmState};
use crate::solver::{
    solve_with, states_lower_bound, Budget, Solution, SolveOptions, SolveOutcome, SolverEvent, StopReason,
    DEFAULT_TIME_BUDGET,
};
use crate::trace::{Granularity, Key, StateId, Step, TraceSet, Trajectory};

/// Action values over `(state, machine state)` pairs. Unvisited entries
/// read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    num_actions: usize,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(num_abstract_states: usize, num_actions: usize, alpha: f64, gamma: f64) -> Self {
        QTable { values: vec![0.0; num_abstract_states * num_actions], num_actions, alpha, gamma }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.num_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Back to all zeros, resized for `num_abstract_states`.
    pub fn reset(&mut self, num_abstract_states: usize) {
        self.values.clear();
        self.values.resize(num_abstract_states * self.num_actions, 0.0);
    }
}

/// `q(s,a) += alpha * (r + gamma * max q(s',.) * [not terminal] - q(s,a))`.
pub fn q_update(q: &mut QTable, s: usize, a: usize, r: Reward, s_next: usize, terminal: bool) {
    let future = if terminal { 0.0 } else { q.gamma * q.max(s_next) };
    let old = q.get(s, a);
    q.set(s, a, old + q.alpha * (r.to_f64() + future - old));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// The lowest action index among the maxima.
    #[default]
    LowestIndex,
    /// Uniform among the maxima.
    Random,
}

/// With probability `epsilon` a uniform action, otherwise a greedy one.
pub fn epsilon_greedy(q: &QTable, s: usize, epsilon: f64, rng: &mut impl Rng, tie: TieBreak) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q.num_actions());
    }
    let row = q.row(s);
    let best = q.max(s);
    match tie {
        TieBreak::LowestIndex => row.iter().position(|&v| v == best).unwrap_or(0),
        TieBreak::Random => {
            let count = row.iter().filter(|&&v| v == best).count();
            let pick = if count > 1 { rng.gen_range(0..count) } else { 0 };
            row.iter().enumerate().filter(|(_, &v)| v == best).nth(pick).map_or(0, |(a, _)| a)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

/// Every hyperparameter of one learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    /// Exploration rate used until the first conflict, if different.
    pub epsilon_pre_conflict: Option<f64>,
    pub episodes: u64,
    /// Greedy play (epsilon 0) from this episode on.
    pub exploit_after: u64,
    pub step_cap: usize,
    pub k_start: u32,
    /// Deepening stops here (and never beyond one state per observed step).
    pub max_k: u32,
    pub triangle: bool,
    pub granularity: Granularity,
    pub solve_budget: Budget,
    pub seed: u64,
    /// Episodes in the moving average of the metrics file.
    pub window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 0.95,
            alpha: 0.1,
            epsilon: 0.1,
            epsilon_pre_conflict: None,
            episodes: 100_000,
            exploit_after: 90_000,
            step_cap: 500,
            k_start: 2,
            max_k: 10,
            triangle: true,
            granularity: Granularity::State,
            solve_budget: Budget::time(DEFAULT_TIME_BUDGET),
            seed: 0,
            window: 100,
        }
    }
}

impl RunConfig {
    /// Defaults for a task: 0.2 exploration before the first conflict on
    /// Officeworld (b); a 50,000 episode horizon on Breakfastworld.
    pub fn for_env(spec: EnvSpec) -> Self {
        let mut config = RunConfig::default();
        match spec {
            EnvSpec::Officeworld(OfficeTask::B) => config.epsilon_pre_conflict = Some(0.2),
            EnvSpec::Breakfastworld(_) => {
                config.episodes = 50_000;
                config.exploit_after = 45_000;
            }
            _ => {}
        }
        config
    }

    pub fn validate(&self) -> Result<(), String> {
        let rates = [("gamma", Some(self.gamma)), ("alpha", Some(self.alpha)), ("epsilon", Some(self.epsilon))];
        for (name, value) in rates.into_iter().chain([("epsilon_pre_conflict", self.epsilon_pre_conflict)]) {
            if let Some(v) = value {
                if !(0.0..1.0).contains(&v) {
                    return Err(format!("{name} must be in [0, 1), got {v}"));
                }
            }
        }
        if self.exploit_after > self.episodes {
            return Err(format!("exploit_after ({}) exceeds episodes ({})", self.exploit_after, self.episodes));
        }
        if self.k_start == 0 || self.max_k < self.k_start {
            return Err(format!("need 1 <= k_start <= max_k, got {} and {}", self.k_start, self.max_k));
        }
        if self.step_cap == 0 || self.window == 0 {
            return Err("step_cap and window must be positive".to_string());
        }
        Ok(())
    }

    /// Overrides fields from `key=value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError { line, message: format!("expected key=value, found `{content}`") })?;
            self.set(key.trim(), value.trim()).map_err(|message| ConfigError { line, message })?;
        }
        Ok(())
    }

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("bad value `{value}` for {key}"))
        }
        let optional = |value: &str| value == "none" || value.is_empty();
        match key {
            "gamma" => self.gamma = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "epsilon_pre_conflict" => {
                self.epsilon_pre_conflict = if optional(value) { None } else { Some(num(key, value)?) }
            }
            "episodes" => self.episodes = num(key, value)?,
            "exploit_after" => self.exploit_after = num(key, value)?,
            "step_cap" => self.step_cap = num(key, value)?,
            "k_start" => self.k_start = num(key, value)?,
            "max_k" => self.max_k = num(key, value)?,
            "triangle" => self.triangle = num(key, value)?,
            "granularity" => self.granularity = num(key, value)?,
            "solve_budget_secs" => {
                self.solve_budget.time =
                    if optional(value) { None } else { Some(Duration::from_secs_f64(num(key, value)?)) }
            }
            "solve_budget_nodes" => {
                self.solve_budget.nodes = if optional(value) { None } else { Some(num(key, value)?) }
            }
            "seed" => self.seed = num(key, value)?,
            "window" => self.window = num(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".to_string());
        let mut out = String::new();
        let _ = writeln!(out, "gamma={}", self.gamma);
        let _ = writeln!(out, "alpha={}", self.alpha);
        let _ = writeln!(out, "epsilon={}", self.epsilon);
        let _ = writeln!(out, "epsilon_pre_conflict={}", opt(self.epsilon_pre_conflict.map(|e| e.to_string())));
        let _ = writeln!(out, "episodes={}", self.episodes);
        let _ = writeln!(out, "exploit_after={}", self.exploit_after);
        let _ = writeln!(out, "step_cap={}", self.step_cap);
        let _ = writeln!(out, "k_start={}", self.k_start);
        let _ = writeln!(out, "max_k={}", self.max_k);
        let _ = writeln!(out, "triangle={}", self.triangle);
        let _ = writeln!(out, "granularity={}", self.granularity);
        let _ = writeln!(out, "solve_budget_secs={}", opt(self.solve_budget.time.map(|t| t.as_secs_f64().to_string())));
        let _ = writeln!(out, "solve_budget_nodes={}", opt(self.solve_budget.nodes.map(|n| n.to_string())));
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "window={}", self.window);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// A solve hit its budget; the run stopped after that episode.
    TimedOut(StopReason),
    /// Still infeasible at the largest allowed K.
    InfeasibleAtCap,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => f.write_str("completed"),
            RunStatus::TimedOut(_) => f.write_str("timeout"),
            RunStatus::InfeasibleAtCap => f.write_str("infeasible"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub reward: Reward,
    pub window_avg_reward: f64,
    pub k: u32,
    pub size_t_o: usize,
    pub cumulative_solve_nodes: u64,
    pub conflict: bool,
}

/// One call to the solver inside the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub episode: u64,
    pub k: u32,
    pub trajectories: usize,
    pub steps: usize,
    pub status: &'static str,
    pub z: Option<u64>,
    pub nodes: u64,
    pub seconds: f64,
    pub events: Vec<SolverEvent>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: RunStatus,
    pub final_rm: RewardMachine<Key>,
    pub final_k: u32,
    pub traces: TraceSet,
    pub solution: Option<Solution>,
    pub armdp: Option<Armdp>,
    pub metrics: Vec<EpisodeMetrics>,
    pub solves: Vec<SolveRecord>,
}

impl RunResult {
    pub fn solve_seconds(&self) -> f64 {
        self.solves.iter().map(|s| s.seconds).sum()
    }

    pub fn solve_nodes(&self) -> u64 {
        self.solves.iter().map(|s| s.nodes).sum()
    }

    /// Mean episode reward from episode `from` (1-based) on.
    pub fn mean_reward_from(&self, from: u64) -> Option<f64> {
        let tail: Vec<f64> = self.metrics.iter().filter(|m| m.episode >= from).map(|m| m.reward.to_f64()).collect();
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// True when every episode from `from` on earned exactly `reward`.
    pub fn all_rewards_from(&self, from: u64, reward: Reward) -> bool {
        let mut tail = self.metrics.iter().filter(|m| m.episode >= from).peekable();
        tail.peek().is_some() && tail.all(|m| m.reward == reward)
    }

    pub fn first_conflict(&self) -> Option<u64> {
        self.metrics.iter().find(|m| m.conflict).map(|m| m.episode)
    }

    pub fn metrics_csv(&self) -> String {
        let mut out =
            String::from("episode,reward,window_avg_reward,K,size_T_o,cumulative_solve_nodes,conflict_flag\n");
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{},{}",
                m.episode,
                m.reward,
                m.window_avg_reward,
                m.k,
                m.size_t_o,
                m.cumulative_solve_nodes,
                u8::from(m.conflict)
            );
        }
        out
    }

    pub fn solves_csv(&self) -> String {
        let mut out = String::from("episode,K,trajectories,steps,status,z,nodes,seconds\n");
        for s in &self.solves {
            let z = s.z.map(|z| z.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3}",
                s.episode, s.k, s.trajectories, s.steps, s.status, z, s.nodes, s.seconds
            );
        }
        out
    }
}

/// The learner's view of the current machine: solver tables plus rewards
/// memorized for keys not yet covered. Unseen `(u, key)` self-loops and
/// its first reward is remembered, so a later different reward on the same
/// key is a conflict.
struct Tracker {
    k: u32,
    granularity: Granularity,
    num_states: usize,
    num_actions: usize,
    // (key, u) -> u' (0 = unknown)
    next: Vec<u32>,
    // (key, u) -> reward known for the transition taken from there
    reward: Vec<Option<Reward>>,
}

impl Tracker {
    fn new(k: u32, granularity: Granularity, num_states: usize, num_actions: usize) -> Self {
        let keys = match granularity {
            Granularity::State => num_states,
            Granularity::Transition => num_states * num_actions * num_states,
        };
        let slots = keys * k as usize;
        Tracker { k, granularity, num_states, num_actions, next: vec![0; slots], reward: vec![None; slots] }
    }

    fn from_solution(solution: &Solution, granularity: Granularity, num_states: usize, num_actions: usize) -> Self {
        let mut tracker = Tracker::new(solution.k, granularity, num_states, num_actions);
        for ((key, i), j) in &solution.trans_table {
            let slot = tracker.key_slot(key, *i);
            tracker.next[slot] = *j;
            tracker.reward[slot] = Some(solution.reward_table[&(*key, *i, *j)]);
        }
        tracker
    }

    fn key_index(&self, key: &Key) -> usize {
        match *key {
            Key::State(s) => s as usize,
            Key::Transition(s, a, t) => (s as usize * self.num_actions + a as usize) * self.num_states + t as usize,
        }
    }

    fn key_slot(&self, key: &Key, u: RmState) -> usize {
        self.key_index(key) * self.k as usize + (u - 1) as usize
    }

    /// Returns `(u', conflict)` and memorizes unseen entries.
    fn observe(&mut self, u: RmState, step: &Step) -> (RmState, bool) {
        let slot = self.key_slot(&self.granularity.key(step), u);
        match self.reward[slot] {
            Some(known) => (self.next[slot], known != step.r),
            None => {
                self.next[slot] = u;
                self.reward[slot] = Some(step.r);
                (u, false)
            }
        }
    }
}

/// Runs the active loop until `config.episodes` or a solver failure.
pub fn armdpq_learning(env: &Nmrdp, config: &RunConfig) -> RunResult {
    let num_states = env.num_states();
    let num_actions = env.num_actions();
    let abstract_index = |s: StateId, u: RmState, k: u32| s as usize * k as usize + (u - 1) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut env = env.clone().with_step_cap(config.step_cap).with_gamma(config.gamma);

    let mut k = 1;
    let mut tracker = Tracker::new(k, config.granularity, num_states, num_actions);
    let mut q = QTable::new(num_states, num_actions, config.alpha, config.gamma);
    let mut traces = TraceSet::new(config.granularity);
    let mut solution: Option<Solution> = None;
    let mut model: Option<IlpModel> = None;
    let mut metrics = Vec::with_capacity(config.episodes as usize);
    let mut solves = Vec::new();
    let mut window: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(config.window);
    let mut window_sum = 0.0;
    let mut nodes_total = 0;
    let mut seen_conflict = false;
    // Largest K shown infeasible so far; a conflict rules out K = 1.
    let mut infeasible_k = 0;
    let mut status = RunStatus::Completed;

    for episode in 1..=config.episodes {
        let epsilon = if episode > config.exploit_after {
            0.0
        } else if !seen_conflict {
            config.epsilon_pre_conflict.unwrap_or(config.epsilon)
        } else {
            config.epsilon
        };
        let mut s = env.reset();
        let mut u: RmState = 1;
        let mut steps = Vec::new();
        let mut conflict = false;
        loop {
            let here = abstract_index(s, u, k);
            let a = epsilon_greedy(&q, here, epsilon, &mut rng, TieBreak::Random);
            let out = env.step(Action::ALL[a]).expect("episode in progress");
            let mut step = Step::new(s, a as u32, out.reward, out.s_next);
            step.terminal = out.terminal;
            let (u_next, clash) = tracker.observe(u, &step);
            conflict |= clash;
            q_update(&mut q, here, a, out.reward, abstract_index(out.s_next, u_next, k), out.terminal);
            steps.push(step);
            s = out.s_next;
            u = u_next;
            if out.done() {
                break;
            }
        }
        let trajectory = Trajectory::new(episode - 1, steps);
        let reward = trajectory.total_reward();

        if conflict {
            seen_conflict = true;
            infeasible_k = infeasible_k.max(1);
            traces.append(trajectory).expect("environment traces chain");
            let cap = config.max_k.min(1 + traces.total_steps() as u32);
            k = k.max(config.k_start).min(cap);
            loop {
                let built = IlpModel::build(&traces, k, config.triangle, config.granularity).expect("nonempty corpus");
                // Adding trajectories never lowers the optimum at a fixed K.
                let previous = solution.as_ref().filter(|s| s.k == k).map_or(0, |s| s.z);
                let lower_bound = previous.max(states_lower_bound(infeasible_k));
                let report = solve_with(
                    &built,
                    SolveOptions {
                        budget: config.solve_budget,
                        cancel: None,
                        lower_bound,
                        hint: solution.as_ref().map(|s| &s.trans_table),
                    },
                );
                nodes_total += report.nodes;
                solves.push(SolveRecord {
                    episode,
                    k,
                    trajectories: traces.len(),
                    steps: traces.total_steps(),
                    status: report.outcome.status(),
                    z: report.outcome.solution().map(|s| s.z),
                    nodes: report.nodes,
                    seconds: report.seconds,
                    events: report.events.clone(),
                });
                match report.outcome {
                    SolveOutcome::Feasible(found) => {
                        tracker = Tracker::from_solution(&found, config.granularity, num_states, num_actions);
                        solution = Some(found);
                        model = Some(built);
                        break;
                    }
                    SolveOutcome::Infeasible if k < cap => {
                        infeasible_k = k;
                        k += 1;
                    }
                    SolveOutcome::Infeasible => {
                        status = RunStatus::InfeasibleAtCap;
                        break;
                    }
                    SolveOutcome::TimedOut { reason, .. } => {
                        status = RunStatus::TimedOut(reason);
                        break;
                    }
                }
            }
            q.reset(num_states * k as usize);
        }

        window.push_back(reward.to_f64());
        window_sum += reward.to_f64();
        if window.len() > config.window {
            window_sum -= window.pop_front().unwrap();
        }
        metrics.push(EpisodeMetrics {
            episode,
            reward,
            window_avg_reward: window_sum / window.len() as f64,
            k,
            size_t_o: traces.len(),
            cumulative_solve_nodes: nodes_total,
            conflict,
        });
        if status != RunStatus::Completed {
            break;
        }
    }

    let (final_rm, armdp) = match (&solution, &model) {
        (Some(solution), Some(model)) => {
            let armdp = construct_armdp(&traces, model, solution).ok();
            (extract_rm(solution, &traces), armdp)
        }
        _ => (RewardMachine::new([1], 1, []).expect("one state"), None),
    };
    RunResult { status, final_rm, final_k: k, traces, solution, armdp, metrics, solves }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BreakfastTask, Variant};

    #[test]
    fn q_update_examples() {
        let mut q = QTable::new(2, 4, 0.1, 0.95);
        q_update(&mut q, 0, 1, Reward::ONE, 1, true);
        assert!((q.get(0, 1) - 0.1).abs() < 1e-12);

        let mut q = QTable::new(2, 4, 0.1, 0.95);
        q_update(&mut q, 0, 1, Reward::ZERO, 1, false);
        assert_eq!(q.get(0, 1), 0.0);

        let mut q = QTable::new(2, 4, 0.1, 0.95);
        q.set(1, 2, 1.0);
        q_update(&mut q, 0, 0, Reward::ONE, 1, false);
        assert!((q.get(0, 0) - 0.195).abs() < 1e-12);
    }

    #[test]
    fn greedy_choices() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = QTable::new(1, 4, 0.1, 0.95);
        assert_eq!(epsilon_greedy(&q, 0, 0.0, &mut rng, TieBreak::LowestIndex), 0);
        q.set(0, 2, 0.5);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy(&q, 0, 0.0, &mut rng, TieBreak::LowestIndex), 2);
            assert_eq!(epsilon_greedy(&q, 0, 0.0, &mut rng, TieBreak::Random), 2);
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = QTable::new(1, 4, 0.1, 0.95);
        let mut counts = [0f64; 4];
        let draws = 10_000;
        for _ in 0..draws {
            counts[epsilon_greedy(&q, 0, 1.0, &mut rng, TieBreak::LowestIndex)] += 1.0;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 3 degrees of freedom, p = 0.001.
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn random_tie_break_spreads_over_maxima() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = QTable::new(1, 4, 0.1, 0.95);
        let mut seen = [false; 4];
        for _ in 0..200 {
            seen[epsilon_greedy(&q, 0, 0.0, &mut rng, TieBreak::Random)] = true;
        }
        assert_eq!(seen, [true; 4]);
    }

    #[test]
    fn config_round_trips_and_validates() {
        let mut config = RunConfig::for_env(EnvSpec::Officeworld(OfficeTask::B));
        assert_eq!(config.epsilon_pre_conflict, Some(0.2));
        config.solve_budget = Budget { time: None, nodes: Some(500) };
        let mut back = RunConfig::default();
        back.apply_kv(&config.to_kv()).unwrap();
        assert_eq!(back, config);
        let err = back.apply_kv("episodes=10\n\nbogus=1\n").unwrap_err();
        assert_eq!(err.line, 3);
        let mut bad = RunConfig::default();
        bad.exploit_after = bad.episodes + 1;
        assert!(bad.validate().is_err());
        bad = RunConfig { gamma: 1.0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
        assert_eq!(RunConfig::for_env(EnvSpec::Breakfastworld(BreakfastTask::C)).episodes, 50_000);
    }

    #[test]
    fn tracker_memorizes_then_conflicts() {
        let mut tracker = Tracker::new(1, Granularity::State, 4, 4);
        let step = |r| Step::new(0, 0, r, 3);
        assert_eq!(tracker.observe(1, &step(Reward::ZERO)), (1, false));
        assert_eq!(tracker.observe(1, &step(Reward::ZERO)), (1, false));
        assert_eq!(tracker.observe(1, &step(Reward::ONE)), (1, true));
    }

    fn short_config(episodes: u64) -> RunConfig {
        RunConfig {
            episodes,
            exploit_after: episodes * 9 / 10,
            solve_budget: Budget::time(Duration::from_secs(60)),
            ..RunConfig::default()
        }
    }

    #[test]
    fn corridor_learns_to_fetch_coffee_first() {
        let env = EnvSpec::Corridor.build(Variant::Full, None);
        let result = armdpq_learning(&env, &short_config(3000));
        assert_eq!(result.status, RunStatus::Completed);
        assert_eq!(result.final_rm.num_states(), 2);
        assert!(result.all_rewards_from(2701, Reward::ONE));
        assert_eq!(result.traces.len(), result.metrics.iter().filter(|m| m.conflict).count());
        for trajectory in result.traces.trajectories() {
            assert!(result.final_rm.replay(trajectory, |s| Some(result.traces.key_of(s))).consistent);
        }
    }

    #[test]
    fn markov_rewards_never_solve() {
        // With the coffee cell relabelled, the corridor reward is Markov.
        let map = "#####\n#xSg#\n#####\n".parse().unwrap();
        let env = EnvSpec::Corridor.build(Variant::Full, Some(map));
        let result = armdpq_learning(&env, &short_config(500));
        assert!(result.solves.is_empty());
        assert_eq!(result.final_k, 1);
        assert!(result.traces.is_empty());
    }

    #[test]
    fn runs_are_reproducible() {
        let env = EnvSpec::Corridor.build(Variant::Full, None);
        let config = RunConfig { seed: 7, ..short_config(1000) };
        let a = armdpq_learning(&env, &config);
        let b = armdpq_learning(&env, &config);
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert_eq!(a.final_rm.to_json(), b.final_rm.to_json());
    }

    #[test]
    fn k_is_monotone_and_q_resets_on_solve() {
        let env = EnvSpec::Breakfastworld(BreakfastTask::B).build(Variant::Full, None);
        let result = armdpq_learning(&env, &RunConfig { seed: 3, ..short_config(4000) });
        assert!(result.metrics.windows(2).all(|w| w[1].k >= w[0].k));
        let deepened: Vec<_> = result.solves.windows(2).filter(|w| w[1].k > w[0].k).collect();
        for w in deepened {
            // K only grows right after an infeasible solve at the smaller K.
            assert_eq!(w[0].status, "infeasible");
        }
    }
}
