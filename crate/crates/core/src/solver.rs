//! Exact minimization of an [`IlpModel`].
//!
//! Each trajectory is a path of machine states starting at `u_1`, so instead
//! of branching on raw binaries the search assigns one successor state per
//! step, in trajectory order and chronologically within a trajectory. Shared
//! tables `(key, i) -> j` and `(key, i, j) -> reward` enforce determinism and
//! reward uniqueness and are undone on backtrack. The bound is the number of
//! distinct off-diagonal triggers so far, which never decreases along a
//! branch.
//!
//! A caller that knows a lower bound on the optimum gets a first pass that
//! only accepts solutions meeting it; if that pass comes back empty an
//! ordinary pass follows. Either way the result is a global minimum.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use thiserror::Error;

use crate::clock::Stopwatch;
use crate::ilp::{Family, IlpModel, ModelError, ModelStep, Var};
use crate::reward::Reward;
use crate::trace::{Granularity, Key, TraceSet};

/// Default wall-clock limit for one solve.
pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(600);

/// The exhaustive oracle refuses instances with more path combinations.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

const CLOCK_INTERVAL: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Budget {
    pub time: Option<Duration>,
    pub nodes: Option<u64>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget::default()
    }

    pub fn time(limit: Duration) -> Self {
        Budget { time: Some(limit), nodes: None }
    }

    pub fn nodes(limit: u64) -> Self {
        Budget { time: None, nodes: Some(limit) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Time,
    Nodes,
    Cancelled,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Time => "time limit",
            StopReason::Nodes => "node limit",
            StopReason::Cancelled => "cancelled",
        })
    }
}

/// A satisfying assignment with its derived tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub k: u32,
    /// `assignment[m][n] = (i, j)`.
    pub assignment: Vec<Vec<(u32, u32)>>,
    pub z: u64,
    pub trans_table: BTreeMap<(Key, u32), u32>,
    pub reward_table: BTreeMap<(Key, u32, u32), Reward>,
}

impl Solution {
    /// Derives the tables and objective from per-step pairs. Later steps
    /// never overwrite a table entry, so a non-deterministic assignment
    /// produces tables that fail [`check_solution`].
    pub fn from_assignment(model: &IlpModel, assignment: Vec<Vec<(u32, u32)>>) -> Solution {
        let mut trans_table = BTreeMap::new();
        let mut reward_table = BTreeMap::new();
        for (m, pairs) in assignment.iter().enumerate() {
            for (n, &(i, j)) in pairs.iter().enumerate() {
                let Some(step) = model.trajectory(m).nth(n).map(|idx| model.steps()[idx]) else {
                    continue;
                };
                let key = model.keys()[step.key as usize];
                let reward = model.rewards_of(step.key)[step.reward as usize];
                trans_table.entry((key, i)).or_insert(j);
                reward_table.entry((key, i, j)).or_insert(reward);
            }
        }
        let z = trans_table.iter().filter(|((_, i), j)| i != *j).count() as u64;
        Solution { k: model.k(), assignment, z, trans_table, reward_table }
    }

    /// Reads a full 0-1 assignment, checking every constraint first.
    pub fn from_bits(model: &IlpModel, bits: &[bool]) -> Result<Solution, Violation> {
        if bits.len() != model.num_vars() {
            return Err(Violation::Shape(format!("expected {} variables, got {}", model.num_vars(), bits.len())));
        }
        if let Some(c) = model.first_violation(bits) {
            return Err(Violation::Constraint { family: c.family, name: c.name });
        }
        let mut assignment: Vec<Vec<(u32, u32)>> =
            (0..model.num_trajectories()).map(|m| vec![(0, 0); model.trajectory(m).len()]).collect();
        for id in 0..model.num_o_vars() as u32 {
            if bits[id as usize] {
                if let Var::O { m, n, i, j } = model.var(id) {
                    assignment[m as usize][n as usize] = (i, j);
                }
            }
        }
        let solution = Solution::from_assignment(model, assignment);
        let z = model.objective_value(bits);
        if z != solution.z {
            return Err(Violation::Objective { claimed: z, actual: solution.z });
        }
        Ok(solution)
    }

    /// The full 0-1 vector: `O` from the assignment, indicators from the
    /// tables.
    pub fn to_bits(&self, model: &IlpModel) -> Result<Vec<bool>, Violation> {
        let mut bits = vec![false; model.num_vars()];
        if self.assignment.len() != model.num_trajectories() {
            return Err(Violation::Shape(format!(
                "{} trajectories assigned, model has {}",
                self.assignment.len(),
                model.num_trajectories()
            )));
        }
        for (m, pairs) in self.assignment.iter().enumerate() {
            let range = model.trajectory(m);
            if pairs.len() != range.len() {
                return Err(Violation::Shape(format!("trajectory {} has {} pairs", m + 1, pairs.len())));
            }
            for (idx, &(i, j)) in range.zip(pairs) {
                let var =
                    model.o_var(idx, i, j).ok_or_else(|| Violation::Shape(format!("no variable for ({i},{j})")))?;
                bits[var as usize] = true;
            }
        }
        let key_ids: HashMap<&Key, u32> = model.keys().iter().enumerate().map(|(n, k)| (k, n as u32)).collect();
        let key_id =
            |key: &Key| key_ids.get(key).copied().ok_or_else(|| Violation::Shape(format!("unknown key {key}")));
        for ((key, i), j) in &self.trans_table {
            let var = model
                .trans_var(key_id(key)?, *i, *j)
                .ok_or_else(|| Violation::Shape(format!("no indicator for ({key},{i},{j})")))?;
            bits[var as usize] = true;
        }
        for ((key, i, j), reward) in &self.reward_table {
            let key = key_id(key)?;
            let r = model
                .rewards_of(key)
                .binary_search(reward)
                .map_err(|_| Violation::Shape(format!("reward {reward} never observed on key")))?;
            let var = model
                .reward_var(key, r as u32, *i, *j)
                .ok_or_else(|| Violation::Shape(format!("no reward indicator for ({i},{j})")))?;
            bits[var as usize] = true;
        }
        Ok(bits)
    }

    pub fn pair(&self, m: usize, n: usize) -> (u32, u32) {
        self.assignment[m][n]
    }

    /// Machine states actually entered, including `u_1`.
    pub fn used_states(&self) -> std::collections::BTreeSet<u32> {
        let mut used: std::collections::BTreeSet<u32> = self.assignment.iter().flatten().map(|&(_, j)| j).collect();
        used.insert(1);
        used
    }
}

/// The 0-1 vector of an assignment with every indicator set exactly when
/// one of its members is.
pub fn iverson_bits(model: &IlpModel, assignment: &[Vec<(u32, u32)>]) -> Result<Vec<bool>, Violation> {
    let mut bits = vec![false; model.num_vars()];
    for (m, pairs) in assignment.iter().enumerate() {
        for (idx, &(i, j)) in model.trajectory(m).zip(pairs) {
            let step = model.steps()[idx];
            let shape = || Violation::Shape(format!("no variable for ({i},{j})"));
            for var in [
                model.o_var(idx, i, j).ok_or_else(shape)?,
                model.trans_var(step.key, i, j).ok_or_else(shape)?,
                model.reward_var(step.key, step.reward, i, j).ok_or_else(shape)?,
            ] {
                bits[var as usize] = true;
            }
        }
    }
    Ok(bits)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("constraint {name} ({family}) violated")]
    Constraint { family: Family, name: String },
    #[error("objective is {actual}, solution claims {claimed}")]
    Objective { claimed: u64, actual: u64 },
    #[error("malformed solution: {0}")]
    Shape(String),
}

/// Checks every constraint of `model` and the objective value.
pub fn check_solution(model: &IlpModel, solution: &Solution) -> Result<(), Violation> {
    let bits = solution.to_bits(model)?;
    if let Some(c) = model.first_violation(&bits) {
        return Err(Violation::Constraint { family: c.family, name: c.name });
    }
    let z = model.objective_value(&bits);
    if z != solution.z {
        return Err(Violation::Objective { claimed: solution.z, actual: z });
    }
    Ok(())
}

pub fn verify_solution(model: &IlpModel, solution: &Solution) -> bool {
    check_solution(model, solution).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    Feasible(Solution),
    Infeasible,
    TimedOut { incumbent: Option<Solution>, reason: StopReason },
}

impl SolveOutcome {
    pub fn solution(&self) -> Option<&Solution> {
        match self {
            SolveOutcome::Feasible(s) => Some(s),
            SolveOutcome::TimedOut { incumbent, .. } => incumbent.as_ref(),
            SolveOutcome::Infeasible => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            SolveOutcome::Feasible(_) => "feasible",
            SolveOutcome::Infeasible => "infeasible",
            SolveOutcome::TimedOut { .. } => "timeout",
        }
    }
}

/// One line of the solver log: emitted on every new incumbent and once at
/// the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverEvent {
    pub nodes: u64,
    pub incumbent: Option<u64>,
    pub depth: usize,
}

impl fmt::Display for SolverEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.incumbent {
            Some(z) => write!(f, "nodes={} incumbent={} depth={}", self.nodes, z, self.depth),
            None => write!(f, "nodes={} incumbent=none depth={}", self.nodes, self.depth),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub outcome: SolveOutcome,
    pub nodes: u64,
    pub seconds: f64,
    pub events: Vec<SolverEvent>,
}

impl SolveReport {
    pub fn log(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions<'a> {
    pub budget: Budget,
    pub cancel: Option<&'a AtomicBool>,
    /// A known lower bound on the optimum. The search stops as soon as an
    /// incumbent reaches it. See [`states_lower_bound`].
    pub lower_bound: u64,
    /// Successors to try first for `(key, i)`, typically the tables of the
    /// previous solve. Changes which optimum is found, not its value.
    pub hint: Option<&'a BTreeMap<(Key, u32), u32>>,
}

pub fn solve(model: &IlpModel, budget: Budget) -> SolveReport {
    solve_with(model, SolveOptions { budget, ..Default::default() })
}

/// If the same corpus (or a subset of it) has no solution with `k`
/// states, every solution uses at least `k + 1` distinct states, and each
/// state besides `u_1` is first entered through its own off-diagonal
/// trigger, so the objective is at least `k`.
pub fn states_lower_bound(largest_infeasible_k: u32) -> u64 {
    largest_infeasible_k as u64
}

struct Applied {
    j: u32,
    new_trans: bool,
    new_reward: bool,
    prev_max: u32,
}

struct Frame {
    i: u32,
    cursor: u32,
    applied: Option<Applied>,
}

struct Search {
    k: u32,
    triangle: bool,
    trans: Vec<u32>,
    hint: Vec<u32>,
    reward: Vec<u32>,
    offdiag: u64,
    max_used: u32,
}

impl Search {
    fn trans_slot(&self, key: u32, i: u32) -> usize {
        (key * self.k + i - 1) as usize
    }

    fn reward_slot(&self, key: u32, i: u32, j: u32) -> usize {
        ((key * self.k + i - 1) * self.k + j - 1) as usize
    }

    fn undo(&mut self, key: u32, i: u32, applied: Applied) {
        if applied.new_trans {
            let slot = self.trans_slot(key, i);
            self.trans[slot] = 0;
            if applied.j != i {
                self.offdiag -= 1;
            }
        }
        if applied.new_reward {
            let slot = self.reward_slot(key, i, applied.j);
            self.reward[slot] = 0;
        }
        self.max_used = applied.prev_max;
    }

    /// The `cursor`-th candidate successor of `u_i` for a key with no
    /// table entry: the hint if any, then the diagonal, then ascending.
    fn free_candidate(&self, key: u32, i: u32, cursor: u32) -> Option<u32> {
        let hint = self.hint[self.trans_slot(key, i)];
        let cursor = match (hint, cursor) {
            (0, c) => c,
            (h, 0) => return Some(h),
            (_, c) => c - 1,
        };
        let diagonal = (hint != i).then_some(i);
        // Without the triangle restriction states are interchangeable, so
        // only the smallest never-used state is worth trying.
        let hi = if self.triangle { self.k } else { self.k.min(self.max_used + 1) };
        let lo = if self.triangle { i + 1 } else { 1 };
        diagonal.into_iter().chain((lo..=hi).filter(|&j| j != i && j != hint)).nth(cursor as usize)
    }

    /// Tries candidates from `frame.cursor` on; applies the first that
    /// passes and returns its successor state.
    fn advance(&mut self, frame: &mut Frame, key: u32, r: u32, incumbent: u64) -> Option<u32> {
        let i = frame.i;
        let forced = self.trans[self.trans_slot(key, i)];
        loop {
            let j = if forced != 0 {
                if frame.cursor > 0 {
                    return None;
                }
                forced
            } else {
                let j = self.free_candidate(key, i, frame.cursor)?;
                if j != i && self.offdiag + 1 >= incumbent {
                    frame.cursor += 1;
                    continue;
                }
                j
            };
            frame.cursor += 1;
            let rslot = self.reward_slot(key, i, j);
            let known = self.reward[rslot];
            if known != 0 && known != r + 1 {
                continue;
            }
            let new_trans = forced == 0;
            if new_trans {
                let slot = self.trans_slot(key, i);
                self.trans[slot] = j;
                if j != i {
                    self.offdiag += 1;
                }
            }
            if known == 0 {
                self.reward[rslot] = r + 1;
            }
            frame.applied = Some(Applied { j, new_trans, new_reward: known == 0, prev_max: self.max_used });
            self.max_used = self.max_used.max(j);
            return Some(j);
        }
    }
}

struct Run<'a> {
    options: &'a SolveOptions<'a>,
    clock: &'a Stopwatch,
    first: &'a [bool],
    nodes: u64,
    ticks: u64,
    events: Vec<SolverEvent>,
    best: Option<(u64, Vec<u32>)>,
}

impl Run<'_> {
    /// One depth-first pass accepting only solutions with at most
    /// `ceiling` triggers. Returns why it stopped early, if it did; on
    /// exhaustion every table entry has been undone.
    fn dfs(&mut self, search: &mut Search, steps: &[ModelStep], ceiling: u64, good_enough: u64) -> Option<StopReason> {
        let mut limit = self.best.as_ref().map_or(u64::MAX, |b| b.0).min(ceiling.saturating_add(1));
        let mut stack: Vec<Frame> = Vec::with_capacity(steps.len());
        let mut path: Vec<u32> = Vec::with_capacity(steps.len());
        if !steps.is_empty() {
            stack.push(Frame { i: 1, cursor: 0, applied: None });
        }
        while let Some(mut frame) = stack.pop() {
            let t = stack.len();
            let step = steps[t];
            if let Some(applied) = frame.applied.take() {
                search.undo(step.key, frame.i, applied);
                path.pop();
            }
            if let Some(reason) = self.interrupted() {
                return Some(reason);
            }
            let Some(j) = search.advance(&mut frame, step.key, step.reward, limit) else {
                continue;
            };
            self.nodes += 1;
            path.push(j);
            stack.push(frame);
            if t + 1 == steps.len() {
                limit = search.offdiag;
                self.best = Some((limit, path.clone()));
                self.events.push(SolverEvent { nodes: self.nodes, incumbent: Some(limit), depth: t + 1 });
                if limit <= good_enough {
                    return None;
                }
            } else {
                let i = if self.first[t + 1] { 1 } else { j };
                stack.push(Frame { i, cursor: 0, applied: None });
            }
        }
        None
    }

    fn interrupted(&mut self) -> Option<StopReason> {
        if self.options.cancel.is_some_and(|flag| flag.load(Ordering::Relaxed)) {
            return Some(StopReason::Cancelled);
        }
        if self.options.budget.nodes.is_some_and(|limit| self.nodes >= limit) {
            return Some(StopReason::Nodes);
        }
        self.ticks += 1;
        if self.ticks.is_multiple_of(CLOCK_INTERVAL) {
            if let Some(limit) = self.options.budget.time {
                if self.clock.elapsed().is_some_and(|e| e >= limit) {
                    return Some(StopReason::Time);
                }
            }
        }
        None
    }
}

/// Depth-first branch and bound; see the module docs.
pub fn solve_with(model: &IlpModel, options: SolveOptions<'_>) -> SolveReport {
    let clock = Stopwatch::start();
    let k = model.k();
    let steps = model.steps();
    let mut first = vec![false; steps.len()];
    for m in 0..model.num_trajectories() {
        first[model.trajectory(m).start] = true;
    }
    let mut hint = vec![0; model.keys().len() * k as usize];
    if let Some(table) = options.hint {
        for (key_id, key) in model.keys().iter().enumerate() {
            for i in 1..=k {
                match table.get(&(*key, i)) {
                    Some(&j) if j >= 1 && j <= k && (j >= i || !model.triangle()) => {
                        hint[key_id * k as usize + i as usize - 1] = j;
                    }
                    _ => {}
                }
            }
        }
    }
    let mut search = Search {
        k,
        triangle: model.triangle(),
        hint,
        trans: vec![0; model.keys().len() * k as usize],
        reward: vec![0; model.keys().len() * (k * k) as usize],
        offdiag: 0,
        max_used: 1,
    };

    let mut run =
        Run { options: &options, clock: &clock, first: &first, nodes: 0, ticks: 0, events: Vec::new(), best: None };
    // First look only for solutions meeting the lower bound; when the bound
    // is tight this prunes from the first node instead of waiting for an
    // incumbent. Otherwise an unrestricted pass follows.
    let mut stopped = run.dfs(&mut search, steps, options.lower_bound, options.lower_bound);
    if stopped.is_none() && run.best.is_none() {
        stopped = run.dfs(&mut search, steps, u64::MAX, options.lower_bound + 1);
    }
    let Run { nodes, mut events, best, .. } = run;
    events.push(SolverEvent { nodes, incumbent: best.as_ref().map(|b| b.0), depth: 0 });
    let best = best.map(|b| b.1);

    let solution = best.map(|path| {
        let assignment = (0..model.num_trajectories())
            .map(|m| {
                let range = model.trajectory(m);
                let mut i = 1;
                range
                    .map(|idx| {
                        let j = path[idx];
                        let pair = (i, j);
                        i = j;
                        pair
                    })
                    .collect()
            })
            .collect();
        Solution::from_assignment(model, assignment)
    });
    let outcome = match (stopped, solution) {
        (Some(reason), incumbent) => SolveOutcome::TimedOut { incumbent, reason },
        (None, Some(solution)) => SolveOutcome::Feasible(solution),
        (None, None) => SolveOutcome::Infeasible,
    };
    SolveReport { outcome, nodes, seconds: clock.seconds(), events }
}

/// Solves at `k_start`, then `k_start + 1`, ... while infeasible, up to
/// `max_k`. Every attempt is kept; the last one decides the outcome.
#[derive(Debug, Clone)]
pub struct Deepening {
    pub model: IlpModel,
    pub attempts: Vec<(u32, SolveReport)>,
}

impl Deepening {
    pub fn last(&self) -> &SolveReport {
        &self.attempts.last().expect("at least one attempt").1
    }

    pub fn nodes(&self) -> u64 {
        self.attempts.iter().map(|(_, r)| r.nodes).sum()
    }

    pub fn seconds(&self) -> f64 {
        self.attempts.iter().map(|(_, r)| r.seconds).sum()
    }
}

pub fn solve_deepening(
    traces: &TraceSet,
    k_start: u32,
    max_k: u32,
    triangle: bool,
    granularity: Granularity,
    budget: Budget,
) -> Result<Deepening, ModelError> {
    let mut k = k_start.max(1);
    let mut attempts = Vec::new();
    let mut infeasible_k = if traces.regranulate(granularity).conflicts().is_empty() { 0 } else { 1 };
    loop {
        let model = IlpModel::build(traces, k, triangle, granularity)?;
        let lower_bound = states_lower_bound(infeasible_k.min(k - 1));
        let report = solve_with(&model, SolveOptions { budget, lower_bound, ..Default::default() });
        let again = matches!(report.outcome, SolveOutcome::Infeasible) && k < max_k;
        attempts.push((k, report));
        if !again {
            return Ok(Deepening { model, attempts });
        }
        infeasible_k = k;
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BruteForceError {
    #[error("search space of {size} path combinations exceeds the limit of {BRUTE_FORCE_LIMIT}")]
    TooLarge { size: u128 },
}

/// Number of path combinations [`brute_force_optimum`] would enumerate.
pub fn brute_force_size(model: &IlpModel) -> u128 {
    let k = model.k() as u128;
    (0..model.num_trajectories())
        .map(|m| {
            let len = model.trajectory(m).len() as u32;
            if model.triangle() {
                // Nondecreasing sequences of length len over 1..=k starting
                // from 1: C(len + k - 1, k - 1).
                binomial(len as u128 + k - 1, k - 1)
            } else {
                k.saturating_pow(len)
            }
        })
        .fold(1u128, |acc, n| acc.saturating_mul(n))
}

fn binomial(n: u128, r: u128) -> u128 {
    (0..r).fold(1u128, |acc, x| acc * (n - x) / (x + 1))
}

/// Exhaustive optimum: every combination of per-trajectory state paths,
/// filtered by determinism and reward uniqueness.
pub fn brute_force_optimum(model: &IlpModel) -> Result<SolveOutcome, BruteForceError> {
    let size = brute_force_size(model);
    if size > BRUTE_FORCE_LIMIT {
        return Err(BruteForceError::TooLarge { size });
    }
    let k = model.k();
    let paths: Vec<Vec<Vec<u32>>> =
        (0..model.num_trajectories()).map(|m| all_paths(model.trajectory(m).len(), k, model.triangle())).collect();

    let mut choice = vec![0usize; paths.len()];
    let mut best: Option<(u64, Vec<usize>)> = None;
    let mut trans: HashMap<(u32, u32), u32> = HashMap::new();
    let mut rewards: HashMap<(u32, u32, u32), u32> = HashMap::new();
    loop {
        trans.clear();
        rewards.clear();
        let mut ok = true;
        'check: for (m, &c) in choice.iter().enumerate() {
            let states = &paths[m][c];
            for (n, idx) in model.trajectory(m).enumerate() {
                let step = model.steps()[idx];
                let (i, j) = (states[n], states[n + 1]);
                if *trans.entry((step.key, i)).or_insert(j) != j
                    || *rewards.entry((step.key, i, j)).or_insert(step.reward) != step.reward
                {
                    ok = false;
                    break 'check;
                }
            }
        }
        if ok {
            let z = trans.iter().filter(|((_, i), j)| i != *j).count() as u64;
            if best.as_ref().is_none_or(|(b, _)| z < *b) {
                best = Some((z, choice.clone()));
            }
        }
        // Odometer over trajectories.
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                let outcome = match best {
                    None => SolveOutcome::Infeasible,
                    Some((_, choice)) => {
                        let assignment = choice
                            .iter()
                            .enumerate()
                            .map(|(m, &c)| paths[m][c].windows(2).map(|w| (w[0], w[1])).collect())
                            .collect();
                        SolveOutcome::Feasible(Solution::from_assignment(model, assignment))
                    }
                };
                return Ok(outcome);
            }
            choice[pos] += 1;
            if choice[pos] < paths[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// Every state sequence `u_0 = 1, u_1, ..., u_len`.
fn all_paths(len: usize, k: u32, triangle: bool) -> Vec<Vec<u32>> {
    let mut out = vec![vec![1]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|path| {
                let last = *path.last().unwrap();
                let lo = if triangle { last } else { 1 };
                (lo..=k).map(move |j| {
                    let mut next = path.clone();
                    next.push(j);
                    next
                })
            })
            .collect();
    }
    out
}
