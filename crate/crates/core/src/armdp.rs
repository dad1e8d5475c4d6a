//! Abstract reward MDPs built from solver output, and reward machine
//! extraction.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;
use thiserror::Error;

use crate::ilp::{key_token, IlpModel};
use crate::reward::Reward;
use crate::reward_machine::{RewardMachine, RmState};
use crate::solver::{check_solution, Solution, Violation};
use crate::trace::{ActionId, Granularity, Key, StateId, Step, TraceSet, Trajectory};

#[derive(Debug, Error)]
pub enum ArmdpError {
    #[error("solution rejected: {0}")]
    Unverified(#[from] Violation),
}

pub type AbstractState = (StateId, RmState);

/// The cross product of observed states with machine states `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Armdp {
    pub k: u32,
    pub granularity: Granularity,
    pub initial: BTreeSet<AbstractState>,
    pub trans_table: BTreeMap<(Key, RmState), RmState>,
    pub reward_table: BTreeMap<(Key, RmState, RmState), Reward>,
    /// Every abstract tuple `((s,u_i), a, (s',u_j))` induced by the traces.
    pub transitions: BTreeSet<(AbstractState, ActionId, AbstractState)>,
}

/// What the model expects for one observed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub u_next: RmState,
    /// `None` when the model has never seen this key at `u`.
    pub expected_reward: Option<Reward>,
    pub conflict: bool,
}

/// Maps every observed step onto its abstract tuple. The solution is
/// checked against `model` first.
pub fn construct_armdp(traces: &TraceSet, model: &IlpModel, solution: &Solution) -> Result<Armdp, ArmdpError> {
    check_solution(model, solution)?;
    let mut initial = BTreeSet::new();
    let mut transitions = BTreeSet::new();
    for (trajectory, pairs) in traces.trajectories().iter().zip(&solution.assignment) {
        initial.insert((trajectory.steps[0].s, 1));
        for (step, &(i, j)) in trajectory.steps.iter().zip(pairs) {
            transitions.insert(((step.s, i), step.a, (step.s_next, j)));
        }
    }
    Ok(Armdp {
        k: solution.k,
        granularity: model.granularity(),
        initial,
        trans_table: solution.trans_table.clone(),
        reward_table: solution.reward_table.clone(),
        transitions,
    })
}

impl Armdp {
    /// `|S| * K` for an environment with `num_states` states.
    pub fn num_abstract_states(&self, num_states: usize) -> usize {
        num_states * self.k as usize
    }

    pub fn key(&self, step: &Step) -> Key {
        self.granularity.key(step)
    }

    /// Tracks one step from machine state `u`. Unseen keys self-loop and are
    /// never conflicts.
    pub fn predict(&self, u: RmState, step: &Step) -> Prediction {
        let key = self.key(step);
        let u_next = self.trans_table.get(&(key, u)).copied().unwrap_or(u);
        let expected_reward = self.reward_table.get(&(key, u, u_next)).copied();
        Prediction { u_next, expected_reward, conflict: expected_reward.is_some_and(|r| r != step.r) }
    }

    pub fn to_json(&self) -> String {
        let trans: Vec<_> =
            self.trans_table.iter().map(|((key, from), to)| json!({"key": key, "from": from, "to": to})).collect();
        let rewards: Vec<_> = self
            .reward_table
            .iter()
            .map(|((key, from, to), reward)| json!({"key": key, "from": from, "to": to, "reward": reward}))
            .collect();
        let transitions: Vec<_> = self
            .transitions
            .iter()
            .map(|((s, u), a, (t, v))| json!({"s": s, "u": u, "a": a, "s_next": t, "u_next": v}))
            .collect();
        let doc = json!({
            "k": self.k,
            "granularity": self.granularity,
            "initial": self.initial.iter().map(|(s, u)| json!({"s": s, "u": u})).collect::<Vec<_>>(),
            "trans": trans,
            "rewards": rewards,
            "transitions": transitions,
        });
        serde_json::to_string_pretty(&doc).expect("armdp serializes")
    }
}

/// Reads the machine off a solution: one rule per `(u_i, key) -> u_j`.
///
/// A state entered only by terminal steps and never left becomes terminal.
/// A rule is flagged terminal when every step that used it was terminal.
pub fn extract_rm(solution: &Solution, traces: &TraceSet) -> RewardMachine<Key> {
    let mut sources = BTreeSet::from([1]);
    let mut entered_terminal = BTreeSet::new();
    let mut entered_open = BTreeSet::new();
    // (key, i) -> every use terminal?
    let mut all_terminal: BTreeMap<(Key, RmState), bool> = BTreeMap::new();
    for (trajectory, pairs) in traces.trajectories().iter().zip(&solution.assignment) {
        for (step, &(i, j)) in trajectory.steps.iter().zip(pairs) {
            sources.insert(i);
            if step.terminal {
                entered_terminal.insert(j);
            } else {
                entered_open.insert(j);
            }
            let flag = all_terminal.entry((traces.key_of(step), i)).or_insert(true);
            *flag &= step.terminal;
        }
    }
    let terminals: BTreeSet<RmState> =
        entered_terminal.iter().copied().filter(|u| !sources.contains(u) && !entered_open.contains(u)).collect();
    let states: BTreeSet<RmState> = sources.union(&entered_open).copied().filter(|u| !terminals.contains(u)).collect();
    let mut rm = RewardMachine::new(states, 1, terminals).expect("u1 is always a source");
    for ((key, i), j) in &solution.trans_table {
        let reward = solution.reward_table[&(*key, *i, *j)];
        let terminal = all_terminal.get(&(*key, *i)).copied().unwrap_or(false);
        rm.add_rule(*i, *key, *j, reward, terminal).expect("solution tables are functions");
    }
    rm
}

/// `(sum over steps of r * T(s,a,s'))`; `None` on inexact arithmetic.
pub fn rs(trajectory: &Trajectory, weight: impl Fn(&Step) -> Reward) -> Option<Reward> {
    trajectory.steps.iter().try_fold(Reward::ZERO, |acc, step| acc.checked_add(step.r.checked_mul(weight(step))?))
}

/// `(sum over steps and all pairs (i,j) of r * T(s,a,s') * O(m,n,i,j))`,
/// taken literally over the full `K x K` grid of pairs.
pub fn ars(trajectory: &Trajectory, solution: &Solution, m: usize, weight: impl Fn(&Step) -> Reward) -> Option<Reward> {
    let pairs = &solution.assignment[m];
    let mut total = Reward::ZERO;
    for (step, &chosen) in trajectory.steps.iter().zip(pairs) {
        let weighted = step.r.checked_mul(weight(step))?;
        for i in 1..=solution.k {
            for j in 1..=solution.k {
                let o = if (i, j) == chosen { Reward::ONE } else { Reward::ZERO };
                total = total.checked_add(weighted.checked_mul(o)?)?;
            }
        }
    }
    Some(total)
}

/// Deterministic environments: every observed transition has weight 1.
pub fn unit_weight(_: &Step) -> Reward {
    Reward::ONE
}

/// Human-readable key names for rendering extracted machines, using the
/// trace file's state and action names when present.
pub fn describe_key(key: &Key, traces: &TraceSet) -> String {
    let state = |s: &StateId| traces.state_names().get(s).cloned().unwrap_or_else(|| s.to_string());
    match key {
        Key::State(s) => state(s),
        Key::Transition(s, a, t) => {
            let action = traces.action_names().get(a).cloned().unwrap_or_else(|| a.to_string());
            format!("{},{},{}", state(s), action, state(t))
        }
    }
}

/// The same machine with keys renamed through `describe_key`. Distinct
/// keys with equal names fall back to their raw token.
pub fn named_rm(rm: &RewardMachine<Key>, traces: &TraceSet) -> RewardMachine<String> {
    let mut names: BTreeMap<String, BTreeSet<Key>> = BTreeMap::new();
    for (_, key, _) in rm.rules() {
        names.entry(describe_key(key, traces)).or_default().insert(*key);
    }
    let label = |key: &Key| {
        let name = describe_key(key, traces);
        if names[&name].len() > 1 {
            format!("{name}#{}", key_token(key))
        } else {
            name
        }
    };
    let mut out = RewardMachine::new(rm.states().iter().copied(), rm.initial(), rm.terminals().iter().copied())
        .expect("same states")
        .with_default_reward(rm.default_reward());
    for (from, key, rule) in rm.rules() {
        out.add_rule(from, label(key), rule.to, rule.reward, rule.terminal).expect("labels stay unique");
    }
    out
}
