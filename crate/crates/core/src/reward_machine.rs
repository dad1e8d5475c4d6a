//! Reward machines: finite automata that emit a reward on every transition.
//!
//! A machine is generic over its label type. Environments use symbolic labels
//! (`"c"`, `"o"`, ...) for their hidden ground truth; learned machines use
//! [`Key`](crate::trace::Key) labels because the learner never sees symbols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::Reward;
use crate::trace::{Step, Trajectory};

/// Reward machine state id. Learned machines number their states `1..=K`.
pub type RmState = u32;

/// Anything a reward machine can transition on.
pub trait Label: Clone + Ord + fmt::Display + fmt::Debug + Serialize + DeserializeOwned {}

impl<T> Label for T where T: Clone + Ord + fmt::Display + fmt::Debug + Serialize + DeserializeOwned {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RmError {
    #[error("initial state u{0} is not a non-terminal state")]
    BadInitial(RmState),
    #[error("state u{0} is both terminal and non-terminal")]
    Overlap(RmState),
    #[error("unknown state u{0}")]
    UnknownState(RmState),
    #[error("stepping a terminal machine (state u{0})")]
    SteppingTerminal(RmState),
    #[error("non-deterministic rule for (u{from}, {key})")]
    Nondeterministic { from: RmState, key: String },
    #[error("invalid reward machine JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rule {
    pub to: RmState,
    pub reward: Reward,
    /// The episode ends when this rule fires even if `to` is not in `F`.
    pub terminal: bool,
}

/// Outcome of one machine step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmTransition {
    pub next: RmState,
    pub reward: Reward,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replay {
    pub consistent: bool,
    /// 0-based index of the first step whose observed reward differs from
    /// the machine's.
    pub first_divergence: Option<usize>,
}

/// `(U, u1, F, delta_u, delta_r)` with a default reward for unlabeled steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardMachine<L> {
    states: BTreeSet<RmState>,
    initial: RmState,
    terminals: BTreeSet<RmState>,
    rules: BTreeMap<(RmState, L), Rule>,
    default_reward: Reward,
}

impl<L: Label> RewardMachine<L> {
    pub fn new(
        states: impl IntoIterator<Item = RmState>,
        initial: RmState,
        terminals: impl IntoIterator<Item = RmState>,
    ) -> Result<Self, RmError> {
        let states: BTreeSet<_> = states.into_iter().collect();
        let terminals: BTreeSet<_> = terminals.into_iter().collect();
        if let Some(u) = states.intersection(&terminals).next() {
            return Err(RmError::Overlap(*u));
        }
        if !states.contains(&initial) {
            return Err(RmError::BadInitial(initial));
        }
        Ok(RewardMachine { states, initial, terminals, rules: BTreeMap::new(), default_reward: Reward::ZERO })
    }

    pub fn with_default_reward(mut self, reward: Reward) -> Self {
        self.default_reward = reward;
        self
    }

    /// Inserts `delta_u(from, label) = to` and `delta_r(from, label, to) = reward`.
    ///
    /// Re-inserting an identical rule is a no-op; any other rule for the same
    /// `(from, label)` is rejected.
    pub fn add_rule(
        &mut self,
        from: RmState,
        label: L,
        to: RmState,
        reward: Reward,
        terminal: bool,
    ) -> Result<(), RmError> {
        if self.terminals.contains(&from) {
            return Err(RmError::SteppingTerminal(from));
        }
        for u in [from, to] {
            if !self.states.contains(&u) && !self.terminals.contains(&u) {
                return Err(RmError::UnknownState(u));
            }
        }
        let rule = Rule { to, reward, terminal };
        match self.rules.get(&(from, label.clone())) {
            Some(existing) if *existing == rule => Ok(()),
            Some(_) => Err(RmError::Nondeterministic { from, key: label.to_string() }),
            None => {
                self.rules.insert((from, label), rule);
                Ok(())
            }
        }
    }

    pub fn states(&self) -> &BTreeSet<RmState> {
        &self.states
    }

    pub fn initial(&self) -> RmState {
        self.initial
    }

    pub fn terminals(&self) -> &BTreeSet<RmState> {
        &self.terminals
    }

    pub fn default_reward(&self) -> Reward {
        self.default_reward
    }

    pub fn rules(&self) -> impl Iterator<Item = (RmState, &L, &Rule)> {
        self.rules.iter().map(|((from, label), rule)| (*from, label, rule))
    }

    pub fn rule(&self, u: RmState, label: &L) -> Option<&Rule>
    where
        L: Clone,
    {
        // BTreeMap keyed by tuples needs an owned key for lookup.
        self.rules.get(&(u, label.clone()))
    }

    pub fn is_terminal(&self, u: RmState) -> bool {
        self.terminals.contains(&u)
    }

    /// One machine step. A label with no rule self-loops with the default
    /// reward.
    pub fn step(&self, u: RmState, label: &L) -> Result<RmTransition, RmError> {
        self.check_steppable(u)?;
        Ok(match self.rule(u, label) {
            Some(rule) => RmTransition {
                next: rule.to,
                reward: rule.reward,
                terminal: rule.terminal || self.terminals.contains(&rule.to),
            },
            None => self.self_loop(u),
        })
    }

    /// Like [`step`](Self::step) but `None` means "no label", which always
    /// self-loops.
    pub fn step_opt(&self, u: RmState, label: Option<&L>) -> Result<RmTransition, RmError> {
        match label {
            Some(label) => self.step(u, label),
            None => {
                self.check_steppable(u)?;
                Ok(self.self_loop(u))
            }
        }
    }

    fn check_steppable(&self, u: RmState) -> Result<(), RmError> {
        if self.terminals.contains(&u) {
            return Err(RmError::SteppingTerminal(u));
        }
        if !self.states.contains(&u) {
            return Err(RmError::UnknownState(u));
        }
        Ok(())
    }

    fn self_loop(&self, u: RmState) -> RmTransition {
        RmTransition { next: u, reward: self.default_reward, terminal: false }
    }

    /// Runs the machine along `trajectory` and returns the `(u, u')` pair of
    /// every step, stopping early if the machine enters a terminal state
    /// before the trajectory ends.
    pub fn state_path(
        &self,
        trajectory: &Trajectory,
        labeler: impl Fn(&Step) -> Option<L>,
    ) -> Vec<(RmState, RmTransition)> {
        let mut u = self.initial;
        let mut path = Vec::with_capacity(trajectory.len());
        for step in &trajectory.steps {
            let Ok(transition) = self.step_opt(u, labeler(step).as_ref()) else {
                break;
            };
            path.push((u, transition));
            u = transition.next;
        }
        path
    }

    /// Checks every observed reward in `trajectory` against the machine.
    pub fn replay(&self, trajectory: &Trajectory, labeler: impl Fn(&Step) -> Option<L>) -> Replay {
        let path = self.state_path(trajectory, labeler);
        let first_divergence = trajectory
            .steps
            .iter()
            .enumerate()
            .find(|(idx, step)| path.get(*idx).is_none_or(|(_, t)| t.reward != step.r))
            .map(|(idx, _)| idx);
        Replay { consistent: first_divergence.is_none(), first_divergence }
    }

    /// Graphviz rendering with one edge per rule, labelled `key / reward`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph reward_machine {\n  rankdir=LR;\n  node [shape=circle];\n");
        out.push_str("  start [shape=point];\n");
        let _ = writeln!(out, "  start -> u{};", self.initial);
        for u in &self.terminals {
            let _ = writeln!(out, "  u{u} [shape=doublecircle];");
        }
        for ((from, label), rule) in &self.rules {
            let text = format!("{label} / {}", rule.reward).replace('\\', "\\\\").replace('"', "\\\"");
            if rule.terminal && !self.terminals.contains(&rule.to) {
                let _ = writeln!(out, "  u{from} -> u{} [label=\"{text}\", arrowhead=tee];", rule.to);
            } else {
                let _ = writeln!(out, "  u{from} -> u{} [label=\"{text}\"];", rule.to);
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        let doc = RmDoc {
            states: self.states.iter().copied().collect(),
            initial: self.initial,
            terminals: self.terminals.iter().copied().collect(),
            default_reward: self.default_reward,
            rules: self
                .rules
                .iter()
                .map(|((from, label), rule)| RuleDoc {
                    from: *from,
                    key: label.clone(),
                    to: rule.to,
                    reward: rule.reward,
                    terminal: rule.terminal,
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("machine serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, RmError> {
        let doc: RmDoc<L> = serde_json::from_str(text).map_err(|err| RmError::Json(err.to_string()))?;
        let mut machine =
            RewardMachine::new(doc.states, doc.initial, doc.terminals)?.with_default_reward(doc.default_reward);
        for rule in doc.rules {
            if machine.rules.contains_key(&(rule.from, rule.key.clone())) {
                return Err(RmError::Nondeterministic { from: rule.from, key: rule.key.to_string() });
            }
            machine.add_rule(rule.from, rule.key, rule.to, rule.reward, rule.terminal)?;
        }
        Ok(machine)
    }

    /// Number of non-terminal states, `|U|`.
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Applies `f` to every rule reward, keeping the structure.
    pub fn map_rewards(&self, mut f: impl FnMut(RmState, &L, &Rule) -> Reward) -> Self {
        let mut machine = self.clone();
        for ((from, label), rule) in machine.rules.iter_mut() {
            rule.reward = f(*from, label, rule);
        }
        machine
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RmDoc<L> {
    states: Vec<RmState>,
    initial: RmState,
    terminals: Vec<RmState>,
    #[serde(default, skip_serializing_if = "is_zero")]
    default_reward: Reward,
    rules: Vec<RuleDoc<L>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc<L> {
    from: RmState,
    key: L,
    to: RmState,
    reward: Reward,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    terminal: bool,
}

fn is_zero(reward: &Reward) -> bool {
    reward.is_zero()
}
