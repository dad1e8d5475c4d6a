//! Observed trajectories, trigger keys and the indexes the integer program is
//! built from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::Reward;

/// Environment state id. Opaque to everything except the environment.
pub type StateId = u32;
/// Environment action id.
pub type ActionId = u32;

/// One observed tuple `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub s: StateId,
    pub a: ActionId,
    pub r: Reward,
    pub s_next: StateId,
    pub terminal: bool,
}

impl Step {
    pub fn new(s: StateId, a: ActionId, r: Reward, s_next: StateId) -> Self {
        Step { s, a, r, s_next, terminal: false }
    }

    pub fn terminal(mut self) -> Self {
        self.terminal = true;
        self
    }
}

/// What a hidden trigger is sensitive to: the landed state only, or the
/// whole transition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    State,
    Transition,
}

impl Granularity {
    pub fn key(self, step: &Step) -> Key {
        match self {
            Granularity::State => Key::State(step.s_next),
            Granularity::Transition => Key::Transition(step.s, step.a, step.s_next),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::State => "state",
            Granularity::Transition => "transition",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state" => Ok(Granularity::State),
            "transition" => Ok(Granularity::Transition),
            other => Err(format!("unknown granularity `{other}` (expected state|transition)")),
        }
    }
}

/// A trigger key: the label value a reward machine transitions on.
///
/// Serialized as a bare integer for state keys and as `[s, a, s']` for
/// transition keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Key {
    State(StateId),
    Transition(StateId, ActionId, StateId),
}

impl Key {
    pub fn granularity(&self) -> Granularity {
        match self {
            Key::State(_) => Granularity::State,
            Key::Transition(..) => Granularity::Transition,
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::State(s) => write!(f, "{s}"),
            Key::Transition(s, a, s_next) => write!(f, "{s},{a},{s_next}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trajectory has no steps")]
    Empty,
    /// `step` is the 1-based position of the step that does not start where
    /// its predecessor ended.
    #[error("step {step} does not start where step {} ended", step - 1)]
    ChainBreak { step: usize },
    #[error("step {step} is terminal but is not the last step")]
    TerminalNotLast { step: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: u64,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(episode: u64, steps: Vec<Step>) -> Self {
        Trajectory { episode, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.steps.is_empty() {
            return Err(TraceError::Empty);
        }
        for (idx, pair) in self.steps.windows(2).enumerate() {
            if pair[0].s_next != pair[1].s {
                return Err(TraceError::ChainBreak { step: idx + 2 });
            }
        }
        let last = self.steps.len() - 1;
        if let Some(idx) = self.steps[..last].iter().position(|step| step.terminal) {
            return Err(TraceError::TerminalNotLast { step: idx + 1 });
        }
        Ok(())
    }

    pub fn total_reward(&self) -> Reward {
        self.steps.iter().map(|step| step.r).sum()
    }
}

/// A key whose observed rewards disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict {
    pub key: Key,
    pub rewards: BTreeSet<Reward>,
}

/// The observed corpus `T_o` plus the indexes derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceSet {
    granularity: Granularity,
    trajectories: Vec<Trajectory>,
    state_names: BTreeMap<StateId, String>,
    action_names: BTreeMap<ActionId, String>,
    transitions_seen: BTreeSet<(StateId, ActionId, StateId)>,
    rewards_by_key: BTreeMap<Key, BTreeSet<Reward>>,
    max_len: usize,
}

impl TraceSet {
    pub fn new(granularity: Granularity) -> Self {
        TraceSet { granularity, ..TraceSet::default() }
    }

    pub fn with_names(mut self, states: BTreeMap<StateId, String>, actions: BTreeMap<ActionId, String>) -> Self {
        self.state_names = states;
        self.action_names = actions;
        self
    }

    pub fn from_trajectories(
        granularity: Granularity,
        trajectories: impl IntoIterator<Item = Trajectory>,
    ) -> Result<Self, TraceError> {
        let mut set = TraceSet::new(granularity);
        for trajectory in trajectories {
            set.append(trajectory)?;
        }
        Ok(set)
    }

    /// Appends a trajectory and updates every derived index.
    pub fn append(&mut self, trajectory: Trajectory) -> Result<(), TraceError> {
        trajectory.validate()?;
        for step in &trajectory.steps {
            self.transitions_seen.insert((step.s, step.a, step.s_next));
            self.rewards_by_key.entry(self.granularity.key(step)).or_default().insert(step.r);
        }
        self.max_len = self.max_len.max(trajectory.len());
        self.trajectories.push(trajectory);
        Ok(())
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// `M`: number of stored trajectories.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// `N`: length of the longest stored trajectory.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn state_names(&self) -> &BTreeMap<StateId, String> {
        &self.state_names
    }

    pub fn action_names(&self) -> &BTreeMap<ActionId, String> {
        &self.action_names
    }

    pub fn transitions_seen(&self) -> &BTreeSet<(StateId, ActionId, StateId)> {
        &self.transitions_seen
    }

    pub fn rewards_by_key(&self) -> &BTreeMap<Key, BTreeSet<Reward>> {
        &self.rewards_by_key
    }

    pub fn key_of(&self, step: &Step) -> Key {
        self.granularity.key(step)
    }

    /// Every key observed with two or more distinct rewards.
    pub fn conflicts(&self) -> Vec<Conflict> {
        self.rewards_by_key
            .iter()
            .filter(|(_, rewards)| rewards.len() >= 2)
            .map(|(key, rewards)| Conflict { key: *key, rewards: rewards.clone() })
            .collect()
    }

    /// The same trajectories re-indexed under another granularity.
    pub fn regranulate(&self, granularity: Granularity) -> TraceSet {
        let mut set = TraceSet::new(granularity).with_names(self.state_names.clone(), self.action_names.clone());
        for trajectory in &self.trajectories {
            set.append(trajectory.clone()).expect("stored trajectories are valid");
        }
        set
    }

    /// Recomputes the reward index from scratch, ignoring the incremental one.
    pub fn recompute_rewards_by_key(&self) -> BTreeMap<Key, BTreeSet<Reward>> {
        let mut index: BTreeMap<Key, BTreeSet<Reward>> = BTreeMap::new();
        for step in self.trajectories.iter().flat_map(|t| &t.steps) {
            index.entry(self.granularity.key(step)).or_default().insert(step.r);
        }
        index
    }

    pub fn recompute_transitions_seen(&self) -> BTreeSet<(StateId, ActionId, StateId)> {
        self.trajectories.iter().flat_map(|t| &t.steps).map(|step| (step.s, step.a, step.s_next)).collect()
    }
}

/// Detects reward conflicts in `traces` at its own granularity.
pub fn detect_conflicts(traces: &TraceSet) -> Vec<Conflict> {
    traces.conflicts()
}
