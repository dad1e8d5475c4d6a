//! The 0-1 integer program mapping every observed step onto a pair of
//! abstract machine states.
//!
//! Variables:
//! - `O(m,n,i,j)`: step `n` of trajectory `m` moves the machine from `u_i` to `u_j`.
//! - `It(key,i,j)`: some step with `key` is mapped to `(i,j)`.
//! - `Ir(key,r,i,j)`: some step with `key` and reward `r` is mapped to `(i,j)`.
//!
//! Indicators are linked to their members by `I >= O` for each member and
//! `I <= sum(members)`. The objective counts the `It` with `i != j`.
//!
//! The model keeps only index sets; constraints are generated on demand.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::reward::Reward;
use crate::trace::{Granularity, Key, TraceError, TraceSet};

pub type VarId = u32;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("K must be at least 1")]
    ZeroK,
    #[error("trace set is empty")]
    NoTraces,
    #[error("trajectory {trajectory}: {source}")]
    Trace { trajectory: usize, source: TraceError },
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown variable `{name}`")]
    UnknownVar { line: usize, name: String },
    #[error("line {line}: value {value} for `{name}` is not binary")]
    NotBinary { line: usize, name: String, value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A decoded variable. `m` and `n` are 0-based; machine states are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    O { m: u32, n: u32, i: u32, j: u32 },
    ITrans { key: u32, i: u32, j: u32 },
    IReward { key: u32, reward: u32, i: u32, j: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Exactly one `(i,j)` per step.
    OnePair,
    /// The first step of a trajectory leaves `u_1`.
    Start,
    /// The `j` of step `n` is the `i` of step `n+1`.
    Chain,
    /// At most one successor per `(key, i)`.
    Determinism,
    /// At most one reward per `(key, i, j)`.
    RewardUnique,
    TransLower,
    TransUpper,
    RewardLower,
    RewardUpper,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::OnePair,
        Family::Start,
        Family::Chain,
        Family::Determinism,
        Family::RewardUnique,
        Family::TransLower,
        Family::TransUpper,
        Family::RewardLower,
        Family::RewardUpper,
    ];

    fn prefix(self) -> &'static str {
        match self {
            Family::OnePair => "one",
            Family::Start => "start",
            Family::Chain => "chain",
            Family::Determinism => "det",
            Family::RewardUnique => "rew",
            Family::TransLower => "ltl",
            Family::TransUpper => "ltu",
            Family::RewardLower => "lrl",
            Family::RewardUpper => "lru",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Eq => lhs == rhs,
            Sense::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub family: Family,
    pub name: String,
    pub terms: Vec<(VarId, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

impl Constraint {
    pub fn lhs(&self, bits: &[bool]) -> i64 {
        self.terms.iter().filter(|(v, _)| bits[*v as usize]).map(|(_, c)| c).sum()
    }

    pub fn holds(&self, bits: &[bool]) -> bool {
        self.sense.holds(self.lhs(bits), self.rhs)
    }
}

/// One observed step as the model sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelStep {
    pub m: u32,
    pub n: u32,
    pub key: u32,
    pub reward: u32,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IlpModel {
    k: u32,
    triangle: bool,
    granularity: Granularity,
    pairs: Vec<(u32, u32)>,
    pair_index: Vec<Option<u32>>,
    keys: Vec<Key>,
    rewards: Vec<Vec<Reward>>,
    reward_offsets: Vec<u32>,
    steps: Vec<ModelStep>,
    trajectory_starts: Vec<usize>,
    steps_by_key: Vec<Vec<u32>>,
}

impl IlpModel {
    /// Builds the program for `traces` with `k` machine states. With
    /// `triangle`, only transitions `u_i -> u_j` with `j >= i` exist.
    pub fn build(traces: &TraceSet, k: u32, triangle: bool, granularity: Granularity) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::ZeroK);
        }
        if traces.is_empty() {
            return Err(ModelError::NoTraces);
        }
        for (idx, trajectory) in traces.trajectories().iter().enumerate() {
            trajectory.validate().map_err(|source| ModelError::Trace { trajectory: idx + 1, source })?;
        }
        let regranulated;
        let traces = if traces.granularity() == granularity {
            traces
        } else {
            regranulated = traces.regranulate(granularity);
            &regranulated
        };

        let mut pairs = Vec::new();
        let mut pair_index = vec![None; (k * k) as usize];
        for i in 1..=k {
            for j in 1..=k {
                if !triangle || j >= i {
                    pair_index[((i - 1) * k + (j - 1)) as usize] = Some(pairs.len() as u32);
                    pairs.push((i, j));
                }
            }
        }

        let by_key = traces.rewards_by_key();
        let keys: Vec<Key> = by_key.keys().cloned().collect();
        let key_ids: HashMap<&Key, u32> = keys.iter().enumerate().map(|(i, k)| (k, i as u32)).collect();
        let rewards: Vec<Vec<Reward>> = by_key.values().map(|set| set.iter().copied().collect()).collect();
        let mut reward_offsets = Vec::with_capacity(rewards.len() + 1);
        let mut total = 0u32;
        for set in &rewards {
            reward_offsets.push(total);
            total += set.len() as u32;
        }
        reward_offsets.push(total);

        let mut steps = Vec::with_capacity(traces.total_steps());
        let mut trajectory_starts = Vec::with_capacity(traces.len() + 1);
        let mut steps_by_key = vec![Vec::new(); keys.len()];
        for (m, trajectory) in traces.trajectories().iter().enumerate() {
            trajectory_starts.push(steps.len());
            for (n, step) in trajectory.steps.iter().enumerate() {
                let key = key_ids[&traces.key_of(step)];
                let reward = rewards[key as usize].binary_search(&step.r).expect("indexed reward") as u32;
                steps_by_key[key as usize].push(steps.len() as u32);
                steps.push(ModelStep { m: m as u32, n: n as u32, key, reward, terminal: step.terminal });
            }
        }
        trajectory_starts.push(steps.len());

        Ok(IlpModel {
            k,
            triangle,
            granularity,
            pairs,
            pair_index,
            keys,
            rewards,
            reward_offsets,
            steps,
            trajectory_starts,
            steps_by_key,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn triangle(&self) -> bool {
        self.triangle
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Allowed `(i, j)` pairs in variable order.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn pair_id(&self, i: u32, j: u32) -> Option<u32> {
        if i == 0 || j == 0 || i > self.k || j > self.k {
            return None;
        }
        self.pair_index[((i - 1) * self.k + (j - 1)) as usize]
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    /// Distinct rewards observed on key `key`, ascending.
    pub fn rewards_of(&self, key: u32) -> &[Reward] {
        &self.rewards[key as usize]
    }

    pub fn steps(&self) -> &[ModelStep] {
        &self.steps
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectory_starts.len() - 1
    }

    /// The flat step range of trajectory `m`.
    pub fn trajectory(&self, m: usize) -> std::ops::Range<usize> {
        self.trajectory_starts[m]..self.trajectory_starts[m + 1]
    }

    pub fn flat_index(&self, m: usize, n: usize) -> usize {
        self.trajectory_starts[m] + n
    }

    pub fn max_len(&self) -> usize {
        (0..self.num_trajectories()).map(|m| self.trajectory(m).len()).max().unwrap_or(0)
    }

    fn num_pairs(&self) -> u32 {
        self.pairs.len() as u32
    }

    pub fn num_o_vars(&self) -> usize {
        self.steps.len() * self.pairs.len()
    }

    pub fn num_trans_vars(&self) -> usize {
        self.keys.len() * self.pairs.len()
    }

    pub fn num_reward_vars(&self) -> usize {
        *self.reward_offsets.last().unwrap() as usize * self.pairs.len()
    }

    pub fn num_vars(&self) -> usize {
        self.num_o_vars() + self.num_trans_vars() + self.num_reward_vars()
    }

    pub fn o_var(&self, step: usize, i: u32, j: u32) -> Option<VarId> {
        self.pair_id(i, j).map(|p| step as u32 * self.num_pairs() + p)
    }

    pub fn trans_var(&self, key: u32, i: u32, j: u32) -> Option<VarId> {
        self.pair_id(i, j).map(|p| self.num_o_vars() as u32 + key * self.num_pairs() + p)
    }

    pub fn reward_var(&self, key: u32, reward: u32, i: u32, j: u32) -> Option<VarId> {
        let base = (self.num_o_vars() + self.num_trans_vars()) as u32;
        let slot = self.reward_offsets[key as usize] + reward;
        self.pair_id(i, j).map(|p| base + slot * self.num_pairs() + p)
    }

    pub fn var(&self, id: VarId) -> Var {
        let pairs = self.num_pairs();
        let o = self.num_o_vars() as u32;
        let t = self.num_trans_vars() as u32;
        let (i, j) = self.pairs[(id % pairs) as usize];
        if id < o {
            let step = self.steps[(id / pairs) as usize];
            Var::O { m: step.m, n: step.n, i, j }
        } else if id < o + t {
            Var::ITrans { key: (id - o) / pairs, i, j }
        } else {
            let slot = (id - o - t) / pairs;
            let key = self.reward_offsets.partition_point(|&off| off <= slot) as u32 - 1;
            Var::IReward { key, reward: slot - self.reward_offsets[key as usize], i, j }
        }
    }

    pub fn var_name(&self, id: VarId) -> String {
        match self.var(id) {
            Var::O { m, n, i, j } => format!("O_{}_{}_{i}_{j}", m + 1, n + 1),
            Var::ITrans { key, i, j } => format!("It_{}_{i}_{j}", key_token(&self.keys[key as usize])),
            Var::IReward { key, reward, i, j } => format!(
                "Ir_{}_{}_{i}_{j}",
                key_token(&self.keys[key as usize]),
                reward_token(self.rewards[key as usize][reward as usize])
            ),
        }
    }

    /// Objective terms: every off-diagonal `It`.
    pub fn objective(&self) -> Vec<VarId> {
        (0..self.keys.len() as u32)
            .flat_map(|key| self.pairs.iter().filter(|(i, j)| i != j).map(move |&(i, j)| (key, i, j)))
            .map(|(key, i, j)| self.trans_var(key, i, j).unwrap())
            .collect()
    }

    /// Calls `f` with every constraint, family by family.
    pub fn for_each_constraint(&self, mut f: impl FnMut(Constraint)) {
        let k = self.k;
        for (idx, step) in self.steps.iter().enumerate() {
            let terms = self.pairs.iter().map(|&(i, j)| (self.o_var(idx, i, j).unwrap(), 1)).collect();
            f(Constraint {
                family: Family::OnePair,
                name: format!("one_{}_{}", step.m + 1, step.n + 1),
                terms,
                sense: Sense::Eq,
                rhs: 1,
            });
        }
        for m in 0..self.num_trajectories() {
            let first = self.trajectory(m).start;
            let terms = (1..=k).filter_map(|j| self.o_var(first, 1, j)).map(|v| (v, 1)).collect();
            f(Constraint { family: Family::Start, name: format!("start_{}", m + 1), terms, sense: Sense::Eq, rhs: 1 });
        }
        for m in 0..self.num_trajectories() {
            let range = self.trajectory(m);
            for idx in range.start..range.end - 1 {
                for j in 1..=k {
                    let mut terms: Vec<_> = (1..=k).filter_map(|i| self.o_var(idx, i, j)).map(|v| (v, 1)).collect();
                    terms.extend((1..=k).filter_map(|next| self.o_var(idx + 1, j, next)).map(|v| (v, -1)));
                    f(Constraint {
                        family: Family::Chain,
                        name: format!("chain_{}_{}_{j}", m + 1, idx - range.start + 1),
                        terms,
                        sense: Sense::Eq,
                        rhs: 0,
                    });
                }
            }
        }
        for key in 0..self.keys.len() as u32 {
            let token = key_token(&self.keys[key as usize]);
            for i in 1..=k {
                let terms: Vec<_> = (1..=k).filter_map(|j| self.trans_var(key, i, j)).map(|v| (v, 1)).collect();
                if !terms.is_empty() {
                    f(Constraint {
                        family: Family::Determinism,
                        name: format!("det_{token}_{i}"),
                        terms,
                        sense: Sense::Le,
                        rhs: 1,
                    });
                }
            }
        }
        for key in 0..self.keys.len() as u32 {
            let token = key_token(&self.keys[key as usize]);
            for &(i, j) in &self.pairs {
                let terms = (0..self.rewards[key as usize].len() as u32)
                    .map(|r| (self.reward_var(key, r, i, j).unwrap(), 1))
                    .collect();
                f(Constraint {
                    family: Family::RewardUnique,
                    name: format!("rew_{token}_{i}_{j}"),
                    terms,
                    sense: Sense::Le,
                    rhs: 1,
                });
            }
        }
        for key in 0..self.keys.len() as u32 {
            let token = key_token(&self.keys[key as usize]);
            let members = &self.steps_by_key[key as usize];
            for &(i, j) in &self.pairs {
                let indicator = self.trans_var(key, i, j).unwrap();
                for &idx in members {
                    let step = self.steps[idx as usize];
                    f(Constraint {
                        family: Family::TransLower,
                        name: format!("ltl_{token}_{i}_{j}_{}_{}", step.m + 1, step.n + 1),
                        terms: vec![(indicator, 1), (self.o_var(idx as usize, i, j).unwrap(), -1)],
                        sense: Sense::Ge,
                        rhs: 0,
                    });
                }
                let mut terms = vec![(indicator, 1)];
                terms.extend(members.iter().map(|&idx| (self.o_var(idx as usize, i, j).unwrap(), -1)));
                f(Constraint {
                    family: Family::TransUpper,
                    name: format!("ltu_{token}_{i}_{j}"),
                    terms,
                    sense: Sense::Le,
                    rhs: 0,
                });
            }
        }
        for key in 0..self.keys.len() as u32 {
            let token = key_token(&self.keys[key as usize]);
            for (r, &reward) in self.rewards[key as usize].iter().enumerate() {
                let r = r as u32;
                let rtoken = reward_token(reward);
                let members: Vec<u32> = self.steps_by_key[key as usize]
                    .iter()
                    .copied()
                    .filter(|&idx| self.steps[idx as usize].reward == r)
                    .collect();
                for &(i, j) in &self.pairs {
                    let indicator = self.reward_var(key, r, i, j).unwrap();
                    for &idx in &members {
                        let step = self.steps[idx as usize];
                        f(Constraint {
                            family: Family::RewardLower,
                            name: format!("lrl_{token}_{rtoken}_{i}_{j}_{}_{}", step.m + 1, step.n + 1),
                            terms: vec![(indicator, 1), (self.o_var(idx as usize, i, j).unwrap(), -1)],
                            sense: Sense::Ge,
                            rhs: 0,
                        });
                    }
                    let mut terms = vec![(indicator, 1)];
                    terms.extend(members.iter().map(|&idx| (self.o_var(idx as usize, i, j).unwrap(), -1)));
                    f(Constraint {
                        family: Family::RewardUpper,
                        name: format!("lru_{token}_{rtoken}_{i}_{j}"),
                        terms,
                        sense: Sense::Le,
                        rhs: 0,
                    });
                }
            }
        }
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        let mut out = Vec::new();
        self.for_each_constraint(|c| out.push(c));
        out
    }

    /// The first violated constraint, if any.
    pub fn first_violation(&self, bits: &[bool]) -> Option<Constraint> {
        let mut found = None;
        self.for_each_constraint(|c| {
            if found.is_none() && !c.holds(bits) {
                found = Some(c);
            }
        });
        found
    }

    pub fn objective_value(&self, bits: &[bool]) -> u64 {
        self.objective().iter().filter(|&&v| bits[v as usize]).count() as u64
    }

    pub fn stats(&self) -> ModelStats {
        let p = self.pairs.len();
        let k = self.k as usize;
        let keys = self.keys.len();
        let reward_slots = *self.reward_offsets.last().unwrap() as usize;
        let chain: usize = (0..self.num_trajectories()).map(|m| (self.trajectory(m).len() - 1) * k).sum();
        let det = keys * (1..=self.k).filter(|&i| (1..=self.k).any(|j| self.pair_id(i, j).is_some())).count();
        let counts = [
            (Family::OnePair, self.steps.len()),
            (Family::Start, self.num_trajectories()),
            (Family::Chain, chain),
            (Family::Determinism, det),
            (Family::RewardUnique, keys * p),
            (Family::TransLower, self.num_o_vars()),
            (Family::TransUpper, keys * p),
            (Family::RewardLower, self.num_o_vars()),
            (Family::RewardUpper, reward_slots * p),
        ];
        let constraints: BTreeMap<Family, usize> = counts.into_iter().collect();
        ModelStats {
            k: self.k,
            triangle: self.triangle,
            granularity: self.granularity.to_string(),
            trajectories: self.num_trajectories(),
            max_len: self.max_len(),
            steps: self.steps.len(),
            keys,
            pairs_per_step: p,
            o_vars: self.num_o_vars(),
            i_trans_vars: self.num_trans_vars(),
            i_reward_vars: self.num_reward_vars(),
            vars: self.num_vars(),
            objective_terms: keys * self.pairs.iter().filter(|(i, j)| i != j).count(),
            total_constraints: constraints.values().sum(),
            constraints,
        }
    }

    /// CPLEX LP text. Output depends only on the model, so identical models
    /// give identical files.
    pub fn write_lp(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "\\ reward machine model: K={} triangle={} granularity={}",
            self.k, self.triangle, self.granularity
        );
        out.push_str("Minimize\n");
        let objective: Vec<String> = self.objective().iter().map(|&v| self.var_name(v)).collect();
        if objective.is_empty() {
            // A zero-coefficient term keeps the objective well-formed.
            let _ = writeln!(out, " z: 0 {}", self.var_name(0));
        } else {
            write_terms(&mut out, " z:", objective.iter().map(|name| (1, name.as_str())));
        }
        out.push_str("Subject To\n");
        self.for_each_constraint(|c| {
            let names: Vec<String> = c.terms.iter().map(|(v, _)| self.var_name(*v)).collect();
            let head = format!(" {}:", c.name);
            write_terms(&mut out, &head, c.terms.iter().zip(&names).map(|((_, coef), name)| (*coef, name.as_str())));
            // Move the relation onto the last line.
            out.pop();
            let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
        });
        out.push_str("Binary\n");
        for id in 0..self.num_vars() as VarId {
            let _ = writeln!(out, " {}", self.var_name(id));
        }
        out.push_str("End\n");
        out
    }

    pub fn export_lp(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.write_lp())
    }

    /// Reads `name=value` lines (as written by external solvers) into a full
    /// assignment. Missing variables are 0; `#` starts a comment.
    pub fn parse_assignment(&self, text: &str) -> Result<Vec<bool>, ImportError> {
        let names: HashMap<String, VarId> = (0..self.num_vars() as VarId).map(|id| (self.var_name(id), id)).collect();
        let mut bits = vec![false; self.num_vars()];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (name, value) = content.split_once('=').map(|(a, b)| (a.trim(), b.trim())).ok_or_else(|| {
                ImportError::Syntax { line, message: format!("expected `name=value`, found `{content}`") }
            })?;
            let value: f64 =
                value.parse().map_err(|_| ImportError::Syntax { line, message: format!("bad number `{value}`") })?;
            let id = *names.get(name).ok_or_else(|| ImportError::UnknownVar { line, name: name.to_string() })?;
            bits[id as usize] = if value.abs() < 1e-6 {
                false
            } else if (value - 1.0).abs() < 1e-6 {
                true
            } else {
                return Err(ImportError::NotBinary { line, name: name.to_string(), value });
            };
        }
        Ok(bits)
    }

    pub fn load_assignment(&self, path: impl AsRef<Path>) -> Result<Vec<bool>, ImportError> {
        self.parse_assignment(&std::fs::read_to_string(path)?)
    }
}

fn write_terms<'a>(out: &mut String, head: &str, terms: impl Iterator<Item = (i64, &'a str)>) {
    const PER_LINE: usize = 8;
    out.push_str(head);
    for (idx, (coef, name)) in terms.enumerate() {
        if idx > 0 && idx % PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = match (coef < 0, idx) {
            (true, _) => " -",
            (false, 0) => "",
            (false, _) => " +",
        };
        match coef.unsigned_abs() {
            1 => {
                let _ = write!(out, "{sign} {name}");
            }
            magnitude => {
                let _ = write!(out, "{sign} {magnitude} {name}");
            }
        }
    }
    out.push('\n');
}

/// `5` for a state key, `3x1x5` for a transition key.
pub fn key_token(key: &Key) -> String {
    match key {
        Key::State(s) => s.to_string(),
        Key::Transition(s, a, t) => format!("{s}x{a}x{t}"),
    }
}

/// `-0.1` becomes `n0p1`, `0.25` becomes `0p25`.
pub fn reward_token(reward: Reward) -> String {
    reward.to_string().replace('-', "n").replace('.', "p")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub k: u32,
    pub triangle: bool,
    pub granularity: String,
    pub trajectories: usize,
    pub max_len: usize,
    pub steps: usize,
    pub keys: usize,
    pub pairs_per_step: usize,
    pub o_vars: usize,
    pub i_trans_vars: usize,
    pub i_reward_vars: usize,
    pub vars: usize,
    pub objective_terms: usize,
    pub constraints: BTreeMap<Family, usize>,
    pub total_constraints: usize,
}

impl ModelStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}
