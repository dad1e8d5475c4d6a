//! Deterministic gridworld NMRDPs whose reward comes from a hidden reward
//! machine.

mod grid;
mod tasks;

pub use grid::{Action, GridMap, MapError};
pub use tasks::{
    breakfastworld_rm, corridor_rm, officeworld_rm, BreakfastTask, EnvSpec, OfficeTask, Variant, BREAKFASTWORLD_MAP,
    CORRIDOR_MAP, OFFICEWORLD_MAP,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::reward::Reward;
use crate::reward_machine::{RewardMachine, RmState, RmTransition};
use crate::trace::{Granularity, Key, StateId, Step, TraceSet, Trajectory};

/// Episodes are cut off after this many steps unless configured otherwise.
pub const DEFAULT_STEP_CAP: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("unknown action id {0}")]
    UnknownAction(u32),
}

/// What the agent sees after one move. The hidden machine state is not part
/// of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvStep {
    pub s_next: StateId,
    pub reward: Reward,
    pub terminal: bool,
    /// The step cap was reached without a terminal transition.
    pub truncated: bool,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A gridworld with a black-box reward machine.
#[derive(Debug, Clone)]
pub struct Nmrdp {
    map: GridMap,
    hidden: RewardMachine<String>,
    // Dense (u, cell) -> transition table for the hidden machine.
    table: Vec<Option<RmTransition>>,
    gamma: f64,
    step_cap: usize,
    cell: StateId,
    u: RmState,
    steps: usize,
    finished: bool,
}

impl Nmrdp {
    pub fn new(map: GridMap, hidden: RewardMachine<String>) -> Self {
        let cells = map.num_cells();
        let max_u = hidden.states().iter().chain(hidden.terminals()).max().copied().unwrap_or(0);
        let mut table = vec![None; (max_u as usize + 1) * cells];
        for &u in hidden.states() {
            for cell in 0..cells as StateId {
                let label = map.label(cell).map(String::from);
                let transition = hidden.step_opt(u, label.as_ref()).expect("u is a non-terminal state");
                table[u as usize * cells + cell as usize] = Some(transition);
            }
        }
        let start = map.start();
        let initial = hidden.initial();
        Nmrdp {
            map,
            hidden,
            table,
            gamma: 0.95,
            step_cap: DEFAULT_STEP_CAP,
            cell: start,
            u: initial,
            steps: 0,
            finished: false,
        }
    }

    pub fn with_step_cap(mut self, step_cap: usize) -> Self {
        self.step_cap = step_cap.max(1);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn step_cap(&self) -> usize {
        self.step_cap
    }

    pub fn num_states(&self) -> usize {
        self.map.num_cells()
    }

    pub fn num_actions(&self) -> usize {
        Action::COUNT
    }

    /// The hidden reward machine, for evaluation only. Learners must not
    /// read it.
    pub fn ground_truth(&self) -> &RewardMachine<String> {
        &self.hidden
    }

    /// Starts a new episode at the start cell with the machine in `u1`.
    pub fn reset(&mut self) -> StateId {
        self.cell = self.map.start();
        self.u = self.hidden.initial();
        self.steps = 0;
        self.finished = false;
        self.cell
    }

    pub fn step(&mut self, action: Action) -> Result<EnvStep, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        let next = self.map.neighbor(self.cell, action);
        let cells = self.map.num_cells();
        let transition = self.table[self.u as usize * cells + next as usize]
            .expect("the hidden machine is never stepped from a terminal state");
        self.cell = next;
        self.u = transition.next;
        self.steps += 1;
        let truncated = !transition.terminal && self.steps >= self.step_cap;
        self.finished = transition.terminal || truncated;
        Ok(EnvStep { s_next: next, reward: transition.reward, terminal: transition.terminal, truncated })
    }

    pub fn step_id(&mut self, action: u32) -> Result<EnvStep, EnvError> {
        let action = Action::from_id(action).ok_or(EnvError::UnknownAction(action))?;
        self.step(action)
    }

    /// The symbol of the cell a step lands on; the ground-truth labeler.
    pub fn symbol_of(&self, step: &Step) -> Option<String> {
        self.map.label(step.s_next).map(String::from)
    }
}

/// Episodes under a uniformly random policy, with the map's cell and
/// action names attached.
pub fn random_traces(env: &Nmrdp, episodes: u64, seed: u64, granularity: Granularity) -> TraceSet {
    let mut env = env.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = TraceSet::new(granularity).with_names(env.map().state_names(), GridMap::action_names());
    for episode in 0..episodes {
        let mut s = env.reset();
        let mut steps = Vec::new();
        loop {
            let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
            let out = env.step(action).expect("episode in progress");
            let mut step = Step::new(s, action.id(), out.reward, out.s_next);
            step.terminal = out.terminal;
            steps.push(step);
            s = out.s_next;
            if out.done() {
                break;
            }
        }
        traces.append(Trajectory::new(episode, steps)).expect("environment traces chain");
    }
    traces
}

/// The labeler the learner uses: a step's trigger key at a fixed
/// granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Labeler {
    pub granularity: Granularity,
}

impl Labeler {
    pub fn new(granularity: Granularity) -> Self {
        Labeler { granularity }
    }

    pub fn label(&self, step: &Step) -> Key {
        self.granularity.key(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(text: &str) -> Reward {
        text.parse().unwrap()
    }

    fn office(task: OfficeTask) -> Nmrdp {
        EnvSpec::Officeworld(task).build(Variant::Full, None)
    }

    fn walk_to(env: &mut Nmrdp, target: char) -> Vec<EnvStep> {
        // Breadth-first path to the nearest cell carrying `target`, avoiding
        // every other labelled cell.
        let map = env.map().clone();
        let mut prev = vec![None; map.num_cells()];
        let mut queue = std::collections::VecDeque::from([env.cell]);
        prev[env.cell as usize] = Some((env.cell, Action::Up));
        let mut goal = None;
        while let Some(cell) = queue.pop_front() {
            if cell != env.cell && map.label(cell) == Some(target) {
                goal = Some(cell);
                break;
            }
            for action in Action::ALL {
                let next = map.neighbor(cell, action);
                let free = map.label(next).is_none_or(|l| l == target || l == map.label(env.cell).unwrap_or('.'));
                if prev[next as usize].is_none() && free {
                    prev[next as usize] = Some((cell, action));
                    queue.push_back(next);
                }
            }
        }
        let mut actions = Vec::new();
        let mut cell = goal.expect("target reachable");
        while cell != env.cell {
            let (from, action) = prev[cell as usize].unwrap();
            actions.push(action);
            cell = from;
        }
        actions.reverse();
        actions.into_iter().map(|a| env.step(a).unwrap()).collect()
    }

    #[test]
    fn reset_returns_start_and_is_idempotent() {
        let mut env = office(OfficeTask::B);
        let start = env.map().start();
        assert_eq!(env.reset(), start);
        assert_eq!(env.reset(), start);
        assert_eq!(env.u, 1);
    }

    #[test]
    fn coffee_then_office_pays_one() {
        let mut env = office(OfficeTask::B);
        env.reset();
        let to_coffee = walk_to(&mut env, 'c');
        assert!(to_coffee.iter().all(|s| s.reward.is_zero() && !s.done()));
        let to_office = walk_to(&mut env, 'o');
        let last = to_office.last().unwrap();
        assert_eq!((last.reward, last.terminal), (r("1"), true));
        assert!(to_office[..to_office.len() - 1].iter().all(|s| s.reward.is_zero()));
        assert_eq!(env.step(Action::Up), Err(EnvError::EpisodeFinished));
        assert_eq!(env.reset(), env.map().start());
    }

    #[test]
    fn office_without_coffee_pays_nothing() {
        let mut env = office(OfficeTask::B);
        env.reset();
        let last = *walk_to(&mut env, 'o').last().unwrap();
        assert_eq!((last.reward, last.terminal), (Reward::ZERO, false));
    }

    #[test]
    fn plants_end_the_episode_with_minus_one() {
        let mut env = office(OfficeTask::B);
        env.reset();
        let last = *walk_to(&mut env, '*').last().unwrap();
        assert_eq!((last.reward, last.terminal), (r("-1"), true));
    }

    #[test]
    fn bumping_a_wall_stays_put() {
        let mut env = EnvSpec::Corridor.build(Variant::Full, None);
        let start = env.reset();
        let step = env.step(Action::Up).unwrap();
        assert_eq!(step, EnvStep { s_next: start, reward: Reward::ZERO, terminal: false, truncated: false });
    }

    #[test]
    fn step_cap_truncates() {
        let mut env = EnvSpec::Corridor.build(Variant::Full, None).with_step_cap(3);
        env.reset();
        assert!(!env.step(Action::Up).unwrap().done());
        assert!(!env.step(Action::Up).unwrap().done());
        let last = env.step(Action::Up).unwrap();
        assert!(last.truncated && !last.terminal);
        assert!(env.step(Action::Up).is_err());
    }

    #[test]
    fn office_d_accepts_both_orders() {
        for order in [['c', 'm'], ['m', 'c']] {
            let mut env = office(OfficeTask::D);
            env.reset();
            walk_to(&mut env, order[0]);
            walk_to(&mut env, order[1]);
            let last = *walk_to(&mut env, 'o').last().unwrap();
            assert_eq!((last.reward, last.terminal), (r("1"), true), "order {order:?}");
        }
    }

    #[test]
    fn office_e_patrols_rooms_in_order() {
        let mut env = office(OfficeTask::E);
        env.reset();
        for room in ['A', 'B', 'C'] {
            let steps = walk_to(&mut env, room);
            assert!(steps.iter().all(|s| !s.done()));
        }
        let last = *walk_to(&mut env, 'D').last().unwrap();
        assert_eq!((last.reward, last.terminal), (r("1"), true));

        // Skipping B: reaching D after A does nothing.
        env.reset();
        walk_to(&mut env, 'A');
        let last = *walk_to(&mut env, 'D').last().unwrap();
        assert!(!last.done());
    }

    #[test]
    fn labeler_granularities() {
        let step = Step::new(2, 3, Reward::ZERO, 9);
        assert_eq!(Labeler::new(Granularity::State).label(&step), Key::State(9));
        assert_eq!(Labeler::new(Granularity::Transition).label(&step), Key::Transition(2, 3, 9));
        let other = Step::new(8, 1, Reward::ZERO, 9);
        let state = Labeler::new(Granularity::State);
        assert_eq!(state.label(&step), state.label(&other));
    }

    fn run_episode(env: &mut Nmrdp, actions: &[Action]) -> Trajectory {
        let mut s = env.reset();
        let mut steps = Vec::new();
        for &action in actions {
            let out = env.step(action).unwrap();
            let mut step = Step::new(s, action.id(), out.reward, out.s_next);
            step.terminal = out.terminal;
            steps.push(step);
            s = out.s_next;
            if out.done() {
                break;
            }
        }
        Trajectory::new(0, steps)
    }

    fn random_actions(rng: &mut ChaCha8Rng, len: usize) -> Vec<Action> {
        (0..len).map(|_| Action::ALL[rng.gen_range(0..4)]).collect()
    }

    #[test]
    fn ground_truth_replays_every_generated_episode() {
        let specs = [
            EnvSpec::Officeworld(OfficeTask::B),
            EnvSpec::Officeworld(OfficeTask::C),
            EnvSpec::Officeworld(OfficeTask::D),
            EnvSpec::Officeworld(OfficeTask::E),
            EnvSpec::Breakfastworld(BreakfastTask::B),
            EnvSpec::Breakfastworld(BreakfastTask::C),
            EnvSpec::Corridor,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in specs {
            for variant in [Variant::Full, Variant::Cumulative] {
                let mut env = spec.build(variant, None);
                let truth = env.ground_truth().clone();
                for _ in 0..10_000 {
                    let actions = random_actions(&mut rng, 60);
                    let trajectory = run_episode(&mut env, &actions);
                    let replay = truth.replay(&trajectory, |step| env.symbol_of(step));
                    assert!(replay.consistent, "{spec:?} {variant:?}: {replay:?}");
                }
            }
        }
    }

    #[test]
    fn full_and_cumulative_pay_the_same_at_the_terminal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for task in [BreakfastTask::B, BreakfastTask::C] {
            let spec = EnvSpec::Breakfastworld(task);
            let mut full = spec.build(Variant::Full, None);
            let mut cumulative = spec.build(Variant::Cumulative, None);
            for _ in 0..10_000 {
                let actions = random_actions(&mut rng, 120);
                let a = run_episode(&mut full, &actions);
                let b = run_episode(&mut cumulative, &actions);
                assert_eq!(a.len(), b.len());
                let (a_last, b_last) = (a.steps.last().unwrap(), b.steps.last().unwrap());
                assert_eq!(a_last.terminal, b_last.terminal);
                assert!(b.steps[..b.len() - 1].iter().all(|s| s.r.is_zero()));
                if a_last.terminal {
                    // The terminal reward is the sum of everything before it,
                    // and the cumulative variant pays exactly that.
                    let before: Reward = a.steps[..a.len() - 1].iter().map(|s| s.r).sum();
                    assert_eq!(a_last.r, before);
                    assert_eq!(b.total_reward(), a_last.r);
                } else {
                    assert_eq!(b.total_reward(), Reward::ZERO);
                }
            }
        }
    }

    #[test]
    fn identical_actions_give_identical_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let actions = random_actions(&mut rng, 200);
        let mut a = office(OfficeTask::D);
        let mut b = office(OfficeTask::D);
        assert_eq!(run_episode(&mut a, &actions), run_episode(&mut b, &actions));
    }

    #[test]
    fn random_traces_are_seeded_and_named() {
        let env = EnvSpec::Corridor.build(Variant::Full, None);
        let a = random_traces(&env, 20, 4, Granularity::State);
        assert_eq!(a.len(), 20);
        assert_eq!(a.trajectories(), random_traces(&env, 20, 4, Granularity::State).trajectories());
        assert_eq!(a.action_names()[&0], "up");
        let truth = env.ground_truth();
        assert!(a.trajectories().iter().all(|t| truth.replay(t, |s| env.symbol_of(s)).consistent));
    }
}
