//! Small trace corpora shared by tests, benches and the demo.

use std::collections::BTreeMap;

use rand::Rng;

use crate::reward::Reward;
use crate::trace::{Granularity, Step, TraceSet, Trajectory};

pub const RIGHT: u32 = 3;
pub const LEFT: u32 = 2;

/// Cells `c=1`, `s2=2`, `g=3` on a line. Entering g pays 1 only after c.
///
/// `[(s2,R,0,g)]` and `[(s2,L,0,c), (c,R,0,s2), (s2,R,1,g)]`.
pub fn corridor_traces() -> TraceSet {
    corridor_traces_at(Granularity::State)
}

pub fn corridor_traces_at(granularity: Granularity) -> TraceSet {
    let t1 = Trajectory::new(0, vec![Step::new(2, RIGHT, Reward::ZERO, 3).terminal()]);
    let t2 = Trajectory::new(
        1,
        vec![
            Step::new(2, LEFT, Reward::ZERO, 1),
            Step::new(1, RIGHT, Reward::ZERO, 2),
            Step::new(2, RIGHT, Reward::ONE, 3).terminal(),
        ],
    );
    let states = BTreeMap::from([(1, "c".to_string()), (2, "s2".to_string()), (3, "g".to_string())]);
    let actions = BTreeMap::from([(LEFT, "L".to_string()), (RIGHT, "R".to_string())]);
    TraceSet::from_trajectories(granularity, [t1, t2]).expect("corridor traces chain").with_names(states, actions)
}

/// Shape of a random corpus.
#[derive(Debug, Clone, Copy)]
pub struct RandomCorpus {
    pub max_trajectories: usize,
    pub max_len: usize,
    pub states: u32,
    pub actions: u32,
}

impl Default for RandomCorpus {
    fn default() -> Self {
        RandomCorpus { max_trajectories: 3, max_len: 5, states: 4, actions: 2 }
    }
}

impl RandomCorpus {
    /// A random chained corpus with rewards in {0, 1}. Half of the corpora
    /// draw rewards from a random hidden machine with up to three states, so
    /// that both solvable and unsolvable instances are common.
    pub fn sample(&self, rng: &mut impl Rng, granularity: Granularity) -> TraceSet {
        let hidden = rng.gen_bool(0.5).then(|| HiddenMachine::sample(rng, self.states));
        let count = rng.gen_range(1..=self.max_trajectories);
        let mut trajectories = Vec::with_capacity(count);
        for episode in 0..count {
            let len = rng.gen_range(1..=self.max_len);
            let mut s = rng.gen_range(1..=self.states);
            let mut u = 0usize;
            let mut steps = Vec::with_capacity(len);
            for _ in 0..len {
                let a = rng.gen_range(0..self.actions);
                let s_next = rng.gen_range(1..=self.states);
                let r = match &hidden {
                    Some(machine) => {
                        let (next, r) = machine.step(u, s_next);
                        u = next;
                        r
                    }
                    None => Reward::from_int(rng.gen_range(0..=1)),
                };
                steps.push(Step::new(s, a, r, s_next));
                s = s_next;
            }
            if rng.gen_bool(0.5) {
                steps.last_mut().unwrap().terminal = true;
            }
            trajectories.push(Trajectory::new(episode as u64, steps));
        }
        TraceSet::from_trajectories(granularity, trajectories).expect("sampled traces chain")
    }
}

struct HiddenMachine {
    // (u, landed state) -> (u', reward)
    table: Vec<Vec<(usize, Reward)>>,
}

impl HiddenMachine {
    fn sample(rng: &mut impl Rng, states: u32) -> Self {
        let size = rng.gen_range(1..=3);
        let table = (0..size)
            .map(|u| {
                (0..=states)
                    .map(|_| {
                        let next = if rng.gen_bool(0.3) { rng.gen_range(0..size) } else { u };
                        (next, Reward::from_int(rng.gen_range(0..=1)))
                    })
                    .collect()
            })
            .collect();
        HiddenMachine { table }
    }

    fn step(&self, u: usize, s_next: u32) -> (usize, Reward) {
        self.table[u][s_next as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn corridor_conflicts_on_goal_only() {
        let traces = corridor_traces();
        let conflicts = traces.conflicts();
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].key, crate::trace::Key::State(3));
    }

    #[test]
    fn random_corpora_respect_bounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let shape = RandomCorpus::default();
        for _ in 0..500 {
            let traces = shape.sample(&mut rng, Granularity::State);
            assert!((1..=3).contains(&traces.len()));
            assert!(traces.max_len() <= 5);
        }
    }
}
