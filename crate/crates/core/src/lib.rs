//! Learning minimal reward machines from non-Markov reward traces.
//!
//! Traces are mapped onto an abstract reward MDP by an exact 0-1 integer
//! program, solved here by a dedicated branch-and-bound search. The
//! [`rl`] module closes the loop with Q-learning that re-infers the machine
//! whenever an observed reward contradicts the current model.

pub mod armdp;
mod clock;
pub mod env;
pub mod experiment;
pub mod fixtures;
pub mod ilp;
pub mod reward;
pub mod reward_machine;
pub mod rl;
pub mod solver;
pub mod trace;
pub mod trace_file;

pub use reward::{Reward, RewardParseError};
pub use reward_machine::{RewardMachine, RmError, RmState};
pub use trace::{ActionId, Conflict, Granularity, Key, StateId, Step, TraceError, TraceSet, Trajectory};
