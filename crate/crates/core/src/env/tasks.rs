use std::fmt;
use std::str::FromStr;

use super::{GridMap, Nmrdp};
use crate::reward::Reward;
use crate::reward_machine::{RewardMachine, RmState};

pub const OFFICEWORLD_MAP: &str = include_str!("../../maps/officeworld.txt");
pub const BREAKFASTWORLD_MAP: &str = include_str!("../../maps/breakfastworld.txt");
pub const CORRIDOR_MAP: &str = include_str!("../../maps/corridor.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OfficeTask {
    /// Coffee, then office.
    B,
    /// Mail, then office.
    C,
    /// Coffee and mail in either order, then office.
    D,
    /// Patrol rooms A, B, C, D in order.
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BreakfastTask {
    B,
    C,
}

/// Full keeps per-step rewards; Cumulative pays the whole path sum on the
/// terminal transition and zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Full,
    Cumulative,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        match text {
            "full" => Ok(Variant::Full),
            "cumulative" => Ok(Variant::Cumulative),
            other => Err(format!("unknown variant `{other}` (expected full or cumulative)")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Cumulative => "cumulative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvSpec {
    Officeworld(OfficeTask),
    Breakfastworld(BreakfastTask),
    /// Three cells `c S g`; reaching g pays 1 only after c.
    Corridor,
}

impl EnvSpec {
    pub fn default_map(self) -> GridMap {
        let text = match self {
            EnvSpec::Officeworld(_) => OFFICEWORLD_MAP,
            EnvSpec::Breakfastworld(_) => BREAKFASTWORLD_MAP,
            EnvSpec::Corridor => CORRIDOR_MAP,
        };
        text.parse().expect("bundled maps are valid")
    }

    pub fn ground_truth(self, variant: Variant) -> RewardMachine<String> {
        let machine = match self {
            EnvSpec::Officeworld(task) => officeworld_rm(task),
            EnvSpec::Breakfastworld(task) => breakfastworld_rm(task),
            EnvSpec::Corridor => corridor_rm(),
        };
        match variant {
            Variant::Full => machine,
            Variant::Cumulative => cumulative(&machine),
        }
    }

    /// Builds the environment, optionally on a custom map.
    pub fn build(self, variant: Variant, map: Option<GridMap>) -> Nmrdp {
        Nmrdp::new(map.unwrap_or_else(|| self.default_map()), self.ground_truth(variant))
    }
}

impl FromStr for EnvSpec {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let spec = match text {
            "officeworld:b" => EnvSpec::Officeworld(OfficeTask::B),
            "officeworld:c" => EnvSpec::Officeworld(OfficeTask::C),
            "officeworld:d" => EnvSpec::Officeworld(OfficeTask::D),
            "officeworld:e" => EnvSpec::Officeworld(OfficeTask::E),
            "breakfastworld:b" => EnvSpec::Breakfastworld(BreakfastTask::B),
            "breakfastworld:c" => EnvSpec::Breakfastworld(BreakfastTask::C),
            "corridor" => EnvSpec::Corridor,
            other => {
                return Err(format!(
                    "unknown environment `{other}` (expected officeworld:b..e, breakfastworld:b|c or corridor)"
                ))
            }
        };
        Ok(spec)
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Officeworld(task) => write!(f, "officeworld:{}", format!("{task:?}").to_lowercase()),
            EnvSpec::Breakfastworld(task) => write!(f, "breakfastworld:{}", format!("{task:?}").to_lowercase()),
            EnvSpec::Corridor => f.write_str("corridor"),
        }
    }
}

struct Builder {
    machine: RewardMachine<String>,
}

impl Builder {
    fn new(states: RmState, done: RmState) -> Self {
        let machine = RewardMachine::new(1..=states, 1, [done]).expect("states and terminal are disjoint");
        Builder { machine }
    }

    fn rule(&mut self, from: RmState, symbol: &str, to: RmState, reward: &str) -> &mut Self {
        let terminal = self.machine.is_terminal(to);
        let reward = reward.parse().expect("literal reward");
        self.machine.add_rule(from, symbol.to_string(), to, reward, terminal).expect("well-formed task");
        self
    }

    fn plants(&mut self, done: RmState) -> &mut Self {
        for u in self.machine.states().clone() {
            self.rule(u, "*", done, "-1");
        }
        self
    }
}

pub fn officeworld_rm(task: OfficeTask) -> RewardMachine<String> {
    let b = match task {
        OfficeTask::B | OfficeTask::C => {
            let item = if task == OfficeTask::B { "c" } else { "m" };
            let mut b = Builder::new(2, 3);
            b.rule(1, item, 2, "0").rule(2, "o", 3, "1").plants(3);
            b
        }
        OfficeTask::D => {
            let mut b = Builder::new(4, 5);
            b.rule(1, "c", 2, "0").rule(1, "m", 3, "0");
            b.rule(2, "m", 4, "0").rule(3, "c", 4, "0");
            b.rule(4, "o", 5, "1").plants(5);
            b
        }
        OfficeTask::E => {
            let mut b = Builder::new(4, 5);
            b.rule(1, "A", 2, "0").rule(2, "B", 3, "0").rule(3, "C", 4, "0");
            b.rule(4, "D", 5, "1").plants(5);
            b
        }
    };
    b.machine
}

pub fn breakfastworld_rm(task: BreakfastTask) -> RewardMachine<String> {
    let b = match task {
        BreakfastTask::B => {
            let mut b = Builder::new(5, 6);
            b.rule(1, "c", 2, "-0.1").rule(2, "c", 3, "-0.3").rule(3, "e", 4, "2").rule(2, "e", 5, "1");
            b.rule(4, "l", 6, "1.6").rule(5, "l", 6, "0.9");
            b
        }
        BreakfastTask::C => {
            let mut b = Builder::new(7, 8);
            b.rule(1, "c", 2, "-0.1").rule(2, "c", 3, "-0.3").rule(3, "e", 4, "2");
            b.rule(4, "w", 5, "-0.4").rule(5, "l", 8, "1.2");
            b.rule(2, "e", 6, "1").rule(6, "w", 7, "-0.2").rule(7, "l", 8, "0.7");
            b
        }
    };
    b.machine
}

pub fn corridor_rm() -> RewardMachine<String> {
    let mut b = Builder::new(2, 3);
    b.rule(1, "c", 2, "0").rule(1, "g", 3, "0").rule(2, "g", 3, "1");
    b.machine
}

fn cumulative(machine: &RewardMachine<String>) -> RewardMachine<String> {
    machine.map_rewards(|_, _, rule| if rule.terminal { rule.reward } else { Reward::ZERO })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(text: &str) -> Reward {
        text.parse().unwrap()
    }

    #[test]
    fn specs_round_trip_through_text() {
        for text in [
            "officeworld:b",
            "officeworld:c",
            "officeworld:d",
            "officeworld:e",
            "breakfastworld:b",
            "breakfastworld:c",
            "corridor",
        ] {
            let spec: EnvSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert!("officeworld:f".parse::<EnvSpec>().is_err());
    }

    #[test]
    fn breakfast_b_rules() {
        let rm = breakfastworld_rm(BreakfastTask::B);
        let step = |u, key: &str| {
            let t = rm.step(u, &key.to_string()).unwrap();
            (t.next, t.reward)
        };
        assert_eq!(step(1, "c"), (2, r("-0.1")));
        assert_eq!(step(2, "c"), (3, r("-0.3")));
        assert_eq!(step(3, "e"), (4, r("2")));
        assert_eq!(step(2, "e"), (5, r("1")));
        assert_eq!(step(4, "l"), (6, r("1.6")));
        assert_eq!(step(5, "l"), (6, r("0.9")));
        assert_eq!(rm.num_states(), 5);
    }

    #[test]
    fn terminal_rewards_are_path_sums() {
        assert_eq!(r("-0.1") + r("-0.3") + r("2"), r("1.6"));
        assert_eq!(r("-0.1") + r("1"), r("0.9"));
        assert_eq!(r("-0.1") + r("-0.3") + r("2") + r("-0.4"), r("1.2"));
        assert_eq!(r("-0.1") + r("1") + r("-0.2"), r("0.7"));
        assert_eq!(breakfastworld_rm(BreakfastTask::C).num_states(), 7);
    }

    #[test]
    fn cumulative_zeroes_non_terminal_rules() {
        let rm = EnvSpec::Breakfastworld(BreakfastTask::B).ground_truth(Variant::Cumulative);
        for (_, _, rule) in rm.rules() {
            assert_eq!(rule.reward.is_zero(), !rule.terminal);
        }
    }

    #[test]
    fn office_sizes() {
        let sizes: Vec<_> = [OfficeTask::B, OfficeTask::C, OfficeTask::D, OfficeTask::E]
            .into_iter()
            .map(|t| officeworld_rm(t).num_states())
            .collect();
        assert_eq!(sizes, [2, 2, 4, 4]);
    }

    #[test]
    fn office_b_dot_has_coffee_edge() {
        assert!(officeworld_rm(OfficeTask::B).to_dot().contains("u1 -> u2 [label=\"c / 0\"];"));
    }

    #[test]
    fn office_e_json_round_trip() {
        let rm = officeworld_rm(OfficeTask::E);
        assert_eq!(RewardMachine::<String>::from_json(&rm.to_json()).unwrap(), rm);
    }

    #[test]
    fn bundled_maps_carry_every_symbol() {
        let office = EnvSpec::Officeworld(OfficeTask::B).default_map();
        for symbol in ['c', 'm', 'o', '*', 'A', 'B', 'C', 'D'] {
            assert!(!office.cells_with(symbol).is_empty(), "{symbol}");
        }
        let breakfast = EnvSpec::Breakfastworld(BreakfastTask::B).default_map();
        for symbol in ['c', 'w', 'e', 'l'] {
            assert!(!breakfast.cells_with(symbol).is_empty(), "{symbol}");
        }
    }
}
