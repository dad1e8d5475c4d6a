//! Exact fixed-point rewards.
//!
//! Rewards are stored as a signed count of millionths. Conflict detection and
//! reward-table determinism compare rewards for exact equality, so no float
//! ever sits on that path.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of fractional decimal digits a reward may carry.
pub const REWARD_DIGITS: usize = 6;

const SCALE: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardParseError {
    #[error("empty reward string")]
    Empty,
    #[error("reward `{0}` has more than {REWARD_DIGITS} fractional digits")]
    Precision(String),
    #[error("reward `{0}` is not a plain decimal number")]
    Syntax(String),
    #[error("reward `{0}` is out of range")]
    Overflow(String),
}

/// A reward with exactly six fractional digits of precision.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reward(i64);

impl Reward {
    pub const ZERO: Reward = Reward(0);
    pub const ONE: Reward = Reward(SCALE);

    pub const fn from_micros(micros: i64) -> Self {
        Reward(micros)
    }

    pub const fn from_int(value: i64) -> Self {
        Reward(value * SCALE)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// Exact product of two rewards, or `None` when the product needs more
    /// than six fractional digits or overflows.
    pub fn checked_mul(self, other: Reward) -> Option<Reward> {
        let wide = i128::from(self.0) * i128::from(other.0);
        if wide % i128::from(SCALE) != 0 {
            return None;
        }
        i64::try_from(wide / i128::from(SCALE)).ok().map(Reward)
    }

    pub fn checked_add(self, other: Reward) -> Option<Reward> {
        self.0.checked_add(other.0).map(Reward)
    }
}

impl Add for Reward {
    type Output = Reward;

    fn add(self, rhs: Reward) -> Reward {
        Reward(self.0 + rhs.0)
    }
}

impl AddAssign for Reward {
    fn add_assign(&mut self, rhs: Reward) {
        self.0 += rhs.0;
    }
}

impl Sub for Reward {
    type Output = Reward;

    fn sub(self, rhs: Reward) -> Reward {
        Reward(self.0 - rhs.0)
    }
}

impl Neg for Reward {
    type Output = Reward;

    fn neg(self) -> Reward {
        Reward(-self.0)
    }
}

impl Sum for Reward {
    fn sum<I: Iterator<Item = Reward>>(iter: I) -> Reward {
        iter.fold(Reward::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Reward> for Reward {
    fn sum<I: Iterator<Item = &'a Reward>>(iter: I) -> Reward {
        iter.copied().sum()
    }
}

impl FromStr for Reward {
    type Err = RewardParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        if text.is_empty() {
            return Err(RewardParseError::Empty);
        }
        let syntax = || RewardParseError::Syntax(text.to_string());
        let (negative, body) = match text.as_bytes()[0] {
            b'-' => (true, &text[1..]),
            b'+' => (false, &text[1..]),
            _ => (false, text),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((int_part, frac_part)) => (int_part, Some(frac_part)),
            None => (body, None),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(syntax());
        }
        let frac_part = frac_part.unwrap_or("");
        if body.contains('.') && frac_part.is_empty() {
            return Err(syntax());
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(syntax());
        }
        if frac_part.len() > REWARD_DIGITS {
            return Err(RewardParseError::Precision(text.to_string()));
        }

        let overflow = || RewardParseError::Overflow(text.to_string());
        let whole: i64 = int_part.parse().map_err(|_| overflow())?;
        let mut frac: i64 = 0;
        for digit in frac_part.bytes() {
            frac = frac * 10 + i64::from(digit - b'0');
        }
        frac *= 10_i64.pow((REWARD_DIGITS - frac_part.len()) as u32);
        let magnitude = whole.checked_mul(SCALE).and_then(|w| w.checked_add(frac)).ok_or_else(overflow)?;
        Ok(Reward(if negative { -magnitude } else { magnitude }))
    }
}

impl fmt::Display for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let magnitude = self.0.unsigned_abs();
        let scale = SCALE as u64;
        let whole = magnitude / scale;
        let frac = magnitude % scale;
        if self.0 < 0 {
            f.write_str("-")?;
        }
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let digits = format!("{frac:06}");
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

impl fmt::Debug for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Reward({self})")
    }
}

impl Serialize for Reward {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Reward {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RewardVisitor;

        impl Visitor<'_> for RewardVisitor {
            type Value = Reward;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string with at most 6 fractional digits")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Reward, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_str(RewardVisitor)
    }
}
