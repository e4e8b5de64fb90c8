//! Exact millisecond quantities.
//!
//! Every duration in the simulator is an integer count of microseconds
//! (thousandths of a millisecond). Sums and integer multiples stay exact, and
//! values written with three decimals parse back to the same tick count.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Ticks per millisecond.
pub const TICKS_PER_MS: i64 = 1000;

/// A signed duration in milliseconds, stored as microsecond ticks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Millis(i64);

impl Millis {
    pub const ZERO: Millis = Millis(0);

    pub const fn from_ms(ms: i64) -> Self {
        Millis(ms * TICKS_PER_MS)
    }

    pub const fn from_ticks(ticks: i64) -> Self {
        Millis(ticks)
    }

    pub const fn ticks(self) -> i64 {
        self.0
    }

    /// Converts a floating-point millisecond value, rounding to the nearest tick.
    pub fn from_f64(ms: f64) -> Result<Self> {
        if !ms.is_finite() {
            return Err(Error::input(format!("non-finite duration {ms}")));
        }
        let ticks = (ms * TICKS_PER_MS as f64).round();
        if ticks.abs() > (i64::MAX / 4) as f64 {
            return Err(Error::input(format!("duration {ms}ms out of range")));
        }
        Ok(Millis(ticks as i64))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_MS as f64
    }

    pub fn to_ratio(self) -> Ratio<i128> {
        Ratio::new(self.0 as i128, TICKS_PER_MS as i128)
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// True when `self` is a whole positive multiple of `unit`.
    pub fn is_multiple_of(self, unit: Millis) -> bool {
        unit.0 != 0 && self.0 > 0 && self.0 % unit.0 == 0
    }
}

impl Add for Millis {
    type Output = Millis;
    fn add(self, rhs: Millis) -> Millis {
        Millis(self.0 + rhs.0)
    }
}

impl AddAssign for Millis {
    fn add_assign(&mut self, rhs: Millis) {
        self.0 += rhs.0;
    }
}

impl Sub for Millis {
    type Output = Millis;
    fn sub(self, rhs: Millis) -> Millis {
        Millis(self.0 - rhs.0)
    }
}

impl Mul<u64> for Millis {
    type Output = Millis;
    fn mul(self, rhs: u64) -> Millis {
        Millis(self.0 * rhs as i64)
    }
}

impl Sum for Millis {
    fn sum<I: Iterator<Item = Millis>>(iter: I) -> Millis {
        iter.fold(Millis::ZERO, Add::add)
    }
}

impl fmt::Display for Millis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / TICKS_PER_MS as u64;
        let frac = abs % TICKS_PER_MS as u64;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:03}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl FromStr for Millis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_end_matches("ms");
        let value: f64 = trimmed
            .parse()
            .map_err(|_| Error::input(format!("cannot parse `{s}` as milliseconds")))?;
        Millis::from_f64(value)
    }
}

impl Serialize for Millis {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 % TICKS_PER_MS == 0 {
            serializer.serialize_i64(self.0 / TICKS_PER_MS)
        } else {
            serializer.serialize_f64(self.as_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Millis {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Millis::from_f64(value).map_err(serde::de::Error::custom)
    }
}
