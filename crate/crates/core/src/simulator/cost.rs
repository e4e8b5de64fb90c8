//! Computation cost model and the computation-aware clock.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::time::Millis;

/// How encoder cost accrues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderMode {
    /// Each new encoder state is encoded once, when it arrives.
    Incremental,
    /// Every decision re-encodes all states read so far (bidirectional encoder).
    Recompute,
}

/// Where computation time comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum ClockSource {
    /// Fixed costs from the model; fully deterministic.
    #[default]
    Simulated,
    /// Host time measured around each computation step.
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CostModel {
    pub encoder_mode: EncoderMode,
    pub per_state: Millis,
    pub per_decision: Millis,
    pub per_token: Millis,
    pub clock: ClockSource,
}

impl CostModel {
    pub fn new(encoder_mode: EncoderMode, per_state: Millis, per_decision: Millis, per_token: Millis) -> Result<Self> {
        for (name, cost) in [("state", per_state), ("decision", per_decision), ("token", per_token)] {
            if cost.is_negative() {
                return Err(Error::config(format!(
                    "per-{name} cost must be non-negative, got {cost}ms"
                )));
            }
        }
        Ok(CostModel {
            encoder_mode,
            per_state,
            per_decision,
            per_token,
            clock: ClockSource::Simulated,
        })
    }

    pub fn zero() -> Self {
        CostModel {
            encoder_mode: EncoderMode::Incremental,
            per_state: Millis::ZERO,
            per_decision: Millis::ZERO,
            per_token: Millis::ZERO,
            clock: ClockSource::Simulated,
        }
    }

    pub fn wall() -> Self {
        CostModel {
            clock: ClockSource::Wall,
            ..CostModel::zero()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.clock == ClockSource::Simulated
            && self.per_state == Millis::ZERO
            && self.per_decision == Millis::ZERO
            && self.per_token == Millis::ZERO
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::zero()
    }
}

/// `zero`, `wall`, or `MODE:STATE[,DECISION[,TOKEN]]` with MODE one of
/// `incremental` / `recompute` and costs in milliseconds.
impl FromStr for CostModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "zero" => return Ok(CostModel::zero()),
            "wall" => return Ok(CostModel::wall()),
            _ => {}
        }
        let (mode, costs) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("cost model `{s}`: expected MODE:STATE[,DECISION[,TOKEN]]")))?;
        let mode = match mode {
            "incremental" => EncoderMode::Incremental,
            "recompute" => EncoderMode::Recompute,
            other => return Err(Error::config(format!("unknown encoder mode `{other}`"))),
        };
        let values = costs
            .split(',')
            .map(str::parse::<Millis>)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::config(format!("cost model `{s}`: {e}")))?;
        if values.is_empty() || values.len() > 3 {
            return Err(Error::config(format!("cost model `{s}`: expected 1 to 3 costs")));
        }
        let get = |i: usize| values.get(i).copied().unwrap_or(Millis::ZERO);
        CostModel::new(mode, get(0), get(1), get(2))
    }
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.clock == ClockSource::Wall {
            return f.write_str("wall");
        }
        if self.is_zero() {
            return f.write_str("zero");
        }
        let mode = match self.encoder_mode {
            EncoderMode::Incremental => "incremental",
            EncoderMode::Recompute => "recompute",
        };
        write!(f, "{mode}:{},{},{}", self.per_state, self.per_decision, self.per_token)
    }
}

/// Computation-aware session clock.
///
/// Speech arrival and computation are serialized: reading a frame advances the
/// clock by one frame period, and every computation step adds its cost on
/// top. `now` is therefore always speech time read plus computation spent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimClock {
    now: Millis,
    speech: Millis,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    /// Speech time delivered so far.
    pub fn speech(&self) -> Millis {
        self.speech
    }

    pub fn advance_speech(&mut self, frame_period: Millis) {
        self.speech += frame_period;
        self.now += frame_period;
    }

    pub fn charge(&mut self, cost: Millis) {
        debug_assert!(!cost.is_negative());
        self.now += cost;
    }

    pub fn charge_elapsed(&mut self, elapsed: Duration) {
        let ticks = elapsed.as_micros().min(i64::MAX as u128) as i64;
        self.now += Millis::from_ticks(ticks);
    }
}
