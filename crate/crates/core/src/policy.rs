//! READ/WRITE policies over pre-decision units.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A head halts at source unit `j` for target `i` once `p(i, j) >= HALTING_THRESHOLD`.
pub const HALTING_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolicyContext {
    pub tokens_written: usize,
    /// Decision units consumed so far.
    pub units_read: usize,
    pub source_done: bool,
    pub hypothesis_finished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaitKSpec {
    k: usize,
}

impl WaitKSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("wait-k needs k >= 1"));
        }
        Ok(WaitKSpec { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Writes token `i` once `k + i - 1` units have been read, and everything once
/// the source is exhausted.
pub fn waitk_decide(ctx: &PolicyContext, spec: &WaitKSpec) -> Decision {
    if ctx.source_done || ctx.units_read >= ctx.tokens_written + spec.k {
        Decision::Write
    } else {
        Decision::Read
    }
}

/// Stepwise halting probabilities `p(i, j)` for one monotonic attention head,
/// with `i` the 1-based target step and `j` the 1-based source unit.
#[derive(Debug, Clone, PartialEq)]
pub enum StepwiseSource {
    WaitK {
        k: usize,
    },
    Table {
        label: String,
        probs: HashMap<(usize, usize), f64>,
        default: f64,
    },
}

impl StepwiseSource {
    pub fn probability(&self, target: usize, unit: usize) -> f64 {
        match self {
            StepwiseSource::WaitK { k } => {
                if unit + 1 >= k + target {
                    1.0
                } else {
                    0.0
                }
            }
            StepwiseSource::Table { probs, default, .. } => probs.get(&(target, unit)).copied().unwrap_or(*default),
        }
    }

    pub fn with_label(self, new_label: impl Into<String>) -> Self {
        match self {
            StepwiseSource::Table { probs, default, .. } => StepwiseSource::Table {
                label: new_label.into(),
                probs,
                default,
            },
            other => other,
        }
    }
}

impl fmt::Display for StepwiseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepwiseSource::WaitK { k } => write!(f, "waitk:{k}"),
            StepwiseSource::Table { label, .. } => write!(f, "table:{label}"),
        }
    }
}

/// The deterministic head reproducing wait-k: `p(i, j) = 1` iff `j >= k + i - 1`.
pub fn stepwise_from_waitk(k: usize) -> Result<StepwiseSource> {
    if k == 0 {
        return Err(Error::config("wait-k head needs k >= 1"));
    }
    Ok(StepwiseSource::WaitK { k })
}

pub fn stepwise_from_table(probs: HashMap<(usize, usize), f64>, default: f64) -> Result<StepwiseSource> {
    let in_range = |p: f64| (0.0..=1.0).contains(&p);
    if !in_range(default) {
        return Err(Error::input(format!("default probability {default} outside [0, 1]")));
    }
    if let Some((&(i, j), &p)) = probs.iter().find(|(_, &p)| !in_range(p)) {
        return Err(Error::input(format!("p({i}, {j}) = {p} outside [0, 1]")));
    }
    if probs.keys().any(|&(i, j)| i == 0 || j == 0) {
        return Err(Error::input("stepwise indices are 1-based"));
    }
    Ok(StepwiseSource::Table {
        label: "table".to_string(),
        probs,
        default,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMASpec {
    heads: Vec<StepwiseSource>,
}

impl MMASpec {
    pub fn new(heads: Vec<StepwiseSource>) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::config("MMA policy needs at least one head"));
        }
        Ok(MMASpec { heads })
    }

    pub fn heads(&self) -> &[StepwiseSource] {
        &self.heads
    }
}

/// Per-head attention positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MMAState {
    /// Unit each head halted on for the last written token; 0 before the first write.
    pub head_positions: Vec<usize>,
    /// First unit still to examine for the pending target step.
    pub scan_from: Vec<usize>,
}

impl MMAState {
    pub fn new(num_heads: usize) -> Self {
        MMAState {
            head_positions: vec![0; num_heads],
            scan_from: vec![1; num_heads],
        }
    }
}

/// Thresholded multi-head monotonic attention: write only when every head has
/// halted within the units read so far.
///
/// For target step `i` each head scans forward from one past the unit it
/// halted on for step `i - 1`, stopping at the first unit with
/// `p(i, j) >= 0.5`. Heads move strictly forward between written tokens.
pub fn mma_decide(ctx: &PolicyContext, spec: &MMASpec, state: &MMAState) -> (Decision, MMAState) {
    let target = ctx.tokens_written + 1;
    let heads = spec.heads.len();
    let mut next = state.clone();
    next.head_positions.resize(heads, 0);
    next.scan_from.resize(heads, 1);

    let mut halts = Vec::with_capacity(heads);
    for (h, head) in spec.heads.iter().enumerate() {
        let mut unit = next.scan_from[h].max(next.head_positions[h] + 1);
        let halt = loop {
            if unit > ctx.units_read {
                break None;
            }
            if head.probability(target, unit) >= HALTING_THRESHOLD {
                break Some(unit);
            }
            unit += 1;
        };
        next.scan_from[h] = unit;
        halts.push(halt);
    }

    if halts.iter().all(Option::is_some) || ctx.source_done {
        for (h, halt) in halts.into_iter().enumerate() {
            // an exhausted source forces unsatisfied heads to halt on the final unit
            let pos = halt.unwrap_or(ctx.units_read).max(next.head_positions[h]);
            next.head_positions[h] = pos;
            next.scan_from[h] = pos + 1;
        }
        (Decision::Write, next)
    } else {
        (Decision::Read, next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    WaitK(WaitKSpec),
    Mma(MMASpec),
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::WaitK(_) => "wait-k",
            PolicySpec::Mma(_) => "mma",
        }
    }

    pub fn params(&self) -> String {
        match self {
            PolicySpec::WaitK(s) => format!("k={}", s.k),
            PolicySpec::Mma(s) => {
                let heads: Vec<String> = s.heads.iter().map(ToString::to_string).collect();
                format!("heads={}", heads.join(","))
            }
        }
    }

    pub fn start(&self) -> PolicyRunner<'_> {
        let mma_state = match self {
            PolicySpec::Mma(s) => Some(MMAState::new(s.heads.len())),
            PolicySpec::WaitK(_) => None,
        };
        PolicyRunner { spec: self, mma_state }
    }
}

/// Session-local policy state.
#[derive(Debug)]
pub struct PolicyRunner<'a> {
    spec: &'a PolicySpec,
    mma_state: Option<MMAState>,
}

impl PolicyRunner<'_> {
    pub fn decide(&mut self, ctx: &PolicyContext) -> Decision {
        match self.spec {
            PolicySpec::WaitK(s) => waitk_decide(ctx, s),
            PolicySpec::Mma(s) => {
                let state = self.mma_state.get_or_insert_with(|| MMAState::new(s.heads.len()));
                let (decision, next) = mma_decide(ctx, s, state);
                *state = next;
                decision
            }
        }
    }

    pub fn mma_state(&self) -> Option<&MMAState> {
        self.mma_state.as_ref()
    }
}
