//! Pre-decision modules: gate the encoder-state stream into decision units.
//!
//! A module assigns a trigger probability to every encoder state; a READ/WRITE
//! decision is only taken on states whose probability exceeds one half.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Millis;

/// Trigger threshold: a decision is made when `p_tr > 0.5`.
pub const TRIGGER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerDecision {
    pub state_index: usize,
    pub probability: f64,
    pub fired: bool,
}

impl TriggerDecision {
    fn new(state_index: usize, probability: f64) -> Self {
        TriggerDecision {
            state_index,
            probability,
            fired: probability > TRIGGER_THRESHOLD,
        }
    }
}

/// Triggers every `step` of speech, on encoder-state boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPreDecision {
    step: Millis,
    frame_period: Millis,
    subsample_factor: usize,
}

impl FixedPreDecision {
    pub fn new(step: Millis, frame_period: Millis, subsample_factor: usize) -> Result<Self> {
        if !frame_period.is_positive() {
            return Err(Error::config("frame period must be positive"));
        }
        if subsample_factor == 0 {
            return Err(Error::config("subsample factor must be at least 1"));
        }
        if !step.is_multiple_of(frame_period) {
            return Err(Error::config(format!(
                "step {step}ms is not a positive multiple of the frame period {frame_period}ms"
            )));
        }
        Ok(FixedPreDecision {
            step,
            frame_period,
            subsample_factor,
        })
    }

    pub fn step(&self) -> Millis {
        self.step
    }

    pub fn frame_period(&self) -> Millis {
        self.frame_period
    }

    pub fn subsample_factor(&self) -> usize {
        self.subsample_factor
    }

    pub fn trigger(&self, state_index: usize) -> Result<TriggerDecision> {
        fixed_trigger(state_index, self)
    }
}

/// `p_tr(j) = 1` iff `j * r_e * T_s` is a multiple of the step.
pub fn fixed_trigger(state_index: usize, config: &FixedPreDecision) -> Result<TriggerDecision> {
    if state_index == 0 {
        return Err(Error::input("encoder state indices start at 1"));
    }
    let elapsed = config.frame_period * (state_index * config.subsample_factor) as u64;
    let p = if elapsed.ticks() % config.step.ticks() == 0 {
        1.0
    } else {
        0.0
    };
    Ok(TriggerDecision::new(state_index, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentLevel {
    Word,
    Phoneme,
}

impl fmt::Display for AlignmentLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignmentLevel::Word => "word",
            AlignmentLevel::Phoneme => "phoneme",
        })
    }
}

/// One aligned source unit, `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    #[serde(rename = "start_ms")]
    pub start: Millis,
    #[serde(rename = "end_ms")]
    pub end: Millis,
}

impl Segment {
    pub fn new(label: impl Into<String>, start: Millis, end: Millis) -> Self {
        Segment {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn duration(&self) -> Millis {
        self.end - self.start
    }
}

/// Maps each encoder state (1-based) to the index of the source unit it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentTable {
    level: AlignmentLevel,
    labels: Vec<usize>,
}

impl AlignmentTable {
    /// Builds a table from explicit per-state labels (index `j - 1`).
    pub fn from_labels(level: AlignmentLevel, labels: Vec<usize>) -> Result<Self> {
        if labels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::input("alignment labels must be non-decreasing"));
        }
        Ok(AlignmentTable { level, labels })
    }

    pub fn level(&self) -> AlignmentLevel {
        self.level
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    /// Label index of state `j` (1-based).
    pub fn label(&self, state_index: usize) -> Option<usize> {
        state_index.checked_sub(1).and_then(|i| self.labels.get(i)).copied()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn trigger(&self, state_index: usize) -> Result<TriggerDecision> {
        flexible_trigger(state_index, self)
    }
}

/// `p_tr(j) = 0` when state `j` aligns to the same unit as state `j - 1`, else 1.
/// State 1 has no predecessor and never fires.
pub fn flexible_trigger(state_index: usize, table: &AlignmentTable) -> Result<TriggerDecision> {
    if state_index == 0 || state_index > table.num_states() {
        return Err(Error::input(format!(
            "state index {state_index} outside alignment table of {} states",
            table.num_states()
        )));
    }
    if state_index == 1 {
        return Ok(TriggerDecision::new(1, 0.0));
    }
    let same = table.labels[state_index - 1] == table.labels[state_index - 2];
    Ok(TriggerDecision::new(state_index, if same { 0.0 } else { 1.0 }))
}

/// Assigns each encoder state to the segment containing its midpoint.
///
/// State `j` covers `((j-1) * r_e * T_s, j * r_e * T_s]`. States whose midpoint
/// falls in silence inherit the previous state's label; states before the
/// first segment take label 0.
pub fn build_alignment_table(
    segments: &[Segment],
    level: AlignmentLevel,
    num_states: usize,
    subsample_factor: usize,
    frame_period: Millis,
) -> Result<AlignmentTable> {
    if subsample_factor == 0 {
        return Err(Error::config("subsample factor must be at least 1"));
    }
    for (i, seg) in segments.iter().enumerate() {
        if seg.end <= seg.start {
            return Err(Error::input(format!(
                "segment {i} (`{}`) has end {}ms <= start {}ms",
                seg.label, seg.end, seg.start
            )));
        }
        if i > 0 && seg.start < segments[i - 1].end {
            return Err(Error::input(format!(
                "segment {i} (`{}`) overlaps or precedes segment {}",
                seg.label,
                i - 1
            )));
        }
    }
    if segments.is_empty() && num_states > 0 {
        return Err(Error::input("cannot label encoder states without segments"));
    }

    let state_span = frame_period.ticks() * subsample_factor as i64;
    let mut labels = Vec::with_capacity(num_states);
    let mut current = 0usize;
    let mut cursor = 0usize;
    for j in 1..=num_states as i64 {
        // doubled ticks keep the midpoint integral
        let mid2 = (2 * j - 1) * state_span;
        while cursor < segments.len() && 2 * segments[cursor].end.ticks() <= mid2 {
            cursor += 1;
        }
        if cursor < segments.len() && 2 * segments[cursor].start.ticks() <= mid2 {
            current = cursor;
        }
        labels.push(current);
    }
    AlignmentTable::from_labels(level, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryStats {
    pub total: Millis,
    pub count: usize,
}

impl BoundaryStats {
    /// Exact mean segment duration in milliseconds.
    pub fn mean_segment_ms(&self) -> Ratio<i128> {
        self.total.to_ratio() / Ratio::from_integer(self.count as i128)
    }
}

pub fn boundary_stats<'a, I>(segment_lists: I) -> Result<BoundaryStats>
where
    I: IntoIterator<Item = &'a [Segment]>,
{
    let mut total = Millis::ZERO;
    let mut count = 0;
    for seg in segment_lists.into_iter().flatten() {
        total += seg.duration();
        count += 1;
    }
    if count == 0 {
        return Err(Error::input("boundary statistics need at least one segment"));
    }
    Ok(BoundaryStats { total, count })
}

/// The gate applied to one session.
#[derive(Debug, Clone, PartialEq)]
pub enum PreDecision {
    Fixed(FixedPreDecision),
    Flexible(AlignmentTable),
}

impl PreDecision {
    pub fn trigger(&self, state_index: usize) -> Result<TriggerDecision> {
        match self {
            PreDecision::Fixed(c) => c.trigger(state_index),
            PreDecision::Flexible(t) => t.trigger(state_index),
        }
    }
}
