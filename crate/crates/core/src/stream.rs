//! Timed source streams, encoder-state bookkeeping and per-session traces.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Millis;

/// Row-major per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Features {
    pub fn num_frames(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    /// Features for the first `frames` frames.
    pub fn prefix(&self, frames: usize) -> &[f32] {
        &self.data[..frames.min(self.num_frames()) * self.dim]
    }
}

/// A sequence of acoustic frames arriving every `frame_period`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStream {
    pub id: String,
    num_frames: usize,
    frame_period: Millis,
    features: Option<Features>,
}

impl SourceStream {
    pub fn new(id: impl Into<String>, num_frames: usize, frame_period: Millis) -> Result<Self> {
        let id = id.into();
        if num_frames == 0 {
            return Err(Error::input(format!("stream `{id}` has no frames")));
        }
        if !frame_period.is_positive() {
            return Err(Error::input(format!(
                "stream `{id}` has non-positive frame period {frame_period}ms"
            )));
        }
        Ok(SourceStream {
            id,
            num_frames,
            frame_period,
            features: None,
        })
    }

    pub fn with_features(mut self, features: Features) -> Result<Self> {
        if features.dim == 0 || features.data.len() != features.dim * self.num_frames {
            return Err(Error::input(format!(
                "stream `{}`: feature count does not match {} frames",
                self.id, self.num_frames
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_period(&self) -> Millis {
        self.frame_period
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    /// Total speech duration, `|X| * T_s`.
    pub fn duration(&self) -> Millis {
        self.frame_period * self.num_frames as u64
    }
}

/// Number of encoder states available after `frames_read` frames.
pub fn encoder_state_count(frames_read: usize, subsample_factor: usize) -> Result<usize> {
    if subsample_factor == 0 {
        return Err(Error::config("subsample factor must be at least 1"));
    }
    Ok(frames_read / subsample_factor)
}

/// Speech time covered by `frames_read` frames.
pub fn nca_delay(frames_read: usize, frame_period: Millis) -> Millis {
    frame_period * frames_read as u64
}

/// Streaming view of the encoder state sequence: one state per
/// `subsample_factor` consumed frames, leftovers dropped.
#[derive(Debug, Clone)]
pub struct EncoderStateSeq {
    subsample_factor: usize,
    frames_read: usize,
    num_states: usize,
}

impl EncoderStateSeq {
    pub fn new(subsample_factor: usize) -> Result<Self> {
        if subsample_factor == 0 {
            return Err(Error::config("subsample factor must be at least 1"));
        }
        Ok(EncoderStateSeq {
            subsample_factor,
            frames_read: 0,
            num_states: 0,
        })
    }

    /// Consumes one frame; returns the 1-based index of the state it completes, if any.
    pub fn push_frame(&mut self) -> Option<usize> {
        self.frames_read += 1;
        if self.frames_read.is_multiple_of(self.subsample_factor) {
            self.num_states += 1;
            Some(self.num_states)
        } else {
            None
        }
    }

    pub fn subsample_factor(&self) -> usize {
        self.subsample_factor
    }

    pub fn frames_read(&self) -> usize {
        self.frames_read
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
}

/// Target tokens emitted so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Hypothesis {
    tokens: Vec<String>,
    finished: bool,
}

impl Hypothesis {
    pub fn push(&mut self, token: impl Into<String>) {
        debug_assert!(!self.finished, "hypothesis already finished");
        self.tokens.push(token.into());
    }

    pub fn finish(&mut self) {
        self.finished = true;
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }
}

/// Delay bookkeeping for one emitted token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRecord {
    /// 1-based target position.
    pub token_index: usize,
    /// Frames read when the token was emitted, `n(y_i)`.
    pub frames_read: usize,
    pub d_nca: Millis,
    pub d_ca: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Read { frame: usize },
    Trigger { state: usize, forced: bool },
    Write { token: String, delay: DelayRecord },
}

/// READ/TRIGGER/WRITE log of one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub stream_id: String,
    pub num_frames: usize,
    pub frame_period: Millis,
    pub events: Vec<Event>,
    pub source_exhausted_at_event: Option<usize>,
    /// The agent emitted end-of-sequence.
    pub finished: bool,
    /// False when the trace came from a file without computation-aware delays.
    pub ca_recorded: bool,
}

impl Trace {
    pub fn new(stream: &SourceStream) -> Self {
        Trace {
            stream_id: stream.id.clone(),
            num_frames: stream.num_frames(),
            frame_period: stream.frame_period(),
            events: Vec::new(),
            source_exhausted_at_event: None,
            finished: false,
            ca_recorded: true,
        }
    }

    pub fn delays(&self) -> impl Iterator<Item = &DelayRecord> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::Write { delay, .. } => Some(delay),
            _ => None,
        })
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.events.iter().filter_map(|e| match e {
            Event::Write { token, .. } => Some(token.as_str()),
            _ => None,
        })
    }

    pub fn num_writes(&self) -> usize {
        self.delays().count()
    }

    pub fn num_reads(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::Read { .. })).count()
    }

    pub fn num_triggers(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::Trigger { .. }))
            .count()
    }

    pub fn hypothesis(&self) -> Hypothesis {
        Hypothesis {
            tokens: self.tokens().map(str::to_string).collect(),
            finished: self.finished,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ReadOrder {
        event: usize,
        expected: usize,
        found: usize,
    },
    ReadBeyondSource {
        event: usize,
        frame: usize,
    },
    TokenIndex {
        event: usize,
        expected: usize,
        found: usize,
    },
    NcaMismatch {
        token: usize,
    },
    CaBelowNca {
        token: usize,
    },
    FramesDecreasing {
        token: usize,
    },
    FramesReadMismatch {
        token: usize,
        recorded: usize,
        actual: usize,
    },
    ExhaustionMarker {
        expected: Option<usize>,
        found: Option<usize>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ReadOrder { event, expected, found } => {
                write!(f, "event {event}: READ of frame {found}, expected frame {expected}")
            }
            Violation::ReadBeyondSource { event, frame } => {
                write!(f, "event {event}: READ of frame {frame} beyond end of source")
            }
            Violation::TokenIndex { event, expected, found } => {
                write!(f, "event {event}: WRITE has token index {found}, expected {expected}")
            }
            Violation::NcaMismatch { token } => {
                write!(f, "token {token}: d_nca differs from frame period x frames read")
            }
            Violation::CaBelowNca { token } => write!(f, "token {token}: d_ca < d_nca"),
            Violation::FramesDecreasing { token } => {
                write!(f, "token {token}: frames read decreased (n must be monotonic)")
            }
            Violation::FramesReadMismatch {
                token,
                recorded,
                actual,
            } => write!(
                f,
                "token {token}: records {recorded} frames read but {actual} READ events precede it"
            ),
            Violation::ExhaustionMarker { expected, found } => {
                write!(f, "source exhaustion marker is {found:?}, expected {expected:?}")
            }
        }
    }
}

/// Checks every trace and delay invariant; an empty result means the trace is well formed.
pub fn validate_trace(trace: &Trace) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut frames = 0usize;
    let mut written = 0usize;
    let mut last_n: Option<usize> = None;
    let mut exhausted_at = None;

    for (idx, event) in trace.events.iter().enumerate() {
        match event {
            Event::Read { frame } => {
                if *frame != frames + 1 {
                    violations.push(Violation::ReadOrder {
                        event: idx,
                        expected: frames + 1,
                        found: *frame,
                    });
                }
                if *frame > trace.num_frames {
                    violations.push(Violation::ReadBeyondSource {
                        event: idx,
                        frame: *frame,
                    });
                }
                frames = (*frame).max(frames);
                if frames == trace.num_frames && exhausted_at.is_none() {
                    exhausted_at = Some(idx);
                }
            }
            Event::Trigger { .. } => {}
            Event::Write { delay, .. } => {
                written += 1;
                let token = delay.token_index;
                if token != written {
                    violations.push(Violation::TokenIndex {
                        event: idx,
                        expected: written,
                        found: token,
                    });
                }
                if delay.d_nca != nca_delay(delay.frames_read, trace.frame_period) {
                    violations.push(Violation::NcaMismatch { token });
                }
                if delay.d_ca < delay.d_nca {
                    violations.push(Violation::CaBelowNca { token });
                }
                if last_n.is_some_and(|prev| delay.frames_read < prev) {
                    violations.push(Violation::FramesDecreasing { token });
                }
                if delay.frames_read != frames {
                    violations.push(Violation::FramesReadMismatch {
                        token,
                        recorded: delay.frames_read,
                        actual: frames,
                    });
                }
                last_n = Some(delay.frames_read);
            }
        }
    }

    if trace.source_exhausted_at_event != exhausted_at {
        violations.push(Violation::ExhaustionMarker {
            expected: exhausted_at,
            found: trace.source_exhausted_at_event,
        });
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wait1_trace() -> Trace {
        let stream = SourceStream::new("s", 3, Millis::from_ms(10)).unwrap();
        let mut trace = Trace::new(&stream);
        for f in 1..=3 {
            trace.events.push(Event::Read { frame: f });
            trace.events.push(Event::Trigger {
                state: f,
                forced: false,
            });
            trace.events.push(Event::Write {
                token: format!("t{f}"),
                delay: DelayRecord {
                    token_index: f,
                    frames_read: f,
                    d_nca: Millis::from_ms(10 * f as i64),
                    d_ca: Millis::from_ms(10 * f as i64),
                },
            });
        }
        trace.source_exhausted_at_event = Some(6);
        trace.finished = true;
        trace
    }

    fn delay_mut(trace: &mut Trace, token: usize) -> &mut DelayRecord {
        trace
            .events
            .iter_mut()
            .filter_map(|e| match e {
                Event::Write { delay, .. } => Some(delay),
                _ => None,
            })
            .nth(token - 1)
            .unwrap()
    }

    #[test]
    fn state_count_examples() {
        assert_eq!(encoder_state_count(8, 4).unwrap(), 2);
        assert_eq!(encoder_state_count(0, 4).unwrap(), 0);
        assert_eq!(encoder_state_count(7, 4).unwrap(), 1);
        assert!(encoder_state_count(7, 0).is_err());
    }

    #[test]
    fn state_count_matches_floor_oracle() {
        for r in 1..=9 {
            let mut seq = EncoderStateSeq::new(r).unwrap();
            let mut prev = 0;
            for f in 1..=200usize {
                let new = seq.push_frame();
                // a new state j exists iff f >= j * r
                let expected = (1..=f).filter(|j| f >= j * r).count();
                assert_eq!(seq.num_states(), expected);
                assert_eq!(encoder_state_count(f, r).unwrap(), expected);
                assert_eq!(new.is_some(), expected == prev + 1);
                assert!(expected - prev <= 1);
                prev = expected;
            }
        }
    }

    #[test]
    fn nca_examples() {
        let ts = Millis::from_ms(10);
        assert_eq!(nca_delay(6, ts), Millis::from_ms(60));
        assert_eq!(nca_delay(0, ts), Millis::ZERO);
        assert_eq!(nca_delay(27, ts), Millis::from_ms(270));
    }

    #[test]
    fn stream_invariants() {
        assert!(SourceStream::new("a", 0, Millis::from_ms(10)).is_err());
        assert!(SourceStream::new("a", 3, Millis::ZERO).is_err());
        let s = SourceStream::new("a", 3, Millis::from_ms(10)).unwrap();
        assert!(s
            .clone()
            .with_features(Features {
                dim: 2,
                data: vec![0.0; 5]
            })
            .is_err());
        let s = s
            .with_features(Features {
                dim: 2,
                data: vec![0.0; 6],
            })
            .unwrap();
        assert_eq!(s.features().unwrap().num_frames(), 3);
        assert_eq!(s.duration(), Millis::from_ms(30));
    }

    #[test]
    fn valid_trace_has_no_violations() {
        assert!(validate_trace(&wait1_trace()).is_empty());
    }

    #[test]
    fn ca_below_nca_names_token() {
        let mut trace = wait1_trace();
        delay_mut(&mut trace, 2).d_ca = Millis::from_ms(15);
        assert_eq!(validate_trace(&trace), vec![Violation::CaBelowNca { token: 2 }]);
        assert!(validate_trace(&trace)[0].to_string().contains("token 2"));
    }

    #[test]
    fn decreasing_frames_flagged() {
        let mut trace = wait1_trace();
        let d = delay_mut(&mut trace, 3);
        d.frames_read = 1;
        d.d_nca = Millis::from_ms(10);
        let v = validate_trace(&trace);
        assert!(v.contains(&Violation::FramesDecreasing { token: 3 }));
    }

    #[test]
    fn read_gap_flagged() {
        let mut trace = wait1_trace();
        trace.events[3] = Event::Read { frame: 3 };
        let v = validate_trace(&trace);
        assert!(matches!(
            v[0],
            Violation::ReadOrder {
                expected: 2,
                found: 3,
                ..
            }
        ));
    }
}
