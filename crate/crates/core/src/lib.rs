//! Deterministic simulation and evaluation of simultaneous speech translation
//! READ/WRITE policies.
//!
//! A [`SourceStream`](stream::SourceStream) is replayed frame by frame. Frames
//! are pooled into encoder states, a pre-decision module decides on which
//! states a READ/WRITE decision is taken, and a policy (wait-k or multi-head
//! monotonic attention) chooses between reading more source and writing a
//! token. Every written token records the speech time consumed (`d_nca`) and
//! the speech time plus simulated computation (`d_ca`), from which Average
//! Lagging, BLEU and trade-off reports are computed.

pub mod error;
pub mod io;
pub mod latency;
pub mod policy;
pub mod pre_decision;
pub mod quality;
pub mod report;
pub mod simulator;
pub mod stream;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
pub use time::Millis;
