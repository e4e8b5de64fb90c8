//! Session orchestration: timed frame replay, pre-decision triggers, policy
//! consultation and delay recording.

mod agent;
mod cost;
mod session;
mod sweep;

pub use agent::{Agent, AgentContext, AgentOutput, AgentSpec, CoverageOracleAgent, OracleAgent};
pub use cost::{ClockSource, CostModel, EncoderMode, SimClock};
pub use session::{run_session, SessionConfig, DEFAULT_MAX_TOKENS, DEFAULT_SUBSAMPLE_FACTOR};
pub use sweep::{run_sessions, run_sweep, PreDecisionPlan, SweepConfig, SweepOptions, SweepRow};
