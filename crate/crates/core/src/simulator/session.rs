use std::time::Instant;

use crate::error::{Error, Result};
use crate::policy::{Decision, PolicyContext, PolicySpec};
use crate::pre_decision::PreDecision;
use crate::stream::{encoder_state_count, nca_delay, DelayRecord, EncoderStateSeq, Event, SourceStream, Trace};
use crate::time::Millis;

use super::agent::{Agent, AgentContext, AgentOutput};
use super::cost::{ClockSource, CostModel, EncoderMode, SimClock};

pub const DEFAULT_SUBSAMPLE_FACTOR: usize = 4;
pub const DEFAULT_MAX_TOKENS: usize = 1024;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub subsample_factor: usize,
    pub pre_decision: PreDecision,
    pub policy: PolicySpec,
    pub cost_model: CostModel,
    pub max_tokens: usize,
}

impl SessionConfig {
    pub fn new(pre_decision: PreDecision, policy: PolicySpec) -> Self {
        let subsample_factor = match &pre_decision {
            PreDecision::Fixed(f) => f.subsample_factor(),
            PreDecision::Flexible(_) => DEFAULT_SUBSAMPLE_FACTOR,
        };
        SessionConfig {
            subsample_factor,
            pre_decision,
            policy,
            cost_model: CostModel::zero(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_cost_model(mut self, cost_model: CostModel) -> Self {
        self.cost_model = cost_model;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    fn check(&self, stream: &SourceStream) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::config("max_tokens must be at least 1"));
        }
        let states = encoder_state_count(stream.num_frames(), self.subsample_factor)?;
        match &self.pre_decision {
            PreDecision::Fixed(f) => {
                if f.frame_period() != stream.frame_period() || f.subsample_factor() != self.subsample_factor {
                    return Err(Error::Mismatch(format!(
                        "fixed pre-decision built for T_s={}ms, r_e={} but stream `{}` has T_s={}ms, r_e={}",
                        f.frame_period(),
                        f.subsample_factor(),
                        stream.id,
                        stream.frame_period(),
                        self.subsample_factor
                    )));
                }
            }
            PreDecision::Flexible(t) => {
                if t.num_states() != states {
                    return Err(Error::Mismatch(format!(
                        "alignment table has {} states but stream `{}` yields {states}",
                        t.num_states(),
                        stream.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Charges either the modelled cost or the host time measured since `started`.
fn spend(clock: &mut SimClock, cost: Millis, started: Option<Instant>) {
    match started {
        Some(t0) => clock.charge_elapsed(t0.elapsed()),
        None => clock.charge(cost),
    }
}

/// Replays `stream` frame by frame through the pre-decision gate and policy,
/// asking `agent` for a token on every WRITE.
pub fn run_session(stream: &SourceStream, config: &SessionConfig, agent: &mut dyn Agent) -> Result<Trace> {
    config.check(stream)?;
    let costs = &config.cost_model;
    let wall = costs.clock == ClockSource::Wall;
    let stamp = || wall.then(Instant::now);

    let num_frames = stream.num_frames();
    let frame_period = stream.frame_period();
    let features = stream.features();

    let mut trace = Trace::new(stream);
    let mut clock = SimClock::new();
    let mut encoder = EncoderStateSeq::new(config.subsample_factor)?;
    let mut policy = config.policy.start();
    let mut tokens: Vec<String> = Vec::new();
    let mut units_read = 0usize;

    for frame in 1..=num_frames {
        clock.advance_speech(frame_period);
        trace.events.push(Event::Read { frame });
        let source_done = frame == num_frames;
        if source_done {
            trace.source_exhausted_at_event = Some(trace.events.len() - 1);
        }

        let mut fired = false;
        if let Some(state) = encoder.push_frame() {
            let t0 = stamp();
            fired = config.pre_decision.trigger(state)?.fired;
            if costs.encoder_mode == EncoderMode::Incremental {
                spend(&mut clock, costs.per_state, t0);
            }
        }
        let forced = source_done && !fired;
        if !(fired || forced) {
            continue;
        }

        units_read += 1;
        if costs.encoder_mode == EncoderMode::Recompute {
            let t0 = stamp();
            spend(&mut clock, costs.per_state * encoder.num_states() as u64, t0);
        }
        trace.events.push(Event::Trigger {
            state: encoder.num_states(),
            forced,
        });

        loop {
            let ctx = PolicyContext {
                tokens_written: tokens.len(),
                units_read,
                source_done,
                hypothesis_finished: false,
            };
            let t0 = stamp();
            let decision = policy.decide(&ctx);
            spend(&mut clock, costs.per_decision, t0);
            if decision == Decision::Read {
                break;
            }

            let t0 = stamp();
            let output = agent.next_token(&AgentContext {
                frames_read: frame,
                num_frames,
                units_read,
                tokens: &tokens,
                features: features.map(|f| f.prefix(frame)),
            })?;
            let token = match output {
                AgentOutput::End => {
                    trace.finished = true;
                    return Ok(trace);
                }
                AgentOutput::Token(token) => token,
            };
            spend(&mut clock, costs.per_token, t0);

            let delay = DelayRecord {
                token_index: tokens.len() + 1,
                frames_read: frame,
                d_nca: nca_delay(frame, frame_period),
                d_ca: clock.now(),
            };
            debug_assert!(delay.d_ca >= delay.d_nca);
            tokens.push(token.clone());
            trace.events.push(Event::Write { token, delay });
            if tokens.len() >= config.max_tokens {
                return Ok(trace);
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{stepwise_from_waitk, MMASpec, WaitKSpec};
    use crate::pre_decision::{AlignmentLevel, AlignmentTable, FixedPreDecision};
    use crate::simulator::agent::OracleAgent;
    use crate::stream::validate_trace;

    fn ms(v: i64) -> Millis {
        Millis::from_ms(v)
    }

    fn reference(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("y{i}")).collect()
    }

    fn waitk_config(k: usize, step: i64, r_e: usize) -> SessionConfig {
        let pre = FixedPreDecision::new(ms(step), ms(10), r_e).unwrap();
        SessionConfig::new(PreDecision::Fixed(pre), PolicySpec::WaitK(WaitKSpec::new(k).unwrap()))
    }

    fn run(frames: usize, refs: usize, config: &SessionConfig) -> Trace {
        let stream = SourceStream::new("s", frames, ms(10)).unwrap();
        let mut agent = OracleAgent::new(reference(refs)).unwrap();
        let trace = run_session(&stream, config, &mut agent).unwrap();
        assert!(validate_trace(&trace).is_empty(), "{:?}", validate_trace(&trace));
        trace
    }

    fn columns(trace: &Trace) -> (Vec<usize>, Vec<Millis>, Vec<Millis>) {
        (
            trace.delays().map(|d| d.frames_read).collect(),
            trace.delays().map(|d| d.d_nca).collect(),
            trace.delays().map(|d| d.d_ca).collect(),
        )
    }

    #[test]
    fn wait1_zero_cost() {
        let t = run(4, 4, &waitk_config(1, 10, 1));
        let (n, nca, ca) = columns(&t);
        assert_eq!(n, vec![1, 2, 3, 4]);
        assert_eq!(nca, vec![ms(10), ms(20), ms(30), ms(40)]);
        assert_eq!(ca, nca);
        assert!(t.finished);
    }

    #[test]
    fn wait1_token_cost_accumulates() {
        let cost = CostModel::new(EncoderMode::Incremental, Millis::ZERO, Millis::ZERO, ms(5)).unwrap();
        let t = run(4, 4, &waitk_config(1, 10, 1).with_cost_model(cost));
        let (_, _, ca) = columns(&t);
        assert_eq!(ca, vec![ms(15), ms(30), ms(45), ms(60)]);
    }

    #[test]
    fn waitk_longer_than_source_writes_at_end() {
        let t = run(2, 2, &waitk_config(3, 10, 1));
        let (n, nca, _) = columns(&t);
        assert_eq!(n, vec![2, 2]);
        assert_eq!(nca, vec![ms(20), ms(20)]);
    }

    #[test]
    fn recompute_charges_all_states_per_trigger() {
        // r_e = 1, step 20ms: triggers at states 2 and 4 (and forced at 5)
        let cost = CostModel::new(EncoderMode::Recompute, ms(1), Millis::ZERO, Millis::ZERO).unwrap();
        let t = run(5, 3, &waitk_config(1, 20, 1).with_cost_model(cost));
        let (n, _, ca) = columns(&t);
        assert_eq!(n, vec![2, 4, 5]);
        // 20 + 2; 40 + 2 + 4; 50 + 2 + 4 + 5
        assert_eq!(ca, vec![ms(22), ms(46), ms(61)]);
    }

    #[test]
    fn leftover_frames_get_forced_trigger() {
        // 10 frames, r_e = 4: states at frames 4 and 8, forced trigger at frame 10
        let t = run(10, 5, &waitk_config(1, 40, 4));
        let triggers: Vec<(usize, bool)> = t
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Trigger { state, forced } => Some((*state, *forced)),
                _ => None,
            })
            .collect();
        assert_eq!(triggers, vec![(1, false), (2, false), (2, true)]);
    }

    #[test]
    fn mma_matches_slowest_waitk() {
        let pre = FixedPreDecision::new(ms(40), ms(10), 4).unwrap();
        let mma = SessionConfig::new(
            PreDecision::Fixed(pre),
            PolicySpec::Mma(
                MMASpec::new(vec![stepwise_from_waitk(2).unwrap(), stepwise_from_waitk(4).unwrap()]).unwrap(),
            ),
        );
        let a = run(97, 9, &mma);
        let b = run(97, 9, &waitk_config(4, 40, 4));
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn max_tokens_caps_session() {
        let t = run(20, 10, &waitk_config(1, 10, 1).with_max_tokens(3));
        assert_eq!(t.num_writes(), 3);
        assert!(!t.finished);
    }

    #[test]
    fn config_mismatches_rejected() {
        let stream = SourceStream::new("s", 10, ms(10)).unwrap();
        let mut agent = OracleAgent::new(reference(2)).unwrap();
        let table = AlignmentTable::from_labels(AlignmentLevel::Word, vec![0, 1, 1]).unwrap();
        let cfg = SessionConfig::new(
            PreDecision::Flexible(table),
            PolicySpec::WaitK(WaitKSpec::new(1).unwrap()),
        );
        assert!(matches!(
            run_session(&stream, &cfg, &mut agent),
            Err(Error::Mismatch(_))
        ));

        let stream = SourceStream::new("s", 10, ms(20)).unwrap();
        assert!(matches!(
            run_session(&stream, &waitk_config(1, 40, 4), &mut agent),
            Err(Error::Mismatch(_))
        ));
        let stream = SourceStream::new("s", 10, ms(10)).unwrap();
        assert!(run_session(&stream, &waitk_config(1, 40, 4).with_max_tokens(0), &mut agent).is_err());
    }

    #[test]
    fn wall_clock_keeps_ca_above_nca() {
        let t = run(40, 10, &waitk_config(2, 40, 4).with_cost_model(CostModel::wall()));
        assert!(t.delays().all(|d| d.d_ca >= d.d_nca));
    }
}
