use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::PolicySpec;
use crate::pre_decision::{AlignmentLevel, AlignmentTable, FixedPreDecision, PreDecision};
use crate::report::{aggregate_group, ConfigEcho, References, ReportOptions, ReportRow, SessionResult};
use crate::stream::{SourceStream, Trace};
use crate::time::Millis;

use super::agent::AgentSpec;
use super::cost::CostModel;
use super::session::{run_session, SessionConfig, DEFAULT_MAX_TOKENS, DEFAULT_SUBSAMPLE_FACTOR};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "SIMULSTREAM_THREADS";

/// Pre-decision setting for a whole corpus; instantiated per stream.
#[derive(Debug, Clone, PartialEq)]
pub enum PreDecisionPlan {
    Fixed {
        step: Millis,
    },
    /// Oracle boundaries, one table per stream id.
    Flexible {
        level: AlignmentLevel,
        tables: Arc<BTreeMap<String, AlignmentTable>>,
    },
}

impl PreDecisionPlan {
    pub fn fixed(step: Millis) -> Self {
        PreDecisionPlan::Fixed { step }
    }

    pub fn flexible(level: AlignmentLevel, tables: BTreeMap<String, AlignmentTable>) -> Self {
        PreDecisionPlan::Flexible {
            level,
            tables: Arc::new(tables),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PreDecisionPlan::Fixed { .. } => "fixed",
            PreDecisionPlan::Flexible { .. } => "flexible",
        }
    }

    /// `"280"` for a fixed step, `"flexible:word"` for oracle boundaries.
    pub fn step_label(&self) -> String {
        match self {
            PreDecisionPlan::Fixed { step } => step.to_string(),
            PreDecisionPlan::Flexible { level, .. } => format!("flexible:{level}"),
        }
    }

    pub fn build(&self, stream: &SourceStream, subsample_factor: usize) -> Result<PreDecision> {
        match self {
            PreDecisionPlan::Fixed { step } => Ok(PreDecision::Fixed(FixedPreDecision::new(
                *step,
                stream.frame_period(),
                subsample_factor,
            )?)),
            PreDecisionPlan::Flexible { tables, .. } => tables
                .get(&stream.id)
                .cloned()
                .map(PreDecision::Flexible)
                .ok_or_else(|| Error::Mismatch(format!("no alignment for stream `{}`", stream.id))),
        }
    }
}

/// One point of a sweep grid.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub subsample_factor: usize,
    pub pre_decision: PreDecisionPlan,
    pub policy: PolicySpec,
    pub cost_model: CostModel,
    pub max_tokens: usize,
}

impl SweepConfig {
    pub fn new(pre_decision: PreDecisionPlan, policy: PolicySpec) -> Self {
        SweepConfig {
            subsample_factor: DEFAULT_SUBSAMPLE_FACTOR,
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

    pub fn session_config(&self, stream: &SourceStream) -> Result<SessionConfig> {
        Ok(SessionConfig {
            subsample_factor: self.subsample_factor,
            pre_decision: self.pre_decision.build(stream, self.subsample_factor)?,
            policy: self.policy.clone(),
            cost_model: self.cost_model,
            max_tokens: self.max_tokens,
        })
    }

    pub fn echo(&self, agent: &AgentSpec) -> ConfigEcho {
        ConfigEcho {
            policy: self.policy.name().to_string(),
            params: self.policy.params(),
            pre_decision: self.pre_decision.kind().to_string(),
            step: self.pre_decision.step_label(),
            subsample_factor: self.subsample_factor,
            cost_model: self.cost_model.to_string(),
            agent: agent.to_string(),
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses all logical processors.
    pub threads: Option<usize>,
    pub report: ReportOptions,
}

impl SweepOptions {
    /// Reads the thread cap from `SIMULSTREAM_THREADS` when set to a positive integer.
    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        SweepOptions {
            threads,
            ..Default::default()
        }
    }
}

pub type SweepRow = ReportRow;

fn run_one(stream: &SourceStream, config: &SweepConfig, refs: &References, agent: &AgentSpec) -> Result<Trace> {
    let inner = || -> Result<Trace> {
        let reference = refs
            .get(&stream.id)
            .ok_or_else(|| Error::Mismatch(format!("no reference for stream `{}`", stream.id)))?;
        let session = config.session_config(stream)?;
        let mut agent = agent.build(reference, stream.num_frames())?;
        run_session(stream, &session, agent.as_mut())
    };
    inner().map_err(|e| e.in_session(&stream.id))
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs one configuration over every stream. Traces come back sorted by stream id.
pub fn run_sessions(
    streams: &[SourceStream],
    config: &SweepConfig,
    refs: &References,
    agent: &AgentSpec,
    threads: Option<usize>,
) -> Result<Vec<Trace>> {
    let mut traces = in_pool(threads, || {
        streams
            .par_iter()
            .map(|s| run_one(s, config, refs, agent))
            .collect::<Result<Vec<_>>>()
    })??;
    traces.sort_by(|a, b| a.stream_id.cmp(&b.stream_id));
    Ok(traces)
}

/// Runs every (stream, config) session and aggregates one row per config, in config order.
pub fn run_sweep(
    streams: &[SourceStream],
    configs: &[SweepConfig],
    refs: &References,
    agent: &AgentSpec,
    options: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    if streams.is_empty() || configs.is_empty() {
        return Err(Error::input("a sweep needs at least one stream and one configuration"));
    }
    let jobs: Vec<(usize, &SourceStream)> = (0..configs.len())
        .flat_map(|c| streams.iter().map(move |s| (c, s)))
        .collect();
    let traces = in_pool(options.threads, || {
        jobs.par_iter()
            .map(|&(c, s)| run_one(s, &configs[c], refs, agent).map(|t| (c, t)))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut grouped: Vec<Vec<SessionResult>> = vec![Vec::new(); configs.len()];
    for (c, trace) in traces {
        grouped[c].push(SessionResult {
            trace,
            config: configs[c].echo(agent),
        });
    }
    grouped
        .into_iter()
        .map(|mut group| {
            group.sort_by(|a, b| a.trace.stream_id.cmp(&b.trace.stream_id));
            aggregate_group(&group, Some(refs), &options.report)
        })
        .collect()
}
