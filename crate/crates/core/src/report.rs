//! Quality-latency trade-off tables built from session traces.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{lag_to_f64, trace_lagging, DelayFlavor};
use crate::quality::{corpus_bleu, BleuConfig, EvalPair, Smoothing};
use crate::stream::{validate_trace, Trace};

/// Reference token lists keyed by stream id.
pub type References = BTreeMap<String, Vec<String>>;

/// Configuration echoed next to every trace so a report can group sessions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub policy: String,
    pub params: String,
    pub pre_decision: String,
    pub step: String,
    pub subsample_factor: usize,
    pub cost_model: String,
    pub agent: String,
    pub max_tokens: usize,
}

impl ConfigEcho {
    fn group_key(&self) -> (&str, &str, &str, &str) {
        (&self.policy, &self.params, &self.pre_decision, &self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub trace: Trace,
    pub config: ConfigEcho,
}

/// Which latency columns to compute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LatencyColumns {
    /// Both flavors; every trace must carry computation-aware delays.
    #[default]
    Both,
    NcaOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    pub bleu: BleuConfig,
    pub latency: LatencyColumns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub policy_name: String,
    pub policy_params: String,
    pub pre_decision: String,
    pub step: String,
    pub bleu: Option<f64>,
    pub al_nca_ms: f64,
    pub al_ca_ms: Option<f64>,
    pub mean_ca_gap_ms: Option<f64>,
    /// References were unavailable and `|Y*| = |Y|` was used.
    pub ref_fallback: bool,
    pub bleu_mode: Smoothing,
    pub sessions: usize,
}

pub const CSV_HEADER: [&str; 10] = [
    "policy",
    "params",
    "pre_decision",
    "step",
    "bleu",
    "al_nca_ms",
    "al_ca_ms",
    "mean_ca_gap_ms",
    "ref_fallback",
    "bleu_mode",
];

/// Aggregates one configuration: corpus BLEU, per-session AL averaged over
/// sessions, and the pooled mean of `d_ca - d_nca` over all tokens.
pub fn aggregate_group(
    group: &[SessionResult],
    refs: Option<&References>,
    options: &ReportOptions,
) -> Result<ReportRow> {
    let first = group
        .first()
        .ok_or_else(|| Error::input("cannot aggregate an empty group"))?;
    let with_ca = options.latency == LatencyColumns::Both;

    let mut pairs = Vec::with_capacity(group.len());
    let mut al_nca = 0.0;
    let mut al_ca = 0.0;
    let mut gap_ticks: i128 = 0;
    let mut tokens = 0usize;

    for session in group {
        let trace = &session.trace;
        let id = trace.stream_id.as_str();
        if session.config != first.config {
            return Err(Error::Mismatch(format!(
                "trace `{id}` groups with `{}` but was produced with a different configuration",
                first.trace.stream_id
            )));
        }
        let check = || -> Result<()> {
            let violations = validate_trace(trace);
            if let Some(v) = violations.first() {
                return Err(Error::input(format!("malformed trace: {v}")));
            }
            if with_ca && !trace.ca_recorded {
                return Err(Error::input(
                    "computation-aware latency requested but the trace has no d_ca values",
                ));
            }
            Ok(())
        };
        check().map_err(|e| e.in_session(id))?;

        let reference = match refs {
            Some(refs) => Some(
                refs.get(id)
                    .ok_or_else(|| Error::Mismatch(format!("trace `{id}` has no reference")))?,
            ),
            None => None,
        };
        let ref_len = reference.map(Vec::len);
        al_nca += lag_to_f64(&trace_lagging(trace, DelayFlavor::Nca, ref_len).map_err(|e| e.in_session(id))?);
        if with_ca {
            al_ca += lag_to_f64(&trace_lagging(trace, DelayFlavor::Ca, ref_len).map_err(|e| e.in_session(id))?);
            for d in trace.delays() {
                gap_ticks += (d.d_ca - d.d_nca).ticks() as i128;
                tokens += 1;
            }
        }
        if let Some(reference) = reference {
            pairs.push(EvalPair::new(
                trace.tokens().map(str::to_string).collect(),
                reference.clone(),
            )?);
        }
    }

    let n = group.len() as f64;
    let bleu = if pairs.is_empty() {
        None
    } else {
        Some(corpus_bleu(&pairs, options.bleu)?.score)
    };
    let echo = &first.config;
    Ok(ReportRow {
        policy_name: echo.policy.clone(),
        policy_params: echo.params.clone(),
        pre_decision: echo.pre_decision.clone(),
        step: echo.step.clone(),
        bleu,
        al_nca_ms: al_nca / n,
        al_ca_ms: with_ca.then_some(al_ca / n),
        mean_ca_gap_ms: (with_ca && tokens > 0).then(|| gap_ticks as f64 / tokens as f64 / 1000.0),
        ref_fallback: refs.is_none(),
        bleu_mode: options.bleu.smoothing,
        sessions: group.len(),
    })
}

/// Compares strings treating embedded digit runs as numbers, so `k=2 < k=10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, xa), (db, xb)) in ca.iter().zip(cb.iter()) {
        let ord = if *da && *db {
            let (ta, tb) = (xa.trim_start_matches('0'), xb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
        } else {
            xa.cmp(xb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

/// Groups sessions by (policy, params, pre-decision, step) and aggregates each
/// group. Rows are sorted by policy name, then parameters.
pub fn build_report(
    results: &[SessionResult],
    refs: Option<&References>,
    options: &ReportOptions,
) -> Result<Vec<ReportRow>> {
    if results.is_empty() {
        return Err(Error::input("no traces to report"));
    }
    let mut groups: BTreeMap<(&str, &str, &str, &str), Vec<SessionResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.config.group_key()).or_default().push(r.clone());
    }
    let mut rows = groups
        .into_values()
        .map(|mut g| {
            g.sort_by(|a, b| a.trace.stream_id.cmp(&b.trace.stream_id));
            if let Some(w) = g.windows(2).find(|w| w[0].trace.stream_id == w[1].trace.stream_id) {
                return Err(Error::Mismatch(format!(
                    "stream `{}` appears twice in one configuration",
                    w[0].trace.stream_id
                )));
            }
            aggregate_group(&g, refs, options)
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.policy_name
            .cmp(&b.policy_name)
            .then_with(|| natural_cmp(&a.policy_params, &b.policy_params))
            .then_with(|| a.pre_decision.cmp(&b.pre_decision))
            .then_with(|| natural_cmp(&a.step, &b.step))
    });
    Ok(rows)
}

fn fmt3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt3)
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.policy_name.clone(),
            r.policy_params.clone(),
            r.pre_decision.clone(),
            r.step.clone(),
            fmt_opt(r.bleu),
            fmt3(r.al_nca_ms),
            fmt_opt(r.al_ca_ms),
            fmt_opt(r.mean_ca_gap_ms),
            r.ref_fallback.to_string(),
            r.bleu_mode.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::input(e.to_string()))
}
