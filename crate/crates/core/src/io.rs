//! Line-delimited file formats: manifests, alignments, stepwise head tables,
//! references, traces and binary feature files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{stepwise_from_table, stepwise_from_waitk, StepwiseSource};
use crate::pre_decision::{AlignmentLevel, Segment};
use crate::quality::tokenize;
use crate::report::{ConfigEcho, References, SessionResult};
use crate::stream::{DelayRecord, Event, Features, SourceStream, Trace};
use crate::time::Millis;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.to_string(),
    }
}

/// Reads one JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub num_frames: usize,
    pub frame_period_ms: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_id: Option<String>,
}

impl ManifestEntry {
    /// Alignment record this stream uses; defaults to the stream id.
    pub fn alignment_key(&self) -> &str {
        self.alignment_id.as_deref().unwrap_or(&self.id)
    }

    /// Builds the stream; features are loaded only when `load_features` is set.
    /// Relative feature paths resolve against `base_dir`.
    pub fn to_stream(&self, load_features: bool, base_dir: &Path) -> Result<SourceStream> {
        let stream = SourceStream::new(self.id.clone(), self.num_frames, self.frame_period_ms)?;
        match (&self.feature_file, load_features) {
            (Some(file), true) => {
                let features = read_feature_file(&base_dir.join(file))?;
                stream.with_features(features)
            }
            _ => Ok(stream),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for (i, e) in entries.iter().enumerate() {
        if !seen.insert(e.id.as_str()) {
            return Err(parse_error(path, i + 1, format!("duplicate id `{}`", e.id)));
        }
        if e.num_frames == 0 {
            return Err(parse_error(path, i + 1, format!("`{}` has no frames", e.id)));
        }
        if !e.frame_period_ms.is_positive() {
            return Err(parse_error(
                path,
                i + 1,
                format!("`{}` has a non-positive frame period", e.id),
            ));
        }
    }
    Ok(entries)
}

// ---------------------------------------------------------------- alignments

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub id: String,
    pub level: AlignmentLevel,
    pub segments: Vec<Segment>,
}

pub fn read_alignments(path: &Path) -> Result<BTreeMap<String, AlignmentRecord>> {
    let mut out = BTreeMap::new();
    for (i, rec) in read_jsonl::<AlignmentRecord>(path)?.into_iter().enumerate() {
        if out.contains_key(&rec.id) {
            return Err(parse_error(path, i + 1, format!("duplicate id `{}`", rec.id)));
        }
        out.insert(rec.id.clone(), rec);
    }
    Ok(out)
}

// ---------------------------------------------------------------- stepwise tables

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepwiseRecord {
    pub i: usize,
    pub j: usize,
    pub p: f64,
}

pub fn read_stepwise_table(path: &Path, default: f64) -> Result<StepwiseSource> {
    let mut probs = HashMap::new();
    for rec in read_jsonl::<StepwiseRecord>(path)? {
        probs.insert((rec.i, rec.j), rec.p);
    }
    let label = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(stepwise_from_table(probs, default)?.with_label(label))
}

/// Parses a head list such as `waitk:2,waitk:4,table:heads.jsonl@0.2`.
/// Table paths resolve against `base_dir`; the optional `@p` suffix sets the
/// probability for pairs missing from the table (default 0).
pub fn parse_heads(spec: &str, base_dir: &Path) -> Result<Vec<StepwiseSource>> {
    let mut heads = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (kind, arg) = item
            .split_once(':')
            .ok_or_else(|| Error::config(format!("head `{item}`: expected waitk:K or table:PATH")))?;
        match kind {
            "waitk" => {
                let k = arg
                    .parse()
                    .map_err(|_| Error::config(format!("head `{item}`: bad k")))?;
                heads.push(stepwise_from_waitk(k)?);
            }
            "table" => {
                let (file, default) = match arg.rsplit_once('@') {
                    Some((f, d)) => (
                        f,
                        d.parse::<f64>()
                            .map_err(|_| Error::config(format!("head `{item}`: bad default probability")))?,
                    ),
                    None => (arg, 0.0),
                };
                heads.push(read_stepwise_table(&base_dir.join(file), default)?);
            }
            other => return Err(Error::config(format!("unknown head kind `{other}`"))),
        }
    }
    if heads.is_empty() {
        return Err(Error::config("no heads given"));
    }
    Ok(heads)
}

// ---------------------------------------------------------------- references

/// Reads `id<TAB>reference text` lines.
pub fn read_references(path: &Path) -> Result<References> {
    let mut refs = References::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| parse_error(path, i + 1, "expected `id<TAB>reference`"))?;
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(parse_error(path, i + 1, format!("empty reference for `{id}`")));
        }
        if refs.insert(id.to_string(), tokens).is_some() {
            return Err(parse_error(path, i + 1, format!("duplicate id `{id}`")));
        }
    }
    Ok(refs)
}

pub fn write_references(path: &Path, refs: &References) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, tokens) in refs {
        writeln!(w, "{id}\t{}", tokens.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- traces

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t")]
pub enum EventRecord {
    #[serde(rename = "R")]
    Read { frame: usize },
    #[serde(rename = "T")]
    Trigger {
        state: usize,
        #[serde(default, skip_serializing_if = "is_false")]
        forced: bool,
    },
    #[serde(rename = "W")]
    Write {
        token: String,
        n: usize,
        d_nca: Millis,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_ca: Option<Millis>,
    },
}

/// One utterance per line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub num_frames: usize,
    pub frame_period_ms: Millis,
    pub finished: bool,
    pub events: Vec<EventRecord>,
    pub config: ConfigEcho,
}

impl TraceRecord {
    pub fn from_session(result: &SessionResult) -> Self {
        let trace = &result.trace;
        let events = trace
            .events
            .iter()
            .map(|e| match e {
                Event::Read { frame } => EventRecord::Read { frame: *frame },
                Event::Trigger { state, forced } => EventRecord::Trigger {
                    state: *state,
                    forced: *forced,
                },
                Event::Write { token, delay } => EventRecord::Write {
                    token: token.clone(),
                    n: delay.frames_read,
                    d_nca: delay.d_nca,
                    d_ca: trace.ca_recorded.then_some(delay.d_ca),
                },
            })
            .collect();
        TraceRecord {
            id: trace.stream_id.clone(),
            num_frames: trace.num_frames,
            frame_period_ms: trace.frame_period,
            finished: trace.finished,
            events,
            config: result.config.clone(),
        }
    }

    /// Rebuilds the in-memory trace. Writes must either all carry `d_ca` or
    /// all omit it; when omitted the trace is marked as lacking CA data.
    pub fn into_session(self) -> Result<SessionResult> {
        let with_ca = self
            .events
            .iter()
            .filter_map(|e| match e {
                EventRecord::Write { d_ca, .. } => Some(d_ca.is_some()),
                _ => None,
            })
            .collect::<BTreeSet<bool>>();
        if with_ca.len() > 1 {
            return Err(Error::input(format!(
                "trace `{}` mixes tokens with and without d_ca",
                self.id
            )));
        }
        let ca_recorded = !with_ca.contains(&false);

        let mut events = Vec::with_capacity(self.events.len());
        let mut exhausted = None;
        let mut written = 0;
        for rec in self.events {
            events.push(match rec {
                EventRecord::Read { frame } => {
                    if frame == self.num_frames && exhausted.is_none() {
                        exhausted = Some(events.len());
                    }
                    Event::Read { frame }
                }
                EventRecord::Trigger { state, forced } => Event::Trigger { state, forced },
                EventRecord::Write { token, n, d_nca, d_ca } => {
                    written += 1;
                    Event::Write {
                        token,
                        delay: DelayRecord {
                            token_index: written,
                            frames_read: n,
                            d_nca,
                            d_ca: d_ca.unwrap_or(d_nca),
                        },
                    }
                }
            });
        }
        Ok(SessionResult {
            trace: Trace {
                stream_id: self.id,
                num_frames: self.num_frames,
                frame_period: self.frame_period_ms,
                events,
                source_exhausted_at_event: exhausted,
                finished: self.finished,
                ca_recorded,
            },
            config: self.config,
        })
    }
}

pub fn write_traces(path: &Path, results: &[SessionResult]) -> Result<()> {
    let records: Vec<TraceRecord> = results.iter().map(TraceRecord::from_session).collect();
    write_jsonl(path, &records)
}

pub fn read_traces(path: &Path) -> Result<Vec<SessionResult>> {
    read_jsonl::<TraceRecord>(path)?
        .into_iter()
        .map(TraceRecord::into_session)
        .collect()
}

// ---------------------------------------------------------------- features

pub const FEATURE_MAGIC: &[u8; 4] = b"SSTF";

/// Reads a feature file: `SSTF`, u32 frames, u32 dim, 4 reserved bytes, then
/// little-endian f32 values, row-major.
pub fn read_feature_file(path: &Path) -> Result<Features> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| parse_error(path, 0, msg);
    if bytes.len() < 16 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing SSTF header"));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != frames * dim * 4 {
        return Err(bad("payload size does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Features { dim, data })
}

pub fn write_feature_file(path: &Path, features: &Features) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(features.num_frames() as u32).to_le_bytes())?;
    w.write_all(&(features.dim as u32).to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    for v in &features.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}
