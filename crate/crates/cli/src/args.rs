use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use simulstream_core::simulator::{CostModel, DEFAULT_MAX_TOKENS, DEFAULT_SUBSAMPLE_FACTOR};
use simulstream_core::Millis;

/// Simulate simultaneous speech translation policies and report quality/latency trade-offs.
#[derive(Debug, Parser)]
#[command(name = "simulstream", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration over a manifest and write a trace file.
    Run(RunArgs),
    /// Aggregate trace files into a CSV trade-off table.
    Report(ReportArgs),
    /// Run a grid of configurations and write the CSV table directly.
    Sweep(SweepArgs),
    /// Write a seeded synthetic corpus (manifest, references, alignments).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    #[value(name = "wait-k")]
    WaitK,
    Mma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PreDecisionKind {
    Fixed,
    Flexible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Oracle,
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SmoothingKind {
    None,
    Add1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelKind {
    Word,
    Phoneme,
}

/// Flags shared by `run` and `sweep`.
#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// References as `id<TAB>text` lines.
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long, value_enum)]
    pub policy: PolicyKind,
    /// MMA heads, e.g. `waitk:2,waitk:4` or `table:heads.jsonl@0.1`.
    #[arg(long)]
    pub heads: Option<String>,
    #[arg(long, value_enum, default_value = "fixed")]
    pub pre_decision: PreDecisionKind,
    /// Alignment records for flexible pre-decision.
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub agent: AgentKind,
    /// Token emitted by the coverage oracle when it has not read enough source.
    #[arg(long)]
    pub placeholder: Option<String>,
    /// `zero`, `wall`, or `MODE:STATE[,DECISION[,TOKEN]]` in ms, MODE = incremental|recompute.
    #[arg(long, default_value = "zero")]
    pub cost_model: CostModel,
    /// Frames per encoder state.
    #[arg(long, default_value_t = DEFAULT_SUBSAMPLE_FACTOR)]
    pub subsample: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    pub max_tokens: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Fixed pre-decision step.
    #[arg(long)]
    pub step_ms: Option<Millis>,
    /// Trace file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trace files written by `run`.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Without references BLEU is NA and AL uses the hypothesis length.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Skip computation-aware columns (needed for traces without d_ca).
    #[arg(long)]
    pub nca_only: bool,
    #[arg(long, value_enum, default_value = "none")]
    pub smooth: SmoothingKind,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// wait-k lags, e.g. `1..10` or `1,3,5`.
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Fixed steps in ms, e.g. `120,280,560`.
    #[arg(long)]
    pub step_grid: Option<String>,
    #[arg(long, value_enum, default_value = "none")]
    pub smooth: SmoothingKind,
    /// Also write every session trace here.
    #[arg(long)]
    pub traces_out: Option<PathBuf>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving manifest.jsonl, refs.tsv and alignments.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub utterances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub tokens_per_word: usize,
    #[arg(long, default_value_t = 8)]
    pub min_words: usize,
    #[arg(long, default_value_t = 30)]
    pub max_words: usize,
    #[arg(long, default_value = "10")]
    pub frame_period_ms: Millis,
    #[arg(long, value_enum, default_value = "word")]
    pub level: LevelKind,
}
