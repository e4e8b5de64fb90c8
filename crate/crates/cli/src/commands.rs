use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use simulstream_core::io::{
    parse_heads, read_alignments, read_manifest, read_references, read_traces, write_jsonl, write_references,
    write_traces,
};
use simulstream_core::policy::{MMASpec, PolicySpec, WaitKSpec};
use simulstream_core::pre_decision::{build_alignment_table, AlignmentLevel, FixedPreDecision};
use simulstream_core::quality::{BleuConfig, Smoothing};
use simulstream_core::report::{build_report, write_csv, LatencyColumns, References, ReportOptions, SessionResult};
use simulstream_core::simulator::{run_sessions, AgentSpec, PreDecisionPlan, SweepConfig, SweepOptions};
use simulstream_core::stream::{encoder_state_count, SourceStream};
use simulstream_core::synth::{generate, SynthSpec};
use simulstream_core::Millis;

use crate::args::{
    AgentKind, LevelKind, PolicyKind, PreDecisionKind, ReportArgs, RunArgs, SessionArgs, SmoothingKind, SweepArgs,
    SynthArgs,
};
use crate::grid::parse_grid;

struct Corpus {
    streams: Vec<SourceStream>,
    refs: References,
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn agent_spec(args: &SessionArgs) -> Result<AgentSpec> {
    match (args.agent, &args.placeholder) {
        (AgentKind::Oracle, Some(_)) => bail!("--placeholder only applies to --agent coverage"),
        (AgentKind::Oracle, None) => Ok(AgentSpec::Oracle),
        (AgentKind::Coverage, p) => Ok(AgentSpec::Coverage {
            placeholder: p.clone().unwrap_or_else(|| AgentSpec::DEFAULT_PLACEHOLDER.to_string()),
        }),
    }
}

fn load_corpus(args: &SessionArgs, agent: &AgentSpec) -> Result<Corpus> {
    let entries = read_manifest(&args.manifest)?;
    ensure!(
        !entries.is_empty(),
        "manifest {} has no entries",
        args.manifest.display()
    );
    let refs = read_references(&args.refs)?;
    let missing: Vec<&str> = entries
        .iter()
        .map(|e| e.id.as_str())
        .filter(|id| !refs.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        bail!(
            "{} manifest id(s) missing from {}: {}",
            missing.len(),
            args.refs.display(),
            missing.join(", ")
        );
    }
    let dir = base_dir(&args.manifest);
    let streams = entries
        .iter()
        .map(|e| e.to_stream(agent.wants_features(), dir))
        .collect::<simulstream_core::Result<Vec<_>>>()?;
    Ok(Corpus { streams, refs })
}

fn flexible_plan(args: &SessionArgs, corpus: &Corpus) -> Result<PreDecisionPlan> {
    let path = args
        .alignments
        .as_ref()
        .context("--pre-decision flexible needs --alignments")?;
    let records = read_alignments(path)?;
    let entries = read_manifest(&args.manifest)?;
    let mut level: Option<AlignmentLevel> = None;
    let mut tables = BTreeMap::new();
    for (entry, stream) in entries.iter().zip(&corpus.streams) {
        let key = entry.alignment_key();
        let record = records
            .get(key)
            .with_context(|| format!("no alignment `{key}` for stream `{}` in {}", entry.id, path.display()))?;
        match level {
            None => level = Some(record.level),
            Some(l) if l != record.level => {
                bail!("alignments mix {l} and {} levels", record.level)
            }
            Some(_) => {}
        }
        let states = encoder_state_count(stream.num_frames(), args.subsample)?;
        let table = build_alignment_table(
            &record.segments,
            record.level,
            states,
            args.subsample,
            stream.frame_period(),
        )
        .with_context(|| format!("alignment for stream `{}`", entry.id))?;
        tables.insert(stream.id.clone(), table);
    }
    Ok(PreDecisionPlan::flexible(level.unwrap_or(AlignmentLevel::Word), tables))
}

fn check_step(step: Millis, args: &SessionArgs, corpus: &Corpus) -> Result<()> {
    let mut periods: Vec<Millis> = corpus.streams.iter().map(|s| s.frame_period()).collect();
    periods.sort();
    periods.dedup();
    for ts in periods {
        FixedPreDecision::new(step, ts, args.subsample).with_context(|| format!("--step-ms {step}"))?;
    }
    Ok(())
}

fn mma_policy(args: &SessionArgs) -> Result<PolicySpec> {
    let heads = args.heads.as_deref().context("--policy mma needs --heads")?;
    Ok(PolicySpec::Mma(MMASpec::new(parse_heads(heads, Path::new("."))?)?))
}

fn base_config(args: &SessionArgs, plan: PreDecisionPlan, policy: PolicySpec) -> SweepConfig {
    let mut config = SweepConfig::new(plan, policy).with_cost_model(args.cost_model);
    config.subsample_factor = args.subsample;
    config.max_tokens = args.max_tokens;
    config
}

fn execute(configs: &[SweepConfig], corpus: &Corpus, agent: &AgentSpec) -> Result<Vec<SessionResult>> {
    let threads = SweepOptions::from_env().threads;
    let mut results = Vec::new();
    for config in configs {
        let traces = run_sessions(&corpus.streams, config, &corpus.refs, agent, threads)?;
        let echo = config.echo(agent);
        results.extend(traces.into_iter().map(|trace| SessionResult {
            trace,
            config: echo.clone(),
        }));
    }
    Ok(results)
}

fn smoothing(kind: SmoothingKind) -> Smoothing {
    match kind {
        SmoothingKind::None => Smoothing::None,
        SmoothingKind::Add1 => Smoothing::AddOne,
    }
}

fn emit_csv(
    results: &[SessionResult],
    refs: Option<&References>,
    options: &ReportOptions,
    out: Option<&Path>,
) -> Result<()> {
    let rows = build_report(results, refs, options)?;
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&rows, BufWriter::new(file))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_csv(&rows, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

pub fn run(args: &RunArgs) -> Result<()> {
    let s = &args.session;
    let policy = match (s.policy, args.k, &s.heads) {
        (PolicyKind::WaitK, Some(k), None) => PolicySpec::WaitK(WaitKSpec::new(k)?),
        (PolicyKind::WaitK, None, _) => bail!("--policy wait-k needs --k"),
        (PolicyKind::WaitK, Some(_), Some(_)) => bail!("--heads cannot be used with --policy wait-k"),
        (PolicyKind::Mma, Some(_), _) => bail!("--k cannot be used with --policy mma; give --heads"),
        (PolicyKind::Mma, None, _) => mma_policy(s)?,
    };
    let agent = agent_spec(s)?;
    let corpus = load_corpus(s, &agent)?;
    let plan = match (s.pre_decision, args.step_ms, &s.alignments) {
        (PreDecisionKind::Fixed, Some(step), None) => {
            check_step(step, s, &corpus)?;
            PreDecisionPlan::fixed(step)
        }
        (PreDecisionKind::Fixed, None, _) => bail!("--pre-decision fixed needs --step-ms"),
        (PreDecisionKind::Fixed, Some(_), Some(_)) => bail!("--alignments cannot be used with --pre-decision fixed"),
        (PreDecisionKind::Flexible, Some(_), _) => bail!("--step-ms cannot be used with --pre-decision flexible"),
        (PreDecisionKind::Flexible, None, _) => flexible_plan(s, &corpus)?,
    };
    let config = base_config(s, plan, policy);
    let results = execute(&[config], &corpus, &agent)?;
    write_traces(&args.out, &results)?;
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut results = Vec::new();
    for path in &args.traces {
        results.extend(read_traces(path)?);
    }
    let refs = args.refs.as_deref().map(read_references).transpose()?;
    let options = ReportOptions {
        bleu: BleuConfig {
            smoothing: smoothing(args.smooth),
            ..BleuConfig::default()
        },
        latency: if args.nca_only {
            LatencyColumns::NcaOnly
        } else {
            LatencyColumns::Both
        },
    };
    emit_csv(&results, refs.as_ref(), &options, args.out.as_deref())
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let s = &args.session;
    let policies: Vec<PolicySpec> = match (s.policy, &args.k_grid, &s.heads) {
        (PolicyKind::WaitK, Some(grid), None) => parse_grid::<u32>(grid, "k")?
            .into_iter()
            .map(|k| Ok(PolicySpec::WaitK(WaitKSpec::new(k as usize)?)))
            .collect::<Result<_>>()?,
        (PolicyKind::WaitK, None, _) => bail!("--policy wait-k needs --k-grid"),
        (PolicyKind::WaitK, Some(_), Some(_)) => bail!("--heads cannot be used with --policy wait-k"),
        (PolicyKind::Mma, Some(_), _) => bail!("--k-grid cannot be used with --policy mma"),
        (PolicyKind::Mma, None, _) => vec![mma_policy(s)?],
    };
    let agent = agent_spec(s)?;
    let corpus = load_corpus(s, &agent)?;
    let plans: Vec<PreDecisionPlan> = match (s.pre_decision, &args.step_grid, &s.alignments) {
        (PreDecisionKind::Fixed, Some(grid), None) => parse_grid::<u32>(grid, "step")?
            .into_iter()
            .map(|step| {
                let step = Millis::from_ms(step as i64);
                check_step(step, s, &corpus)?;
                Ok(PreDecisionPlan::fixed(step))
            })
            .collect::<Result<_>>()?,
        (PreDecisionKind::Fixed, None, _) => bail!("--pre-decision fixed needs --step-grid"),
        (PreDecisionKind::Fixed, Some(_), Some(_)) => bail!("--alignments cannot be used with --pre-decision fixed"),
        (PreDecisionKind::Flexible, Some(_), _) => bail!("--step-grid cannot be used with --pre-decision flexible"),
        (PreDecisionKind::Flexible, None, _) => vec![flexible_plan(s, &corpus)?],
    };
    let configs: Vec<SweepConfig> = policies
        .iter()
        .flat_map(|p| plans.iter().map(|plan| base_config(s, plan.clone(), p.clone())))
        .collect();
    let results = execute(&configs, &corpus, &agent)?;
    if let Some(path) = &args.traces_out {
        write_traces(path, &results)?;
    }
    let options = ReportOptions {
        bleu: BleuConfig {
            smoothing: smoothing(args.smooth),
            ..BleuConfig::default()
        },
        latency: LatencyColumns::Both,
    };
    emit_csv(&results, Some(&corpus.refs), &options, args.out.as_deref())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        utterances: args.utterances,
        seed: args.seed,
        frame_period: args.frame_period_ms,
        min_words: args.min_words,
        max_words: args.max_words,
        tokens_per_word: args.tokens_per_word,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec)?;
    let level = match args.level {
        LevelKind::Word => AlignmentLevel::Word,
        LevelKind::Phoneme => AlignmentLevel::Phoneme,
    };
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_jsonl(&args.out_dir.join("manifest.jsonl"), &corpus.manifest())?;
    write_references(&args.out_dir.join("refs.tsv"), &corpus.references())?;
    write_jsonl(&args.out_dir.join("alignments.jsonl"), &corpus.alignment_records(level))?;
    Ok(())
}
