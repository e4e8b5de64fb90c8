use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use simulstream_core::io::read_traces;
use simulstream_core::stream::validate_trace;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulstream"))
}

fn call(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = call(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = call(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

struct Corpus {
    dir: TempDir,
}

impl Corpus {
    fn new(utterances: usize, tokens_per_word: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok(&[
            "synth",
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--utterances",
            &utterances.to_string(),
            "--tokens-per-word",
            &tokens_per_word.to_string(),
            "--seed",
            "11",
        ]);
        Corpus { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn session(&self) -> Vec<String> {
        vec![
            "--manifest".into(),
            self.p("manifest.jsonl"),
            "--refs".into(),
            self.p("refs.tsv"),
        ]
    }

    fn run(&self, extra: &[&str], out: &str) -> String {
        let mut args: Vec<String> = vec!["run".into()];
        args.extend(self.session());
        args.extend(extra.iter().map(|s| s.to_string()));
        args.extend(["--out".into(), self.p(out)]);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        self.p(out)
    }

    fn run_err(&self, extra: &[&str]) -> String {
        let mut args: Vec<String> = vec!["run".into()];
        args.extend(self.session());
        args.extend(extra.iter().map(|s| s.to_string()));
        args.extend(["--out".into(), self.p("unused.jsonl")]);
        fails(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }

    fn sweep_args(&self, extra: &[&str]) -> Vec<String> {
        let mut args: Vec<String> = vec!["sweep".into()];
        args.extend(self.session());
        args.extend(extra.iter().map(|s| s.to_string()));
        args
    }

    fn sweep(&self, extra: &[&str]) -> String {
        ok(&self.sweep_args(extra).iter().map(String::as_str).collect::<Vec<_>>())
    }
}

fn csv_rows(csv: &str) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(csv.as_bytes());
    reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    csv_rows(csv).iter().map(|r| r[idx].parse().unwrap()).collect()
}

fn events_by_id(path: &str) -> Vec<(String, Value)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v["events"].clone())
        })
        .collect()
}

#[test]
fn run_writes_valid_traces_with_both_delays() {
    let c = Corpus::new(8, 1);
    let out = c.run(
        &[
            "--policy",
            "wait-k",
            "--k",
            "3",
            "--pre-decision",
            "fixed",
            "--step-ms",
            "280",
            "--cost-model",
            "recompute:2,0.5,1",
        ],
        "w3.jsonl",
    );
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 8);
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        for w in v["events"].as_array().unwrap().iter().filter(|e| e["t"] == "W") {
            assert!(w["d_nca"].is_number() && w["d_ca"].is_number(), "{w}");
            assert!(w["d_ca"].as_f64() >= w["d_nca"].as_f64());
        }
        assert_eq!(v["config"]["step"], "280");
    }
    for session in read_traces(Path::new(&out)).unwrap() {
        assert!(validate_trace(&session.trace).is_empty());
    }
}

#[test]
fn mma_slowest_head_matches_waitk_trace() {
    let c = Corpus::new(10, 1);
    let align = c.p("alignments.jsonl");
    let flex = ["--pre-decision", "flexible", "--alignments", align.as_str()];
    let mut mma_args = vec!["--policy", "mma", "--heads", "waitk:2,waitk:4"];
    mma_args.extend(flex);
    let mut w4_args = vec!["--policy", "wait-k", "--k", "4"];
    w4_args.extend(flex);
    let mma = c.run(&mma_args, "mma.jsonl");
    let w4 = c.run(&w4_args, "w4.jsonl");
    assert_eq!(events_by_id(&mma), events_by_id(&w4));
}

#[test]
fn misconfigured_runs_fail_with_a_diagnostic() {
    let c = Corpus::new(3, 1);
    let err = c.run_err(&["--policy", "wait-k", "--k", "3", "--step-ms", "25"]);
    assert!(err.contains("multiple"), "{err}");

    let align = c.p("alignments.jsonl");
    let err = c.run_err(&[
        "--policy",
        "wait-k",
        "--k",
        "3",
        "--pre-decision",
        "flexible",
        "--step-ms",
        "280",
        "--alignments",
        &align,
    ]);
    assert!(err.contains("--step-ms"), "{err}");

    let err = c.run_err(&["--policy", "wait-k", "--step-ms", "280"]);
    assert!(err.contains("--k"), "{err}");
    let err = c.run_err(&["--policy", "mma", "--k", "2", "--step-ms", "280"]);
    assert!(err.contains("--heads"), "{err}");
    let err = c.run_err(&[
        "--policy",
        "wait-k",
        "--k",
        "2",
        "--step-ms",
        "280",
        "--placeholder",
        "x",
    ]);
    assert!(err.contains("coverage"), "{err}");
    let err = c.run_err(&["--policy", "wait-k", "--k", "2", "--pre-decision", "flexible"]);
    assert!(err.contains("--alignments"), "{err}");
}

#[test]
fn missing_alignment_is_a_hard_error() {
    let c = Corpus::new(4, 1);
    let text = fs::read_to_string(c.path("alignments.jsonl")).unwrap();
    let trimmed: Vec<&str> = text.lines().skip(1).collect();
    fs::write(c.path("partial.jsonl"), trimmed.join("\n")).unwrap();
    let partial = c.p("partial.jsonl");
    let err = c.run_err(&[
        "--policy",
        "wait-k",
        "--k",
        "2",
        "--pre-decision",
        "flexible",
        "--alignments",
        &partial,
    ]);
    assert!(err.contains("utt0000"), "{err}");
}

#[test]
fn manifest_ids_missing_from_refs_are_rejected() {
    let c = Corpus::new(4, 1);
    let text = fs::read_to_string(c.path("refs.tsv")).unwrap();
    let trimmed: Vec<&str> = text.lines().filter(|l| !l.starts_with("utt0002")).collect();
    fs::write(c.path("refs.tsv"), trimmed.join("\n")).unwrap();
    let err = c.run_err(&["--policy", "wait-k", "--k", "2", "--step-ms", "280"]);
    assert!(err.contains("utt0002"), "{err}");
}

#[test]
fn report_is_deterministic_and_oracle_bleu_is_perfect() {
    let c = Corpus::new(6, 1);
    let trace = c.run(&["--policy", "wait-k", "--k", "2", "--step-ms", "120"], "w2.jsonl");
    let refs = c.p("refs.tsv");
    let first = ok(&["report", &trace, "--refs", &refs]);
    let second = ok(&["report", &trace, "--refs", &refs]);
    assert_eq!(first, second);
    let rows = csv_rows(&first);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4], "100.000");

    let without_refs = ok(&["report", &trace]);
    let rows = csv_rows(&without_refs);
    assert_eq!(rows[0][4], "NA");
    assert_eq!(rows[0][8], "true");
}

#[test]
fn report_without_ca_data_needs_nca_only() {
    let c = Corpus::new(3, 1);
    let trace = c.run(&["--policy", "wait-k", "--k", "2", "--step-ms", "120"], "w2.jsonl");
    let stripped: Vec<String> = fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            for e in v["events"].as_array_mut().unwrap() {
                e.as_object_mut().unwrap().remove("d_ca");
            }
            v.to_string()
        })
        .collect();
    let nca = c.p("nca.jsonl");
    fs::write(&nca, stripped.join("\n")).unwrap();
    let refs = c.p("refs.tsv");
    let err = fails(&["report", &nca, "--refs", &refs]);
    assert!(err.contains("d_ca"), "{err}");
    let csv = ok(&["report", &nca, "--refs", &refs, "--nca-only"]);
    let rows = csv_rows(&csv);
    assert_eq!(rows[0][6], "NA");
    assert_eq!(rows[0][7], "NA");
}

#[test]
fn k_grid_sweep_gives_one_row_per_k() {
    let c = Corpus::new(40, 1);
    let csv = c.sweep(&[
        "--policy",
        "wait-k",
        "--k-grid",
        "1..10",
        "--step-grid",
        "280",
        "--agent",
        "coverage",
    ]);
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 10);
    let ks: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(ks[0], "k=1");
    assert_eq!(ks[9], "k=10");
    let al = column(&csv, "al_nca_ms");
    assert!(al.windows(2).all(|w| w[1] > w[0]), "{al:?}");
    let bleu = column(&csv, "bleu");
    assert!(bleu.windows(2).all(|w| w[1] >= w[0]), "{bleu:?}");
}

#[test]
fn step_grid_sweep_gap_shrinks_under_recompute() {
    let c = Corpus::new(40, 2);
    let csv = c.sweep(&[
        "--policy",
        "wait-k",
        "--k-grid",
        "3",
        "--step-grid",
        "120,280,560",
        "--cost-model",
        "recompute:2",
    ]);
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 3);
    let al_nca = column(&csv, "al_nca_ms");
    let al_ca = column(&csv, "al_ca_ms");
    let gap: Vec<f64> = al_ca.iter().zip(&al_nca).map(|(c, n)| c - n).collect();
    assert!(gap.windows(2).all(|w| w[1] <= w[0]), "{gap:?}");
    let pooled = column(&csv, "mean_ca_gap_ms");
    assert!(pooled.iter().all(|g| *g > 0.0));
}

#[test]
fn degenerate_grid_matches_run_then_report() {
    let c = Corpus::new(12, 1);
    let common = [
        "--policy",
        "wait-k",
        "--cost-model",
        "incremental:1,0.25,3",
        "--agent",
        "coverage",
    ];
    let mut sweep_args: Vec<&str> = common.to_vec();
    sweep_args.extend(["--k-grid", "5..5", "--step-grid", "280"]);
    let swept = c.sweep(&sweep_args);

    let mut run_args: Vec<&str> = common.to_vec();
    run_args.extend(["--k", "5", "--step-ms", "280"]);
    let trace = c.run(&run_args, "w5.jsonl");
    let refs = c.p("refs.tsv");
    let reported = ok(&["report", &trace, "--refs", &refs]);
    assert_eq!(swept, reported);
    assert_eq!(csv_rows(&swept).len(), 1);
}

#[test]
fn sweep_traces_round_trip_through_report() {
    let c = Corpus::new(10, 1);
    let traces = c.p("all.jsonl");
    let csv = c.sweep(&[
        "--policy",
        "wait-k",
        "--k-grid",
        "1,4",
        "--step-grid",
        "120,280",
        "--cost-model",
        "recompute:1",
        "--traces-out",
        &traces,
    ]);
    let refs = c.p("refs.tsv");
    assert_eq!(ok(&["report", &traces, "--refs", &refs]), csv);
}

#[test]
fn thread_count_does_not_change_output() {
    let c = Corpus::new(15, 1);
    let args = c.sweep_args(&[
        "--policy",
        "wait-k",
        "--k-grid",
        "1..3",
        "--step-grid",
        "120",
        "--cost-model",
        "recompute:2",
    ]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let single = bin().args(&args).env("SIMULSTREAM_THREADS", "1").output().unwrap();
    let many = bin().args(&args).env("SIMULSTREAM_THREADS", "4").output().unwrap();
    assert!(single.status.success() && many.status.success());
    assert_eq!(single.stdout, many.stdout);
}

#[test]
fn empty_grids_are_rejected() {
    let c = Corpus::new(2, 1);
    let args = c.sweep_args(&["--policy", "wait-k", "--k-grid", "5..4", "--step-grid", "280"]);
    let err = fails(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(err.contains("empty"), "{err}");
    let args = c.sweep_args(&["--policy", "wait-k", "--k-grid", "2", "--step-grid", ","]);
    let err = fails(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(err.contains("empty"), "{err}");
}

#[test]
fn mma_table_heads_from_file() {
    let c = Corpus::new(3, 1);
    // halts at unit j for target j: behaves like wait-1
    let table: Vec<String> = (1..=200)
        .map(|i| format!("{{\"i\":{i},\"j\":{i},\"p\":0.9}}"))
        .collect();
    fs::write(c.path("head.jsonl"), table.join("\n")).unwrap();
    let head = format!("table:{}", c.p("head.jsonl"));
    let mma = c.run(&["--policy", "mma", "--heads", &head, "--step-ms", "120"], "mma.jsonl");
    let w1 = c.run(&["--policy", "wait-k", "--k", "1", "--step-ms", "120"], "w1.jsonl");
    assert_eq!(events_by_id(&mma), events_by_id(&w1));
}
