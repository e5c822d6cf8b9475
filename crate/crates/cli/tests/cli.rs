use std::fs;
use std::path::Path;
use std::process::Command;

use xrsched_cli::config::{parse_config, to_document, ExperimentSpec, Overrides};
use xrsched_cli::experiment::{run_experiment, RunOptions, INCOMPLETE_MARKER};
use xrsched_cli::trace::{export, export_drop, TraceError, TraceHeader, TraceReader};
use xrsched_core::channel::ChannelSource;
use xrsched_core::engine::{drop_channel, SimConfig};
use xrsched_core::scheduler::SchedulerKind;

fn spec(out: &Path, doc: &str, drops: u32, ttis: u64) -> ExperimentSpec {
    let overrides = Overrides {
        drops: Some(drops),
        ttis: Some(ttis),
        output_dir: Some(out.to_path_buf()),
        ..Overrides::default()
    };
    parse_config(doc, &overrides, None).unwrap()
}

const SMALL: &str = "n_ues = 4\n[channel]\nn_rb = 2\nnoise_cov_scale = 0.02\n";

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.push((rel, fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn two_drops_write_summaries_and_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let s = spec(tmp.path(), SMALL, 2, 100);
    run_experiment(&s, &RunOptions::default()).unwrap();
    let dir = tmp.path().join("paoi_wpf");
    assert!(dir.join("drop_000.json").is_file());
    assert!(dir.join("drop_001.json").is_file());
    assert!(dir.join("aggregate.json").is_file());
    assert!(!tmp.path().join(INCOMPLETE_MARKER).exists());
    let first = read_all(tmp.path());
    run_experiment(&s, &RunOptions { jobs: 2, trace: None }).unwrap();
    assert_eq!(first, read_all(tmp.path()));
}

#[test]
fn comparison_has_a_row_per_scheduler() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(tmp.path(), SMALL, 1, 30);
    s.schedulers = vec![SchedulerKind::PaoiWpf, SchedulerKind::ClassicPf];
    let report = run_experiment(&s, &RunOptions::default()).unwrap();
    assert_eq!(report.aggregates.len(), 2);
    let csv = fs::read_to_string(tmp.path().join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("paoi_wpf,") && lines[2].starts_with("classic_pf,"));
}

#[test]
fn record_file_has_one_line_per_tti() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(tmp.path(), SMALL, 2, 10);
    s.emit_tti_records = true;
    run_experiment(&s, &RunOptions::default()).unwrap();
    for drop in 0..2 {
        let text = fs::read_to_string(tmp.path().join(format!("paoi_wpf/drop_{drop:03}.csv"))).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# xrsched tti-records v1"));
        assert!(lines.next().unwrap().starts_with("tti,"));
        assert_eq!(lines.count(), 10);
    }
}

#[test]
fn summaries_are_bit_conserving_under_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = format!("{SMALL}[traffic]\nloss_prob = 0.3\nbsr_quantizer = \"log_table\"\npacket_bits = 5000\n");
    let s = spec(tmp.path(), &doc, 2, 200);
    let report = run_experiment(&s, &RunOptions::default()).unwrap();
    assert!(report.aggregates[0].conserves_bits);
}

fn small_cfg() -> SimConfig {
    spec(Path::new("unused"), SMALL, 1, 5).base
}

#[test]
fn trace_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("ch.trace");
    let cfg = small_cfg();
    export_drop(&path, &cfg, 0, 5).unwrap();
    let mut reader = TraceReader::open(&path, &cfg).unwrap();
    let mut fresh = drop_channel(&cfg, 0);
    for _ in 0..5 {
        assert_eq!(reader.next_realization().unwrap(), fresh.next_realization().unwrap());
    }
    assert!(matches!(
        reader.next_realization(),
        Err(xrsched_core::Error::ChannelExhausted(5))
    ));
}

#[test]
fn trace_dimension_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("ch.trace");
    let cfg = small_cfg();
    export_drop(&path, &cfg, 0, 2).unwrap();
    let mut other = cfg.clone();
    other.channel.n_gnb_trx = 8;
    match TraceReader::open(&path, &other) {
        Err(TraceError::Dimension { field, found, expected }) => {
            assert_eq!((field, found, expected), ("channel.n_gnb_trx", 16, 8));
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("mismatched trace accepted"),
    }
}

#[test]
fn truncated_trace_names_the_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("ch.trace");
    let cfg = small_cfg();
    export_drop(&path, &cfg, 0, 3).unwrap();
    let bytes = fs::read(&path).unwrap();
    let header = TraceHeader::for_config(&cfg, 3);
    let cut = header.byte_len() + header.record_len() + 100;
    fs::write(&path, &bytes[..cut as usize]).unwrap();

    let err = TraceReader::open(&path, &cfg).err().expect("truncation detected");
    let msg = err.to_string();
    assert!(msg.contains(&format!("byte offset {cut}")), "{msg}");
    assert!(msg.contains("record 1"), "{msg}");

    // the streaming reader reports the same place
    let mut reader = TraceReader::new(&bytes[..cut as usize]).unwrap();
    reader.read_next().unwrap().unwrap();
    match reader.read_next() {
        Err(TraceError::Truncated { offset, start, .. }) => {
            assert_eq!(offset, cut);
            assert_eq!(start, header.byte_len() + header.record_len());
        }
        other => panic!("expected truncation, got {other:?}", other = other.map(|_| ())),
    }
}

#[test]
fn bad_magic_is_rejected() {
    let junk = [0u8; 64];
    assert!(matches!(TraceReader::new(&junk[..]), Err(TraceError::BadMagic)));
}

#[test]
fn exporting_a_short_source_fails() {
    let cfg = small_cfg();
    let mut header = TraceHeader::for_config(&cfg, 1);
    header.n_ues = 5;
    let mut sink = Vec::new();
    let err = export(&mut sink, &header, &mut drop_channel(&cfg, 0)).unwrap_err();
    assert!(matches!(err, TraceError::Shape { .. }));
}

#[test]
fn trace_replay_matches_generated_run() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("ch.trace");
    let s = spec(&tmp.path().join("gen"), SMALL, 1, 40);
    export_drop(&trace, &s.base, 0, 40).unwrap();
    let generated = run_experiment(&s, &RunOptions::default()).unwrap();
    let mut replay_spec = s.clone();
    replay_spec.output_dir = tmp.path().join("replay");
    let replayed = run_experiment(
        &replay_spec,
        &RunOptions {
            jobs: 1,
            trace: Some(trace),
        },
    )
    .unwrap();
    assert_eq!(generated.drops, replayed.drops);
}

#[test]
fn failed_run_is_marked_incomplete() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("short.trace");
    let s = spec(&tmp.path().join("out"), SMALL, 1, 50);
    export_drop(&trace, &s.base, 0, 10).unwrap();
    let err = run_experiment(
        &s,
        &RunOptions {
            jobs: 1,
            trace: Some(trace),
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("exhausted"), "{err}");
    let marker = fs::read_to_string(tmp.path().join("out").join(INCOMPLETE_MARKER)).unwrap();
    assert!(marker.starts_with("run failed"));
    assert!(!tmp.path().join("out/paoi_wpf/aggregate.json").exists());
}

fn xrsched() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xrsched"))
}

#[test]
fn binary_reports_every_invalid_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[aoi]\nkappa = -1.0\ntheta = 2.0\n").unwrap();
    let out = xrsched()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--schedulers", "paoi_wpf,fifo"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    for field in ["aoi.kappa", "aoi.theta", "experiment.schedulers", "fifo"] {
        assert!(err.contains(field), "missing {field} in {err}");
    }
}

#[test]
fn binary_run_uses_env_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out_dir = tmp.path().join("from-env");
    let out = xrsched()
        .args(["run", "--drops", "1", "--ttis", "20", "--schedulers", "paoi_wpf,classic_pf", "--config"])
        .arg(&cfg)
        .env("XRSCHED_OUT", &out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
    assert!(out_dir.join("comparison.csv").is_file());
}

#[test]
fn binary_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = xrsched().args(["config", "--desk", "--seed", "7"]).output().unwrap();
    assert!(out.status.success());
    let doc = String::from_utf8(out.stdout).unwrap();
    let spec = parse_config(&doc, &Overrides::default(), None).unwrap();
    assert_eq!((spec.base.drops, spec.base.ttis, spec.base.seed), (5, 20_000, 7));
    assert_eq!(to_document(&spec), doc);

    let trace = tmp.path().join("t.bin");
    let out = xrsched()
        .args(["trace", "export", "--ttis", "3", "--trace-export"])
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::metadata(&trace).unwrap().len(),
        {
            let h = TraceHeader::for_config(&SimConfig::default(), 3);
            h.byte_len() + 3 * h.record_len()
        }
    );
}
