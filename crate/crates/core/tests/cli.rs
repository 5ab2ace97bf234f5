mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::*;
use driftmap::cli::{run, EXIT_INVALID, EXIT_IO, EXIT_OK};
use driftmap::export::{read_events, read_signal};
use driftmap::prelude::*;
use driftmap::stream::write_rows;

fn driftmap(args: &[&str]) -> i32 {
    run(std::iter::once("driftmap").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_spec(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const REFERENCE: &str = "n_features = 20\nchunk_size = 100\nn_chunks = 42\nseed = 1042\nregimes.0.duration = 42\nregimes.0.means = 0\nregimes.0.stds = 1\n";

fn three_clusters(dir: &Path) -> PathBuf {
    let mut rows = gaussian_rows(334, &[4.0; 5], 1);
    rows.extend(gaussian_rows(333, &[-4.0; 5], 2));
    rows.extend(gaussian_rows(333, &[0.0; 5], 3));
    let path = dir.join("clusters.csv");
    write_rows(fs::File::create(&path).unwrap(), &rows).unwrap();
    path
}

#[test]
fn generate_writes_truth_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let single = write_spec(d, "single.spec", "n_features = 2\nchunk_size = 10\nn_chunks = 5\nregimes.0.duration = 5\nregimes.0.means = 0\nregimes.0.stds = 1\n");
    let (out, truth) = (d.join("s.csv"), d.join("t.txt"));
    assert_eq!(driftmap(&["generate", "--stream-spec", s(&single), "--out", s(&out), "--truth-out", s(&truth)]), EXIT_OK);
    assert_eq!(GroundTruth::read(fs::File::open(&truth).unwrap()).unwrap().shift_chunks, Vec::<usize>::new());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 51);

    let two = write_spec(
        d,
        "two.spec",
        "n_features = 2\nchunk_size = 10\nn_chunks = 6\nregimes.0.duration = 3\nregimes.0.means = 0\nregimes.0.stds = 1\nregimes.1.duration = 3\nregimes.1.means = 3\nregimes.1.stds = 1\n",
    );
    assert_eq!(driftmap(&["generate", "--stream-spec", s(&two), "--out", s(&out), "--truth-out", s(&truth)]), EXIT_OK);
    assert_eq!(GroundTruth::read(fs::File::open(&truth).unwrap()).unwrap().shift_chunks, vec![3]);

    assert_eq!(driftmap(&["generate", "--out", s(&out), "--truth-out", s(&truth), "--chunk-size", "10"]), EXIT_OK);
    assert_eq!(
        GroundTruth::read(fs::File::open(&truth).unwrap()).unwrap().shift_chunks,
        vec![20, 40, 60, 80, 100, 120]
    );
}

#[test]
fn train_round_trips_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = three_clusters(d);
    let (m1, m2) = (d.join("a.json"), d.join("b.json"));
    for m in [&m1, &m2] {
        assert_eq!(driftmap(&["train", "--input", s(&data), "--map", s(m), "--seed", "9"]), EXIT_OK);
    }
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
    let map = FeatureMap::load(&m1).unwrap();
    assert_eq!((map.grid().rows(), map.grid().cols(), map.input_dim()), (10, 10, 5));
    let again = d.join("c.json");
    map.save(&again).unwrap();
    assert_eq!(FeatureMap::load(&again).unwrap(), map);
}

#[test]
fn training_fraction_counts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = three_clusters(dir.path());
    let kv = driftmap::config::KeyValues::parse(&format!("input = {}\ntrain-fraction = 0.3", s(&data))).unwrap();
    let cfg = driftmap::cli::RunConfig::from_key_values(kv).unwrap();
    let dataset = cfg.dataset().unwrap();
    assert_eq!(dataset.rows.len(), 1000);
    assert_eq!(dataset.train_len(cfg.train_fraction().unwrap()).unwrap(), 300);
}

#[test]
fn monitor_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (stream, truth, map) = (d.join("s.csv"), d.join("t.txt"), d.join("m.json"));
    assert_eq!(driftmap(&["generate", "--out", s(&stream), "--truth-out", s(&truth), "--chunk-size", "50", "--seed", "3"]), EXIT_OK);
    let common = ["--input", s(&stream), "--chunk-size", "50", "--seed", "3", "--map", s(&map), "--grid-rows", "5", "--grid-cols", "5"];
    assert_eq!(driftmap(&[&["train"], &common[..]].concat()), EXIT_OK);
    let mut outputs = Vec::new();
    for tag in ["x", "y"] {
        let (sig, ev) = (d.join(format!("{tag}.csv")), d.join(format!("{tag}.jsonl")));
        let args = [&["monitor"], &common[..], &["--signal-out", s(&sig), "--events-out", s(&ev)]].concat();
        assert_eq!(driftmap(&args), EXIT_OK);
        outputs.push((fs::read(&sig).unwrap(), fs::read(&ev).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let signal = read_signal(&outputs[0].0[..]).unwrap();
    assert_eq!(signal.points.first().unwrap().chunk_index, 43);
    assert_eq!(signal.points.last().unwrap().chunk_index, 139);
}

#[test]
fn stationary_stream_monitors_quietly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write_spec(d, "ref.spec", REFERENCE);
    let (map, sig, ev) = (d.join("m.json"), d.join("s.csv"), d.join("e.jsonl"));
    let base = ["--stream-spec", s(&spec), "--map", s(&map), "--grid-rows", "6", "--grid-cols", "6"];
    assert_eq!(driftmap(&[&["train"], &base[..]].concat()), EXIT_OK);
    let args = [&["monitor"], &base[..], &["--alpha", "10", "--signal-out", s(&sig), "--events-out", s(&ev)]].concat();
    assert_eq!(driftmap(&args), EXIT_OK);
    assert!(read_events(fs::File::open(&ev).unwrap()).unwrap().is_empty());
    assert_eq!(read_signal(fs::File::open(&sig).unwrap()).unwrap().len(), 28);
}

#[test]
fn evaluate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = d.join("t.txt");
    fs::write(&truth, "20\n40\n").unwrap();
    let events = d.join("e.jsonl");
    fs::write(
        &events,
        "{\"chunk_index\":20,\"score\":1.0,\"lower\":0.0,\"upper\":0.5}\n{\"chunk_index\":40,\"score\":1.0,\"lower\":0.0,\"upper\":0.5}\n",
    )
    .unwrap();
    let report = d.join("r.json");
    let args = ["evaluate", "--events", s(&events), "--truth", s(&truth), "--n-chunks", "60", "--report-out", s(&report)];
    assert_eq!(driftmap(&args), EXIT_OK);
    let r: DetectionReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!((r.kappa, r.recall, r.fpr), (1.0, 1.0, 0.0));

    fs::write(&events, "").unwrap();
    assert_eq!(driftmap(&args), EXIT_OK);
    let r: DetectionReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.recall, 0.0);
}

#[test]
fn grid_mode_writes_full_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (stream, truth, map, matrix) = (d.join("s.csv"), d.join("t.txt"), d.join("m.json"), d.join("k.csv"));
    let report = d.join("r.json");
    assert_eq!(driftmap(&["generate", "--out", s(&stream), "--truth-out", s(&truth), "--chunk-size", "20"]), EXIT_OK);
    let base = ["--input", s(&stream), "--chunk-size", "20", "--map", s(&map), "--grid-rows", "4", "--grid-cols", "4", "--epochs", "3"];
    assert_eq!(driftmap(&[&["train"], &base[..]].concat()), EXIT_OK);
    let args = [&["evaluate", "--grid", "true", "--truth", s(&truth), "--matrix-out", s(&matrix), "--report-out", s(&report)], &base[..]].concat();
    assert_eq!(driftmap(&args), EXIT_OK);
    let text = fs::read_to_string(&matrix).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 15);
    assert!(lines.iter().all(|l| l.split(',').count() == 13));
    assert!(lines[0].starts_with("alpha\\window,2,4"));
}

#[test]
fn baseline_writes_both_signals() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stream = d.join("s.csv");
    assert_eq!(driftmap(&["generate", "--out", s(&stream), "--chunk-size", "20"]), EXIT_OK);
    let (h, k) = (d.join("h.csv"), d.join("k.csv"));
    let args = ["baseline", "--input", s(&stream), "--chunk-size", "20", "--hist-signal-out", s(&h), "--ks-signal-out", s(&k), "--kernel-pca", "true", "--baseline-decide", "true"];
    assert_eq!(driftmap(&args), EXIT_OK);
    for p in [&h, &k] {
        let signal = read_signal(fs::File::open(p).unwrap()).unwrap();
        assert_eq!(signal.len(), 97);
        assert!(signal.points.iter().all(|p| (0.0..=1.0).contains(&p.score)));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("missing.csv");
    assert_eq!(driftmap(&["train", "--input", s(&missing), "--map", s(&d.join("m.json"))]), EXIT_IO);
    let data = three_clusters(d);
    let map = d.join("m.json");
    assert_eq!(driftmap(&["train", "--input", s(&data), "--map", s(&map), "--eta-start", "-1"]), EXIT_INVALID);
    assert!(!map.exists());
    assert_eq!(driftmap(&["train", "--no-such-flag", "1"]), EXIT_INVALID);
    assert_eq!(driftmap(&["train", "--input", s(&missing)]), EXIT_INVALID);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = three_clusters(d);
    let map = d.join("m.json");
    let conf = write_spec(d, "run.conf", &format!("input = {}\nmap = {}\ngrid-rows = 0\n", s(&data), s(&map)));
    assert_eq!(driftmap(&["train", "--config", s(&conf)]), EXIT_INVALID);
    assert_eq!(driftmap(&["train", "--config", s(&conf), "--grid-rows", "3"]), EXIT_OK);
    assert_eq!(FeatureMap::load(&map).unwrap().grid().rows(), 3);
}
