use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use moqsdc::model::ChannelParams;
use moqsdc::rate::{self, FrameCount, SweepOptions};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moqsdc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn csv_rows(path: &Path) -> (String, Vec<csv::StringRecord>) {
    let text = fs::read_to_string(path).unwrap();
    let (manifest, body) = text.split_once('\n').unwrap();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    (manifest.to_string(), r.records().map(Result::unwrap).collect())
}

#[test]
fn rate_sweep_single_row_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let out = run(&[
            "rate-sweep", "--d-min", "295", "--d-max", "300", "--d-step", "5", "--out",
            a.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(fs::read(&a).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    let (manifest, rows) = csv_rows(&a);
    assert!(manifest.starts_with("# manifest: {"));
    assert!(manifest.contains("\"command\":\"rate-sweep\""));
    assert_eq!(rows.len(), 1);
    let want = rate::secrecy_rate(&ChannelParams::default(), 295.0, 0.5).unwrap();
    assert_eq!(rows[0][7].parse::<f64>().unwrap(), want.r);
    assert_eq!(rows[0][8].parse::<f64>().unwrap(), want.plob);
}

#[test]
fn rate_sweep_outputs_match_library_and_band() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = run(&["rate-sweep", "--optimize-mu", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let (_, rows) = csv_rows(&path);
    let ds = rate::distance_grid(0.0, 450.0, 5.0).unwrap();
    let lib = rate::sweep(&ChannelParams::default(), &ds, &SweepOptions::optimized()).unwrap();
    assert_eq!(rows.len(), lib.len());
    let mut band = Vec::new();
    for (row, want) in rows.iter().zip(&lib) {
        let r: f64 = row[7].parse().unwrap();
        assert_eq!(r, want.rate.r);
        assert_eq!(row[2].parse::<f64>().unwrap(), want.rate.mu_used);
        if r > row[8].parse::<f64>().unwrap() {
            band.push(want.rate.d);
        }
    }
    assert!(band.windows(2).all(|w| w[1] - w[0] == 5.0));
    assert!((260.0..=320.0).contains(&band[0]), "onset {}", band[0]);
}

#[test]
fn xbasis_orders_by_interval() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let out = run(&["xbasis", "--t", "100,1000,10000", "--d-step", "25", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let (_, rows) = csv_rows(&path);
    let per_t = rows.len() / 3;
    assert_eq!(rows.len(), 3 * per_t);
    for row in &rows {
        let pr: f64 = row[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&pr));
    }
    for k in 0..per_t {
        let pr = |block: usize| rows[block * per_t + k][5].parse::<f64>().unwrap();
        assert!(pr(0) <= pr(1) && pr(1) <= pr(2), "row {k}");
        if pr(1) < 1.0 {
            assert!(pr(0) < pr(1) && pr(1) < pr(2), "row {k}");
        }
    }
}

#[test]
fn frames_column_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("n.csv");
    let out = run(&[
        "frames", "--t", "1000", "--target-failure", "1e-10", "--d-min", "0", "--d-max", "400",
        "--d-step", "50", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (_, rows) = csv_rows(&path);
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let p: f64 = row[4].parse().unwrap();
        let want = match rate::frames_required(1000, p, 1e-10).unwrap() {
            FrameCount::Frames(n) => n.to_string(),
            FrameCount::Unreachable => String::new(),
        };
        assert_eq!(&row[7], want.as_str());
    }
}

#[test]
fn bad_ranges_and_configs_exit_one() {
    assert_eq!(code(&run(&["rate-sweep", "--d-min", "10", "--d-max", "5"])), 1);
    assert_eq!(code(&run(&["xbasis", "--d-max", "5"])), 1);
    assert_eq!(code(&run(&["frames", "--t", "0"])), 1);
    assert_eq!(code(&run(&["simulate", "--format", "xml"])), 1);
    assert_eq!(code(&run(&["nonsense"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "mu = -1\n").unwrap();
    assert_eq!(code(&run(&["rate-sweep", "--config", cfg.to_str().unwrap()])), 1);
    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&run(&["rate-sweep", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn io_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    assert_eq!(code(&run(&["rate-sweep", "--config", missing.to_str().unwrap()])), 3);
    let plain = dir.path().join("nope.bin");
    assert_eq!(code(&run(&["transmit", "--plaintext", plain.to_str().unwrap(), "--seed", "1"])), 3);
    let out = dir.path().join("no/such/dir/out.csv");
    assert_eq!(code(&run(&["rate-sweep", "--d-max", "10", "--out", out.to_str().unwrap()])), 3);
}

#[test]
fn simulate_writes_transcript_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let mut runs = Vec::new();
    for workers in ["1", "3", "3"] {
        let out = run(&[
            "simulate", "--rounds", "100000", "--distance", "50", "--seed", "9", "--workers", workers,
            "--out", a.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(fs::read(&a).unwrap());
    }
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
    let doc: Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(doc["manifest"]["seed"], 9);
    assert_eq!(doc["manifest"]["command"], "simulate");
    assert_eq!(doc["report"]["aborted"], false);
    assert_eq!(doc["report"]["n_rounds"], 100000);
    assert!(doc.get("rounds").is_none());
}

#[test]
fn missing_seed_is_drawn_and_printed() {
    let out = run(&["simulate", "--rounds", "20000", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8(out.stderr).unwrap();
    let seed: u64 = err
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .expect("seed printed")
        .parse()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().next().unwrap().contains(&format!("\"seed\":{seed}")));
}

#[test]
fn transmit_round_trips_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("msg.bin");
    let message = b"delayed secure coding, 40 bytes long....";
    fs::write(&plain, message).unwrap();
    let rec = dir.path().join("rec.bin");
    let frames = dir.path().join("frames");
    let report = dir.path().join("report.json");
    let out = run(&[
        "transmit", "--plaintext", plain.to_str().unwrap(), "--distance", "50", "--seed", "5",
        "--recovered", rec.to_str().unwrap(), "--frames-dir", frames.to_str().unwrap(), "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&rec).unwrap(), message);
    let doc: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(doc["complete"], true);
    assert_eq!(doc["matches_plaintext"], true);
    assert_eq!(doc["frames"].as_array().unwrap().len(), 3);
    let raw = fs::read(frames.join("frame_00000.moqf")).unwrap();
    let file = moqsdc::coding::frame_file::FrameFile::from_bytes(&raw).unwrap();
    assert_eq!(file.m, 128);
    let hex = fs::read_to_string(frames.join("frame_00000.hex")).unwrap();
    assert_eq!(moqsdc::coding::frame_file::parse_hex_dump(&hex).unwrap(), raw);
}

#[test]
fn exhausted_pool_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("msg.bin");
    fs::write(&plain, [7u8; 32]).unwrap();
    let out = run(&["transmit", "--plaintext", plain.to_str().unwrap(), "--seed", "1", "--pool-bits", "64"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--pool-bits"));
}

#[test]
fn transmit_rejects_empty_plaintext() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("empty.bin");
    fs::write(&plain, b"").unwrap();
    assert_eq!(code(&run(&["transmit", "--plaintext", plain.to_str().unwrap(), "--seed", "1"])), 1);
}

#[test]
fn zero_isolation_threshold_aborts_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.cfg");
    fs::write(&cfg, "lambda_threshold = 0\n").unwrap();
    let plain = dir.path().join("msg.bin");
    fs::write(&plain, b"hi").unwrap();
    let report = dir.path().join("report.json");
    let out = run(&[
        "transmit", "--config", cfg.to_str().unwrap(), "--plaintext", plain.to_str().unwrap(),
        "--seed", "2", "--out", report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let doc: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(doc["complete"], false);
    assert_eq!(doc["frames"][0]["report"]["aborted"], true);

    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--rounds", "50000", "--seed", "1"]);
    assert_eq!(code(&out), 2);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["report"]["aborted"], true);
}
