//! End-to-end checks of the `wpt` binary: subcommand plumbing, file
//! formats, and exit codes.

use std::process::Command;

fn wpt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wpt"))
}

#[test]
fn simulate_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let status = wpt()
        .args([
            "simulate",
            "--tx-antennas",
            "2",
            "--tones",
            "4",
            "--rx-antennas",
            "2",
            "--scheme",
            "rf-opt",
            "--realizations",
            "10",
            "--seed",
            "1",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.trim().lines().collect();
    assert_eq!(lines.len(), 11, "header plus ten rows");
    assert!(lines[0].starts_with("M,N,Q,scheme,realization,"));
    assert!(lines[1].starts_with("2,4,2,rf-opt,0,"));
}

#[test]
fn simulate_thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let serial = dir.path().join("serial.csv");
    let parallel = dir.path().join("parallel.csv");
    let base = [
        "simulate",
        "--tx-antennas",
        "2",
        "--tones",
        "1,2",
        "--rx-antennas",
        "2",
        "--scheme",
        "dc-opt",
        "--scheme",
        "rf-abf",
        "--realizations",
        "4",
        "--seed",
        "9",
        "--out",
    ];
    // Env var picks serial; flag overrides it to two workers.
    assert!(wpt()
        .args(base)
        .arg(&serial)
        .env("WPT_THREADS", "1")
        .status()
        .unwrap()
        .success());
    assert!(wpt()
        .args(base)
        .arg(&parallel)
        .args(["--threads", "2"])
        .env("WPT_THREADS", "1")
        .status()
        .unwrap()
        .success());
    let strip = |path: &std::path::Path| {
        std::fs::read_to_string(path)
            .unwrap()
            .trim()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&serial), strip(&parallel));
}

#[test]
fn channel_gen_then_optimize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ch = dir.path().join("ch.json");
    assert!(wpt()
        .args([
            "channel-gen",
            "--tx-antennas",
            "2",
            "--rx-antennas",
            "2",
            "--tones",
            "4",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&ch)
        .status()
        .unwrap()
        .success());
    let output = wpt()
        .args(["optimize", "--channel"])
        .arg(&ch)
        .args(["--scheme", "dc-opt"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let sol: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(sol["scheme"], "dc-opt");
    assert!(sol["objective_v"].as_f64().unwrap() > 0.0);
    assert!(sol["p_out_w"].as_f64().unwrap() > 0.0);
    assert!(!sol["objective_trace"].as_array().unwrap().is_empty());
    let s = &sol["waveform"]["s"];
    assert_eq!(s["re"].as_array().unwrap().len(), 8);
}

#[test]
fn oracle_reports_and_exits_clean() {
    let output = wpt()
        .args(["oracle", "--tones", "8", "--trials", "100"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(
        text.contains("max relative moment error"),
        "unexpected report: {text}"
    );
}

#[test]
fn usage_and_data_errors_use_distinct_exit_codes() {
    // Unknown flag and malformed inputs are usage errors: exit 2.
    let status = wpt().arg("--definitely-not-a-flag").status().unwrap();
    assert_eq!(status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "not json").unwrap();
    let status = wpt()
        .args(["optimize", "--channel"])
        .arg(&bad)
        .args(["--scheme", "dc-opt"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let ch = dir.path().join("ch.json");
    assert!(wpt()
        .args([
            "channel-gen",
            "--tx-antennas",
            "1",
            "--rx-antennas",
            "1",
            "--tones",
            "1",
            "--seed",
            "1",
            "--out",
        ])
        .arg(&ch)
        .status()
        .unwrap()
        .success());
    let status = wpt()
        .args(["optimize", "--channel"])
        .arg(&ch)
        .args(["--scheme", "not-a-scheme"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Missing files are IO errors: exit 1.
    let status = wpt()
        .args(["optimize", "--channel", "/nonexistent/ch.json", "--scheme", "dc-opt"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn simulate_accepts_config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "M": [2],
            "N": [2],
            "Q": [1, 2],
            "schemes": ["dc-ass"],
            "realizations": 2,
            "seed": 5,
        })
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let status = wpt()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--realizations", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    // Two Q cells, one scheme, three realizations after the override.
    assert_eq!(text.trim().lines().count(), 7);
}
