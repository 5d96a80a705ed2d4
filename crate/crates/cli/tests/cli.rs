use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ecogear::vehicle::MotorModel;

fn ecogear(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecogear"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Short training so the command tests stay quick.
fn quick_config(dir: &Path) {
    fs::write(
        dir.join("cfg.json"),
        r#"{"train": {"epochs": 4}, "window_stride": 20, "network": {"hidden_width": 16}}"#,
    )
    .unwrap();
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_owned)
        .collect()
}

#[test]
fn fit_motor_reports_small_residual_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecogear(dir.path(), &["--out", "out", "fit-motor"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let pct: f64 = text
        .split('(')
        .nth(1)
        .and_then(|s| s.split('%').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(pct <= 5.0, "{text}");

    let json = fs::read_to_string(dir.path().join("out/motor.json")).unwrap();
    let motor: MotorModel = serde_json::from_str(&json).unwrap();
    assert!(motor.poly.is_some());
    assert_eq!(serde_json::to_string_pretty(&motor).unwrap(), json);

    // A config pointing at the fitted motor reuses its polynomial as is.
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"paths": {"motor": "out/motor.json"}}"#,
    )
    .unwrap();
    let o = ecogear(
        dir.path(),
        &["--config", "cfg.json", "--out", "again", "fit-motor"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_motor_config_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"paths": {"motor": "no/such/motor.json"}}"#,
    )
    .unwrap();
    let o = ecogear(dir.path(), &["--config", "cfg.json", "fit-motor"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/motor.json"), "{}", stderr(&o));

    let o = ecogear(dir.path(), &["--config", "absent.json", "gen-cycle"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.json"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ecogear(dir.path(), &["launch"]).status.code(), Some(2));
    assert_eq!(
        ecogear(dir.path(), &["--seed", "x", "train"]).status.code(),
        Some(2)
    );
    fs::write(dir.path().join("cfg.json"), r#"{"horizon": {"N": 0}}"#).unwrap();
    assert_eq!(
        ecogear(dir.path(), &["--config", "cfg.json", "train"])
            .status
            .code(),
        Some(2)
    );
    // compare without trained parameters
    let o = ecogear(dir.path(), &["--out", "empty", "compare"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("params.json"));
}

#[test]
fn gen_cycle_writes_nedc_and_accepts_custom_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let o = ecogear(dir.path(), &["--out", "out", "gen-cycle"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("out/cycle.csv")).len(), 1181);

    fs::write(dir.path().join("mine.csv"), "t,v\n0,0\n1,2\n2,4\n3,4\n").unwrap();
    let o = ecogear(
        dir.path(),
        &["--out", "mine", "--cycle", "mine.csv", "gen-cycle"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("mine/cycle.csv")).len(), 4);

    fs::write(dir.path().join("bad.csv"), "t,v\n0,0\n1,-2\n").unwrap();
    let o = ecogear(dir.path(), &["--cycle", "bad.csv", "gen-cycle"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn train_compare_bench_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    quick_config(dir.path());
    let base = ["--config", "cfg.json", "--seed", "42"];

    let o = ecogear(dir.path(), &[&base[..], &["--out", "a", "train"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("binarity gap"));
    assert_eq!(data_rows(&dir.path().join("a/loss.csv")).len(), 4);
    let o = ecogear(dir.path(), &[&base[..], &["--out", "b", "train"]].concat());
    assert!(o.status.success());
    assert_eq!(
        fs::read(dir.path().join("a/params.json")).unwrap(),
        fs::read(dir.path().join("b/params.json")).unwrap()
    );

    let o = ecogear(
        dir.path(),
        &[&base[..], &["--out", "a", "compare"]].concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("a/comparison.csv"));
    assert_eq!(rows.len(), 3);
    let methods: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["rule_based", "exact", "nn"]);
    let savings = |i: usize| -> f64 { rows[i].split(',').nth(2).unwrap().parse().unwrap() };
    assert!(savings(2) <= savings(1));
    assert_eq!(data_rows(&dir.path().join("a/gear_trace.csv")).len(), 1181);
    assert_eq!(
        data_rows(&dir.path().join("a/working_points.csv")).len(),
        3 * 1181
    );
    for svg in ["gear_trace.svg", "working_points.svg"] {
        let text = fs::read_to_string(dir.path().join("a").join(svg)).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    }

    let o = ecogear(
        dir.path(),
        &[&base[..], &["--out", "a", "bench", "--repetitions", "1"]].concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let timing = fs::read_to_string(dir.path().join("a/timing.csv")).unwrap();
    let header: Vec<&str> = timing.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"mean_ms") && header.contains(&"worst_ms"));
    assert_eq!(timing.lines().count(), 3);

    let o = ecogear(
        dir.path(),
        &[&base[..], &["--out", "a", "bench", "--repetitions", "0"]].concat(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mismatched_network_shape_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    quick_config(dir.path());
    let o = ecogear(dir.path(), &["--config", "cfg.json", "--out", "a", "train"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ecogear(dir.path(), &["--out", "a", "compare"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("network shape"));
}
