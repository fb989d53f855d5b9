use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"{
  "problem": {
    "form": "non_divergence",
    "profile": { "type": "power", "endpoint": "left", "k": 0.5 },
    "T": 1.0
  },
  "grid": { "N": 12, "Nt": 12 },
  "hum": { "epsilons": [1e-2, 1e-3, 1e-4] }
}"#;

fn degenctl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degenctl"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "typo.json",
        &MINIMAL.replace("\"grid\"", "\"gird\""),
    );
    let o = degenctl(d.path(), &["hum", "--config", "typo.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("gird") && err.contains("did you mean `grid`?"),
        "{err}"
    );

    write(d.path(), "k.json", &MINIMAL.replace("0.5", "2.5"));
    let o = degenctl(d.path(), &["hum", "--config", "k.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not null-controllable for K ≥ 2"));

    write(d.path(), "broken.json", "{ \"problem\": ");
    assert_eq!(
        degenctl(d.path(), &["hum", "--config", "broken.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        degenctl(d.path(), &["hum", "--config", "missing.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        degenctl(d.path(), &["frobnicate", "--config", "k.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn computational_failure_exits_with_one() {
    let d = tempfile::tempdir().unwrap();
    let capped = MINIMAL.replace(
        "\"epsilons\": [1e-2, 1e-3, 1e-4]",
        "\"epsilons\": [1e-2, 1e-3, 1e-4], \"cg_max_iter\": 1",
    );
    write(d.path(), "c.json", &capped);
    let o = degenctl(d.path(), &["hum", "--config", "c.json", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dump_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.json", MINIMAL);
    let o = degenctl(
        d.path(),
        &["hum", "--config", "c.json", "--seed", "9", "--dump-config"],
    );
    assert!(o.status.success());
    let dumped = String::from_utf8(o.stdout).unwrap();
    assert!(dumped.contains("\"seed\": 9"));
    assert!(dumped.contains("\"theta\": 1.0"));
    write(d.path(), "d.json", &dumped);
    let again = degenctl(d.path(), &["hum", "--config", "d.json", "--dump-config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), dumped);
    assert!(!d.path().join("out").exists());
}

#[test]
fn zero_initial_datum_costs_nothing() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "z.json",
        &MINIMAL.replace("\"T\": 1.0", "\"T\": 1.0, \"u0\": \"zero\""),
    );
    let o = degenctl(d.path(), &["hum", "--config", "z.json", "--out", "res"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("cost            = 0.000000e0"), "{text}");
    assert!(d.path().join("res/hum_trajectory.csv").exists());
}

#[test]
fn subcommands_write_inside_output_directory() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.json", MINIMAL);
    for (cmd, file) in [
        ("simulate", "simulate_trajectory.csv"),
        ("sweep", "sweep.csv"),
        ("compare-forms", "forms.csv"),
        ("verify", "run_config.json"),
    ] {
        let o = degenctl(d.path(), &[cmd, "--config", "c.json", "--out", "results"]);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(d.path().join("results").join(file).exists(), "{cmd}");
    }
    let sweep = degenctl(
        d.path(),
        &["sweep", "--config", "c.json", "--out", "results"],
    );
    assert!(String::from_utf8_lossy(&sweep.stdout).contains("signature: "));
    let mut entries: Vec<String> = fs::read_dir(d.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    entries.sort();
    assert_eq!(entries, vec!["c.json", "results"]);
}
