use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgd-landscape"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn decay_study_writes_report_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin().args(["decay-study", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["command"], "decay-study");
    assert!(report["assertions"].as_array().unwrap().iter().all(|a| a["passed"] == true));
    assert!(out.join("decay_study.csv").exists());
    assert!(out.join("timing.json").exists());
}

#[test]
fn unknown_config_key_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "version = 1\ncommand = \"morse\"\nbogus = 3\n");
    let st = bin().arg("morse").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn mismatched_command_and_bad_version_are_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "version = 1\ncommand = \"morse\"\n");
    let st = bin().arg("fp").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let cfg = write(dir.path(), "v.toml", "version = 7\ncommand = \"morse\"\n");
    let st = bin().arg("morse").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let cfg = write(dir.path(), "f.toml", "version = 1\ncommand = \"morse\"\nfield = \"nope\"\n");
    let st = bin().arg("morse").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn verify_prints_one_line_per_criterion_and_echoes_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", "version = 1\ncommand = \"verify\"\n[verify]\nonly = [3, 13]\n");
    let out = dir.path().join("v");
    let o = bin()
        .arg("verify")
        .args(["--seed", "77", "--suite", "fast", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("criterion")).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.ends_with("PASS")));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 77);
    let results = report["results"].as_array().unwrap();
    assert!(results[0]["seed"].is_null());
    assert!(results[1]["seed"].is_u64());
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "version = 1\ncommand = \"simulate\"\nfield = \"quadratic_1d\"\ns = [0.1]\n[simulate]\nk_max = 30\nn_replicas = 200\n",
    );
    let out = dir.path().join("o");
    let run = || {
        let st = bin().arg("simulate").arg("--config").arg(&cfg).args(["--seed", "9", "--out"]).arg(&out).status().unwrap();
        assert_eq!(st.code(), Some(0));
        ["report.json", "ensemble_s0.1.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert!(run() == run());
}
