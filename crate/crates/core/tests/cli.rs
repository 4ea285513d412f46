use std::path::Path;
use std::process::{Command, Output};

fn neuram() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neuram"));
    c.env_remove("NEURAM_OUTPUT_DIR");
    c
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const QUICK: [&str; 8] = ["--epochs", "30", "--trials", "0", "--width", "4", "--n", "40"];

#[test]
fn lists_every_benchmark() {
    let s = ok(&neuram().args(["models", "list"]).output().unwrap());
    for name in ["parabola", "sin_parabola", "q1", "q2", "q3", "q_hf", "q_lf", "hartmann_u", "hartmann_b"] {
        assert!(s.lines().any(|l| l == name), "{name} missing");
    }
}

#[test]
fn environment_directory_and_flag_precedence() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    ok(&neuram()
        .args(["verify-theory", "--pairs", "20"])
        .env("NEURAM_OUTPUT_DIR", env_dir.path())
        .output()
        .unwrap());
    assert!(env_dir.path().join("theory.csv").exists());
    assert!(env_dir.path().join("report.json").exists());

    ok(&neuram()
        .args(["verify-theory", "--pairs", "20", "--output-dir"])
        .arg(flag_dir.path())
        .env("NEURAM_OUTPUT_DIR", env_dir.path().join("unused"))
        .output()
        .unwrap());
    assert!(flag_dir.path().join("theory.csv").exists());
    assert!(!env_dir.path().join("unused").exists());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = neuram().args(["train", "--model", "nope", "--output-dir"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "kind = \"mfmc\"\n").unwrap();
    let out = neuram().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());

    std::fs::write(&cfg, "kind = \"train\"\nn = \"many\"\n").unwrap();
    let out = neuram().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn train_then_regenerate_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(&neuram()
        .args(["train", "--model", "q3", "--seeds", "1,2"])
        .args(QUICK)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap());
    assert!(s.contains("train.csv"));
    let csv = read(&dir.path().join("train.csv"));
    assert_eq!(csv.lines().count(), 3, "{csv}");

    let again = tempfile::tempdir().unwrap();
    ok(&neuram()
        .args(["plot-data", "--report"])
        .arg(dir.path().join("report.json"))
        .arg("--output-dir")
        .arg(again.path())
        .output()
        .unwrap());
    assert_eq!(csv, read(&again.path().join("train.csv")));
}

#[test]
fn saved_artifact_feeds_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let art = dir.path().join("a.json");
    ok(&neuram()
        .args(["train", "--model", "q3", "--seeds", "3"])
        .args(QUICK)
        .arg("--save-artifact")
        .arg(&art)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap());
    assert!(art.exists());
    ok(&neuram()
        .args(["sensitivity", "--model", "q3", "--sobol-samples", "200", "--grid-size", "100", "--load-artifact"])
        .arg(&art)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap());
    let summary = read(&dir.path().join("sensitivity_summary.csv"));
    assert!(summary.lines().count() >= 3, "{summary}");
}
