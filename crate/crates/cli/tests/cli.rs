use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn heatlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heatlab"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(config: &Path, out: &Path) -> Output {
    heatlab()
        .args(["run", "--threads", "1", "--config"])
        .arg(config)
        .arg("--output")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn list_prints_labeled_catalog() {
    let out = heatlab().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for label in ["Thm 2.1", "Thm 2.2", "Def 3.1", "Thm 4.1"] {
        assert!(text.contains(&format!("[{label}]")), "missing {label} in\n{text}");
    }
    let entries = text.lines().filter(|l| l.contains('[')).count();
    assert!(entries >= 6);
    assert_eq!(text.matches("requires:").count(), entries);
}

#[test]
fn free_kernel_config_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&repo_config("free_kernel.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("free_kernel_kernel.csv")).unwrap();
    assert!(csv.starts_with("x,t,level_1,level_2,level_4\n"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("free_kernel_report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["experiment"], "kernel");
    assert_eq!(json["config"]["grid"]["points"], 129);
    assert_eq!(json["result"]["converged"], true);
}

#[test]
fn missing_grid_block_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(repo_config("free_kernel.toml")).unwrap();
    let start = text.find("[grid]").unwrap();
    let end = text.find("[time]").unwrap();
    let broken = format!("{}{}", &text[..start], &text[end..]);
    let cfg = write_config(dir.path(), "broken.toml", &broken);
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[grid]"));
}

#[test]
fn unparsable_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "experiment = \"teleport\"\n");
    assert_eq!(run(&cfg, dir.path()).status.code(), Some(2));
}

#[test]
fn supercritical_bounds_exit_3_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&repo_config("supercritical_bounds.toml"), dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ladder divergence"));
}

#[test]
fn ground_state_without_form_bound_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gs.toml",
        r#"
experiment = "positivity"
[grid]
dim = 3
half_width = 2.0
points = 24
[potential]
kind = "inverse_square"
a = 1.0
support = { radius = 1.5 }
[positivity]
mode = "ground_state"
refinements = [12, 24, 48]
"#,
    );
    let out = run(&cfg, dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hypothesis not met"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = repo_config("random_flow_q.toml");
    assert!(run(&cfg, a.path()).status.success());
    let out = heatlab()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(b.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["random_q_report.json", "random_q_q.csv", "random_q_flow.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = heatlab()
        .args(["run", "--threads", "0", "--config"])
        .arg(repo_config("free_kernel.toml"))
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
