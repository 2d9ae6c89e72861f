use std::path::Path;
use std::process::{Command, Output};

fn htp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run htp")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn demo() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = htp(dir.path(), &["demo", "init", "."]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir
}

const HTR38: &str = "HTR-38-M-20240520";
const CASE_45M: &str = "HTR-45-M-20240601";

#[test]
fn eval_run_then_stats_and_export() {
    let dir = demo();
    let out = htp(dir.path(), &["eval", "run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("evaluated 307 of 307"));

    let stats = htp(dir.path(), &["eval", "stats"]);
    assert_eq!(code(&stats), 0);
    let csv = std::fs::read_to_string(dir.path().join("store/eval/stats.csv")).unwrap();
    assert_eq!(stdout(&stats), csv);

    let out = htp(dir.path(), &["export", "--format", "json", "--out", "table.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("table.json")).unwrap()).unwrap();
    assert_eq!(rows.last().unwrap()["group"], "OVERALL");
    assert_eq!(rows.last().unwrap()["cases"], 307);

    // nothing is overwritten without --force
    assert_eq!(code(&htp(dir.path(), &["eval", "run"])), 1);
    assert_eq!(code(&htp(dir.path(), &["export", "--format", "json", "--out", "table.json"])), 1);
    assert_eq!(code(&htp(dir.path(), &["--force", "eval", "run"])), 0);
}

#[test]
fn assess_is_deterministic_across_forced_reruns() {
    let dir = demo();
    let bundle = dir.path().join("store/cases").join(HTR38).join("bundle.json");
    assert_eq!(code(&htp(dir.path(), &["assess", HTR38])), 0);
    let first = std::fs::read(&bundle).unwrap();
    let rerun = htp(dir.path(), &["assess", HTR38]);
    assert_eq!(code(&rerun), 1);
    assert!(stderr(&rerun).contains("--force"));
    assert_eq!(code(&htp(dir.path(), &["--force", "assess", HTR38])), 0);
    assert_eq!(std::fs::read(&bundle).unwrap(), first);
}

#[test]
fn fuse_passes_and_principle_failure_exits_3() {
    let dir = demo();
    let out = htp(dir.path(), &["fuse", CASE_45M]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("principles 4/4"));

    // strip the merger's recommendations
    let script = dir.path().join("mocks/merger-llm.json");
    let mut entries: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(&script).unwrap()).unwrap();
    for e in &mut entries {
        let text = e["response_text"].as_str().unwrap();
        let mut draft: serde_json::Value = serde_json::from_str(text).unwrap();
        draft["recommendations"] = serde_json::json!([]);
        e["response_text"] = serde_json::Value::String(draft.to_string());
    }
    std::fs::write(&script, serde_json::to_string(&entries).unwrap()).unwrap();
    let out = htp(dir.path(), &["--force", "fuse", CASE_45M]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("Practicality"));
}

#[test]
fn backend_failure_exits_2() {
    let dir = demo();
    std::fs::write(dir.path().join("mocks/listener-llm.json"), "[]").unwrap();
    let out = htp(dir.path(), &["mock", "replay", "assess", HTR38]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(dir.path().join("store/cases").join(HTR38).join("partial.json").is_file());
}

#[test]
fn invalid_config_exits_1_before_any_write() {
    let dir = demo();
    let cfg = dir.path().join("htp.toml");
    let raw = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg, raw.replace("tau = 0.8", "tau = 1.5")).unwrap();
    let out = htp(dir.path(), &["fuse", CASE_45M]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("fusion.tau"));
    assert!(!dir.path().join("store/cases").join(CASE_45M).join("fusion").exists());
    let missing = htp(dir.path(), &["--config", "nope.toml", "eval", "run"]);
    assert_eq!(code(&missing), 1);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&htp(dir.path(), &["bogus"])), 1);
    assert_eq!(code(&htp(dir.path(), &["--parallelism", "0", "eval", "run"])), 1);
    assert_eq!(code(&htp(dir.path(), &["--help"])), 0);
}

#[test]
fn schema_check_and_case_commands() {
    let dir = demo();
    let out = htp(dir.path(), &["schema", "check", "--catalog"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let leaves: usize = text
        .split_whitespace()
        .nth(2)
        .and_then(|n| n.parse().ok())
        .expect("leaf count");
    assert!(leaves >= 150);
    assert!(text.lines().count() > leaves);

    std::fs::write(
        dir.path().join("obs.json"),
        r#"{"case_id":"HTR-38-M-20240520","schema_version":"htp-observation/1.0","values":{"house.bogus":1},"source":"x"}"#,
    )
    .unwrap();
    let out = htp(dir.path(), &["schema", "check", "--observation", "obs.json"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("house.bogus"));

    std::fs::copy(
        dir.path().join("store/cases").join(HTR38).join("image.png"),
        dir.path().join("d.png"),
    )
    .unwrap();
    let add = ["case", "add", "--id", "HTR-9-F-20240301", "--image", "d.png", "--note", "pupil"];
    assert_eq!(code(&htp(dir.path(), &add)), 0);
    assert_eq!(code(&htp(dir.path(), &add)), 1);
    let list = stdout(&htp(dir.path(), &["case", "list"]));
    assert!(list.lines().any(|l| l == "HTR-9-F-20240301"));
    assert_eq!(list.lines().count(), 310);
}

#[test]
fn demo_init_refuses_existing_workspace() {
    let dir = demo();
    assert_eq!(code(&htp(dir.path(), &["demo", "init", "."])), 1);
    assert_eq!(code(&htp(dir.path(), &["--force", "demo", "init", "."])), 0);
}
