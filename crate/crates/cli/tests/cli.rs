use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use erase_core::report::rows_from_csv;
use erase_core::ModelStack;

fn erase_bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erase")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = erase_bin(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const GEN: [&str; 11] =
    ["gen-model", "--dim", "32", "--blocks", "8", "--hidden", "64", "--vocab", "128", "--seed", "7"];

fn gen(dir: &Path, out: &str, extra: &[&str]) {
    let mut args: Vec<&str> = GEN.to_vec();
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out]);
    ok(dir, &args);
}

fn write_config(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

#[test]
fn gen_model_writes_loadable_stack() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    let model = ModelStack::from_json(&fs::read_to_string(tmp.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(model.depth(), 8);
    assert!(tmp.path().join("m.json.manifest.json").exists());
}

#[test]
fn gen_model_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "a.json", &[]);
    gen(tmp.path(), "b.json", &[]);
    assert_eq!(fs::read(tmp.path().join("a.json")).unwrap(), fs::read(tmp.path().join("b.json")).unwrap());
}

#[test]
fn dim_one_is_rejected_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = erase_bin(
        tmp.path(),
        &["gen-model", "--dim", "1", "--blocks", "2", "--hidden", "4", "--vocab", "8", "--seed", "0", "--out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dim must be at least 2"), "{}", stderr(&out));
    assert!(!tmp.path().join("m.json").exists());
}

#[test]
fn missing_flag_is_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(erase_bin(tmp.path(), &["gen-model", "--dim", "4"]).status.code(), Some(2));
}

#[test]
fn unreadable_input_is_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.json", r#"{"pairs":[{"target":[1],"anchor":[2]}],"method":"erasepro"}"#);
    let out = erase_bin(
        tmp.path(),
        &["erase", "--model", "missing.json", "--config", "c.json", "--out", "e.json", "--report", "r"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn erasepro_reports_one_row_per_edited_projection() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    write_config(tmp.path(), "c.json", r#"{"pairs":[{"target":[1,2,3,4,5,6],"anchor":[7,8,9,10,11,12]}]}"#);
    ok(
        tmp.path(),
        &["erase", "--model", "m.json", "--config", "c.json", "--method", "erasepro", "--out", "e.json", "--report", "r.csv"],
    );
    let rows = rows_from_csv(&fs::read_to_string(tmp.path().join("r.csv")).unwrap()).unwrap();
    // 7 self-attention blocks with three projections each, plus the sink's two
    assert_eq!(rows.len(), 7 * 3 + 2);
    for r in &rows {
        let (pre, post) = (r.residual_pre.unwrap(), r.residual_post.unwrap());
        assert!(post <= 1e-9 * (1.0 + pre), "{r:?}");
    }
    for name in ["r.json", "r.manifest.json", "e.json"] {
        assert!(tmp.path().join(name).exists(), "{name}");
    }
}

#[test]
fn identical_target_and_anchor_leave_model_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    write_config(tmp.path(), "c.json", r#"{"pairs":[{"target":[3,4,5],"anchor":[3,4,5]}],"method":"erasepro"}"#);
    ok(tmp.path(), &["erase", "--model", "m.json", "--config", "c.json", "--out", "e.json", "--report", "r"]);
    assert_eq!(fs::read(tmp.path().join("m.json")).unwrap(), fs::read(tmp.path().join("e.json")).unwrap());
}

#[test]
fn out_of_vocab_token_is_exit_2_naming_the_id() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    write_config(tmp.path(), "c.json", r#"{"pairs":[{"target":[1,500],"anchor":[2,3]}],"method":"erasepro"}"#);
    let out = erase_bin(tmp.path(), &["erase", "--model", "m.json", "--config", "c.json", "--out", "e.json", "--report", "r"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("500"), "{}", stderr(&out));
    assert!(!tmp.path().join("e.json").exists());
}

#[test]
fn inconsistent_duplicates_exit_4_with_layer() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &[
            "gen-model", "--dim", "6", "--blocks", "2", "--hidden", "8", "--vocab", "16", "--seed", "3", "--kinds",
            "linear_chain", "--out", "m.json",
        ],
    );
    // token 1 must map to both 2 and 3: no weight can satisfy that
    write_config(tmp.path(), "c.json", r#"{"pairs":[{"target":[1,1],"anchor":[2,3]}],"method":"erasepro"}"#);
    let out = erase_bin(tmp.path(), &["erase", "--model", "m.json", "--config", "c.json", "--out", "e.json", "--report", "r"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("layer 1"), "{}", stderr(&out));
}

#[test]
fn output_may_not_overwrite_input() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    let before = fs::read(tmp.path().join("m.json")).unwrap();
    write_config(tmp.path(), "c.json", r#"{"pairs":[{"target":[1],"anchor":[2]}],"method":"erasepro"}"#);
    let out = erase_bin(tmp.path(), &["erase", "--model", "m.json", "--config", "c.json", "--out", "m.json", "--report", "r"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read(tmp.path().join("m.json")).unwrap(), before);
}

#[test]
fn inspect_self_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    ok(tmp.path(), &["inspect", "--model-a", "m.json", "--model-b", "m.json", "--report", "i"]);
    let rows = rows_from_csv(&fs::read_to_string(tmp.path().join("i.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 23);
    assert!(rows.iter().all(|r| r.delta_fro == Some(0.0) && r.delta_rel == Some(0.0)));
}

#[test]
fn inject_then_probe_degrades() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    ok(tmp.path(), &["inject", "--model", "m.json", "--layer", "3", "--projection", "W_V", "--alpha", "0.2", "--out", "inj.json"]);
    fs::write(tmp.path().join("p.json"), r#"{"prompts":[[1,2,3],[4,5,6,7],[9]]}"#).unwrap();
    ok(tmp.path(), &["probe", "--edited", "inj.json", "--baseline", "m.json", "--prompts", "p.json", "--report", "pr"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("pr.json")).unwrap()).unwrap();
    assert!(report["degradation"].as_f64().unwrap() > 0.0);
    assert!(tmp.path().join("pr.manifest.json").exists());
}

#[test]
fn inject_rejects_unknown_projection() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    let out = erase_bin(tmp.path(), &["inject", "--model", "m.json", "--layer", "1", "--projection", "Q_p", "--alpha", "0.2", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn linear_chain_trace_collapses_after_first_stage() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &[
            "gen-model", "--dim", "8", "--blocks", "5", "--hidden", "8", "--vocab", "32", "--seed", "11", "--kinds",
            "linear_chain", "--out", "m.json",
        ],
    );
    write_config(tmp.path(), "c.json", r#"{"pairs":[{"target":[1,2,3],"anchor":[4,5,6]}],"method":"erasepro"}"#);
    ok(tmp.path(), &["erase", "--model", "m.json", "--config", "c.json", "--out", "e.json", "--report", "r"]);
    ok(tmp.path(), &["trace", "--pre", "m.json", "--post", "e.json", "--config", "c.json", "--report", "t", "--svg"]);
    let rows = rows_from_csv(&fs::read_to_string(tmp.path().join("t.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].dist_fro.unwrap() > 0.0);
    for r in &rows[1..] {
        assert!(r.dist_fro.unwrap() <= 1e-9, "{r:?}");
    }
    assert!(tmp.path().join("t.dist.svg").exists());
}

#[test]
fn timing_flag_fills_duration_only_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "m.json", &[]);
    let read = |p: &str| -> serde_json::Value { serde_json::from_str(&fs::read_to_string(tmp.path().join(p)).unwrap()).unwrap() };
    assert!(read("m.json.manifest.json")["wall_clock_ms"].is_null());
    gen(tmp.path(), "t.json", &["--timing"]);
    assert!(read("t.json.manifest.json")["wall_clock_ms"].is_u64());
}
