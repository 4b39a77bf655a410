use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpc_core::cli::ModelBundle;

fn mpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpc"))
        .args(args)
        .env_remove("MPC_SEED")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let f = Self { _dir: dir, root };
        let ic = f.path("ic.csv");
        let out = mpc(&["generate", "--p", "4", "--n", "160", "--n-grid", "30", "--seed", "11", "--out", s(&ic)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::write(
            f.path("cfg.json"),
            r#"{"n_seq_ic": 20, "l_seq_ic": 80, "gamma_subsamples": 4}"#,
        )
        .unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn calibrate(&self, extra: &[&str]) -> PathBuf {
        let model = self.path("model.json");
        let mut args = vec![
            "calibrate", "--ic", s(&self.root.join("ic.csv")).to_owned().leak(), "--config",
            s(&self.root.join("cfg.json")).to_owned().leak(), "--arl0", "20", "--rho", "0.2", "--ns", "3", "--seed", "4",
            "--out", s(&model).to_owned().leak(),
        ];
        args.extend_from_slice(extra);
        let out = mpc(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        model
    }
}

fn stderr_error(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON: {line} ({e})"))
}

#[test]
fn calibrate_writes_bundle_that_round_trips() {
    let f = Fixture::new();
    let model = f.calibrate(&[]);
    let bytes = std::fs::read_to_string(&model).unwrap();
    let b = ModelBundle::from_json(&bytes).unwrap();
    assert_eq!(b.to_json().unwrap(), bytes);
    assert_eq!(b.channels, vec!["ch1", "ch2", "ch3", "ch4"]);
    assert_eq!(b.config.arl0, 20.0);
    assert_eq!(b.config.ewma_weight, 0.2);
    assert_eq!(b.sparsity_levels.len(), 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("model.report.json")).unwrap()).unwrap();
    assert!(report["control_limit"].as_f64().unwrap() > 0.0);
}

#[test]
fn monitor_clean_then_alarm_then_diagnose() {
    let f = Fixture::new();
    let model = f.calibrate(&[]);

    let ic = f.path("short.csv");
    let g = mpc(&["generate", "--p", "4", "--n", "2", "--n-grid", "30", "--seed", "11", "--draw", "7", "--out", s(&ic)]);
    assert!(g.status.success());
    let run_ic = f.path("ic.jsonl");
    let out = mpc(&["monitor", "--model", s(&model), "--stream", s(&ic), "--out", s(&run_ic)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<String> = std::fs::read_to_string(&run_ic).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(first["step_index"], 1);
    assert_eq!(first["obs_id"], "1");
    assert_eq!(first["lambda_s"].as_array().unwrap().len(), 3);
    assert_eq!(first["s_pvalues"].as_array().unwrap().len(), 3);

    let oc = f.path("oc.csv");
    let g = mpc(&[
        "generate", "--p", "4", "--n", "200", "--n-grid", "30", "--seed", "11", "--draw", "8", "--scenario", "IV",
        "--severity", "4", "--shift-after", "5", "--out", s(&oc),
    ]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    let run = f.path("oc.jsonl");
    let out = mpc(&["monitor", "--model", s(&model), "--stream", s(&oc), "--out", s(&run)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&run).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["signal"], true);
    assert_eq!(last["step_index"].as_u64().unwrap() as usize, text.lines().count());

    let diag = f.path("diag.json");
    let svg = f.path("lambda.svg");
    let out = mpc(&[
        "diagnose", "--model", s(&model), "--run", s(&run), "--fdr", "0.05", "--out", s(&diag), "--svg", s(&svg),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&diag).unwrap()).unwrap();
    let m = last["step_index"].as_u64().unwrap();
    assert_eq!(d["signal_step"].as_u64().unwrap(), m);
    let tau = d["change_point"].as_u64().unwrap();
    assert!(tau >= 1 && tau < m.max(2));
    assert_eq!(d["shifted_pairs"].as_array().unwrap().len(), d["shifted_channels"].as_array().unwrap().len());
    let svg = std::fs::read_to_string(&svg).unwrap();
    assert!(svg.contains("class=\"alarm\"") && svg.contains("class=\"change-point\""));

    let out = mpc(&["diagnose", "--model", s(&model), "--run", s(&run_ic), "--fdr", "0.05"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["error"]["kind"], "invalid_input");
}

#[test]
fn failures_exit_one_with_json_line() {
    let f = Fixture::new();
    let out = mpc(&["monitor", "--model", s(&f.path("missing.json")), "--stream", s(&f.path("ic.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["error"]["kind"], "io");

    let out = mpc(&["calibrate", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["error"]["kind"], "usage");

    let bad = f.path("bad.csv");
    std::fs::write(&bad, "obs_id,channel,time_index,value\n1,a,0,1\n1,a,1,x\n").unwrap();
    let out = mpc(&["calibrate", "--ic", s(&bad), "--out", s(&f.path("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_error(&out);
    assert_eq!(e["error"]["kind"], "format");
    assert!(e["error"]["message"].as_str().unwrap().contains("line 3"));

    let model = f.calibrate(&[]);
    let text = std::fs::read_to_string(&model).unwrap();
    let old = f.path("old.json");
    std::fs::write(&old, text.replacen("\"format_version\": 1", "\"format_version\": 0", 1)).unwrap();
    let out = mpc(&["monitor", "--model", s(&old), "--stream", s(&f.path("ic.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["error"]["kind"], "format");
}

#[test]
fn group_centering_is_stored_and_applied() {
    let f = Fixture::new();
    let map = f.path("groups.json");
    std::fs::write(&map, r#"{"ch1": "A", "ch2": "A", "ch3": "B", "ch4": "B"}"#).unwrap();
    let model = f.calibrate(&["--center-by-group", s(&map).to_owned().leak()]);
    let b = ModelBundle::load(&model).unwrap();
    let c = b.centering.expect("centering stored");
    assert_eq!(c.groups, vec!["A", "A", "B", "B"]);
    assert_eq!(c.means["A"].len(), 30);
}

#[test]
fn simulate_writes_report_and_csv() {
    let f = Fixture::new();
    let model = f.calibrate(&[]);
    let cfg = f.path("sim.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"p": 4, "n_grid": 30, "seed": 11}, "scenario": {"scenario": "IV", "n_el": 1, "severity": 4, "seed": 2},
            "n_seq": 4, "l_seq": 30}"#,
    )
    .unwrap();
    let (rep, csv) = (f.path("arl.json"), f.path("arl.csv"));
    let out = mpc(&["simulate", "--config", s(&cfg), "--model", s(&model), "--out", s(&rep), "--csv", s(&csv), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r["runs"].as_array().unwrap().len(), 4);
    assert_eq!(r["settings"]["seed"], 3);
    assert_eq!(r["settings"]["scenario"]["spec"]["n_el"], 1);
    let csv = std::fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("seq_id,rl,censored\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn seed_comes_from_environment() {
    let f = Fixture::new();
    let run = |seed: &str, name: &str| {
        let p = f.path(name);
        let out = Command::new(env!("CARGO_BIN_EXE_mpc"))
            .args(["generate", "--p", "2", "--n", "2", "--n-grid", "10", "--out", s(&p)])
            .env("MPC_SEED", seed)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("5", "a.csv"), run("5", "b.csv"));
    assert_ne!(run("5", "a.csv"), run("6", "c.csv"));
}
