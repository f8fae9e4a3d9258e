//! Black-box tests of the command-line surface.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sectionflow"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sectionflow-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn generate_single_scenario_writes_one_record() {
    let dir = temp_dir("gen1");
    let out = dir.join("scen.txt");
    let status = bin()
        .args([
            "generate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--seed",
            "3",
            "--count",
            "1",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", stderr(&status));
    let text = fs::read_to_string(&out).unwrap();
    let records = text.lines().filter(|l| l.starts_with("scenario ")).count();
    assert_eq!(records, 1);
}

#[test]
fn generate_rejects_bad_section_file_with_diagnostic() {
    let dir = temp_dir("genbad");
    let bad = dir.join("bad_sections.cfg");
    fs::write(&bad, "version 1\nsection 9 p_min=1 p_max=2 lines=(1,999)\n").unwrap();
    let out = bin()
        .args(["generate", "--case", "builtin:nine_bus", "--count", "1"])
        .arg("--sections")
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("scen.txt"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(
        msg.contains("section 9") && msg.contains("(1,999)"),
        "diagnostic must name the section and line pair: {msg}"
    );
}

#[test]
fn evaluate_with_missing_checkpoint_fails_cleanly() {
    let dir = temp_dir("evalmiss");
    let scen = dir.join("scen.txt");
    let gen = bin()
        .args([
            "generate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--seed",
            "3",
            "--count",
            "5",
        ])
        .arg("--out")
        .arg(&scen)
        .output()
        .unwrap();
    assert!(gen.status.success(), "{}", stderr(&gen));

    let out = bin()
        .args([
            "evaluate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
        ])
        .arg("--scenarios")
        .arg(&scen)
        .arg("--checkpoint")
        .arg(dir.join("nope.bin"))
        .arg("--out")
        .arg(dir.join("eval"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("nope.bin"),
        "error should name the missing path: {}",
        stderr(&out)
    );
}

#[test]
fn train_then_evaluate_roundtrip_produces_artifacts() {
    let dir = temp_dir("roundtrip");
    let scen = dir.join("scen.txt");
    assert!(bin()
        .args([
            "generate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--seed",
            "11",
            "--count",
            "8",
        ])
        .arg("--out")
        .arg(&scen)
        .status()
        .unwrap()
        .success());

    let run_dir = dir.join("run");
    let train = bin()
        .args([
            "train",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--network",
            "powerformer",
            "--steps",
            "150",
            "--batch",
            "16",
            "--d",
            "8",
            "--eval-interval",
            "50",
            "--eps-horizon",
            "100",
            "--seed",
            "5",
        ])
        .arg("--scenarios")
        .arg(&scen)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(train.status.success(), "{}", stderr(&train));
    for artifact in ["checkpoint.bin", "metrics.csv", "curve.svg"] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }
    let metrics = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,trailing_success_rate,loss,epsilon,wall_seconds"));
    assert_eq!(metrics.lines().count(), 1 + 3, "150 steps at interval 50");

    // evaluating the (barely trained) checkpoint is valid and writes artifacts
    let eval_dir = dir.join("eval");
    let eval = bin()
        .args([
            "evaluate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--network",
            "powerformer",
            "--d",
            "8",
        ])
        .arg("--scenarios")
        .arg(&scen)
        .arg("--checkpoint")
        .arg(run_dir.join("checkpoint.bin"))
        .arg("--out")
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert!(eval.status.success(), "{}", stderr(&eval));
    for artifact in ["report.txt", "per_scenario.csv", "embeddings.csv"] {
        assert!(eval_dir.join(artifact).exists(), "missing {artifact}");
    }
    let report = fs::read_to_string(eval_dir.join("report.txt")).unwrap();
    assert!(report.contains("success rate"));
    assert!(report.contains("inference per scenario"));
    let emb = fs::read_to_string(eval_dir.join("embeddings.csv")).unwrap();
    assert!(emb.starts_with("scenario,section,e0"));
    assert!(emb.lines().next().unwrap().ends_with("e7"), "d = 8 embedding width");
}

#[test]
fn evaluate_rejects_checkpoint_with_wrong_shapes() {
    let dir = temp_dir("shapes");
    let scen = dir.join("scen.txt");
    assert!(bin()
        .args([
            "generate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--seed",
            "11",
            "--count",
            "5",
        ])
        .arg("--out")
        .arg(&scen)
        .status()
        .unwrap()
        .success());
    let run_dir = dir.join("run");
    assert!(bin()
        .args([
            "train",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--steps",
            "0",
            "--d",
            "8",
        ])
        .arg("--scenarios")
        .arg(&scen)
        .arg("--out")
        .arg(&run_dir)
        .status()
        .unwrap()
        .success());

    // same checkpoint, wider network: shape mismatch
    let eval = bin()
        .args([
            "evaluate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--d",
            "16",
        ])
        .arg("--scenarios")
        .arg(&scen)
        .arg("--checkpoint")
        .arg(run_dir.join("checkpoint.bin"))
        .arg("--out")
        .arg(dir.join("eval"))
        .output()
        .unwrap();
    assert!(!eval.status.success());
    assert!(
        stderr(&eval).contains("shape mismatch"),
        "expected shape diagnostic: {}",
        stderr(&eval)
    );
}

#[test]
fn ablation_kinds_are_accepted() {
    let dir = temp_dir("ablation");
    let scen = dir.join("scen.txt");
    assert!(bin()
        .args([
            "generate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--seed",
            "2",
            "--count",
            "5",
        ])
        .arg("--out")
        .arg(&scen)
        .status()
        .unwrap()
        .success());
    for kind in ["powerformer_E", "powerformer_S", "powerformer_M", "concat", "soft_attention"] {
        let out = bin()
            .args([
                "train",
                "--case",
                "builtin:nine_bus",
                "--sections",
                "builtin:nine_bus",
                "--network",
                kind,
                "--steps",
                "40",
                "--batch",
                "8",
                "--d",
                "8",
                "--eval-interval",
                "20",
            ])
            .arg("--scenarios")
            .arg(&scen)
            .arg("--out")
            .arg(dir.join(kind))
            .output()
            .unwrap();
        assert!(out.status.success(), "{kind}: {}", stderr(&out));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = temp_dir("config");
    let scen = dir.join("scen.txt");
    assert!(bin()
        .args([
            "generate",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--seed",
            "2",
            "--count",
            "5",
        ])
        .arg("--out")
        .arg(&scen)
        .status()
        .unwrap()
        .success());
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "steps = 999999\nd = 8\nbatch = 8\neval-interval = 10\n").unwrap();
    // the flag cuts training to 20 steps; the config's d=8 still applies
    let out = bin()
        .args([
            "train",
            "--case",
            "builtin:nine_bus",
            "--sections",
            "builtin:nine_bus",
            "--steps",
            "20",
        ])
        .arg("--config")
        .arg(&cfg)
        .arg("--scenarios")
        .arg(&scen)
        .arg("--out")
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("20 steps"), "flag must win: {stdout}");
}

#[test]
fn paper_scale_generation_on_the_118_bus_case() {
    let dir = temp_dir("paper-scale");
    let out = dir.join("scen118.txt");
    let output = bin()
        .args([
            "generate",
            "--case",
            "../../data/case118.m",
            "--sections",
            "../../data/sections118.cfg",
            "--seed",
            "42",
            "--count",
            "1829",
        ])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let text = fs::read_to_string(&out).unwrap();
    let records = text.lines().filter(|l| l.starts_with("scenario ")).count();
    assert_eq!(records, 1829);
    let test_records = text
        .lines()
        .filter(|l| l.starts_with("scenario ") && l.contains("split=test"))
        .count();
    // ~10% held out by the id hash
    assert!(
        (150..=230).contains(&test_records),
        "test split size {test_records}"
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("1829 scenarios"), "{stdout}");
}

#[test]
fn solve_exports_bus_and_branch_tables() {
    let dir = temp_dir("solve");
    let out = bin()
        .args(["solve", "--case", "builtin:two_bus"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let bus = fs::read_to_string(dir.join("bus.csv")).unwrap();
    assert_eq!(bus.lines().count(), 3, "header plus two buses");
    let branch = fs::read_to_string(dir.join("branch.csv")).unwrap();
    assert!(branch.lines().nth(1).unwrap().starts_with("0,1,2,1,"));
}

#[test]
fn dc_solve_flag_is_honored() {
    let dir = temp_dir("dcsolve");
    let out = bin()
        .args(["solve", "--case", "builtin:bench30", "--dc"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("(dc)"));
}
