use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gazehead_core::corpus::load_corpus;
use gazehead_core::audio::MelConfig;
use gazehead_core::metrics::EvalReport;
use gazehead_core::motion::save_motion_file;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gazehead"))
}

fn run(args: &[&str], runs: &Path) -> Output {
    bin()
        .args(args)
        .arg("--runs-dir")
        .arg(runs)
        .output()
        .expect("spawn gazehead")
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["synth", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_error_has_parseable_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["evaluate", "--pred-dir", "/nonexistent", "--manifest", "/nonexistent/m.jsonl"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().unwrap();
    assert!(line.starts_with("error kind=io: "), "{line}");
}

#[test]
fn gradcheck_passes_and_writes_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gradcheck", "--seed", "7"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("PASS").count(), 7, "{stdout}");
    let runs: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].file_name().unwrap().to_string_lossy().ends_with("-gradcheck"));
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(runs[0].join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["subcommand"], "gradcheck");
    assert_eq!(cfg["seed"], 7);
    assert!(runs[0].join("gradcheck.json").exists());
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(
            &[
                "synth",
                "--speakers",
                "4",
                "--sessions",
                "2",
                "--seconds",
                "60",
                "--seed",
                "1",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            &runs,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        trees.push(tree(&out_dir));
    }
    assert_eq!(trees[0].len(), 8 + 8 + 4 + 1);
    assert!(trees[0] == trees[1]);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out_dir = dir.path().join("corpus");
    std::fs::write(
        &cfg,
        serde_json::json!({"speakers": 1, "sessions": 1, "seconds": 3, "out": out_dir}).to_string(),
    )
    .unwrap();
    let out = run(&["synth", "--config", cfg.to_str().unwrap()], &dir.path().join("runs"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(tree(&out_dir).len(), 4);

    std::fs::write(&cfg, r#"{"bogus_flag": 1}"#).unwrap();
    let out = run(&["synth", "--config", cfg.to_str().unwrap()], &dir.path().join("runs"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_self_comparison_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let corpus = dir.path().join("corpus");
    let out = run(
        &["synth", "--speakers", "2", "--sessions", "1", "--seconds", "12", "--out", corpus.to_str().unwrap()],
        &runs,
    );
    assert!(out.status.success());
    let manifest = corpus.join("manifest.jsonl");
    let style = dir.path().join("style.ckpt");
    let out = run(
        &[
            "pretrain-style",
            "--manifest",
            manifest.to_str().unwrap(),
            "--style-dim",
            "8",
            "--heads",
            "2",
            "--ff-dim",
            "16",
            "--layers",
            "1",
            "--epochs",
            "1",
            "--steps-per-epoch",
            "2",
            "--batch-size",
            "2",
            "--gap-min",
            "25",
            "--out",
            style.to_str().unwrap(),
        ],
        &runs,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // predictions are the ground-truth held-out spans, plus one orphan
    let sessions = load_corpus(&manifest, &MelConfig::default()).unwrap();
    let pred_dir = dir.path().join("pred");
    std::fs::create_dir_all(&pred_dir).unwrap();
    for s in &sessions {
        let (_, test) = s.split(0.75).unwrap();
        save_motion_file(&test.motion, pred_dir.join(format!("{}.csv", s.entry.session_id)), &[]).unwrap();
    }
    let mut orphan = sessions[0].motion.slice(0, 30);
    orphan.session_id = "nobody".into();
    save_motion_file(&orphan, pred_dir.join("orphan.csv"), &[]).unwrap();

    let eval = dir.path().join("eval");
    let out = run(
        &[
            "evaluate",
            "--pred-dir",
            pred_dir.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--style-ckpt",
            style.to_str().unwrap(),
            "--out",
            eval.to_str().unwrap(),
        ],
        &runs,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("warnings: 1"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nobody"));

    let agg: EvalReport = serde_json::from_slice(&std::fs::read(eval.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!((agg.mae, agg.vel, agg.mee), (0.0, 0.0, 0.0));
    assert!(agg.ce.unwrap().abs() < 1e-6);
    assert_eq!(agg.sim_score, 1.0);

    let raw: serde_json::Value = serde_json::from_slice(&std::fs::read(eval.join("aggregate.json")).unwrap()).unwrap();
    for key in ["mae", "vel", "mee", "ce", "bas", "saccades", "fixation", "compScore", "simScore", "all", "gaze", "head"] {
        assert!(raw.get(key).is_some(), "missing {key}");
    }

    let per: Vec<EvalReport> = sessions
        .iter()
        .map(|s| {
            let p = eval.join("reports").join(format!("{}.json", s.entry.session_id));
            serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
        })
        .collect();
    let mean_bas = per.iter().map(|r| r.bas).sum::<f64>() / per.len() as f64;
    let mean_fix = per.iter().map(|r| r.fixation).sum::<f64>() / per.len() as f64;
    assert!((agg.bas - mean_bas).abs() < 1e-12);
    assert!((agg.fixation - mean_fix).abs() < 1e-12);
    assert!(eval.join("table.txt").exists());
}

#[test]
fn pipeline_script_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/run_pipeline.sh");
    let out = Command::new("bash")
        .arg(&script)
        .arg(dir.path())
        .env("GAZEHEAD", env!("CARGO_BIN_EXE_gazehead"))
        .env("SPEAKERS", "2")
        .env("SESSIONS", "2")
        .env("SESSION_SECONDS", "16")
        .env("STYLE_EPOCHS", "1")
        .env("STYLE_STEPS", "2")
        .env("STYLE_BATCH", "4")
        .env("GEN_EPOCHS", "1")
        .env("STYLE_DIM", "8")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("eval/aggregate.json").exists());
    assert!(dir.path().join("corpus/features").is_dir());
    assert_eq!(std::fs::read_dir(dir.path().join("generated")).unwrap().count(), 4);
}
