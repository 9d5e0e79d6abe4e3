use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stackrnn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stackrnn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn quick_config(dir: &Path) -> String {
    let p = dir.join("quick.json");
    fs::write(&p, r#"{"max_epochs": 2, "trials": 2}"#).unwrap();
    p.display().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &[],
        &["train", "--task", "nope"],
        &[
            "experiment",
            "--task",
            "xor",
            "--controller",
            "lstm",
            "--buffered",
        ],
        &["experiment", "--task", "reversal", "--trials", "0"],
        &[
            "train",
            "--task",
            "parenthesis",
            "--controller",
            "linear",
            "--buffered",
        ],
    ];
    for args in cases {
        let o = stackrnn(args, dir.path());
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn generate_writes_three_splits() {
    let dir = tempfile::tempdir().unwrap();
    let o = stackrnn(
        &[
            "generate", "--task", "formula", "--seed", "3", "--out", "data",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    for split in ["train", "dev", "test"] {
        let p = dir.path().join(format!("data/formula.{split}.3.jsonl"));
        let lines = fs::read_to_string(&p).unwrap().lines().count();
        let want = match split {
            "train" => 800,
            "dev" => 100,
            _ => 1000,
        };
        assert_eq!(lines, want, "{}", p.display());
    }
}

#[test]
fn train_eval_trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let o = stackrnn(
        &[
            "train",
            "--task",
            "formula",
            "--controller",
            "lstm",
            "--config",
            &cfg,
            "--out",
            "runs",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = dir.path().join("runs/formula-lstm-stack.ckpt");
    assert!(ckpt.exists());
    let result: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("runs/formula-lstm-stack.result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(result["dev_history"].as_array().unwrap().len(), 2);

    let ckpt = ckpt.display().to_string();
    let o = stackrnn(
        &[
            "eval",
            "--checkpoint",
            &ckpt,
            "--task",
            "formula",
            "--split",
            "dev",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    // Evaluating the checkpoint reproduces the final dev accuracy recorded in training.
    let dev = result["final_dev"].as_f64().unwrap();
    assert!(
        stdout(&o).contains(&format!("{:.2}%", 100.0 * dev)),
        "{}",
        stdout(&o)
    );

    let o = stackrnn(
        &["eval", "--checkpoint", &ckpt, "--task", "xor"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));

    let o = stackrnn(
        &[
            "trace",
            "--checkpoint",
            &ckpt,
            "--task",
            "formula",
            "--input",
            "T F ∧ T ∨",
            "--out",
            "tr",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("tr/trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(dir.path().join("tr/trace.pop.pgm").exists());
    assert!(stdout(&o).contains("prediction:"));
}

#[test]
fn experiment_writes_results_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let o = stackrnn(
        &[
            "experiment",
            "--task",
            "formula",
            "--controller",
            "lstm",
            "--no-stack",
            "--config",
            &cfg,
            "--out",
            "exp",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("exp/results.json")).unwrap())
            .unwrap();
    let row = &results[0];
    assert_eq!(row["condition"]["task"], "formula");
    assert_eq!(row["condition"]["stack"], false);
    assert_eq!(row["trials"].as_array().unwrap().len(), 2);
    assert!(row["summary"]["test"]["median"].is_number());
    assert!(dir
        .path()
        .join("exp/formula-lstm-nostack/trial-1.ckpt")
        .exists());
    let table = fs::read_to_string(dir.path().join("exp/table.txt")).unwrap();
    assert!(table.lines().nth(2).unwrap().starts_with("formula"));
}
