use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use mcd_core::cli::{run, scm_checks, Cli, TrainSummary, CHECK_TOLERANCE};
use mcd_core::eval::MetricsReport;

fn mcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcd"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_in_process(args: &[&str]) -> (u8, String) {
    let cli = Cli::try_parse_from(std::iter::once("mcd").chain(args.iter().copied())).unwrap();
    let mut buf = Vec::new();
    let code = run(cli, &mut buf).unwrap();
    (code, String::from_utf8(buf).unwrap())
}

const TOY: &str = r#"{"nodes": ["U", "X_T", "X_S", "Y_S"], "edges": [["U", "X_T"], ["U", "X_S"], ["X_S", "Y_S"]]}"#;

#[test]
fn scm_verify_passes_and_perturbation_fails() {
    let o = mcd(&["scm-verify"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    assert!(text.contains("4/4 checks passed"), "{text}");
    assert!(text.contains("0.756"));

    let o = mcd(&["scm-verify", "--perturb"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("1/4 checks passed"));
    assert!(!o.stderr.is_empty());
}

#[test]
fn scm_checks_agree_with_independent_arithmetic() {
    let checks = scm_checks(0.9).unwrap();
    let want = [0.5, 0.9, 0.82, 0.756];
    for (c, w) in checks.iter().zip(want) {
        assert!(
            (c.computed - w).abs() <= CHECK_TOLERANCE,
            "{}: {}",
            c.query,
            c.computed
        );
        assert!(c.passed());
    }
    let perturbed = scm_checks(0.8).unwrap();
    assert_eq!(perturbed.iter().filter(|c| c.passed()).count(), 1);
    assert!((perturbed[3].computed - 0.644).abs() < 1e-12);
}

#[test]
fn dsep_check_reports_status_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("toy.json");
    std::fs::write(&g, TOY).unwrap();
    let g = g.to_str().unwrap();

    let (code, text) = run_in_process(&["dsep-check", g, "--a", "X_T", "--b", "Y_S"]);
    assert_eq!(code, 0);
    assert_eq!(text, "d-connected\npath: X_T <- U -> X_S -> Y_S\n");
    let (_, text) = run_in_process(&["dsep-check", g, "--a", "X_T", "--b", "Y_S", "--c", "X_S"]);
    assert_eq!(text, "d-separated\n");
    let (_, text) = run_in_process(&["dsep-check", g, "--a", "X_T,U", "--b", "Y_S", "--c", "X_S"]);
    assert_eq!(text, "d-separated\n");

    let o = mcd(&["dsep-check", g, "--a", "Nope", "--b", "Y_S"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Nope"));

    let cyclic = dir.path().join("cyc.json");
    std::fs::write(
        &cyclic,
        r#"{"nodes": ["A", "B"], "edges": [["A", "B"], ["B", "A"]]}"#,
    )
    .unwrap();
    let o = mcd(&[
        "dsep-check",
        cyclic.to_str().unwrap(),
        "--a",
        "A",
        "--b",
        "B",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycle"));
}

#[test]
fn generate_writes_three_splits() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("corpus.toml");
    std::fs::write(&spec, "n_examples = 200\nseed = 3\nnoise_token_count = 4\n").unwrap();
    let out = dir.path().join("data");
    let (code, text) = run_in_process(&[
        "generate",
        spec.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(text.lines().count(), 3);
    let count = |name: &str| {
        std::fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(
        (
            count("train.jsonl"),
            count("dev.jsonl"),
            count("test.jsonl")
        ),
        (160, 20, 20)
    );

    let first = std::fs::read(out.join("train.jsonl")).unwrap();
    run_in_process(&[
        "generate",
        spec.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(first, std::fs::read(out.join("train.jsonl")).unwrap());
    run_in_process(&[
        "generate",
        spec.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert_ne!(first, std::fs::read(out.join("train.jsonl")).unwrap());
}

fn write_run_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 2
out_dir = "out"

[corpus]
n_examples = 400
noise_token_count = 4
seed = 1

[training]
objective = "mmi"
embed_dim = 6
hidden_dim = 6
max_epochs = 2
patience = 2
batch_size = 32
learning_rate = 0.005
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn train_eval_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run_config(dir.path());
    let o = mcd(&[
        "train",
        cfg.to_str().unwrap(),
        "--objective",
        "mcd-kl",
        "--sparsity",
        "0.25",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).starts_with("mcd-kl: best epoch"));

    let run_dir = dir.path().join("out");
    for f in [
        "metrics.csv",
        "config.toml",
        "checkpoint.json",
        "summary.json",
    ] {
        assert!(run_dir.join(f).exists(), "missing {f}");
    }
    let summary: TrainSummary =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.seed, 2);
    assert_eq!(summary.epochs_run, 2);
    let test = summary.test.unwrap();
    assert_eq!(test.examples, 40);
    let saved = std::fs::read_to_string(run_dir.join("config.toml")).unwrap();
    assert!(saved.contains("sparsity = 0.25"));
    assert_eq!(
        std::fs::read_to_string(run_dir.join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    // evaluate the checkpoint on a generated split
    let spec = dir.path().join("c.toml");
    std::fs::write(&spec, "n_examples = 400\nnoise_token_count = 4\nseed = 1\n").unwrap();
    let data = dir.path().join("data");
    run_in_process(&[
        "generate",
        spec.to_str().unwrap(),
        "-o",
        data.to_str().unwrap(),
    ]);
    let ck = run_dir.join("checkpoint.json");
    let test_file = data.join("test.jsonl");
    let (code, json) = run_in_process(&["eval", ck.to_str().unwrap(), test_file.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report: MetricsReport = serde_json::from_str(&json).unwrap();
    // the same split the training run scored
    assert_eq!(report.f1, test.f1);
    assert_eq!(report.accuracy, test.accuracy);
    assert!(report.full_input_accuracy.is_some());

    let html = dir.path().join("r.html");
    let (code, text) = run_in_process(&[
        "render",
        ck.to_str().unwrap(),
        test_file.to_str().unwrap(),
        html.to_str().unwrap(),
        "--limit",
        "5",
    ]);
    assert_eq!(code, 0);
    assert!(text.starts_with("wrote 5 examples"));
    assert_eq!(
        std::fs::read_to_string(&html)
            .unwrap()
            .matches("class=\"ex\"")
            .count(),
        5
    );
}

#[test]
fn repeated_training_writes_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run_config(dir.path());
    let logs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = mcd(&["train", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0));
            std::fs::read(out.join("metrics.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn bad_inputs_exit_with_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run_config(dir.path());
    let o = mcd(&["train", cfg.to_str().unwrap(), "--sparsity", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sparsity"));

    let o = mcd(&["train", cfg.to_str().unwrap(), "--objective", "bogus"]);
    assert_eq!(o.status.code(), Some(2));

    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "[training]\nobjective = \"mmi\"\n").unwrap();
    let o = mcd(&["train", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[corpus]"));

    let o = mcd(&["eval", "/nonexistent/ck.json", "/nonexistent/d.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}
