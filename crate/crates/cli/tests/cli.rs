//! End-to-end checks of the `met` binary: run-directory artifacts,
//! reproducibility from stored configs, exit codes.

use std::path::Path;
use std::process::Command;

fn met() -> Command {
    Command::new(env!("CARGO_BIN_EXE_met"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn pretrain_writes_run_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = met()
        .args(["pretrain", "--preset", "toy", "--n-per-class", "40", "--epochs", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["resolved_config.txt", "manifest.txt", "metrics.csv", "timings.csv", "checkpoint_latest.json", "train_state.json"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let metrics = read(&out.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 4, "header + one line per epoch");
    assert!(metrics.starts_with("epoch,loss_std,loss_adv,loss_total"));
}

#[test]
fn rerun_from_resolved_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let status = met()
        .args(["pretrain", "--preset", "toy", "--n-per-class", "30", "--epochs", "2", "--seed", "5"])
        .arg("--out")
        .arg(&a)
        .status()
        .unwrap();
    assert!(status.success());
    let status = met()
        .arg("pretrain")
        .arg("--config")
        .arg(a.join("resolved_config.txt"))
        .arg("--out")
        .arg(&b)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(b.join("metrics.csv")).unwrap(),
        "metrics must reproduce byte for byte"
    );
    assert_eq!(read(&a.join("resolved_config.txt")), read(&b.join("resolved_config.txt")));
}

#[test]
fn met_s_variant_zeroes_adversarial_loss() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = met()
        .args([
            "pretrain", "--preset", "toy", "--n-per-class", "30", "--epochs", "2", "--variant",
            "met-s",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = read(&out.join("metrics.csv"));
    for line in metrics.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2], "0", "loss_adv column must be zero under met-s");
    }
}

#[test]
fn toy_study_emits_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let n = 25usize;
    let epochs = 2usize;
    let status = met()
        .args(["toy-study", "--n-per-class", &n.to_string(), "--epochs", &epochs.to_string()])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let raw = read(&out.join("raw_2d.csv"));
    let reps = read(&out.join("representations_2d.csv"));
    let dist = read(&out.join("distance_vs_epoch.csv"));
    assert_eq!(raw.lines().count(), 1 + 2 * n);
    assert_eq!(reps.lines().count(), 1 + 2 * n);
    // Distance rows: epoch 0 (initialization) through the final epoch.
    assert_eq!(dist.lines().count(), 1 + epochs + 1);
}

#[test]
fn finetune_eval_baselines_share_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("pre");
    assert!(met()
        .args(["pretrain", "--preset", "toy", "--n-per-class", "30", "--epochs", "2"])
        .arg("--out")
        .arg(&pre)
        .status()
        .unwrap()
        .success());

    let mut headers = Vec::new();
    for (tag, extra) in [
        ("encoder", vec![]),
        ("met-r", vec!["--baseline", "met-r"]),
        ("rfg", vec!["--baseline", "rfg"]),
        ("raw", vec!["--baseline", "raw-mlp"]),
    ] {
        let out = dir.path().join(tag);
        let mut cmd = met();
        cmd.args([
            "finetune-eval",
            "--preset",
            "toy",
            "--n-per-class",
            "30",
            "--head-epochs",
            "5",
        ])
        .arg("--checkpoint")
        .arg(pre.join("checkpoint_latest.json"))
        .args(&extra)
        .arg("--out")
        .arg(&out);
        assert!(cmd.status().unwrap().success(), "{tag} failed");
        let report = read(&out.join("report.csv"));
        headers.push(report.lines().next().unwrap().to_string());
        assert_eq!(report.lines().count(), 2);
    }
    assert!(headers.windows(2).all(|w| w[0] == w[1]), "same report schema for all paths");
}

#[test]
fn label_fraction_flag_subsamples_training_rows() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("pre");
    assert!(met()
        .args(["pretrain", "--preset", "toy", "--n-per-class", "50", "--epochs", "1"])
        .arg("--out")
        .arg(&pre)
        .status()
        .unwrap()
        .success());
    let out = dir.path().join("ft");
    assert!(met()
        .args([
            "finetune-eval", "--preset", "toy", "--n-per-class", "50", "--head-epochs", "3",
            "--label-fraction", "0.2",
        ])
        .arg("--checkpoint")
        .arg(pre.join("checkpoint_latest.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let report = read(&out.join("report.csv"));
    let row = report.lines().nth(1).unwrap();
    // 100 rows, test fraction 0.2 -> 80 train rows; 20% of those = 16.
    let train_rows: usize = row.split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(train_rows, 16);
}

#[test]
fn export_reps_writes_csv_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("pre");
    assert!(met()
        .args(["pretrain", "--preset", "toy", "--n-per-class", "20", "--epochs", "1"])
        .arg("--out")
        .arg(&pre)
        .status()
        .unwrap()
        .success());
    let reps = dir.path().join("reps.csv");
    assert!(met()
        .args(["finetune-eval", "--preset", "toy", "--n-per-class", "20", "--head-epochs", "3"])
        .arg("--checkpoint")
        .arg(pre.join("checkpoint_latest.json"))
        .arg("--export-reps")
        .arg(&reps)
        .arg("--out")
        .arg(dir.path().join("ft"))
        .status()
        .unwrap()
        .success());
    let text = read(&reps);
    let header = text.lines().next().unwrap();
    // Concat mode on the toy model: 10 * (8 + 1) = 90 columns plus label.
    assert!(header.starts_with("rep_0,"));
    assert!(header.ends_with(",label"));
    assert_eq!(header.split(',').count(), 91);
    assert_eq!(text.lines().count(), 1 + 40);
}

#[test]
fn exit_codes_for_config_and_data_errors() {
    // Unknown preset: config error -> 1.
    let code = met()
        .args(["pretrain", "--preset", "bogus", "--out", "/tmp/never"])
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 1);

    // Missing dataset file: data error -> 2.
    let dir = tempfile::tempdir().unwrap();
    let code = met()
        .args(["pretrain", "--dataset", "/definitely/not/here.csv", "--epochs", "1"])
        .arg("--out")
        .arg(dir.path().join("x"))
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 2);

    // Bad flag usage: config error -> 1.
    let code = met().args(["pretrain", "--epochs", "NaNcy"]).status().unwrap().code().unwrap();
    assert_eq!(code, 1);
}

#[test]
fn resume_continues_to_target_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(met()
        .args(["pretrain", "--preset", "toy", "--n-per-class", "30", "--epochs", "2"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    // Same directory, higher target, resume: two more epochs appended.
    assert!(met()
        .args([
            "pretrain", "--preset", "toy", "--n-per-class", "30", "--epochs", "4", "--resume",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let metrics = read(&out.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 5, "header + epochs 1..=4");
    let last = metrics.lines().last().unwrap();
    assert!(last.starts_with("4,"));
}
