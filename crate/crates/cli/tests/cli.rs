use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FRAMES: usize = 6;

fn tristream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tristream"))
        .args(args)
        .output()
        .expect("binary runs")
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

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, classes: usize, n: usize, seed: u64) -> Output {
    tristream(&[
        "synth",
        "--n-per-class",
        &n.to_string(),
        "--classes",
        &classes.to_string(),
        "--frames",
        &FRAMES.to_string(),
        "--size",
        "16",
        "--seed",
        &seed.to_string(),
        "--out",
        s(dir),
    ])
}

/// Small model and data settings shared by the training tests.
const TOY: [&str; 9] = [
    "frames=6",
    "image_size=16",
    "anchors=[0, 2, 5]",
    "feature_width_1=4",
    "feature_width_2=4",
    "hidden=6",
    "dense_width=6",
    "rotate=false",
    "brightness=false",
];

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(data), "--out", s(out), "--seed", "3"];
    for kv in TOY.iter().chain(extra) {
        args.push("--set");
        args.push(kv);
    }
    tristream(&args)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn synth_writes_manifest_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = synth(&a, 10, 2, 5);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("Left\t2"));
    let manifest = fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 20);
    assert_eq!(code(&synth(&b, 10, 2, 5)), 0);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&synth(tmp.path(), 10, 0, 0)), 2);
    assert_eq!(code(&tristream(&["gradcheck", "--scope", "rnn"])), 2);
    assert_eq!(code(&tristream(&["frobnicate"])), 2);
}

#[test]
fn gradcheck_gru_passes() {
    let out = tristream(&["gradcheck", "--scope", "gru"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("pass") && !text.contains("FAIL"), "{text}");
}

#[test]
fn train_writes_artifacts_deterministically_and_resumes() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, 3, 4, 1)), 0);
    let run1 = tmp.path().join("run1");
    let out = train(&data, &run1, &["epochs=2", "patience=0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["checkpoint.ckpt", "history.tsv", "resolved_config.toml"] {
        assert!(run1.join(f).exists(), "missing {f}");
    }

    // the echoed config alone reproduces the run
    let run2 = tmp.path().join("run2");
    let cfg = run1.join("resolved_config.toml");
    let out = tristream(&["train", "--config", s(&cfg), "--out", s(&run2)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(run1.join("checkpoint.ckpt")).unwrap(), fs::read(run2.join("checkpoint.ckpt")).unwrap());
    assert_eq!(fs::read(run1.join("history.tsv")).unwrap(), fs::read(run2.join("history.tsv")).unwrap());

    let ckpt = run1.join("checkpoint.ckpt");
    let out = tristream(&[
        "train",
        "--config",
        s(&cfg),
        "--resume",
        s(&ckpt),
        "--set",
        "epochs=1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let history = fs::read_to_string(run1.join("history.tsv")).unwrap();
    let epochs: Vec<&str> = history.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3"]);
    assert!(fs::read_to_string(&ckpt).unwrap().contains("\nepoch 3\n"));
}

#[test]
fn config_errors_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let out = train(tmp.path(), &tmp.path().join("run"), &["learnin_rate=0.1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("learnin_rate"), "{}", stderr(&out));

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "epochs = 3\nwidth = 9\n").unwrap();
    let out = tristream(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("width"), "{}", stderr(&out));
}

#[test]
fn missing_dataset_and_divergence_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = train(&tmp.path().join("nowhere"), &tmp.path().join("run"), &[]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, 3, 4, 1)), 0);
    let out = train(&data, &tmp.path().join("run"), &["learning_rate=1e300", "optimizer=\"sgd\""]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn eval_and_predict_after_overfitting() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, 2, 6, 2)), 0);
    let run = tmp.path().join("run");
    let out = train(
        &data,
        &run,
        &[
            "epochs=60",
            "patience=0",
            "flip=false",
            "learning_rate=0.01",
            "target_train_accuracy=100",
            "restore_best=false",
            "split_train=1.0",
            "split_val=0",
            "split_test=0",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ckpt = run.join("checkpoint.ckpt");
    let cfg = run.join("resolved_config.toml");

    let report_dir = tmp.path().join("eval");
    let out = tristream(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ckpt),
        "--split",
        "train",
        "--out",
        s(&report_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json = fs::read_to_string(report_dir.join("report.json")).unwrap();
    let acc: f64 = json
        .split("\"overall_accuracy\":")
        .nth(1)
        .and_then(|rest| rest.split([',', '}']).next())
        .and_then(|v| v.trim().parse().ok())
        .expect("overall_accuracy in report");
    assert!(acc >= 95.0, "train accuracy {acc}");
    assert!(report_dir.join("report.txt").exists() && report_dir.join("confusion.tsv").exists());

    // empty evaluation split
    let out = tristream(&["eval", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--split", "test", "--out", s(&report_dir)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    // class-count mismatch
    let other = tmp.path().join("other");
    assert_eq!(code(&synth(&other, 3, 2, 2)), 0);
    let out = tristream(&["eval", "--config", s(&cfg), "--data", s(&other), "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    // a generated "Left" sample is predicted as Left
    let manifest = fs::read_to_string(data.join("manifest.tsv")).unwrap();
    let left = manifest.lines().skip(1).find(|l| l.split('\t').nth(1) == Some("0")).unwrap();
    let sample = data.join(left.split('\t').next().unwrap());
    let out = tristream(&["predict", "--checkpoint", s(&ckpt), "--sample", s(&sample)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("prediction\tLeft\t"), "{text}");
    let total: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");

    // stream 3 without keypoints
    let bare = tmp.path().join("bare");
    fs::create_dir(&bare).unwrap();
    for entry in fs::read_dir(&sample).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "png") {
            fs::copy(&p, bare.join(p.file_name().unwrap())).unwrap();
        }
    }
    let out = tristream(&["predict", "--checkpoint", s(&ckpt), "--sample", s(&bare)]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("keypoints"), "{}", stderr(&out));
}
