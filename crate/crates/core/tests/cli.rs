mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_scaling::cli::{execute, Outcome};
use robust_scaling::{io, PredictionSet};

fn run(args: &[&str]) -> Outcome {
    execute(std::iter::once("robust-scaling").chain(args.iter().copied()))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

/// Writes a validation/test pair with features and returns the four paths.
fn write_pair(dir: &Path, seed: u64) -> [String; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let val = common::random_set_with_features(&mut rng, 400, 3, 2, 3);
    let test = common::random_set_with_features(&mut rng, 400, 3, 2, 3);
    let names = ["val.csv", "test.csv", "val_feat.csv", "test_feat.csv"].map(|n| path(dir, n));
    io::save_prediction_set(&val, Path::new(&names[0]), Some(Path::new(&names[2]))).unwrap();
    io::save_prediction_set(&test, Path::new(&names[1]), Some(Path::new(&names[3]))).unwrap();
    names
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let [val, test, vf, tf] = write_pair(dir.path(), 1);
    let invocations: Vec<Vec<&str>> = vec![
        vec!["search", "--val", &val, "--test", &test],
        vec!["coverage", "--val", &val, "--target", "worst"],
        vec![
            "irs",
            "--val",
            &val,
            "--test",
            &test,
            "--val-features",
            &vf,
            "--test-features",
            &tf,
            "--k",
            "3",
        ],
        vec!["realized", "--val", &val, "--test", &test],
    ];
    for args in invocations {
        let first = run(&args);
        assert_eq!(first.code, 0, "{args:?}: {}", first.stderr);
        let second = run(&args);
        assert_eq!(first.stdout, second.stdout, "{args:?}");
    }
}

#[test]
fn irs_with_one_cluster_prints_the_search_table() {
    let dir = tempfile::tempdir().unwrap();
    let [val, test, vf, tf] = write_pair(dir.path(), 2);
    for target in ["worst", "unbiased", "balanced"] {
        let search = run(&["search", "--val", &val, "--test", &test, "--target", target]);
        let irs = run(&[
            "irs",
            "--val",
            &val,
            "--test",
            &test,
            "--val-features",
            &vf,
            "--test-features",
            &tf,
            "--k",
            "1",
            "--target",
            target,
        ]);
        assert_eq!(search.code, 0, "{}", search.stderr);
        assert_eq!(irs.stdout, search.stdout, "target {target}");
    }
}

#[test]
fn perfect_pair_gives_identity_and_zero_gain() {
    let dir = tempfile::tempdir().unwrap();
    let set = PredictionSet::new(
        array![[0.9, 0.1], [0.2, 0.8], [0.7, 0.3], [0.4, 0.6]],
        vec![0, 1, 0, 1],
        vec![0, 0, 1, 1],
        2,
        None,
    )
    .unwrap();
    let file = path(dir.path(), "p.csv");
    let report = path(dir.path(), "r.json");
    io::save_prediction_set(&set, Path::new(&file), None).unwrap();
    let out = run(&[
        "search", "--target", "worst", "--val", &file, "--test", &file, "--output", &report,
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let json: serde_json::Value = io::load_json(Path::new(&report)).unwrap();
    let exponents: Vec<i32> = serde_json::from_value(json["model"]["exponents"].clone()).unwrap();
    assert!(
        exponents.iter().all(|&e| e == exponents[0]),
        "{exponents:?}"
    );
    for key in ["worst_group", "unbiased", "average", "balanced"] {
        assert_eq!(json["test_before"][key], json["test_after"][key], "{key}");
    }
    for line in out.stdout.lines().skip(1) {
        assert!(line.trim_end().ends_with("0.00"), "{line}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let [val, test, _, _] = write_pair(dir.path(), 3);
    let missing = path(dir.path(), "missing.csv");

    assert_eq!(run(&["search", "--val", &val, "--test", &test]).code, 0);
    assert_eq!(run(&["search", "--val", &missing, "--test", &test]).code, 1);
    assert_eq!(run(&["search", "--val", &val]).code, 1);
    assert_eq!(
        run(&["search", "--val", &val, "--test", &test, "--bogus"]).code,
        1
    );
    assert_eq!(
        run(&[
            "search",
            "--val",
            &val,
            "--test",
            &test,
            "--grid-base",
            "0.5"
        ])
        .code,
        1
    );
    assert_eq!(run(&["--help"]).code, 0);

    let infeasible = run(&[
        "search",
        "--val",
        &val,
        "--test",
        &test,
        "--min-average",
        "1.01",
    ]);
    assert_eq!(infeasible.code, 2, "{}", infeasible.stderr);
    assert!(!infeasible.stderr.is_empty());

    let garbage = path(dir.path(), "garbage.csv");
    std::fs::write(&garbage, "label,attribute,score_0\n0,0,not-a-number\n").unwrap();
    assert_eq!(run(&["metrics", &garbage]).code, 1);
}

#[test]
fn binary_reports_exit_status() {
    let exe = PathBuf::from(env!("CARGO_BIN_EXE_robust-scaling"));
    let dir = tempfile::tempdir().unwrap();
    let [val, test, _, _] = write_pair(dir.path(), 4);

    let ok = Command::new(&exe).args(["metrics", &val]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8(ok.stdout)
        .unwrap()
        .contains("worst_group"));

    let bad = Command::new(&exe)
        .args(["metrics", "--nope"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));

    let infeasible = Command::new(&exe)
        .args([
            "search",
            "--val",
            &val,
            "--test",
            &test,
            "--min-average",
            "1.01",
        ])
        .output()
        .unwrap();
    assert_eq!(infeasible.status.code(), Some(2));
}

#[test]
fn synth_without_training_writes_labels() {
    let dir = tempfile::tempdir().unwrap();
    let config = path(dir.path(), "config.json");
    std::fs::write(
        &config,
        r#"{"n_train": 200, "n_val": 100, "n_test": 100, "dim": 6}"#,
    )
    .unwrap();
    let out_dir = path(dir.path(), "data");
    let out = run(&[
        "synth",
        "--config",
        &config,
        "--out-dir",
        &out_dir,
        "--no-train",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    for split in ["train", "val", "test"] {
        let labels =
            std::fs::read_to_string(Path::new(&out_dir).join(format!("{split}_labels.csv")))
                .unwrap();
        assert!(labels.starts_with("label,attribute"));
        assert!(Path::new(&out_dir)
            .join(format!("{split}_features.csv"))
            .exists());
    }
    assert!(!Path::new(&out_dir).join("model.json").exists());
}

#[test]
fn synth_with_reweighting_trains_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let config = path(dir.path(), "config.json");
    std::fs::write(&config, r#"{"n_train": 400, "n_val": 200, "n_test": 200}"#).unwrap();
    for flags in [["--reweight", "gr"], ["--subsample", "subg"]] {
        let out_dir = path(dir.path(), flags[1]);
        let out = run(&[
            "synth",
            "--config",
            &config,
            "--out-dir",
            &out_dir,
            "--epochs",
            "50",
            flags[0],
            flags[1],
        ]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let val = Path::new(&out_dir).join("val_predictions.csv");
        let set = io::load_prediction_set(&val, None, false).unwrap();
        assert_eq!(set.len(), 200);
    }
    let clash = run(&[
        "synth",
        "--out-dir",
        &path(dir.path(), "x"),
        "--reweight",
        "cr",
        "--subsample",
        "suby",
    ]);
    assert_eq!(clash.code, 1);
}
