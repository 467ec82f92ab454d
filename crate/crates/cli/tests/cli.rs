use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{"hidden_channels": 8, "middle_channels": 4, "lstm_channels": 8, "train_batch_size": 16}"#;

fn resgin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resgin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A temporary directory holding a 40-pair toy dataset and a small-model config.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = resgin(dir.path(), &["toy-data", "--out", "toy", "--pairs", "40", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

const DATA: [&str; 4] = ["--data", "toy/samples.csv", "--cells", "toy/expression.tsv"];

fn train_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train"];
    v.extend(DATA);
    v.extend(["--config", "small.json", "--epochs", "2", "--folds", "2", "-q"]);
    v.extend(extra);
    v
}

#[test]
fn train_writes_run_directory() {
    let ws = workspace();
    let o = resgin(ws.path(), &train_args(&["--seed", "1"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let run = ws.path().join("out/train");
    for f in ["config.json", "log.jsonl", "summary.csv", "fold1.ckpt", "fold2.ckpt"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "fold,acc,prec,recall,tpr,tnr,bacc,f1,auc");
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("mean,") && lines[4].starts_with("std,"));

    let log = fs::read_to_string(run.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["loss"].as_f64().unwrap().is_finite());
        assert!(v["seconds"].as_f64().is_some());
    }

    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("±"), "{stdout}");
}

#[test]
fn echoed_config_records_effective_values() {
    let ws = workspace();
    let o = resgin(ws.path(), &train_args(&["--seed", "4", "--lr", "0.002"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.path().join("out/train/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["lr"], 0.002);
    assert_eq!(cfg["seed"], 4);
    assert_eq!(cfg["hidden_channels"], 8);
    assert_eq!(cfg["num_epochs"], 2);
    assert_eq!(cfg["layer_count"], 2);
    assert_eq!(cfg["molecule_channels"], 78);
}

#[test]
fn default_fold_count_is_five() {
    let ws = workspace();
    let mut args = vec!["train"];
    args.extend(DATA);
    args.extend(["--config", "small.json", "--epochs", "1", "--fold-limit", "1", "-q"]);
    let o = resgin(ws.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.path().join("out/train/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["n_folds"], 5);
    assert!(ws.path().join("out/train/fold1.ckpt").is_file());
    assert!(!ws.path().join("out/train/fold2.ckpt").exists());
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let ws = workspace();
    let read = |name: &str| fs::read(ws.path().join("out").join(name).join("summary.csv")).unwrap();
    for name in ["a", "b"] {
        let o = resgin(ws.path(), &train_args(&["--seed", "7", "--run-name", name]));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read("a"), read("b"));
    let ckpt = |name: &str| fs::read(ws.path().join("out").join(name).join("fold1.ckpt")).unwrap();
    assert_eq!(ckpt("a"), ckpt("b"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let ws = workspace();
    let o = resgin(ws.path(), &train_args(&["--seed", "5", "--run-name", "first"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let o = resgin(
        ws.path(),
        &["train", "--config", "out/first/config.json", "--run-name", "second", "-q"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |name: &str| fs::read(ws.path().join("out").join(name).join("summary.csv")).unwrap();
    assert_eq!(read("first"), read("second"));
}

#[test]
fn missing_cells_is_a_usage_error() {
    let ws = workspace();
    let o = resgin(ws.path(), &["train", "--data", "toy/samples.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--cells"));
    assert!(!ws.path().join("out").exists());
}

#[test]
fn config_errors_exit_2() {
    let ws = workspace();
    fs::write(ws.path().join("bad.json"), r#"{"learning_rate": 0.1}"#).unwrap();
    let mut args = vec!["train"];
    args.extend(DATA);
    args.extend(["--config", "bad.json"]);
    let o = resgin(ws.path(), &args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"));

    let o = resgin(ws.path(), &train_args(&["--epochs", "0"]));
    assert_eq!(o.status.code(), Some(2));
    let o = resgin(ws.path(), &train_args(&["--variant", "gcn"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let ws = workspace();
    let o = resgin(ws.path(), &["train", "--data", "nope.csv", "--cells", "toy/expression.tsv"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope.csv"));

    fs::write(
        ws.path().join("bad.csv"),
        "drug_a_smiles,drug_b_smiles,cell_line,label\nCCO,C1CC,CL0,1\nCCO,CCN,CL9,2\n",
    )
    .unwrap();
    let o = resgin(ws.path(), &["train", "--data", "bad.csv", "--cells", "toy/expression.tsv"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("line 3"), "{err}");
}

#[test]
fn numeric_failure_exits_4() {
    let ws = workspace();
    let o = resgin(ws.path(), &train_args(&["--lr", "1e300"]));
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn trained(ws: &TempDir) -> PathBuf {
    let o = resgin(ws.path(), &train_args(&["--seed", "2"]));
    assert!(o.status.success(), "{}", stderr(&o));
    ws.path().join("out/train/fold1.ckpt")
}

#[test]
fn predict_single_pair() {
    let ws = workspace();
    let ckpt = trained(&ws);
    fs::write(
        ws.path().join("pairs.csv"),
        "drug_a_smiles,drug_b_smiles,cell_line\nNc1ccc(Cl)cc1,CCO,CL1\n",
    )
    .unwrap();
    let o = resgin(
        ws.path(),
        &["predict", "--checkpoint", ckpt.to_str().unwrap(), "--pairs", "pairs.csv", "--cells", "toy/expression.tsv", "--out", "pred.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(ws.path().join("pred.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "drug_a_smiles,drug_b_smiles,cell_line,p,top_atoms_a,top_atoms_b");
    let fields: Vec<&str> = lines[1].split(',').collect();
    let p: f64 = fields[3].parse().unwrap();
    assert!(p > 0.0 && p < 1.0);
    let top_a: Vec<usize> = fields[4].split(';').map(|s| s.parse().unwrap()).collect();
    assert_eq!(top_a.len(), 3);
    assert!(top_a.iter().all(|&i| i < 8));
    assert_eq!(fields[5].split(';').count(), 3);
}

#[test]
fn predict_on_labelled_file_scores_every_row() {
    let ws = workspace();
    let ckpt = trained(&ws);
    let o = resgin(
        ws.path(),
        &["predict", "--checkpoint", ckpt.to_str().unwrap(), "--pairs", "toy/samples.csv", "--cells", "toy/expression.tsv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 41);
}

#[test]
fn corrupted_checkpoint_exits_3_naming_the_parameter() {
    let ws = workspace();
    let ckpt = trained(&ws);
    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ckpt).unwrap()).unwrap();
    json["params"]["head.logit.weight"] = serde_json::json!({"shape": [3, 1], "data": [0.0, 0.0, 0.0]});
    fs::write(ws.path().join("broken.ckpt"), json.to_string()).unwrap();
    let o = resgin(
        ws.path(),
        &["predict", "--checkpoint", "broken.ckpt", "--pairs", "toy/samples.csv", "--cells", "toy/expression.tsv"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("head.logit.weight"), "{}", stderr(&o));

    fs::write(ws.path().join("garbage.ckpt"), "{not json").unwrap();
    let o = resgin(
        ws.path(),
        &["predict", "--checkpoint", "garbage.ckpt", "--pairs", "toy/samples.csv", "--cells", "toy/expression.tsv"],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn predict_rejects_profile_width_mismatch() {
    let ws = workspace();
    let ckpt = trained(&ws);
    fs::write(ws.path().join("narrow.tsv"), "cell_line\tg0\nCL0\t0.5\n").unwrap();
    let o = resgin(
        ws.path(),
        &["predict", "--checkpoint", ckpt.to_str().unwrap(), "--pairs", "toy/samples.csv", "--cells", "narrow.tsv"],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_experiment_exits_2() {
    let ws = workspace();
    let o = resgin(ws.path(), &["experiment", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

fn experiment_args<'a>(name: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["experiment", name];
    v.extend(DATA);
    v.extend(["--config", "small.json", "--epochs", "1", "--folds", "2", "--fold-limit", "1", "-q"]);
    v.extend(extra);
    v
}

#[test]
fn ablation_emits_three_variants() {
    let ws = workspace();
    let o = resgin(ws.path(), &experiment_args("ablate", &[]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(ws.path().join("out/ablation/ablation.csv")).unwrap();
    let variants: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["resgin", "gin-nores", "gcn-res"]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path().join("out/ablation/ablation.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn depth_sweep_table_shape() {
    let ws = workspace();
    let o = resgin(ws.path(), &experiment_args("depth-sweep", &["--depths", "1,3", "--variants", "resgin,gin-nores"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(ws.path().join("out/depth_sweep/depth_sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(keys, [("resgin", "1"), ("resgin", "3"), ("gin-nores", "1"), ("gin-nores", "3")]);
    assert_eq!(rows[1].last().unwrap().split(';').count(), 3);
}

#[test]
fn sensitivity_grid_is_reproducible() {
    let ws = workspace();
    for name in ["s1", "s2"] {
        let o = resgin(
            ws.path(),
            &experiment_args("sensitivity", &["--lrs", "0.001,0.01", "--dropouts", "0.1,0.3", "--run-name", name, "--seed", "9"]),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |n: &str| fs::read(ws.path().join("out").join(n).join("sensitivity.csv")).unwrap();
    assert_eq!(read("s1"), read("s2"));
    let text = String::from_utf8(read("s1")).unwrap();
    let cells: Vec<&str> = text.lines().skip(1).map(|l| &l[..l.match_indices(',').nth(1).unwrap().0]).collect();
    assert_eq!(cells, ["0.001,0.1", "0.001,0.3", "0.01,0.1", "0.01,0.3"]);
}

#[test]
fn toy_data_rejects_impossible_pair_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = resgin(dir.path(), &["toy-data", "--out", "t", "--pairs", "100000"]);
    assert_eq!(o.status.code(), Some(2));
}
