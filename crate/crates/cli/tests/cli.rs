use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SUBCOMMANDS: [&str; 11] = [
    "synth",
    "ingest",
    "train",
    "predict",
    "attribute",
    "eval-words",
    "eval-columns",
    "eval-filters",
    "steer",
    "pipeline",
    "serve",
];

const SMALL_MODEL: [&str; 12] = [
    "--embed-dim", "8", "--filters", "2", "--epochs", "2", "--lr", "0.01", "--optimizer", "adam",
    "--use-bias", "false",
];

fn embedrel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embedrel"))
        .current_dir(dir)
        .env_remove("EMBEDREL_OUT")
        .args(args)
        .output()
        .expect("spawn embedrel")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = embedrel(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Writes a 200-document binary corpus to `<dir>/out/synth/small.jsonl`.
fn small_corpus(dir: &Path) -> PathBuf {
    ok(
        dir,
        &["-q", "--out", "out", "synth", "--preset", "binary", "--docs", "200", "--name", "small"],
    );
    dir.join("out/synth/small.jsonl")
}

#[test]
fn help_exits_zero_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let out = embedrel(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for sub in SUBCOMMANDS {
        let out = embedrel(dir.path(), &[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
        assert!(!out.stdout.is_empty());
    }
    assert_eq!(embedrel(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(embedrel(dir.path(), &["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(embedrel(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(embedrel(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(
        embedrel(dir.path(), &["attribute", "--docs", "1,x"]).status.code(),
        Some(2)
    );

    fs::write(dir.path().join("bad.toml"), "[model]\nembed_dimension = 4\n").unwrap();
    let out = embedrel(dir.path(), &["--config", "bad.toml", "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("embed_dimension"));

    fs::write(dir.path().join("frac.toml"), "[corpus]\ntrain_frac = 1.5\n").unwrap();
    let out = embedrel(dir.path(), &["--config", "frac.toml", "train"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = embedrel(dir.path(), &["--config", "absent.toml", "train"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = embedrel(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no corpus"));

    let corpus = small_corpus(dir.path());
    let corpus = corpus.to_str().unwrap();
    let out = embedrel(dir.path(), &["predict", "--corpus", corpus, "--params", "nope.atpr"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_beat_file_beat_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    fs::write(
        dir.path().join("run.toml"),
        format!(
            "out_dir = \"from-file\"\n[corpus]\npath = {:?}\n[model]\nepochs = 5\nbatch_size = 16\nembed_dim = 8\nfilters_per_width = 2\n",
            corpus.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(dir.path(), &["-q", "--config", "run.toml", "train", "--epochs", "1"]);
    let resolved = read_json(&dir.path().join("from-file/train/resolved_config.json"));
    assert_eq!(resolved["command"], "train");
    let model = &resolved["config"]["model"];
    assert_eq!(model["epochs"], 1);
    assert_eq!(model["batch_size"], 16);
    assert_eq!(model["learning_rate"], 0.1);
    assert_eq!(resolved["config"]["corpus"]["train_frac"], 0.8);

    ok(dir.path(), &["-q", "--config", "run.toml", "--out", "from-flag", "train", "--epochs", "1"]);
    assert!(dir.path().join("from-flag/train/model.atpr").is_file());
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("env-out");
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_embedrel"))
            .current_dir(dir.path())
            .env("EMBEDREL_OUT", &env_out)
            .args(args)
            .output()
            .unwrap()
    };
    assert!(run(&["-q", "synth", "--docs", "20"]).status.success());
    assert!(env_out.join("synth/synth.jsonl").is_file());
    assert!(env_out.join("synth/resolved_config.json").is_file());

    assert!(run(&["-q", "--out", "flag-out", "synth", "--docs", "20"]).status.success());
    assert!(dir.path().join("flag-out/synth/synth.jsonl").is_file());

    let plain = embedrel(dir.path(), &["-q", "synth", "--docs", "20"]);
    assert!(plain.status.success());
    assert!(dir.path().join("embedrel-out/synth/synth.jsonl").is_file());
}

#[test]
fn training_twice_gives_identical_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let corpus = corpus.to_str().unwrap();
    let mut bytes = Vec::new();
    for out in ["a", "b"] {
        let mut args = vec!["-q", "--out", out, "train", "--corpus", corpus, "--seed", "7"];
        args.extend(SMALL_MODEL);
        ok(dir.path(), &args);
        bytes.push(fs::read(dir.path().join(out).join("train/model.atpr")).unwrap());
        assert!(dir.path().join(out).join("train/train_log.jsonl").is_file());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn commands_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let corpus = corpus.to_str().unwrap();
    let mut args = vec!["-q", "--out", "out", "train", "--corpus", corpus];
    args.extend(SMALL_MODEL);
    ok(dir.path(), &args);
    let out = dir.path().join("out");

    let log = fs::read_to_string(out.join("train/train_log.jsonl")).unwrap();
    let last: Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    let val_accuracy = last["val_accuracy"].as_f64().unwrap();

    ok(
        dir.path(),
        &["-q", "--out", "out", "eval-columns", "--corpus", corpus, "--methods", "lrp", "--seeds", "0", "--counts", "0,4"],
    );
    let curve = fs::read_to_string(out.join("eval-columns/curve_column_largest_lrp_all.csv")).unwrap();
    let first = curve.lines().nth(1).unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields[0], "0");
    assert_eq!(fields[1].parse::<f64>().unwrap(), val_accuracy);
    assert!(out.join("eval-columns/report.json").is_file());

    ok(dir.path(), &["-q", "--out", "out", "predict", "--corpus", corpus]);
    let predictions = fs::read_to_string(out.join("predict/predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 200);

    ok(
        dir.path(),
        &["-q", "--out", "out", "attribute", "--corpus", corpus, "--docs", "3,4", "--target", "true"],
    );
    let highlights = fs::read_to_string(out.join("attribute/highlights.jsonl")).unwrap();
    let rows: Vec<Value> = highlights.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let logit = row["logit"].as_f64().unwrap();
        let total = row["total"].as_f64().unwrap();
        assert!((logit - total).abs() <= 1e-6 * logit.abs().max(1.0));
    }
    assert_eq!(fs::read_dir(out.join("attribute/attributions")).unwrap().count(), 2);
    assert_eq!(fs::read_dir(out.join("attribute/html")).unwrap().count(), 2);

    ok(
        dir.path(),
        &["-q", "--out", "out", "eval-words", "--corpus", corpus, "--methods", "lrp"],
    );
    let downstream = fs::read_to_string(out.join("eval-words/downstream.csv")).unwrap();
    assert_eq!(downstream.lines().count(), 5);

    ok(
        dir.path(),
        &["-q", "--out", "out", "steer", "--corpus", corpus, "--methods", "lrp", "--seeds", "0", "--kind", "filters", "--filter-counts", "0,2"],
    );
    let report = read_json(&out.join("steer/report.json"));
    assert_eq!(report["tables"].as_array().unwrap().len(), 1);
}

#[test]
fn ingested_bundle_is_accepted_as_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    ok(dir.path(), &["-q", "--out", "out", "ingest", "--corpus", corpus.to_str().unwrap()]);
    let bundle = dir.path().join("out/ingest");
    let mut args = vec!["-q", "--out", "out", "train", "--corpus", bundle.to_str().unwrap()];
    args.extend(SMALL_MODEL);
    ok(dir.path(), &args);
    assert!(dir.path().join("out/train/model.atpr").is_file());
}

#[test]
fn model_and_corpus_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let mut args = vec!["-q", "--out", "out", "train", "--corpus", corpus.to_str().unwrap()];
    args.extend(SMALL_MODEL);
    ok(dir.path(), &args);
    ok(dir.path(), &["-q", "--out", "out", "synth", "--classes", "3", "--docs", "60", "--name", "three"]);
    let out = embedrel(
        dir.path(),
        &["predict", "--corpus", "out/synth/three.jsonl", "--params", "out/train/model.atpr"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model expects"));
}
