#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::tree_hash;

const SMALL: [&str; 6] = [
    "--set",
    "samples_per_pair=2",
    "--set",
    "image_size=32",
    "--set",
    "word_dim=40",
];
const FAST: [&str; 12] = [
    "--set",
    "input_size=16",
    "--set",
    "d_v=8",
    "--set",
    "batch_size=8",
    "--set",
    "lr0=0.001",
    "--set",
    "log_every=2",
    "--set",
    "episode_classes=4",
];

fn s2s(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_s2s"));
    c.args(args);
    for (flag, p) in paths {
        c.arg(flag).arg(p);
    }
    c.output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn dataset(root: &Path) -> PathBuf {
    let data = root.join("data");
    ok(s2s(
        &[&["gen-data"][..], &SMALL].concat(),
        &[("--out", &data)],
    ));
    data
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    s2s(
        &[&["train"][..], &SMALL, &FAST, extra].concat(),
        &[("--data", data), ("--out", out)],
    )
}

fn metric_rows(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn gen_data_regenerates_the_same_tree() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path());
    let first = tree_hash(&data);
    std::fs::remove_dir_all(&data).unwrap();
    dataset(root.path());
    assert_eq!(first, tree_hash(&data));
    assert!(data.join("manifest.json").exists());
}

#[test]
fn usage_errors_exit_two() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("o");
    assert_eq!(s2s(&["gen-data"], &[]).status.code(), Some(2));
    assert_eq!(
        s2s(&["gen-data", "--set", "nonsense=1"], &[("--out", &out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        s2s(&["gen-data", "--set", "seed"], &[("--out", &out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        s2s(&["train", "--mode", "sepia"], &[("--out", &out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(s2s(&["frobnicate"], &[]).status.code(), Some(2));
}

#[test]
fn flags_override_set_which_overrides_the_file() {
    let root = tempfile::tempdir().unwrap();
    let file = root.path().join("run.conf");
    std::fs::write(
        &file,
        "# base\nseed = 5\nsamples_per_pair = 0\nimage_size = 16\n",
    )
    .unwrap();
    let out = root.path().join("o");
    let stdout = ok(s2s(
        &[
            "gen-data",
            "--set",
            "seed=6",
            "--set",
            "image_size=24",
            "--seed",
            "7",
        ],
        &[("--config", &file), ("--out", &out)],
    ));
    let echoed = std::fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(stdout.starts_with(&echoed));
    for line in ["seed = 7", "image_size = 24", "samples_per_pair = 0"] {
        assert!(
            echoed.lines().any(|l| l == line),
            "missing `{line}` in\n{echoed}"
        );
    }
}

#[test]
fn every_mode_trains_to_a_checkpoint() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path());
    for mode in ["rgb", "s2s", "orthovec2s"] {
        let out = root.path().join(mode);
        ok(train(
            &data,
            &out,
            &["--mode", mode, "--set", "iterations=4"],
        ));
        assert!(out.join("model.s2sm").exists() && out.join("train_state.s2sm").exists());
        let rows = metric_rows(&out);
        assert_eq!(rows.len(), 3, "{rows:?}");
        let echoed = std::fs::read_to_string(out.join("config.resolved")).unwrap();
        assert!(echoed.lines().any(|l| l == format!("mode = {mode}")));
    }
}

#[test]
fn divergence_exits_one() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path());
    let out = train(
        &data,
        &root.path().join("o"),
        &["--set", "lr0=1e30", "--set", "iterations=50"],
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn resume_continues_the_same_run() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path());
    let (whole, split) = (root.path().join("whole"), root.path().join("split"));
    ok(train(&data, &whole, &["--set", "iterations=8"]));
    ok(train(&data, &split, &["--set", "iterations=4"]));
    ok(train(&data, &split, &["--set", "iterations=8", "--resume"]));
    assert_eq!(
        std::fs::read(whole.join("model.s2sm")).unwrap(),
        std::fs::read(split.join("model.s2sm")).unwrap()
    );
    assert_eq!(metric_rows(&whole), metric_rows(&split));
    assert_eq!(metric_rows(&whole).len(), 5);

    let chunked = root.path().join("chunked");
    ok(train(
        &data,
        &chunked,
        &["--set", "iterations=8", "--set", "checkpoint_every=3"],
    ));
    assert_eq!(
        std::fs::read(whole.join("model.s2sm")).unwrap(),
        std::fs::read(chunked.join("model.s2sm")).unwrap()
    );

    let missing = train(&data, &root.path().join("fresh"), &["--resume"]);
    assert_eq!(missing.status.code(), Some(1));
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn oracle_and_model_evaluation() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path());
    let out = root.path().join("o");
    ok(s2s(
        &["eval", "--oracle", "--protocol", "verb_transfer"],
        &[("--data", &data), ("--out", &out)],
    ));
    let r = report(&out.join("eval_verb_transfer.json"));
    assert_eq!(r["accuracy"], 1.0);
    assert_eq!(r["hits"], r["total"]);
    assert_eq!(r["total"], 60);

    ok(train(&data, &out, &["--set", "iterations=2"]));
    ok(s2s(
        &[&["eval", "--protocol", "vo_confusion"][..], &SMALL].concat(),
        &[("--data", &data), ("--out", &out)],
    ));
    let r = report(&out.join("eval_vo_confusion.json"));
    let acc = r["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(r["total"], 60);
}

#[test]
fn ablation_reuses_finished_cells() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path());
    let out = root.path().join("grid");
    let args = [&["ablate"][..], &SMALL, &FAST, &["--set", "iterations=1"]].concat();
    let first = ok(s2s(&args, &[("--data", &data), ("--out", &out)]));
    assert_eq!(first.lines().filter(|l| l.starts_with("cell ")).count(), 24);
    assert!(!first.contains("(cached)"));
    let table = |p: &Path| -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(p).unwrap();
        r.records()
            .map(|x| x.unwrap().iter().map(String::from).collect())
            .collect()
    };
    let before = table(&out.join("ablation.csv"));
    let second = ok(s2s(&args, &[("--data", &data), ("--out", &out)]));
    assert_eq!(second.matches("(cached)").count(), 24);
    let after = table(&out.join("ablation.csv"));
    for (a, b) in before.iter().zip(&after) {
        assert_eq!(a[..9], b[..9]);
        assert_eq!((a[9].as_str(), b[9].as_str()), ("false", "true"));
    }
}

#[test]
fn features_project_to_a_plot() {
    let root = tempfile::tempdir().unwrap();
    let data = dataset(root.path());
    let out = root.path().join("o");
    ok(train(&data, &out, &["--set", "iterations=2"]));
    let paths = [("--data", data.as_path()), ("--out", out.as_path())];
    ok(s2s(
        &[
            &["dump-features", "--which", "concat_unmatched"][..],
            &SMALL,
        ]
        .concat(),
        &paths,
    ));
    let features = out.join("features_concat_unmatched.csv");
    assert_eq!(
        csv::Reader::from_path(&features).unwrap().records().count(),
        60
    );
    ok(s2s(
        &["plot", "--color-by", "object"],
        &[("--input", &features), ("--out", &out)],
    ));
    let coords: Vec<csv::StringRecord> = csv::Reader::from_path(out.join("coords.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect();
    assert_eq!(coords.len(), 60);
    assert!(coords
        .iter()
        .all(|r| r[0].parse::<f64>().unwrap().is_finite()
            && r[1].parse::<f64>().unwrap().is_finite()));
    assert!(out.join("plot.png").exists());
    assert_eq!(
        s2s(
            &["plot", "--color-by", "mood"],
            &[("--input", &features), ("--out", &out)]
        )
        .status
        .code(),
        Some(2)
    );
}
