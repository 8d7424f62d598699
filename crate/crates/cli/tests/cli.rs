use std::path::Path;
use std::process::{Command, Output};

fn gsne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsne"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = gsne(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

const SMALL_CONFIG: &str = "\
[train]
iterations = 120
batch_size = 32
[train.encoder]
embed_dim = 4
hidden1 = 16
hidden2 = 8
[eval.models.gbt]
trees = 15
";

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen-synth, build-graph, train, export and eval into `root`.
fn pipeline(root: &Path, config: &Path) {
    let data = root.join("data");
    let graph = root.join("graph.bin");
    let ckpt = root.join("ckpt");
    let emb = root.join("emb.csv");
    let report = root.join("report");
    let cfg = ["--config", s(config), "--seed", "5", "--quiet"];
    let run = |args: &[&str]| ok(&[args, &cfg[..]].concat());
    run(&["gen-synth", "--out", s(&data), "--houses", "120", "--regions", "3", "--schools", "4", "--stations", "3"]);
    run(&["build-graph", "--data", s(&data), "--out", s(&graph)]);
    run(&["train", "--graph", s(&graph), "--out", s(&ckpt)]);
    run(&["export", "--ckpt", s(&ckpt), "--out", s(&emb)]);
    run(&["eval", "--data", s(&data), "--emb", s(&emb), "--regressors", "ridge,gbt", "--report", s(&report)]);
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL_CONFIG).unwrap();
    p
}

#[test]
fn full_pipeline_writes_reports_and_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a, &config);
    pipeline(&b, &config);
    for f in ["report/report.txt", "report/report.csv", "report/report.json"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    let loss = std::fs::read_to_string(a.join("ckpt/loss_first.csv")).unwrap();
    assert_eq!(loss.lines().count(), 121, "config iterations honored");
    for f in [
        "data/houses.csv",
        "data/schema.json",
        "data/ground_truth.csv",
        "graph.bin",
        "ckpt/state.ckpt",
        "ckpt/loss_first.csv",
        "ckpt/loss_second.csv",
        "emb.csv",
        "report/report.txt",
        "report/report.csv",
        "report/report.json",
    ] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data");
    let graph = dir.path().join("graph.bin");
    let common = ["--config", s(&config), "--quiet"];
    ok(&[&["gen-synth", "--out", s(&data), "--houses", "100", "--regions", "3"][..], &common].concat());
    ok(&[&["build-graph", "--data", s(&data), "--out", s(&graph)][..], &common].concat());
    let full = dir.path().join("full");
    let split = dir.path().join("split");
    ok(&[&["train", "--graph", s(&graph), "--out", s(&full), "--iters", "80"][..], &common].concat());
    ok(&[&["train", "--graph", s(&graph), "--out", s(&split), "--iters", "30"][..], &common].concat());
    ok(&[&["train", "--graph", s(&graph), "--out", s(&split), "--iters", "80", "--resume"][..], &common].concat());
    for f in ["state.ckpt", "loss_first.csv", "loss_second.csv"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(split.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn ablate_reports_one_row_per_poi_type() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data");
    let report = dir.path().join("ablation");
    let common = ["--config", s(&config), "--quiet"];
    ok(&[&["gen-synth", "--out", s(&data), "--houses", "100", "--regions", "3"][..], &common].concat());
    let o = ok(&[&["ablate", "--data", s(&data), "--report", s(&report)][..], &common].concat());
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["raw", "region", "school", "station", "all"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    assert!(report.join("report.json").is_file());
}

#[test]
fn gradcheck_toy_passes() {
    let o = ok(&["gradcheck", "--toy"]);
    let out = String::from_utf8_lossy(&o.stdout);
    let line = out.lines().find(|l| l.starts_with("max relative error")).expect("summary line");
    let value: f64 = line.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(value < 1e-4, "{line}");
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        &["train", "--out", "x"][..],
        &["gen-synth", "--out", "x", "--no-such-flag"],
        &["frobnicate"],
        &["gradcheck"],
    ] {
        let o = gsne(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).starts_with("ERROR 1:"), "{args:?}: {}", stderr(&o));
    }
    assert!(stderr(&gsne(&["train", "--out", "x"])).contains("Usage"));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsne(&["build-graph", "--data", s(&dir.path().join("nope")), "--out", "g.bin"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR 2:"), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nbogus = 1\n").unwrap();
    let o = gsne(&["gradcheck", "--toy", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_training_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data");
    let graph = dir.path().join("graph.bin");
    let common = ["--config", s(&config), "--quiet"];
    ok(&[&["gen-synth", "--out", s(&data), "--houses", "100", "--regions", "3"][..], &common].concat());
    ok(&[&["build-graph", "--data", s(&data), "--out", s(&graph)][..], &common].concat());
    let o = gsne(
        &[
            &["train", "--graph", s(&graph), "--out", s(&dir.path().join("c"))][..],
            &["--optimizer", "sgd", "--learning-rate", "1e300"],
            &common,
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("ERROR 3:"));
}

#[test]
fn help_lists_defaults_for_every_subcommand() {
    for sub in ["gen-synth", "build-graph", "train", "export", "eval", "ablate", "gradcheck"] {
        let o = ok(&[sub, "--help"]);
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("--seed") && text.contains("--config"), "{sub}");
        if sub != "export" && sub != "gradcheck" {
            assert!(text.contains("[default:"), "{sub}:\n{text}");
        }
    }
    let train = String::from_utf8_lossy(&ok(&["train", "--help"]).stdout).into_owned();
    assert!(train.contains("[default: 30000]") && train.contains("[default: both]"));
}
