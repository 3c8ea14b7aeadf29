use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_linkexplain"));
    c.env("RUST_LOG", "info");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// syn-sparse dataset plus a short training run.
fn trained(tmp: &Path) -> (String, String) {
    let data = tmp.join("syn");
    let model = tmp.join("model");
    ok(&["synth", "--preset", "syn-sparse", "--seed", "2", "--out", p(&data)]);
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&model),
        "--max-epochs",
        "3",
        "--hidden-dim",
        "16",
        "--alpha",
        "0.7",
        "--feature-norm",
        "row-l2",
    ]);
    (p(&data).to_string(), p(&model).to_string())
}

#[test]
fn synth_preset_writes_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("syn");
    ok(&["synth", "--preset", "syn-medium", "--seed", "7", "--out", p(&out)]);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("synth.json")).unwrap()).unwrap();
    assert_eq!(meta["params"]["num_nodes"], 1000);
    assert_eq!(meta["params"]["k"], 3);
    assert_eq!(meta["params"]["target_edges"], 9576);
    for f in [
        "edges.txt",
        "features.bin",
        "truth.jsonl",
        "split.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let again = run(&["synth", "--preset", "syn-medium", "--seed", "7", "--out", p(&out)]);
    assert_eq!(code(&again), 2);
    let bad = run(&["synth", "--preset", "syn-huge", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn split_batches_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("syn");
    ok(&["synth", "--preset", "syn-sparse", "--seed", "1", "--out", p(&data)]);
    for name in ["a", "b"] {
        ok(&[
            "split",
            "--data",
            p(&data),
            "--ratios",
            "0.85,0.05,0.10",
            "--seeds",
            "5",
            "--out",
            p(&tmp.path().join(name)),
        ]);
    }
    for seed in 0..5 {
        let f = format!("split_seed{seed}.json");
        let a = fs::read(tmp.path().join("a").join(&f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(&f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    assert!(!tmp.path().join("a/split_seed5.json").exists());

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    fs::copy(data.join("edges.txt"), empty.join("edges.txt")).unwrap();
    let missing = run(&["split", "--data", p(&empty), "--out", p(&tmp.path().join("c"))]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("features"));
}

#[test]
fn training_flags_and_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("syn");
    ok(&["synth", "--preset", "syn-sparse", "--seed", "3", "--out", p(&data)]);

    let cfg = tmp.path().join("train.toml");
    fs::write(&cfg, "k = 2\nlambda = 0.9\nmax_epochs = 2\nhidden_dim = 8\n").unwrap();
    let out = tmp.path().join("m1");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--lambda",
        "0.2",
        "--out",
        p(&out),
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["k"], 2);
    assert_eq!(manifest["config"]["lambda"], 0.2);

    fs::write(&cfg, "kk = 2\n").unwrap();
    let bad = run(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(&tmp.path().join("m2")),
    ]);
    assert_eq!(code(&bad), 2);
    let range = run(&[
        "train",
        "--data",
        p(&data),
        "--alpha",
        "1.5",
        "--out",
        p(&tmp.path().join("m3")),
    ]);
    assert_eq!(code(&range), 2);

    let plain = ok(&[
        "train",
        "--data",
        p(&data),
        "--ablation",
        "plain",
        "--max-epochs",
        "2",
        "--hidden-dim",
        "8",
        "--out",
        p(&tmp.path().join("m4")),
    ]);
    assert!(String::from_utf8_lossy(&plain.stderr).contains("diffusion skipped"));
    let m4: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("m4/manifest.json")).unwrap()).unwrap();
    assert_eq!(m4["config"]["beta"], 0.0);
    assert_eq!(m4["config"]["lambda"], 0.0);

    // fixed seed: identical checkpoints
    for name in ["s1", "s2"] {
        ok(&[
            "train",
            "--data",
            p(&data),
            "--max-epochs",
            "3",
            "--hidden-dim",
            "8",
            "--seed",
            "4",
            "--threads",
            "1",
            "--out",
            p(&tmp.path().join(name)),
        ]);
    }
    assert_eq!(
        fs::read(tmp.path().join("s1/model.ckpt")).unwrap(),
        fs::read(tmp.path().join("s2/model.ckpt")).unwrap()
    );
}

#[test]
fn eval_explain_and_fidelity_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model) = trained(tmp.path());

    let ev = tmp.path().join("eval");
    ok(&[
        "eval",
        "--data",
        &data,
        "--model",
        &model,
        "--emit",
        "csv",
        "--out",
        p(&ev),
    ]);
    let csv = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("metric,run,value\nauc,0,"));
    assert!(csv.contains("precision@1,0,") && csv.contains("random_precision@1,0,") && csv.contains("cn_auc,0,"));

    let ex = tmp.path().join("explain");
    ok(&[
        "explain",
        "--data",
        &data,
        "--model",
        &model,
        "--pair",
        "12,907",
        "--out",
        p(&ex),
    ]);
    let text = fs::read_to_string(ex.join("explanations.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    let rec: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(rec["pair"], serde_json::json!([12, 907]));
    assert!(rec["selected_i"].is_array() && rec["selected_j"].is_array());
    let bad_pair = run(&[
        "explain",
        "--data",
        &data,
        "--model",
        &model,
        "--pair",
        "3,3",
        "--out",
        p(&tmp.path().join("e2")),
    ]);
    assert_eq!(code(&bad_pair), 2);

    let fid = tmp.path().join("fid");
    ok(&[
        "fidelity",
        "--data",
        &data,
        "--model",
        &model,
        "--m",
        "1,2,3,4",
        "--out",
        p(&fid),
    ]);
    let rows = fs::read_to_string(fid.join("fidelity.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
    assert!(rows.starts_with("m,delta_auc_mean"));
}

#[test]
fn checkpoint_dataset_mismatch_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, model) = trained(tmp.path());
    let other = tmp.path().join("other");
    ok(&["synth", "--preset", "syn-sparse", "--seed", "9", "--out", p(&other)]);
    let out = run(&[
        "eval",
        "--data",
        p(&other),
        "--model",
        &model,
        "--out",
        p(&tmp.path().join("ev")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn prepare_maps_original_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    fs::write(
        raw.join("edges.txt"),
        "# citations\n100 200\n200 300\n300 100\n200 100\n",
    )
    .unwrap();
    fs::write(raw.join("features.csv"), "1,0\n0,1\n1,1\n").unwrap();
    fs::write(raw.join("ids.tsv"), "compact_id\toriginal_id\n0\t100\n1\t200\n2\t300\n").unwrap();
    let out = tmp.path().join("prepared");
    ok(&[
        "prepare",
        "--edges",
        p(&raw.join("edges.txt")),
        "--features",
        p(&raw.join("features.csv")),
        "--id-map",
        p(&raw.join("ids.tsv")),
        "--out",
        p(&out),
    ]);
    let edges = fs::read_to_string(out.join("edges.txt")).unwrap();
    assert_eq!(edges.lines().count(), 3);

    fs::write(raw.join("bad.txt"), "100 999\n").unwrap();
    let bad = run(&[
        "prepare",
        "--edges",
        p(&raw.join("bad.txt")),
        "--features",
        p(&raw.join("features.csv")),
        "--id-map",
        p(&raw.join("ids.tsv")),
        "--out",
        p(&tmp.path().join("p2")),
    ]);
    assert_eq!(code(&bad), 3);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["train"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(
        code(&run(&[
            "fidelity", "--data", "x", "--model", "y", "--mode", "sideways", "--out", "z"
        ])),
        2
    );
}
