use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vnsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnsg"))
        .args(args)
        .env_remove("VNSG_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
kind = "semi_adaptive"
n_virtual = 2

[model]
spatial_hidden = 3
temporal_hidden = 4
kernel_size = 2
input_window = 6
output_horizons = 3

[train]
max_epochs = 1

[data]
source = "synthetic"
topology = "chain"
num_nodes = 8
days = 1
seed = 3
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for d in [&a, &b] {
        let o = vnsg(&["generate", "--topology", "chain", "--nodes", "20", "--days", "2", "--seed", "7", "--out", path(d)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["flow.csv", "meta.csv", "edges.csv", "config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let flow = fs::read_to_string(a.join("flow.csv")).unwrap();
    assert_eq!(flow.lines().next().unwrap().split(',').count(), 21);
    assert_eq!(flow.lines().count(), 1 + 2 * 288);
}

#[test]
fn usage_errors_exit_1() {
    let t = tempfile::tempdir().unwrap();
    let o = vnsg(&["generate", "--topology", "chain", "--nodes", "20", "--days", "0", "--out", path(t.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("days"));
    assert_eq!(code(&vnsg(&["frobnicate"])), 1);
    assert_eq!(code(&vnsg(&["--help"])), 0);

    let cfg = write_config(t.path(), &TINY.replace("kind = \"semi_adaptive\"\n", ""));
    let o = vnsg(&["train", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`kind`"), "{}", stderr(&o));

    let cfg = write_config(t.path(), &TINY.replace("n_virtual = 2\n", ""));
    let o = vnsg(&["train", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`n_virtual`"), "{}", stderr(&o));
}

#[test]
fn data_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    let o = vnsg(&["evaluate", "--checkpoint", path(&t.path().join("missing.ckpt"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.ckpt"));

    let d = t.path();
    fs::write(d.join("meta.csv"), "id,lat,lon\na,32.0,-117.0\nb,32.1,-117.1\n").unwrap();
    fs::write(d.join("edges.csv"), "from_id,to_id,distance_m\na,b,500\n").unwrap();
    fs::write(d.join("flow.csv"), "timestamp,a,b\n0,1,2\n300,1,2\n900,1,2\n").unwrap();
    let o = vnsg(&[
        "ingest",
        "--flow", path(&d.join("flow.csv")),
        "--meta", path(&d.join("meta.csv")),
        "--edges", path(&d.join("edges.csv")),
        "--out", path(&d.join("out")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("non-uniform"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_3() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), &TINY.replace("max_epochs = 1", "max_epochs = 3\nlearning_rate = 1e300\ngradient_clip_norm = 1e300"));
    let o = vnsg(&["train", "--config", &cfg, "--out", path(&t.path().join("run"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn train_then_evaluate_diagnose_export() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), TINY);
    let run = t.path().join("run");
    let o = vnsg(&["train", "--config", &cfg, "--out", path(&run), "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echoed: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    let stored: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed, stored);
    assert_eq!(stored["seed"], 5);
    assert_eq!(stored["model"]["num_blocks"], 2);
    for f in ["model.ckpt", "train_log.jsonl", "metrics.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let ckpt = run.join("model.ckpt");
    let o = vnsg(&["evaluate", "--checkpoint", path(&ckpt)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let strip = |s: String| s.lines().skip(1).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(
        strip(fs::read_to_string(run.join("metrics.csv")).unwrap()),
        strip(fs::read_to_string(run.join("evaluation.csv")).unwrap())
    );

    let o = vnsg(&["diagnose", "--checkpoint", path(&ckpt), "--max-hops", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("sensitivity.json")).unwrap()).unwrap();
    let buckets = rep["buckets"].as_array().unwrap();
    assert!(!buckets.is_empty());
    assert!(buckets.iter().all(|b| b["hop"].as_u64().unwrap() <= 5));

    let viz = t.path().join("viz");
    let o = vnsg(&["export-viz", "--checkpoint", path(&ckpt), "--out", path(&viz)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let heat = fs::read_to_string(viz.join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 3);
    for v in 0..2 {
        let nodes = fs::read_to_string(viz.join(format!("node_weights_v{v}.csv"))).unwrap();
        assert_eq!(nodes.lines().count(), 9);
        assert!(viz.join(format!("node_weights_v{v}.svg")).exists());
    }
    assert!(viz.join("heatmap.svg").exists());
}

#[test]
fn env_var_sets_output_root() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), &TINY.replace("kind = \"semi_adaptive\"\nn_virtual = 2", "kind = \"distance\""));
    let out = t.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_vnsg"))
        .args(["train", "--config", &cfg])
        .env("VNSG_OUT", &out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("model.ckpt").exists());
    let stored: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(stored["n_virtual"], 0);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), TINY);
    let out = t.path().join("sweep");
    let o = vnsg(&[
        "sweep", "--config", &cfg, "--nv", "1,2,4", "--kinds", "semi_adaptive", "--seeds", "3", "--jobs", "2",
        "--out", path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    let rows: Vec<&str> = cells.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].starts_with("semi_adaptive,1,0,"));
    assert!(rows[8].starts_with("semi_adaptive,4,2,"));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    // 3 horizons plus the average row per cell
    assert_eq!(results.lines().count(), 1 + 9 * 4);

    let o = vnsg(&["sweep", "--config", &cfg, "--nv", "1", "--kinds", "distance", "--out", path(&out)]);
    assert_eq!(code(&o), 1);
}
