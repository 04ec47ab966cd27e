use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use serde_json::json;
use vnsg_core::data::{
    generate_synthetic, ingest_largest, write_edges_csv, write_flow_csv, write_meta_csv, SyntheticScenario,
};
use vnsg_core::diagnostics::{pairwise_sensitivity, SensitivityConfig};
use vnsg_core::eval::{evaluate as score_model, summarize, write_results_csv, MetricsReport};
use vnsg_core::pipeline::{prepare, run_experiment, sweep_virtual_nodes, PreparedData};
use vnsg_core::viz::{export_node_weight_map, export_real_to_virtual_heatmap};
use vnsg_core::{load_checkpoint, save_checkpoint, AdjacencyKind, Checkpoint, RoadGraph, StgcnConfig, TrafficSeries};

use crate::config::{plain_output_dir, DataSource, RunConfig};
use crate::{CliError, Overrides};

const RUN_CONFIG_KEY: &str = "run_config";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Prints the resolved config as one JSON line and stores it next to outputs.
fn echo_config<T: Serialize>(dir: &Path, value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string(value)?);
    write_json(&dir.join("config.json"), value)
}

fn print_summary(value: serde_json::Value) {
    println!("{value}");
}

fn load_data(cfg: &RunConfig) -> Result<(RoadGraph, TrafficSeries), CliError> {
    Ok(match &cfg.data {
        DataSource::Synthetic(s) => generate_synthetic(s)?,
        DataSource::Files { flow, meta, edges } => ingest_largest(flow, meta, edges)?,
    })
}

fn prepared(cfg: &RunConfig, model: &StgcnConfig) -> Result<PreparedData, CliError> {
    let (graph, series) = load_data(cfg)?;
    Ok(prepare(graph, &series, model, cfg.split, cfg.distance_threshold)?)
}

fn apply(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = o.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = o.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = o.patience {
        cfg.train.patience = v;
    }
}

fn write_dataset(dir: &Path, graph: &RoadGraph, series: &TrafficSeries) -> Result<(), CliError> {
    write_flow_csv(series, &dir.join("flow.csv"))?;
    write_meta_csv(graph, &dir.join("meta.csv"))?;
    write_edges_csv(graph, &dir.join("edges.csv"))?;
    Ok(())
}

pub fn generate(s: &SyntheticScenario, out: Option<&Path>) -> Result<(), CliError> {
    s.validate()?;
    let (graph, series) = generate_synthetic(s)?;
    let dir = plain_output_dir(out);
    create_dir(&dir)?;
    write_dataset(&dir, &graph, &series)?;
    echo_config(&dir, s)?;
    print_summary(json!({
        "nodes": graph.num_nodes(),
        "steps": series.len(),
        "distance_entries": graph.distances().len(),
        "output": dir,
    }));
    Ok(())
}

pub fn ingest(flow: &Path, meta: &Path, edges: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let (graph, series) = ingest_largest(flow, meta, edges)?;
    let dir = plain_output_dir(out);
    create_dir(&dir)?;
    write_dataset(&dir, &graph, &series)?;
    let summary = json!({
        "nodes": graph.num_nodes(),
        "frames": series.len(),
        "step_seconds": series.step_seconds(),
        "missing_readings": series.missing_count(),
        "distance_entries": graph.distances().len(),
        "sources": {"flow": flow, "meta": meta, "edges": edges},
    });
    write_json(&dir.join("summary.json"), &summary)?;
    print_summary(summary);
    Ok(())
}

fn write_report_csv(path: &Path, reports: &[MetricsReport]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_results_csv(&mut buf, reports)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn train(
    config: &Path,
    kind: Option<AdjacencyKind>,
    nv: Option<usize>,
    o: &Overrides,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(k) = kind {
        cfg.kind = k;
        if !k.is_learned() && nv.is_none() {
            cfg.n_virtual = None;
        }
    }
    if nv.is_some() {
        cfg.n_virtual = nv;
    }
    apply(&mut cfg, o);
    cfg.resolve()?;
    let dir = cfg.output_dir(o.out.as_deref());
    create_dir(&dir)?;
    echo_config(&dir, &cfg)?;

    let data = prepared(&cfg, &cfg.model)?;
    let outcome = run_experiment(&data, &cfg.experiment(), cfg.seed)?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &outcome.model, data.train.norm, &json!({ RUN_CONFIG_KEY: cfg }))?;
    let mut log = outcome.log;
    log.checkpoint_path = Some(ckpt.display().to_string());
    let mut f = fs::File::create(dir.join("train_log.jsonl"))?;
    log.write_jsonl(&mut f)?;
    write_report_csv(&dir.join("metrics.csv"), std::slice::from_ref(&outcome.report))?;
    print_summary(json!({
        "epochs": log.epochs.len(),
        "best_epoch": log.best_epoch,
        "best_val_loss": log.best_val_loss(),
        "test_avg_rmse": outcome.report.avg_rmse,
        "test_long_rmse": outcome.report.long_rmse,
        "checkpoint": ckpt,
    }));
    Ok(())
}

/// Checkpoint plus the run config it was trained under.
fn open_checkpoint(path: &Path, config: Option<&Path>) -> Result<(Checkpoint, RunConfig), CliError> {
    let ck = load_checkpoint(path)?;
    let cfg = match config {
        Some(c) => RunConfig::load(c)?,
        None => {
            let v = ck.extra.get(RUN_CONFIG_KEY).cloned().ok_or_else(|| {
                CliError::Usage("checkpoint stores no run config; pass --config".into())
            })?;
            serde_json::from_value(v).map_err(|e| CliError::Data(format!("stored run config: {e}")))?
        }
    };
    Ok((ck, cfg))
}

fn checkpoint_output_dir(flag: Option<&Path>, ckpt: &Path) -> PathBuf {
    if flag.is_some() || std::env::var_os(crate::config::OUT_ENV).is_some_and(|v| !v.is_empty()) {
        return plain_output_dir(flag);
    }
    ckpt.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn checkpoint_data(ck: &Checkpoint, cfg: &RunConfig) -> Result<PreparedData, CliError> {
    let data = prepared(cfg, ck.model.config())?;
    if data.train.norm != ck.norm {
        return Err(CliError::Data(
            "normalization statistics of the data differ from the checkpoint's".into(),
        ));
    }
    Ok(data)
}

pub fn evaluate(checkpoint: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let (ck, cfg) = open_checkpoint(checkpoint, config)?;
    let data = checkpoint_data(&ck, &cfg)?;
    let test = data.test.with_virtual_nodes(ck.model.graph().n_virtual());
    let report = score_model(&ck.model, &test, cfg.seed, cfg.mape_epsilon, 256)?;
    let dir = checkpoint_output_dir(out, checkpoint);
    create_dir(&dir)?;
    let path = dir.join("evaluation.csv");
    write_report_csv(&path, std::slice::from_ref(&report))?;
    print_summary(json!({
        "kind": report.kind,
        "n_virtual": report.n_virtual,
        "avg_rmse": report.avg_rmse,
        "avg_mape": report.avg_mape,
        "long_rmse": report.long_rmse,
        "long_mape": report.long_mape,
        "masked_entries": report.masked_total(),
        "results": path,
    }));
    Ok(())
}

fn parse_seeds(spec: &str, root: u64) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("--seeds expects a count or a comma-separated list, got `{spec}`"));
    if spec.contains(',') {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
    } else {
        let n: u64 = spec.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        Ok((root..root + n).collect())
    }
}

fn cell_row(r: &MetricsReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    format!(
        "{},{},{},{:?},{:?},{},{}\n",
        r.kind,
        r.n_virtual,
        r.seed,
        r.avg_rmse,
        r.avg_mape,
        opt(r.long_rmse),
        opt(r.long_mape)
    )
}

const CELLS_HEADER: &str = "kind,n_v,seed,avg_rmse,avg_mape,long_rmse,long_mape\n";

pub fn sweep(
    config: &Path,
    nv: &[usize],
    kinds: &[AdjacencyKind],
    seeds: &str,
    jobs: usize,
    o: &Overrides,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    apply(&mut cfg, o);
    let seeds = parse_seeds(seeds, cfg.seed)?;
    if let Some(k) = kinds.iter().find(|k| !k.is_learned()) {
        return Err(CliError::Usage(format!("--kinds accepts learned kinds only, got {k}")));
    }
    if nv.contains(&0) {
        return Err(CliError::Usage("--nv values must be >= 1".into()));
    }
    cfg.kind = kinds[0];
    cfg.n_virtual = Some(nv[0]);
    cfg.resolve()?;
    let dir = cfg.output_dir(o.out.as_deref());
    create_dir(&dir)?;
    echo_config(
        &dir,
        &json!({
            "run": cfg,
            "sweep": {"kinds": kinds, "n_virtual": nv, "seeds": seeds, "jobs": jobs},
        }),
    )?;

    let data = prepared(&cfg, &cfg.model)?;
    let cells_path = dir.join("cells.csv");
    let live = Mutex::new(fs::File::create(&cells_path)?);
    live.lock().expect("poisoned").write_all(CELLS_HEADER.as_bytes())?;
    let reports = sweep_virtual_nodes(&data, &cfg.experiment(), kinds, nv, &seeds, jobs, |_, r| {
        let mut f = live.lock().expect("poisoned");
        if let Err(e) = f.write_all(cell_row(r).as_bytes()).and_then(|_| f.flush()) {
            log::warn!("cannot append to {}: {e}", cells_path.display());
        }
    })?;
    drop(live);

    // grid order for the final files
    let mut cells = String::from(CELLS_HEADER);
    reports.iter().for_each(|r| cells.push_str(&cell_row(r)));
    fs::write(&cells_path, cells)?;
    write_report_csv(&dir.join("results.csv"), &reports)?;
    let summary = summarize(&reports);
    write_json(&dir.join("summary.json"), &summary)?;
    print_summary(json!({
        "cells": reports.len(),
        "results": dir.join("results.csv"),
        "summary": summary.iter().map(|c| json!({
            "kind": c.kind,
            "n_virtual": c.n_virtual,
            "mean_avg_rmse": c.mean_avg_rmse,
            "mean_long_rmse": c.mean_long_rmse,
        })).collect::<Vec<_>>(),
    }));
    Ok(())
}

pub struct DiagnoseOptions {
    pub max_hops: usize,
    pub max_pairs: usize,
    pub horizon: Option<usize>,
    pub probe_windows: usize,
}

pub fn diagnose(
    checkpoint: &Path,
    config: Option<&Path>,
    opts: DiagnoseOptions,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (ck, cfg) = open_checkpoint(checkpoint, config)?;
    let data = checkpoint_data(&ck, &cfg)?;
    let test = data.test.with_virtual_nodes(ck.model.graph().n_virtual());
    if test.is_empty() || opts.probe_windows == 0 {
        return Err(CliError::Usage("no probe windows available".into()));
    }
    // evenly spaced over the test split
    let k = opts.probe_windows.min(test.len());
    let idx: Vec<usize> = (0..k).map(|i| i * test.len() / k).collect();
    let probe = test.input_batch(&idx)?;
    let sc = SensitivityConfig {
        max_hops: opts.max_hops,
        max_pairs: opts.max_pairs,
        horizon: opts.horizon,
        seed: cfg.seed,
    };
    let report = pairwise_sensitivity(&ck.model, &data.distance, &probe, &sc)?;
    let dir = checkpoint_output_dir(out, checkpoint);
    create_dir(&dir)?;
    write_json(&dir.join("sensitivity.json"), &report)?;
    let mut csv = String::from("hop,pairs,mean,max\n");
    for b in &report.buckets {
        csv.push_str(&format!("{},{},{:?},{:?}\n", b.hop, b.pairs, b.mean, b.max));
    }
    fs::write(dir.join("sensitivity.csv"), csv)?;
    print_summary(serde_json::to_value(&report)?);
    Ok(())
}

pub fn export_viz(
    checkpoint: &Path,
    config: Option<&Path>,
    virtual_index: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (ck, cfg) = open_checkpoint(checkpoint, config)?;
    let (graph, _) = load_data(&cfg)?;
    if graph.num_nodes() != ck.model.n_real() {
        return Err(CliError::Data(format!(
            "data has {} sensors, checkpoint expects {}",
            graph.num_nodes(),
            ck.model.n_real()
        )));
    }
    let adj = ck.model.adjacency()?;
    let dir = checkpoint_output_dir(out, checkpoint);
    create_dir(&dir)?;
    let mut buf = Vec::new();
    adj.write_csv(&mut buf)?;
    fs::write(dir.join("adjacency.csv"), buf)?;
    let heatmap = dir.join("heatmap.csv");
    export_real_to_virtual_heatmap(&adj, graph.node_ids(), &heatmap)?;
    let which: Vec<usize> = match virtual_index {
        Some(v) => vec![v],
        None => (0..adj.n_virtual).collect(),
    };
    let mut maps = Vec::new();
    for v in which {
        let p = dir.join(format!("node_weights_v{v}.csv"));
        export_node_weight_map(&adj, &graph, v, &p)?;
        maps.push(p);
    }
    print_summary(json!({
        "heatmap": heatmap,
        "node_weight_maps": maps,
        "n_virtual": adj.n_virtual,
    }));
    Ok(())
}
