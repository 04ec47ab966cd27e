//! End-to-end runs: windows, graph, model, training and evaluation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{make_windows, SplitRatios, TrafficSeries, WindowedDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport, DEFAULT_MAPE_EPSILON};
use crate::graph::{
    build_distance_adjacency, AdjacencyKind, AdjacencyMatrix, RoadGraph,
    DEFAULT_ADAPTIVE_THRESHOLD, DEFAULT_DISTANCE_THRESHOLD,
};
use crate::model::{ModelGraph, Stgcn, StgcnConfig};
use crate::training::{train, TrainConfig, TrainLog};

pub const DEFAULT_EMBEDDING_DIM: usize = 10;

/// Everything that defines one trained configuration except the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: AdjacencyKind,
    pub n_virtual: usize,
    pub distance_threshold: f64,
    pub adaptive_threshold: f64,
    pub embedding_dim: usize,
    pub mape_epsilon: f64,
    pub split: SplitRatios,
    pub model: StgcnConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: AdjacencyKind::SemiAdaptive,
            n_virtual: 4,
            distance_threshold: DEFAULT_DISTANCE_THRESHOLD,
            adaptive_threshold: DEFAULT_ADAPTIVE_THRESHOLD,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            mape_epsilon: DEFAULT_MAPE_EPSILON,
            split: SplitRatios::default(),
            model: StgcnConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AdjacencyKind::Distance if self.n_virtual != 0 => {
                return Err(Error::Config("kind = distance requires n_virtual = 0".into()))
            }
            AdjacencyKind::AllOnes if self.n_virtual != 1 => {
                return Err(Error::Config("kind = all_ones requires n_virtual = 1".into()))
            }
            k if k.is_learned() && self.n_virtual == 0 => {
                return Err(Error::Config(format!("kind = {k} requires n_virtual >= 1")))
            }
            k if k.is_learned() && self.embedding_dim == 0 => {
                return Err(Error::Config("embedding_dim must be >= 1".into()))
            }
            _ => {}
        }
        self.split.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

/// Windows and the distance matrix shared by every configuration run on
/// one dataset. Windows carry no virtual rows; runs pad them as needed.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub graph: RoadGraph,
    pub distance: AdjacencyMatrix,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

pub fn prepare(
    graph: RoadGraph,
    series: &TrafficSeries,
    model: &StgcnConfig,
    split: SplitRatios,
    distance_threshold: f64,
) -> Result<PreparedData> {
    if graph.node_ids() != series.node_ids() {
        return Err(Error::IdMismatch("graph and series list different sensors".into()));
    }
    let distance = build_distance_adjacency(&graph, distance_threshold)?;
    let [train, val, test] =
        make_windows(series, model.input_window, model.output_horizons, 0, split)?;
    Ok(PreparedData {
        graph,
        distance,
        train,
        val,
        test,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: Stgcn,
    pub log: TrainLog,
    pub report: MetricsReport,
}

/// Builds, trains and evaluates one configuration. `seed` drives weight
/// initialization, embeddings and shuffling through separate streams.
pub fn run_experiment(data: &PreparedData, config: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    config.validate()?;
    let graph = ModelGraph::from_kind(
        config.kind,
        &data.distance,
        config.n_virtual,
        config.adaptive_threshold,
    )?;
    let model = Stgcn::new(config.model.clone(), graph, config.embedding_dim, seed)?;
    let nv = config.n_virtual;
    let (tr, va, te) = (
        data.train.with_virtual_nodes(nv),
        data.val.with_virtual_nodes(nv),
        data.test.with_virtual_nodes(nv),
    );
    let tc = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let (model, log) = train(model, &tr, &va, &tc)?;
    let report = evaluate(&model, &te, seed, config.mape_epsilon, 256)?;
    log::info!(
        "{} n_v={} seed={seed}: avg RMSE {:.3}, 75-100 min RMSE {:?}",
        config.kind,
        nv,
        report.avg_rmse,
        report.long_rmse
    );
    Ok(RunOutcome { model, log, report })
}

/// One sweep cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepCell {
    pub kind: AdjacencyKind,
    pub n_virtual: usize,
    pub seed: u64,
}

/// Trains and evaluates every `(kind, n_v, seed)` cell of learned kinds.
/// Cells run on up to `jobs` threads; `on_cell` sees each finished report
/// (for incremental persistence). Results come back in grid order.
pub fn sweep_virtual_nodes<F>(
    data: &PreparedData,
    base: &ExperimentConfig,
    kinds: &[AdjacencyKind],
    n_virtual: &[usize],
    seeds: &[u64],
    jobs: usize,
    on_cell: F,
) -> Result<Vec<MetricsReport>>
where
    F: Fn(&SweepCell, &MetricsReport) + Sync,
{
    if seeds.is_empty() || kinds.is_empty() || n_virtual.is_empty() {
        return Err(Error::Config("sweep needs at least one kind, n_v and seed".into()));
    }
    if let Some(k) = kinds.iter().find(|k| !k.is_learned()) {
        return Err(Error::Config(format!(
            "sweep covers learned kinds only; {k} has a fixed virtual-node count"
        )));
    }
    let mut cells = Vec::new();
    for &kind in kinds {
        for &n_v in n_virtual {
            for &seed in seeds {
                cells.push(SweepCell {
                    kind,
                    n_virtual: n_v,
                    seed,
                });
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<MetricsReport>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(cell) = cells.get(i) else { break };
        let cfg = ExperimentConfig {
            kind: cell.kind,
            n_virtual: cell.n_virtual,
            ..base.clone()
        };
        let r = run_experiment(data, &cfg, cell.seed).map(|o| o.report);
        if let Ok(report) = &r {
            on_cell(cell, report);
        }
        results.lock().expect("poisoned")[i] = Some(r);
    };
    let jobs = jobs.clamp(1, cells.len());
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    results
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}
