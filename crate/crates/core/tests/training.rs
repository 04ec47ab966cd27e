use vnsg_core::checkpoint::write_checkpoint;
use vnsg_core::data::{generate_synthetic, make_windows, SyntheticScenario, Topology};
use vnsg_core::eval::rmse;
use vnsg_core::graph::{build_distance_adjacency, DistanceEntry};
use vnsg_core::model::{predict, EMBEDDING_E1, EMBEDDING_E2};
use vnsg_core::pipeline::prepare;
use vnsg_core::training::dataset_loss;
use vnsg_core::{
    train, AdjacencyKind, ModelGraph, RoadGraph, SplitRatios, Stgcn, StgcnConfig, TrafficSeries,
    TrainConfig, WindowedDataset,
};

fn small_model() -> StgcnConfig {
    StgcnConfig {
        num_blocks: 2,
        spatial_hidden: 4,
        temporal_hidden: 6,
        kernel_size: 2,
        input_window: 6,
        output_horizons: 3,
        ..Default::default()
    }
}

fn line_graph(n: usize) -> RoadGraph {
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let coords = (0..n).map(|i| (32.7 + 0.005 * i as f64, -117.1)).collect();
    let mut d = Vec::new();
    for i in 0..n - 1 {
        d.push(DistanceEntry { from: i, to: i + 1, meters: 500.0 + 10.0 * i as f64 });
    }
    for i in 0..n - 2 {
        d.push(DistanceEntry { from: i, to: i + 2, meters: 1500.0 });
    }
    RoadGraph::new(ids, coords, d).unwrap()
}

fn constant_flow(n: usize, len: usize) -> TrafficSeries {
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let ts = (0..len as i64).map(|k| 1_600_000_000 + 300 * k).collect();
    let values = (0..n).flat_map(|i| std::iter::repeat(50.0 + 5.0 * i as f64).take(len)).collect();
    TrafficSeries::new(ids, ts, values).unwrap()
}

fn windows(series: &TrafficSeries, nv: usize) -> [WindowedDataset; 3] {
    make_windows(series, 6, 3, nv, SplitRatios::default()).unwrap()
}

fn synthetic_windows(nv: usize) -> (RoadGraph, [WindowedDataset; 3]) {
    let (g, s) = generate_synthetic(&SyntheticScenario::new(Topology::Chain, 6, 1, 11)).unwrap();
    let w = make_windows(&s, 6, 3, nv, SplitRatios::default()).unwrap();
    (g, w)
}

#[test]
fn constant_flow_is_learned() {
    let n = 5;
    let series = constant_flow(n, 200);
    let dist = build_distance_adjacency(&line_graph(n), 0.1).unwrap();
    let [tr, va, te] = windows(&series, 0);
    let model = Stgcn::new(small_model(), ModelGraph::from_kind(AdjacencyKind::Distance, &dist, 0, 0.1).unwrap(), 0, 0).unwrap();
    let cfg = TrainConfig { learning_rate: 5e-3, max_epochs: 50, patience: 50, ..Default::default() };
    let (model, log) = train(model, &tr, &va, &cfg).unwrap();
    assert!(log.epochs.len() <= 50);
    let best = log.epochs.iter().map(|e| e.train_loss).fold(f64::INFINITY, f64::min);
    assert!(best < 0.05, "train MAE {best}");
    let pred = predict(&model, &te, 64).unwrap();
    let truth = te.denormalized_targets().unwrap();
    let e = rmse(&pred, &truth).unwrap();
    assert!(e < 1.0, "constant-flow RMSE {e}");
}

#[test]
fn same_seed_same_log_and_checkpoint() {
    let (g, [tr, va, _]) = synthetic_windows(2);
    let dist = build_distance_adjacency(&g, 0.1).unwrap();
    let run = || {
        let graph = ModelGraph::from_kind(AdjacencyKind::SemiAdaptive, &dist, 2, 0.1).unwrap();
        let m = Stgcn::new(small_model(), graph, 3, 4).unwrap();
        let cfg = TrainConfig { max_epochs: 3, seed: 4, ..Default::default() };
        let (m, log) = train(m, &tr, &va, &cfg).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &m, tr.norm, &serde_json::Value::Null).unwrap();
        (log, bytes)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn frozen_silent_virtual_nodes_track_distance_only() {
    let (g, [tr, va, _]) = synthetic_windows(0);
    let dist = build_distance_adjacency(&g, 0.1).unwrap();
    let cfg = TrainConfig { max_epochs: 3, seed: 2, ..Default::default() };

    let base = Stgcn::new(small_model(), ModelGraph::from_kind(AdjacencyKind::Distance, &dist, 0, 0.1).unwrap(), 0, 2).unwrap();
    let (_, base_log) = train(base, &tr, &va, &cfg).unwrap();

    let graph = ModelGraph::from_kind(AdjacencyKind::SemiAdaptive, &dist, 2, 0.1).unwrap();
    let mut semi = Stgcn::new(small_model(), graph, 3, 2).unwrap();
    let e1 = semi.params().get(EMBEDDING_E1).unwrap().clone();
    semi.params_mut().assign(EMBEDDING_E2, e1).unwrap();
    let before = semi.params().get(EMBEDDING_E2).unwrap().clone();
    let frozen = TrainConfig { freeze_embeddings: true, ..cfg };
    let (semi, semi_log) = train(semi, &tr.with_virtual_nodes(2), &va.with_virtual_nodes(2), &frozen).unwrap();

    assert_eq!(semi.params().get(EMBEDDING_E2).unwrap(), &before);
    assert_eq!(base_log.epochs.len(), semi_log.epochs.len());
    for (a, b) in base_log.epochs.iter().zip(&semi_log.epochs) {
        assert!((a.train_loss - b.train_loss).abs() < 1e-9, "{} vs {}", a.train_loss, b.train_loss);
        assert!((a.val_loss - b.val_loss).abs() < 1e-9);
    }
}

#[test]
fn embeddings_move_and_real_block_stays() {
    let (g, [tr, va, _]) = synthetic_windows(2);
    let dist = build_distance_adjacency(&g, 0.1).unwrap();
    let graph = ModelGraph::from_kind(AdjacencyKind::SemiAdaptive, &dist, 2, 0.1).unwrap();
    let m = Stgcn::new(small_model(), graph, 3, 8).unwrap();
    let adj0 = m.adjacency().unwrap();
    assert!(adj0.real_to_virtual().data().iter().any(|v| *v > 0.0));
    let (e1, e2) = (m.params().get(EMBEDDING_E1).unwrap().clone(), m.params().get(EMBEDDING_E2).unwrap().clone());
    let cfg = TrainConfig { max_epochs: 1, ..Default::default() };
    let (m, _) = train(m, &tr, &va, &cfg).unwrap();
    assert!(m.params().get(EMBEDDING_E1).unwrap() != &e1 || m.params().get(EMBEDDING_E2).unwrap() != &e2);
    let adj1 = m.adjacency().unwrap();
    assert_eq!(adj1.real_block(), dist.weights);
    assert_eq!(adj1.real_block(), adj0.real_block());
}

#[test]
fn training_does_not_raise_validation_loss_of_best_model() {
    let (g, s) = generate_synthetic(&SyntheticScenario::new(Topology::Grid, 9, 1, 5)).unwrap();
    let data = prepare(g, &s, &small_model(), SplitRatios::default(), 0.1).unwrap();
    let graph = ModelGraph::from_kind(AdjacencyKind::Distance, &data.distance, 0, 0.1).unwrap();
    let m = Stgcn::new(small_model(), graph, 0, 1).unwrap();
    let initial = dataset_loss(&m, &data.val, 64).unwrap();
    let (m, log) = train(m, &data.train, &data.val, &TrainConfig { max_epochs: 4, ..Default::default() }).unwrap();
    let best = log.best_val_loss().unwrap();
    assert_eq!(dataset_loss(&m, &data.val, 64).unwrap(), best);
    assert!(best < initial);
}
