//! Fixtures shared by the benchmarks under `benches/`.

use vnsg_core::data::{generate_synthetic, make_windows, SyntheticScenario, Topology};
use vnsg_core::graph::build_distance_adjacency;
use vnsg_core::{AdjacencyKind, ModelGraph, SplitRatios, Stgcn, StgcnConfig, Tensor, WindowedDataset};

/// Deterministic pseudo-random tensor.
pub fn filled(shape: &[usize], seed: u64) -> Tensor {
    let len: usize = shape.iter().product();
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let data = (0..len)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// A model on a two-cluster scenario plus its training windows.
pub fn model_fixture(nodes: usize, kind: AdjacencyKind, n_virtual: usize) -> (Stgcn, WindowedDataset) {
    let (graph, series) =
        generate_synthetic(&SyntheticScenario::new(Topology::TwoClusterBridge, nodes, 2, 1)).expect("scenario");
    let dist = build_distance_adjacency(&graph, 0.1).expect("distance matrix");
    let cfg = StgcnConfig::default();
    let [train, _, _] = make_windows(&series, cfg.input_window, cfg.output_horizons, n_virtual, SplitRatios::default())
        .expect("windows");
    let g = ModelGraph::from_kind(kind, &dist, n_virtual, 0.1).expect("graph");
    (Stgcn::new(cfg, g, 10, 0).expect("model"), train)
}
