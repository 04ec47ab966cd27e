//! Pairwise input-output sensitivity grouped by road-graph hop distance.
//!
//! For a sampled pair `(u, v)` of real nodes the statistic is
//! `|∂ŷ[v, h] / ∂x[u, T_in − 1]|`, averaged over probe windows. Each
//! distinct output node costs one backward pass covering every `u` at once.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{hop_distances, AdjacencyKind, AdjacencyMatrix};
use crate::model::Stgcn;
use crate::rng::{rng_for, Stream};
use crate::tape::Tape;
use crate::tensor::Tensor;

pub const DEFAULT_MAX_PAIRS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    /// Largest hop distance reported; farther pairs are skipped.
    pub max_hops: usize,
    pub max_pairs: usize,
    /// 1-indexed output horizon; `None` means the last one.
    pub horizon: Option<usize>,
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            max_hops: 6,
            max_pairs: DEFAULT_MAX_PAIRS,
            horizon: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopBucket {
    pub hop: usize,
    pub pairs: usize,
    pub mean: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub kind: AdjacencyKind,
    pub n_virtual: usize,
    pub horizon: usize,
    pub probe_windows: usize,
    /// Buckets for hops `0..=max_hops` that received at least one pair.
    pub buckets: Vec<HopBucket>,
    pub sampled_pairs: usize,
    /// Sampled pairs with no path in the real graph.
    pub disconnected: usize,
    /// Sampled pairs farther apart than `max_hops`.
    pub beyond_max_hops: usize,
}

impl SensitivityReport {
    pub fn bucket(&self, hop: usize) -> Option<&HopBucket> {
        self.buckets.iter().find(|b| b.hop == hop)
    }

    /// Largest sensitivity over all buckets with `hop > min_hop`.
    pub fn max_beyond(&self, min_hop: usize) -> f64 {
        self.buckets
            .iter()
            .filter(|b| b.hop > min_hop)
            .map(|b| b.max)
            .fold(0.0, f64::max)
    }

    /// Pair-weighted mean over buckets with `hop >= min_hop`.
    pub fn mean_from(&self, min_hop: usize) -> f64 {
        let (s, n) = self
            .buckets
            .iter()
            .filter(|b| b.hop >= min_hop)
            .fold((0.0, 0), |(s, n), b| (s + b.mean * b.pairs as f64, n + b.pairs));
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }
}

/// Computes the per-hop sensitivity of `model` on `probe`
/// (`[B, N_total, T_in]`, virtual rows zero). Hop distances come from
/// unweighted BFS over the nonzero pattern of `hop_graph`'s real block.
pub fn pairwise_sensitivity(
    model: &Stgcn,
    hop_graph: &AdjacencyMatrix,
    probe: &Tensor,
    config: &SensitivityConfig,
) -> Result<SensitivityReport> {
    let n_real = model.n_real();
    let n = model.total_nodes();
    let t_in = model.config().input_window;
    let t_out = model.config().output_horizons;
    if hop_graph.n_real != n_real {
        return Err(Error::shape("sensitivity graph", &[hop_graph.n_real], &[n_real]));
    }
    if probe.rank() != 3 || probe.shape()[1] != n || probe.shape()[2] != t_in {
        return Err(Error::shape("sensitivity probe", probe.shape(), &[0, n, t_in]));
    }
    let horizon = config.horizon.unwrap_or(t_out);
    if horizon == 0 || horizon > t_out {
        return Err(Error::Config(format!("horizon {horizon} outside 1..={t_out}")));
    }
    let batch = probe.shape()[0];
    if batch == 0 {
        return Err(Error::Config("no probe windows".into()));
    }

    let total_pairs = n_real * n_real;
    let mut rng = rng_for(config.seed, Stream::PairSampling);
    let mut chosen: Vec<usize> = if total_pairs <= config.max_pairs {
        (0..total_pairs).collect()
    } else {
        sample(&mut rng, total_pairs, config.max_pairs).into_vec()
    };
    chosen.sort_unstable();
    // output node -> input nodes
    let mut by_output: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in &chosen {
        by_output.entry(p % n_real).or_default().push(p / n_real);
    }

    let hops = hop_distances(hop_graph);
    let mut sums: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    let (mut disconnected, mut beyond) = (0, 0);

    let mut tape = Tape::new();
    let vars = model.params().register(&mut tape, false);
    let x = tape.param(probe.clone());
    let y = model.record(&mut tape, &vars, x)?;
    let mut seed = vec![0.0; batch * n_real * t_out];
    for (&v, inputs) in &by_output {
        seed.iter_mut().for_each(|s| *s = 0.0);
        for b in 0..batch {
            seed[(b * n_real + v) * t_out + horizon - 1] = 1.0;
        }
        let grads = tape.backward_with(y, &seed)?;
        let gx = grads.get_or_zeros(x, probe.len());
        for &u in inputs {
            let Some(h) = hops[u][v] else {
                disconnected += 1;
                continue;
            };
            if h > config.max_hops {
                beyond += 1;
                continue;
            }
            let s = (0..batch)
                .map(|b| gx[(b * n + u) * t_in + t_in - 1].abs())
                .sum::<f64>()
                / batch as f64;
            let e = sums.entry(h).or_insert((0, 0.0, 0.0));
            e.0 += 1;
            e.1 += s;
            e.2 = e.2.max(s);
        }
    }
    Ok(SensitivityReport {
        kind: model.graph().kind(),
        n_virtual: model.graph().n_virtual(),
        horizon,
        probe_windows: batch,
        buckets: sums
            .into_iter()
            .map(|(hop, (pairs, s, max))| HopBucket {
                hop,
                pairs,
                mean: s / pairs as f64,
                max,
            })
            .collect(),
        sampled_pairs: chosen.len(),
        disconnected,
        beyond_max_hops: beyond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_distance_adjacency, DistanceEntry, RoadGraph};
    use crate::model::{ModelGraph, StgcnConfig};

    fn chain(n: usize) -> AdjacencyMatrix {
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let mut d = Vec::new();
        for i in 0..n - 1 {
            let m = 1.0 + 0.1 * i as f64;
            d.push(DistanceEntry { from: i, to: i + 1, meters: m });
            d.push(DistanceEntry { from: i + 1, to: i, meters: m });
        }
        // pruned far pairs widen the kernel
        for i in 0..n - 2 {
            d.push(DistanceEntry { from: i, to: i + 2, meters: 5.0 });
        }
        build_distance_adjacency(&RoadGraph::new(ids, vec![(0.0, 0.0); n], d).unwrap(), 0.01).unwrap()
    }

    fn model(kind: AdjacencyKind, nv: usize, dist: &AdjacencyMatrix) -> Stgcn {
        let cfg = StgcnConfig {
            num_blocks: 2,
            spatial_hidden: 4,
            temporal_hidden: 4,
            kernel_size: 2,
            input_window: 6,
            output_horizons: 2,
            ..Default::default()
        };
        Stgcn::new(cfg, ModelGraph::from_kind(kind, dist, nv, 0.1).unwrap(), 2, 1).unwrap()
    }

    fn probe(n_real: usize, n: usize) -> Tensor {
        let mut x = Tensor::zeros(&[2, n, 6]);
        for b in 0..2 {
            for i in 0..n_real {
                for k in 0..6 {
                    x.data_mut()[(b * n + i) * 6 + k] = ((b + 2 * i + 3 * k) as f64).cos();
                }
            }
        }
        x
    }

    #[test]
    fn distance_only_reach_is_bounded_by_depth() {
        let dist = chain(8);
        let m = model(AdjacencyKind::Distance, 0, &dist);
        let r = pairwise_sensitivity(&m, &dist, &probe(8, 8), &SensitivityConfig::default()).unwrap();
        assert_eq!(r.sampled_pairs, 64);
        assert_eq!(r.disconnected, 0);
        assert_eq!(r.beyond_max_hops, 2);
        assert!(r.bucket(1).unwrap().mean > 0.0);
        assert!(r.bucket(2).unwrap().mean > 0.0);
        assert_eq!(r.max_beyond(2), 0.0);
    }

    #[test]
    fn virtual_node_reaches_far_pairs() {
        let dist = chain(8);
        let m = model(AdjacencyKind::AllOnes, 1, &dist);
        let r = pairwise_sensitivity(&m, &dist, &probe(8, 9), &SensitivityConfig::default()).unwrap();
        for h in 3..=6 {
            assert!(r.bucket(h).unwrap().mean > 0.0, "hop {h}");
        }
    }

    #[test]
    fn pair_cap_and_bad_horizon() {
        let dist = chain(8);
        let m = model(AdjacencyKind::Distance, 0, &dist);
        let cfg = SensitivityConfig { max_pairs: 10, ..Default::default() };
        let r = pairwise_sensitivity(&m, &dist, &probe(8, 8), &cfg).unwrap();
        assert_eq!(r.sampled_pairs, 10);
        assert_eq!(r, pairwise_sensitivity(&m, &dist, &probe(8, 8), &cfg).unwrap());
        let bad = SensitivityConfig { horizon: Some(3), ..Default::default() };
        assert!(pairwise_sensitivity(&m, &dist, &probe(8, 8), &bad).is_err());
    }
}
