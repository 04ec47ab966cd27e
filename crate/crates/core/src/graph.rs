//! Adjacency construction: thresholded Gaussian distance kernel, the
//! all-ones virtual-node baseline, embedding-driven adaptive matrices and
//! the semi-adaptive block matrix that keeps the geographic real-real block
//! fixed while learning every virtual-node block.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{self, Tensor};

pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_ADAPTIVE_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyKind {
    Distance,
    AllOnes,
    Adaptive,
    SemiAdaptive,
}

impl AdjacencyKind {
    pub const ALL: [AdjacencyKind; 4] = [
        AdjacencyKind::Distance,
        AdjacencyKind::AllOnes,
        AdjacencyKind::Adaptive,
        AdjacencyKind::SemiAdaptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdjacencyKind::Distance => "distance",
            AdjacencyKind::AllOnes => "all_ones",
            AdjacencyKind::Adaptive => "adaptive",
            AdjacencyKind::SemiAdaptive => "semi_adaptive",
        }
    }

    /// Whether this kind draws weights from node embeddings.
    pub fn is_learned(self) -> bool {
        matches!(self, AdjacencyKind::Adaptive | AdjacencyKind::SemiAdaptive)
    }
}

impl std::fmt::Display for AdjacencyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AdjacencyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdjacencyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown adjacency kind `{s}`")))
    }
}

/// Directed road distance between two sensors, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub from: usize,
    pub to: usize,
    pub meters: f64,
}

/// Sensor locations and pairwise road distances.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGraph {
    node_ids: Vec<String>,
    /// `(latitude, longitude)` in degrees.
    coords: Vec<(f64, f64)>,
    distances: Vec<DistanceEntry>,
}

impl RoadGraph {
    pub fn new(
        node_ids: Vec<String>,
        coords: Vec<(f64, f64)>,
        distances: Vec<DistanceEntry>,
    ) -> Result<Self> {
        let n = node_ids.len();
        if coords.len() != n {
            return Err(Error::Construction(format!(
                "{} coordinates for {n} nodes",
                coords.len()
            )));
        }
        for d in &distances {
            if d.from >= n || d.to >= n {
                return Err(Error::Construction(format!(
                    "distance entry ({}, {}) out of range for {n} nodes",
                    d.from, d.to
                )));
            }
            if d.from == d.to {
                return Err(Error::Construction(format!("self distance at node {}", d.from)));
            }
            if !(d.meters > 0.0) || !d.meters.is_finite() {
                return Err(Error::Construction(format!(
                    "distance ({}, {}) must be positive, got {}",
                    d.from, d.to, d.meters
                )));
            }
        }
        Ok(Self {
            node_ids,
            coords,
            distances,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn distances(&self) -> &[DistanceEntry] {
        &self.distances
    }
}

/// Square non-negative weight matrix over real and virtual nodes.
///
/// Real nodes occupy indices `0..n_real`, virtual nodes the trailing
/// `n_virtual` indices.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    pub weights: Tensor,
    pub n_real: usize,
    pub n_virtual: usize,
    pub kind: AdjacencyKind,
    /// Entries whose values come from node embeddings.
    pub learnable_mask: Vec<bool>,
    pub distance_threshold: Option<f64>,
    pub adaptive_threshold: Option<f64>,
    /// Self-loops added and rows normalized for propagation.
    pub normalized: bool,
}

/// Header written as a JSON comment ahead of a dense adjacency CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyHeader {
    pub kind: AdjacencyKind,
    pub n_real: usize,
    pub n_virtual: usize,
    pub distance_threshold: Option<f64>,
    pub adaptive_threshold: Option<f64>,
    pub normalized: bool,
}

impl AdjacencyMatrix {
    pub fn size(&self) -> usize {
        self.n_real + self.n_virtual
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.weights.at(i, j)
    }

    /// `[n_real, n_virtual]` block: real rows, virtual columns.
    pub fn real_to_virtual(&self) -> Tensor {
        self.weights.block(0..self.n_real, self.n_real..self.size())
    }

    /// `[n_virtual, n_real]` block: virtual rows, real columns.
    pub fn virtual_to_real(&self) -> Tensor {
        self.weights.block(self.n_real..self.size(), 0..self.n_real)
    }

    pub fn virtual_block(&self) -> Tensor {
        self.weights.block(self.n_real..self.size(), self.n_real..self.size())
    }

    pub fn real_block(&self) -> Tensor {
        self.weights.block(0..self.n_real, 0..self.n_real)
    }

    fn learnable_mask_for(kind: AdjacencyKind, n_real: usize, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n * n];
        match kind {
            AdjacencyKind::Distance | AdjacencyKind::AllOnes => {}
            AdjacencyKind::Adaptive => mask.iter_mut().for_each(|m| *m = true),
            AdjacencyKind::SemiAdaptive => {
                for i in 0..n {
                    for j in 0..n {
                        mask[i * n + j] = i >= n_real || j >= n_real;
                    }
                }
            }
        }
        mask
    }

    /// Rebuilds a matrix from its header and dense weights.
    pub fn from_header(header: &AdjacencyHeader, weights: Tensor) -> Result<Self> {
        let n = header.n_real + header.n_virtual;
        let a = Self {
            weights,
            n_real: header.n_real,
            n_virtual: header.n_virtual,
            kind: header.kind,
            learnable_mask: Self::learnable_mask_for(header.kind, header.n_real, n),
            distance_threshold: header.distance_threshold,
            adaptive_threshold: header.adaptive_threshold,
            normalized: header.normalized,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn header(&self) -> AdjacencyHeader {
        AdjacencyHeader {
            kind: self.kind,
            n_real: self.n_real,
            n_virtual: self.n_virtual,
            distance_threshold: self.distance_threshold,
            adaptive_threshold: self.adaptive_threshold,
            normalized: self.normalized,
        }
    }

    /// Checks the structural invariants of the matrix.
    pub fn validate(&self) -> Result<()> {
        let n = self.size();
        if self.weights.shape() != [n, n] || self.learnable_mask.len() != n * n {
            return Err(Error::shape("adjacency", self.weights.shape(), &[n, n]));
        }
        if let Some(v) = self.weights.data().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Construction(format!("negative or NaN weight {v}")));
        }
        if self.kind == AdjacencyKind::Distance && !self.normalized {
            if self.n_virtual != 0 {
                return Err(Error::Construction("distance matrix with virtual nodes".into()));
            }
            for i in 0..n {
                for j in 0..i {
                    if self.at(i, j) != self.at(j, i) {
                        return Err(Error::Construction(format!(
                            "distance matrix asymmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        if self.kind.is_learned() && !self.normalized {
            for i in 0..n {
                for j in 0..n {
                    if i != j
                        && self.learnable_mask[i * n + j]
                        && self.at(i, j) > 0.0
                        && self.at(j, i) > 0.0
                    {
                        return Err(Error::Construction(format!(
                            "learnable pair ({i}, {j}) is bidirectional"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Dense CSV with a leading `# {json}` header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", serde_json::to_string(&self.header())?)?;
        let n = self.size();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{}", self.at(i, j))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: "adjacency csv".into(),
            message,
        };
        let mut lines = BufReader::new(r).lines();
        let first = lines
            .next()
            .ok_or_else(|| parse_err("empty file".into()))??;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| parse_err("missing `#` header line".into()))?;
        let header: AdjacencyHeader = serde_json::from_str(json.trim())?;
        let n = header.n_real + header.n_virtual;
        let mut data = Vec::with_capacity(n * n);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let values: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(format!("row {row}: {e}")))?;
            if values.len() != n {
                return Err(parse_err(format!("row {row} has {} columns, expected {n}", values.len())));
            }
            data.extend(values);
        }
        let weights = Tensor::new(vec![n, n], data)
            .map_err(|_| parse_err(format!("expected {n} rows")))?;
        Ok(Self {
            weights,
            n_real: header.n_real,
            n_virtual: header.n_virtual,
            kind: header.kind,
            learnable_mask: Self::learnable_mask_for(header.kind, header.n_real, n),
            distance_threshold: header.distance_threshold,
            adaptive_threshold: header.adaptive_threshold,
            normalized: header.normalized,
        })
    }
}

/// Learnable embedding pair that generates adaptive adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEmbeddings {
    pub e1: Tensor,
    pub e2: Tensor,
    pub threshold: f64,
}

impl NodeEmbeddings {
    pub fn new(e1: Tensor, e2: Tensor, threshold: f64) -> Result<Self> {
        if e1.rank() != 2 || e1.shape() != e2.shape() || e1.shape()[1] == 0 {
            return Err(Error::shape("embeddings", e1.shape(), e2.shape()));
        }
        if !(threshold >= 0.0) {
            return Err(Error::Config(format!("adaptive threshold must be >= 0, got {threshold}")));
        }
        Ok(Self { e1, e2, threshold })
    }

    /// Independent draws for both matrices from `U[-1, 1] · d^(-1/4)`.
    ///
    /// The scale keeps the spread of `E1·E2ᵀ − E2·E1ᵀ` entries near 0.47
    /// for any `d`, so a threshold around 0.1 retains a sizeable share of
    /// connections at initialization.
    pub fn random<R: Rng>(rows: usize, dim: usize, threshold: f64, rng: &mut R) -> Result<Self> {
        let scale = (dim as f64).powf(-0.25);
        let mut draw = || {
            let data = (0..rows * dim)
                .map(|_| rng.gen_range(-1.0..1.0) * scale)
                .collect();
            Tensor::new(vec![rows, dim], data)
        };
        let e1 = draw()?;
        let e2 = draw()?;
        Self::new(e1, e2, threshold)
    }

    pub fn rows(&self) -> usize {
        self.e1.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.e1.shape()[1]
    }
}

/// Population standard deviation of the listed distances.
pub fn distance_sigma(distances: &[DistanceEntry]) -> f64 {
    let n = distances.len() as f64;
    let mean = distances.iter().map(|d| d.meters).sum::<f64>() / n;
    let var = distances
        .iter()
        .map(|d| (d.meters - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// Thresholded Gaussian kernel `exp(−d²/σ²)`, zeroed below `threshold`.
///
/// `σ` is the population standard deviation of every listed distance. A
/// pair listed in either direction gets the same weight both ways; when
/// both directions are listed the larger weight wins.
pub fn build_distance_adjacency(graph: &RoadGraph, threshold: f64) -> Result<AdjacencyMatrix> {
    if graph.distances.is_empty() {
        return Err(Error::Construction("empty distance list".into()));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "distance threshold must lie in [0, 1), got {threshold}"
        )));
    }
    let sigma = distance_sigma(&graph.distances);
    if !(sigma > 0.0) {
        return Err(Error::Construction(
            "distances have zero spread; the kernel width is undefined".into(),
        ));
    }
    let n = graph.num_nodes();
    let mut w = Tensor::zeros(&[n, n]);
    let s2 = sigma * sigma;
    for d in &graph.distances {
        let v = (-(d.meters * d.meters) / s2).exp();
        if v >= threshold {
            let cur = w.at(d.from, d.to);
            let v = cur.max(v);
            w.set(d.from, d.to, v);
            w.set(d.to, d.from, v);
        }
    }
    Ok(AdjacencyMatrix {
        weights: w,
        n_real: n,
        n_virtual: 0,
        kind: AdjacencyKind::Distance,
        learnable_mask: vec![false; n * n],
        distance_threshold: Some(threshold),
        adaptive_threshold: None,
        normalized: false,
    })
}

/// Distance matrix plus one virtual node wired to every real node with
/// weight 1 in both directions.
pub fn build_all_ones_adjacency(dist: &AdjacencyMatrix) -> Result<AdjacencyMatrix> {
    if dist.kind != AdjacencyKind::Distance || dist.normalized {
        return Err(Error::Construction(format!(
            "all-ones baseline needs a raw distance matrix, got {}",
            dist.kind
        )));
    }
    let nr = dist.n_real;
    let n = nr + 1;
    let mut w = Tensor::zeros(&[n, n]);
    for i in 0..nr {
        for j in 0..nr {
            w.set(i, j, dist.at(i, j));
        }
        w.set(i, nr, 1.0);
        w.set(nr, i, 1.0);
    }
    Ok(AdjacencyMatrix {
        weights: w,
        n_real: nr,
        n_virtual: 1,
        kind: AdjacencyKind::AllOnes,
        learnable_mask: vec![false; n * n],
        distance_threshold: dist.distance_threshold,
        adaptive_threshold: None,
        normalized: false,
    })
}

/// Records `threshold(ReLU(E1·E2ᵀ − E2·E1ᵀ), r)` on the tape.
///
/// `E2·E1ᵀ` is formed as the transpose of `E1·E2ᵀ`, so the pre-activation
/// is exactly anti-symmetric and at most one of each mirrored pair
/// survives the ReLU.
pub fn adaptive_on_tape(tape: &mut Tape, e1: Var, e2: Var, threshold: f64) -> Result<Var> {
    let e2t = tape.transpose(e2)?;
    let m = tape.matmul(e1, e2t)?;
    let mt = tape.transpose(m)?;
    let anti = tape.sub(m, mt)?;
    let pos = tape.relu(anti)?;
    tape.threshold(pos, threshold)
}

/// Records the semi-adaptive block matrix: `dist` in the real-real block and
/// the adaptive matrix everywhere a virtual node is involved.
pub fn semi_adaptive_on_tape(
    tape: &mut Tape,
    dist: &AdjacencyMatrix,
    e1: Var,
    e2: Var,
    threshold: f64,
) -> Result<Var> {
    let rows = tape.value(e1).shape()[0];
    if rows <= dist.n_real {
        return Err(Error::shape(
            "semi-adaptive embeddings",
            tape.value(e1).shape(),
            &[dist.n_real + 1],
        ));
    }
    let adapt = adaptive_on_tape(tape, e1, e2, threshold)?;
    let padded = pad_real_block(dist, rows);
    let padded = tape.constant(padded);
    let mask = AdjacencyMatrix::learnable_mask_for(AdjacencyKind::SemiAdaptive, dist.n_real, rows);
    tape.select(mask, adapt, padded)
}

fn pad_real_block(dist: &AdjacencyMatrix, n: usize) -> Tensor {
    let mut w = Tensor::zeros(&[n, n]);
    for i in 0..dist.n_real {
        for j in 0..dist.n_real {
            w.set(i, j, dist.at(i, j));
        }
    }
    w
}

/// Records `D⁻¹(A + I)`: unit self-loops, then each row scaled to sum 1.
pub fn normalize_on_tape(tape: &mut Tape, a: Var) -> Result<Var> {
    let n = tape.value(a).shape()[0];
    let eye = tape.constant(Tensor::identity(n));
    let looped = tape.add(a, eye)?;
    tape.row_normalize(looped)
}

pub fn build_adaptive_adjacency(emb: &NodeEmbeddings) -> Result<AdjacencyMatrix> {
    let mut tape = Tape::new();
    let e1 = tape.constant(emb.e1.clone());
    let e2 = tape.constant(emb.e2.clone());
    let a = adaptive_on_tape(&mut tape, e1, e2, emb.threshold)?;
    let n = emb.rows();
    Ok(AdjacencyMatrix {
        weights: tape.value(a).clone(),
        n_real: n,
        n_virtual: 0,
        kind: AdjacencyKind::Adaptive,
        learnable_mask: vec![true; n * n],
        distance_threshold: None,
        adaptive_threshold: Some(emb.threshold),
        normalized: false,
    })
}

/// Adaptive adjacency over `n_real` real and `rows - n_real` virtual nodes.
pub fn build_adaptive_with_virtual(emb: &NodeEmbeddings, n_real: usize) -> Result<AdjacencyMatrix> {
    if emb.rows() < n_real {
        return Err(Error::shape("adaptive embeddings", emb.e1.shape(), &[n_real]));
    }
    let mut a = build_adaptive_adjacency(emb)?;
    a.n_real = n_real;
    a.n_virtual = emb.rows() - n_real;
    Ok(a)
}

pub fn build_semi_adaptive_adjacency(
    dist: &AdjacencyMatrix,
    emb: &NodeEmbeddings,
) -> Result<AdjacencyMatrix> {
    if dist.kind != AdjacencyKind::Distance || dist.normalized {
        return Err(Error::Construction(format!(
            "semi-adaptive matrix needs a raw distance matrix, got {}",
            dist.kind
        )));
    }
    let mut tape = Tape::new();
    let e1 = tape.constant(emb.e1.clone());
    let e2 = tape.constant(emb.e2.clone());
    let a = semi_adaptive_on_tape(&mut tape, dist, e1, e2, emb.threshold)?;
    let n = emb.rows();
    Ok(AdjacencyMatrix {
        weights: tape.value(a).clone(),
        n_real: dist.n_real,
        n_virtual: n - dist.n_real,
        kind: AdjacencyKind::SemiAdaptive,
        learnable_mask: AdjacencyMatrix::learnable_mask_for(
            AdjacencyKind::SemiAdaptive,
            dist.n_real,
            n,
        ),
        distance_threshold: dist.distance_threshold,
        adaptive_threshold: Some(emb.threshold),
        normalized: false,
    })
}

/// Adds unit self-loops and row-normalizes.
pub fn normalize_for_propagation(a: &AdjacencyMatrix) -> AdjacencyMatrix {
    let n = a.size();
    let mut looped = a.weights.clone();
    for i in 0..n {
        let v = looped.at(i, i) + 1.0;
        looped.set(i, i, v);
    }
    let mut out = vec![0.0; n * n];
    let mut sums = vec![0.0; n];
    tensor::row_normalize(looped.data(), n, &mut out, &mut sums);
    AdjacencyMatrix {
        weights: Tensor::new(vec![n, n], out).expect("square"),
        normalized: true,
        ..a.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    /// Nonzero off-diagonal entries in the real-real block.
    pub edges: usize,
    pub mean_degree: f64,
    pub density: f64,
}

pub fn graph_stats(a: &AdjacencyMatrix) -> GraphStats {
    let n = a.n_real;
    let mut edges = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j && a.at(i, j) != 0.0 {
                edges += 1;
            }
        }
    }
    let mean_degree = if n == 0 { 0.0 } else { edges as f64 / n as f64 };
    let density = if n < 2 {
        0.0
    } else {
        edges as f64 / (n * (n - 1)) as f64
    };
    GraphStats {
        nodes: n,
        edges,
        mean_degree,
        density,
    }
}

/// Unweighted hop counts between real nodes over nonzero entries of the
/// real-real block, treating edges as undirected. `None` marks unreachable
/// pairs.
pub fn hop_distances(a: &AdjacencyMatrix) -> Vec<Vec<Option<usize>>> {
    let n = a.n_real;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && (a.at(i, j) != 0.0 || a.at(j, i) != 0.0))
                .collect()
        })
        .collect();
    (0..n)
        .map(|src| {
            let mut dist = vec![None; n];
            dist[src] = Some(0);
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                let du = dist[u].unwrap_or(0);
                for &v in &neighbors[u] {
                    if dist[v].is_none() {
                        dist[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, d: &[(usize, usize, f64)]) -> RoadGraph {
        RoadGraph::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec![(32.7, -117.1); n],
            d.iter()
                .map(|&(from, to, meters)| DistanceEntry { from, to, meters })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn road_graph_rejects_bad_entries() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let c = vec![(0.0, 0.0); 2];
        let bad = |from, to, meters| {
            RoadGraph::new(ids.clone(), c.clone(), vec![DistanceEntry { from, to, meters }])
        };
        assert!(bad(0, 0, 1.0).is_err());
        assert!(bad(0, 2, 1.0).is_err());
        assert!(bad(0, 1, 0.0).is_err());
        assert!(RoadGraph::new(ids.clone(), vec![(0.0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn gaussian_kernel_at_one_sigma() {
        // distances {1, 3}: mean 2, population sigma 1, so d = 1 gives exp(-1)
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 3.0)]);
        let a = build_distance_adjacency(&g, 0.3).unwrap();
        assert!((a.at(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(a.at(0, 1), a.at(1, 0));
        // exp(-9) is pruned by r = 0.3
        assert_eq!(a.at(1, 2), 0.0);
        assert_eq!(a.at(0, 0), 0.0);
        a.validate().unwrap();
    }

    #[test]
    fn tiny_distance_gives_weight_near_one() {
        let g = graph(3, &[(0, 1, 1e-6), (1, 2, 5.0), (0, 2, 10.0)]);
        let a = build_distance_adjacency(&g, 0.0).unwrap();
        assert!((a.at(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_or_flat_distances_are_errors() {
        assert!(build_distance_adjacency(&graph(2, &[]), 0.1).is_err());
        assert!(build_distance_adjacency(&graph(2, &[(0, 1, 4.0)]), 0.1).is_err());
        assert!(build_distance_adjacency(&graph(3, &[(0, 1, 4.0), (1, 2, 5.0)]), 1.0).is_err());
    }

    fn three_node_dist() -> AdjacencyMatrix {
        build_distance_adjacency(&graph(3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]), 0.0).unwrap()
    }

    #[test]
    fn all_ones_appends_one_virtual_node() {
        let d = three_node_dist();
        let a = build_all_ones_adjacency(&d).unwrap();
        assert_eq!(a.n_virtual, 1);
        assert_eq!(a.size(), 4);
        let last_row: Vec<f64> = (0..4).map(|j| a.at(3, j)).collect();
        let last_col: Vec<f64> = (0..4).map(|i| a.at(i, 3)).collect();
        assert_eq!(last_row, vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(last_col, vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(a.real_block(), d.weights);
        assert!(a.learnable_mask.iter().all(|m| !m));
        assert!(build_all_ones_adjacency(&a).is_err());
    }

    #[test]
    fn adaptive_equal_embeddings_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = NodeEmbeddings::random(5, 3, 0.0, &mut rng).unwrap();
        let same = NodeEmbeddings::new(e.e1.clone(), e.e1.clone(), 0.0).unwrap();
        let a = build_adaptive_adjacency(&same).unwrap();
        assert!(a.weights.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adaptive_hand_case() {
        let e1 = Tensor::from_rows(&[&[1.0], &[0.0]]);
        let e2 = Tensor::from_rows(&[&[0.0], &[1.0]]);
        let a = build_adaptive_adjacency(&NodeEmbeddings::new(e1, e2, 0.0).unwrap()).unwrap();
        assert_eq!(a.weights.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn semi_adaptive_keeps_distance_block() {
        let d = three_node_dist();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = NodeEmbeddings::random(5, 4, 0.1, &mut rng).unwrap();
        let s = build_semi_adaptive_adjacency(&d, &e).unwrap();
        assert_eq!(s.real_block(), d.weights);
        assert_eq!(s.n_virtual, 2);
        s.validate().unwrap();

        let same = NodeEmbeddings::new(e.e1.clone(), e.e1.clone(), 0.1).unwrap();
        let z = build_semi_adaptive_adjacency(&d, &same).unwrap();
        assert!(z.real_to_virtual().data().iter().all(|v| *v == 0.0));
        assert!(z.virtual_to_real().data().iter().all(|v| *v == 0.0));
        assert!(z.virtual_block().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn semi_adaptive_rejects_wrong_row_count() {
        let d = three_node_dist();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = NodeEmbeddings::random(3, 2, 0.1, &mut rng).unwrap();
        assert!(matches!(
            build_semi_adaptive_adjacency(&d, &e),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn normalization_cases() {
        let mut z = three_node_dist();
        z.weights = Tensor::zeros(&[2, 2]);
        z.n_real = 2;
        z.learnable_mask = vec![false; 4];
        assert_eq!(normalize_for_propagation(&z).weights, Tensor::identity(2));

        z.weights = Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let n = normalize_for_propagation(&z);
        assert_eq!(n.weights.data(), &[0.5, 0.5, 0.5, 0.5]);
        assert!(n.normalized);
    }

    #[test]
    fn stats_complete_and_empty() {
        let mut a = three_node_dist();
        a.weights = Tensor::from_rows(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        let s = graph_stats(&a);
        assert_eq!(s.density, 1.0);
        assert_eq!(s.mean_degree, 2.0);
        assert_eq!(s.edges, 6);
        a.weights = Tensor::zeros(&[3, 3]);
        assert_eq!(graph_stats(&a).density, 0.0);
    }

    #[test]
    fn hops_on_a_chain() {
        let g = graph(4, &[(0, 1, 1.0), (1, 2, 1.1), (2, 3, 0.9), (0, 3, 50.0)]);
        let a = build_distance_adjacency(&g, 0.1).unwrap();
        let h = hop_distances(&a);
        assert_eq!(h[0], vec![Some(0), Some(1), Some(2), Some(3)]);
        assert_eq!(h[3][1], Some(2));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let d = three_node_dist();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = NodeEmbeddings::random(5, 3, 0.1, &mut rng).unwrap();
        let s = build_semi_adaptive_adjacency(&d, &e).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"# {\"kind\":\"semi_adaptive\""));
        let back = AdjacencyMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn kind_parses_from_str() {
        for k in AdjacencyKind::ALL {
            assert_eq!(k.as_str().parse::<AdjacencyKind>().unwrap(), k);
        }
        assert!("semi".parse::<AdjacencyKind>().is_err());
    }
}
