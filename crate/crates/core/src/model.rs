//! Spatio-temporal graph convolutional forecaster.
//!
//! Each block is a temporal gated convolution, one spatial propagation
//! `σ(Â H W)` and a second temporal gated convolution. A gated convolution
//! spanning the remaining time axis followed by a per-node linear map
//! produces the horizon outputs. Virtual nodes take part in propagation
//! but are dropped from the output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::graph::{
    self, AdjacencyKind, AdjacencyMatrix, NodeEmbeddings,
};
use crate::params::ParamSet;
use crate::rng::{rng_for, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialActivation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalActivation {
    /// Linear path times a sigmoid gate, both causal convolutions.
    Glu,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StgcnConfig {
    pub num_blocks: usize,
    pub spatial_hidden: usize,
    pub temporal_hidden: usize,
    pub kernel_size: usize,
    pub activation_spatial: SpatialActivation,
    pub activation_temporal: TemporalActivation,
    pub input_window: usize,
    pub output_horizons: usize,
    /// Propagate with the raw adjacency instead of `D⁻¹(A + I)`.
    pub raw_adjacency: bool,
}

impl Default for StgcnConfig {
    fn default() -> Self {
        Self {
            num_blocks: 2,
            spatial_hidden: 16,
            temporal_hidden: 32,
            kernel_size: 3,
            activation_spatial: SpatialActivation::Relu,
            activation_temporal: TemporalActivation::Glu,
            input_window: 12,
            output_horizons: 20,
            raw_adjacency: false,
        }
    }
}

impl StgcnConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_blocks", self.num_blocks),
            ("spatial_hidden", self.spatial_hidden),
            ("temporal_hidden", self.temporal_hidden),
            ("kernel_size", self.kernel_size),
            ("output_horizons", self.output_horizons),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be >= 1")));
        }
        let needed = self.num_blocks * 2 * (self.kernel_size - 1) + 1;
        if self.input_window < needed {
            return Err(Error::Config(format!(
                "model.input_window = {} cannot survive {} blocks of kernel {}; need >= {needed}",
                self.input_window, self.num_blocks, self.kernel_size
            )));
        }
        Ok(())
    }

    /// Time steps left after all block convolutions.
    pub fn remaining_len(&self) -> usize {
        self.input_window - self.num_blocks * 2 * (self.kernel_size - 1)
    }
}

/// Adjacency the forecaster propagates over.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelGraph {
    /// Distance-based or all-ones matrix, constant during training.
    Fixed(AdjacencyMatrix),
    /// Fully embedding-driven matrix over real and virtual nodes.
    Adaptive {
        n_real: usize,
        n_virtual: usize,
        threshold: f64,
    },
    /// Fixed distance block plus embedding-driven virtual blocks.
    SemiAdaptive {
        distance: AdjacencyMatrix,
        n_virtual: usize,
        threshold: f64,
    },
}

impl ModelGraph {
    /// Builds the graph for `kind` from a raw distance matrix, checking the
    /// virtual-node count the kind implies.
    pub fn from_kind(
        kind: AdjacencyKind,
        distance: &AdjacencyMatrix,
        n_virtual: usize,
        adaptive_threshold: f64,
    ) -> Result<Self> {
        if distance.kind != AdjacencyKind::Distance || distance.normalized {
            return Err(Error::Construction("expected a raw distance matrix".into()));
        }
        match kind {
            AdjacencyKind::Distance => {
                if n_virtual != 0 {
                    return Err(Error::Config(format!(
                        "adjacency kind distance requires n_virtual = 0, got {n_virtual}"
                    )));
                }
                Ok(ModelGraph::Fixed(distance.clone()))
            }
            AdjacencyKind::AllOnes => {
                if n_virtual != 1 {
                    return Err(Error::Config(format!(
                        "adjacency kind all_ones requires n_virtual = 1, got {n_virtual}"
                    )));
                }
                Ok(ModelGraph::Fixed(graph::build_all_ones_adjacency(distance)?))
            }
            AdjacencyKind::Adaptive | AdjacencyKind::SemiAdaptive => {
                if n_virtual == 0 {
                    return Err(Error::Config(format!(
                        "adjacency kind {kind} requires n_virtual >= 1"
                    )));
                }
                if !(adaptive_threshold >= 0.0) {
                    return Err(Error::Config("adaptive threshold must be >= 0".into()));
                }
                Ok(if kind == AdjacencyKind::Adaptive {
                    ModelGraph::Adaptive {
                        n_real: distance.n_real,
                        n_virtual,
                        threshold: adaptive_threshold,
                    }
                } else {
                    ModelGraph::SemiAdaptive {
                        distance: distance.clone(),
                        n_virtual,
                        threshold: adaptive_threshold,
                    }
                })
            }
        }
    }

    pub fn kind(&self) -> AdjacencyKind {
        match self {
            ModelGraph::Fixed(a) => a.kind,
            ModelGraph::Adaptive { .. } => AdjacencyKind::Adaptive,
            ModelGraph::SemiAdaptive { .. } => AdjacencyKind::SemiAdaptive,
        }
    }

    pub fn n_real(&self) -> usize {
        match self {
            ModelGraph::Fixed(a) => a.n_real,
            ModelGraph::Adaptive { n_real, .. } => *n_real,
            ModelGraph::SemiAdaptive { distance, .. } => distance.n_real,
        }
    }

    pub fn n_virtual(&self) -> usize {
        match self {
            ModelGraph::Fixed(a) => a.n_virtual,
            ModelGraph::Adaptive { n_virtual, .. } | ModelGraph::SemiAdaptive { n_virtual, .. } => {
                *n_virtual
            }
        }
    }

    pub fn total_nodes(&self) -> usize {
        self.n_real() + self.n_virtual()
    }

    pub fn adaptive_threshold(&self) -> Option<f64> {
        match self {
            ModelGraph::Fixed(_) => None,
            ModelGraph::Adaptive { threshold, .. } | ModelGraph::SemiAdaptive { threshold, .. } => {
                Some(*threshold)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Temporal {
    lin_w: usize,
    lin_b: usize,
    gate: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    t1: Temporal,
    spatial_w: usize,
    t2: Temporal,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    blocks: Vec<Block>,
    collapse: Temporal,
    out_w: usize,
    out_b: usize,
    embeddings: Option<(usize, usize)>,
}

pub const EMBEDDING_E1: &str = "embeddings.e1";
pub const EMBEDDING_E2: &str = "embeddings.e2";

/// The forecaster: configuration, adjacency and every trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Stgcn {
    config: StgcnConfig,
    graph: ModelGraph,
    params: ParamSet,
    layout: Layout,
}

impl Stgcn {
    /// Fresh model with Xavier-uniform weights, zero biases and, for learned
    /// adjacency kinds, random embeddings of width `embedding_dim`. Weights
    /// and embeddings draw from separate streams of `seed`.
    pub fn new(
        config: StgcnConfig,
        graph: ModelGraph,
        embedding_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, Stream::ModelWeights);
        let mut params = ParamSet::new();
        let k = config.kernel_size;
        let th = config.temporal_hidden;
        let sh = config.spatial_hidden;

        let mut blocks = Vec::with_capacity(config.num_blocks);
        let mut c_in = 1;
        for b in 0..config.num_blocks {
            let t1 = temporal(&mut params, &mut rng, &format!("block{b}.tconv1"), c_in, th, k, &config)?;
            let spatial_w = params.push(
                format!("block{b}.spatial.w"),
                xavier(&mut rng, &[sh, th, 1], th, sh),
            )?;
            let t2 = temporal(&mut params, &mut rng, &format!("block{b}.tconv2"), sh, th, k, &config)?;
            blocks.push(Block { t1, spatial_w, t2 });
            c_in = th;
        }
        let collapse = temporal(
            &mut params,
            &mut rng,
            "readout.collapse",
            th,
            th,
            config.remaining_len(),
            &config,
        )?;
        let out_w = params.push(
            "readout.out.w",
            xavier(&mut rng, &[config.output_horizons, th, 1], th, config.output_horizons),
        )?;
        let out_b = params.push("readout.out.b", Tensor::zeros(&[config.output_horizons]))?;

        let embeddings = if graph.kind().is_learned() {
            if embedding_dim == 0 {
                return Err(Error::Config("embedding dimension must be >= 1".into()));
            }
            let mut erng = rng_for(seed, Stream::Embeddings);
            let threshold = graph.adaptive_threshold().unwrap_or(0.0);
            let emb = NodeEmbeddings::random(graph.total_nodes(), embedding_dim, threshold, &mut erng)?;
            let i1 = params.push(EMBEDDING_E1, emb.e1)?;
            let i2 = params.push(EMBEDDING_E2, emb.e2)?;
            Some((i1, i2))
        } else {
            None
        };

        Ok(Self {
            config,
            graph,
            params,
            layout: Layout {
                blocks,
                collapse,
                out_w,
                out_b,
                embeddings,
            },
        })
    }

    /// Same architecture with replacement parameter values (for example
    /// loaded from a checkpoint). Names and shapes must match exactly.
    pub fn with_params(mut self, params: ParamSet) -> Result<Self> {
        if params.names() != self.params.names() {
            return Err(Error::Checkpoint(format!(
                "parameter names differ: expected {:?}, found {:?}",
                self.params.names(),
                params.names()
            )));
        }
        for (name, t) in params.iter() {
            self.params.assign(name, t.clone())?;
        }
        Ok(self)
    }

    pub fn config(&self) -> &StgcnConfig {
        &self.config
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn n_real(&self) -> usize {
        self.graph.n_real()
    }

    pub fn total_nodes(&self) -> usize {
        self.graph.total_nodes()
    }

    pub fn embeddings(&self) -> Option<NodeEmbeddings> {
        let (i1, i2) = self.layout.embeddings?;
        let t = self.params.tensors();
        Some(NodeEmbeddings {
            e1: t[i1].clone(),
            e2: t[i2].clone(),
            threshold: self.graph.adaptive_threshold().unwrap_or(0.0),
        })
    }

    /// Current raw adjacency, materialized from embeddings when learned.
    pub fn adjacency(&self) -> Result<AdjacencyMatrix> {
        match &self.graph {
            ModelGraph::Fixed(a) => Ok(a.clone()),
            ModelGraph::Adaptive { n_real, .. } => {
                graph::build_adaptive_with_virtual(&self.embeddings().expect("learned"), *n_real)
            }
            ModelGraph::SemiAdaptive { distance, .. } => {
                graph::build_semi_adaptive_adjacency(distance, &self.embeddings().expect("learned"))
            }
        }
    }

    /// Adjacency actually used for propagation.
    pub fn propagation_matrix(&self) -> Result<AdjacencyMatrix> {
        let a = self.adjacency()?;
        Ok(if self.config.raw_adjacency {
            a
        } else {
            graph::normalize_for_propagation(&a)
        })
    }

    /// Records the propagation adjacency on the tape.
    pub fn record_adjacency(&self, tape: &mut Tape, vars: &[Var]) -> Result<Var> {
        let raw = match &self.graph {
            ModelGraph::Fixed(a) => tape.constant(a.weights.clone()),
            ModelGraph::Adaptive { threshold, .. } => {
                let (i1, i2) = self.layout.embeddings.expect("learned");
                graph::adaptive_on_tape(tape, vars[i1], vars[i2], *threshold)?
            }
            ModelGraph::SemiAdaptive {
                distance,
                threshold,
                ..
            } => {
                let (i1, i2) = self.layout.embeddings.expect("learned");
                graph::semi_adaptive_on_tape(tape, distance, vars[i1], vars[i2], *threshold)?
            }
        };
        if self.config.raw_adjacency {
            Ok(raw)
        } else {
            graph::normalize_on_tape(tape, raw)
        }
    }

    /// Records the forward pass for `x: [B, N_total, T_in]`, returning
    /// `[B, n_real, T_out]`. `vars` are this model's parameters registered on
    /// the same tape (see [`ParamSet::register`]).
    pub fn record(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let n = self.total_nodes();
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 3 || shape[1] != n || shape[2] != self.config.input_window {
            return Err(Error::shape(
                "forward input",
                &shape,
                &[shape.first().copied().unwrap_or(0), n, self.config.input_window],
            ));
        }
        let batch = shape[0];
        let xd = tape.value(x).data();
        let t_in = self.config.input_window;
        for b in 0..batch {
            let start = (b * n + self.n_real()) * t_in;
            if xd[start..(b + 1) * n * t_in].iter().any(|v| *v != 0.0) {
                return Err(Error::Config("virtual-node input rows must be zero".into()));
            }
        }

        let adj = self.record_adjacency(tape, vars).map_err(|e| layer_err(e, "adjacency"))?;
        let mut h = tape.reshape(x, &[batch * n, 1, t_in])?;
        for (bi, block) in self.layout.blocks.iter().enumerate() {
            h = self
                .record_temporal(tape, vars, &block.t1, h)
                .map_err(|e| layer_err(e, &format!("block{bi}.tconv1")))?;
            h = self
                .record_spatial(tape, vars, adj, block.spatial_w, h, batch)
                .map_err(|e| layer_err(e, &format!("block{bi}.spatial")))?;
            h = self
                .record_temporal(tape, vars, &block.t2, h)
                .map_err(|e| layer_err(e, &format!("block{bi}.tconv2")))?;
        }
        let h = self
            .record_temporal(tape, vars, &self.layout.collapse, h)
            .map_err(|e| layer_err(e, "readout.collapse"))?;
        let y = tape
            .conv1d(h, vars[self.layout.out_w], Some(vars[self.layout.out_b]))
            .map_err(|e| layer_err(e, "readout.out"))?;
        let y = tape.reshape(y, &[batch, n, self.config.output_horizons])?;
        tape.slice_middle(y, self.n_real())
    }

    fn record_temporal(&self, tape: &mut Tape, vars: &[Var], t: &Temporal, h: Var) -> Result<Var> {
        let lin = tape.conv1d(h, vars[t.lin_w], Some(vars[t.lin_b]))?;
        match t.gate {
            Some((gw, gb)) => {
                let gate = tape.conv1d(h, vars[gw], Some(vars[gb]))?;
                let gate = tape.sigmoid(gate)?;
                tape.mul(lin, gate)
            }
            None => Ok(lin),
        }
    }

    fn record_spatial(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        adj: Var,
        w: usize,
        h: Var,
        batch: usize,
    ) -> Result<Var> {
        // Â(HW) = (ÂH)W; mixing channels first keeps propagation narrow.
        let mixed = tape.conv1d(h, vars[w], None)?;
        let s = tape.value(mixed).shape().to_vec();
        let n = self.total_nodes();
        let flat = tape.reshape(mixed, &[batch, n, s[1] * s[2]])?;
        let prop = tape.propagate(adj, flat)?;
        let back = tape.reshape(prop, &s)?;
        match self.config.activation_spatial {
            SpatialActivation::Relu => tape.relu(back),
            SpatialActivation::Identity => Ok(back),
        }
    }

    /// Forward pass without gradients. Accepts `[N_total, T_in]` or
    /// `[B, N_total, T_in]`, returning `[n_real, T_out]` or
    /// `[B, n_real, T_out]` in the same (normalized) units as the input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let single = x.rank() == 2;
        let xb = if single {
            let mut s = vec![1];
            s.extend_from_slice(x.shape());
            x.reshape(&s)?
        } else {
            x.clone()
        };
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, false);
        let xv = tape.constant(xb);
        let y = self.record(&mut tape, &vars, xv)?;
        let out = tape.value(y).clone();
        if single {
            out.reshape(&[self.n_real(), self.config.output_horizons])
        } else {
            Ok(out)
        }
    }

    /// MAE between the forward pass on `x` and `target`; gradients are
    /// added into each parameter's accumulator.
    pub fn accumulate_mae_grads(&mut self, x: &Tensor, target: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape, true);
        let xv = tape.constant(x.clone());
        let y = self.record(&mut tape, &vars, xv)?;
        let t = tape.constant(target.clone());
        let loss = tape.mean_abs_error(y, t)?;
        let value = tape.value(loss).data()[0];
        let grads = tape.backward(loss)?;
        for (p, v) in self.params.tensors_mut().iter_mut().zip(&vars) {
            if let Some(g) = grads.get(*v) {
                p.accumulate_grad(g)?;
            }
        }
        Ok(value)
    }

    pub fn embedding_indices(&self) -> Option<(usize, usize)> {
        self.layout.embeddings
    }
}

fn layer_err(e: Error, layer: &str) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{layer} ({context})"),
        },
        other => other,
    }
}

fn xavier<R: Rng>(rng: &mut R, shape: &[usize], fan_in_ch: usize, fan_out_ch: usize) -> Tensor {
    let k: usize = shape[2];
    let limit = (6.0 / ((fan_in_ch + fan_out_ch) * k) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

fn temporal<R: Rng>(
    params: &mut ParamSet,
    rng: &mut R,
    prefix: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    config: &StgcnConfig,
) -> Result<Temporal> {
    let lin_w = params.push(format!("{prefix}.lin.w"), xavier(rng, &[c_out, c_in, k], c_in, c_out))?;
    let lin_b = params.push(format!("{prefix}.lin.b"), Tensor::zeros(&[c_out]))?;
    let gate = match config.activation_temporal {
        TemporalActivation::Glu => {
            let gw = params.push(format!("{prefix}.gate.w"), xavier(rng, &[c_out, c_in, k], c_in, c_out))?;
            let gb = params.push(format!("{prefix}.gate.b"), Tensor::zeros(&[c_out]))?;
            Some((gw, gb))
        }
        TemporalActivation::Identity => None,
    };
    Ok(Temporal { lin_w, lin_b, gate })
}

/// Batched forward over a windowed dataset, de-normalized to flow units.
/// Returns `[B, n_real, T_out]`.
pub fn predict(model: &Stgcn, windows: &WindowedDataset, batch_size: usize) -> Result<Tensor> {
    let stats = windows
        .norm
        .ok_or_else(|| Error::Config("windows carry no normalization statistics".into()))?;
    let b = windows.len();
    let n_real = model.n_real();
    let t_out = model.config().output_horizons;
    let mut out = Vec::with_capacity(b * n_real * t_out);
    let batch_size = batch_size.max(1);
    let mut start = 0;
    while start < b {
        let end = (start + batch_size).min(b);
        let idx: Vec<usize> = (start..end).collect();
        let x = windows.input_batch(&idx)?;
        let y = model.forward(&x)?;
        out.extend(y.data().iter().map(|v| stats.denormalize(*v)));
        start = end;
    }
    Tensor::new(vec![b, n_real, t_out], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_distance_adjacency, DistanceEntry, RoadGraph};

    fn chain(n: usize) -> AdjacencyMatrix {
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let coords = vec![(0.0, 0.0); n];
        let mut d: Vec<DistanceEntry> = (0..n - 1)
            .map(|i| DistanceEntry { from: i, to: i + 1, meters: 1.0 })
            .collect();
        d.push(DistanceEntry { from: 0, to: 2, meters: 3.0 });
        build_distance_adjacency(&RoadGraph::new(ids, coords, d).unwrap(), 0.1).unwrap()
    }

    fn small() -> StgcnConfig {
        StgcnConfig {
            num_blocks: 2,
            spatial_hidden: 3,
            temporal_hidden: 4,
            kernel_size: 2,
            input_window: 6,
            output_horizons: 3,
            ..Default::default()
        }
    }

    fn input(b: usize, n_real: usize, n: usize, t: usize) -> Tensor {
        let mut x = Tensor::zeros(&[b, n, t]);
        for bi in 0..b {
            for i in 0..n_real {
                for k in 0..t {
                    x.data_mut()[(bi * n + i) * t + k] = ((bi * 7 + i * 3 + k) as f64 * 0.37).sin();
                }
            }
        }
        x
    }

    #[test]
    fn output_shape_for_every_kind() {
        let dist = chain(5);
        for (kind, nv) in [
            (AdjacencyKind::Distance, 0),
            (AdjacencyKind::AllOnes, 1),
            (AdjacencyKind::Adaptive, 2),
            (AdjacencyKind::SemiAdaptive, 2),
        ] {
            let g = ModelGraph::from_kind(kind, &dist, nv, 0.1).unwrap();
            let m = Stgcn::new(small(), g, 4, 0).unwrap();
            let y = m.forward(&input(3, 5, 5 + nv, 6)).unwrap();
            assert_eq!(y.shape(), &[3, 5, 3], "{kind}");
            let y1 = m.forward(&input(1, 5, 5 + nv, 6).reshape(&[5 + nv, 6]).unwrap()).unwrap();
            assert_eq!(y1.shape(), &[5, 3]);
        }
    }

    #[test]
    fn virtual_count_follows_kind() {
        let dist = chain(4);
        assert!(ModelGraph::from_kind(AdjacencyKind::Distance, &dist, 1, 0.1).is_err());
        assert!(ModelGraph::from_kind(AdjacencyKind::AllOnes, &dist, 2, 0.1).is_err());
        assert!(ModelGraph::from_kind(AdjacencyKind::SemiAdaptive, &dist, 0, 0.1).is_err());
    }

    #[test]
    fn short_window_is_a_config_error() {
        let cfg = StgcnConfig { input_window: 4, ..small() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(StgcnConfig { input_window: 5, ..small() }.validate().is_ok());
    }

    #[test]
    fn nonzero_virtual_rows_are_rejected() {
        let g = ModelGraph::from_kind(AdjacencyKind::AllOnes, &chain(4), 1, 0.1).unwrap();
        let m = Stgcn::new(small(), g, 0, 0).unwrap();
        let mut x = input(1, 4, 5, 6);
        x.data_mut()[4 * 6] = 1.0;
        assert!(m.forward(&x).is_err());
    }

    #[test]
    fn batch_rows_are_independent() {
        let g = ModelGraph::from_kind(AdjacencyKind::SemiAdaptive, &chain(5), 2, 0.1).unwrap();
        let m = Stgcn::new(small(), g, 4, 3).unwrap();
        let x = input(4, 5, 7, 6);
        let all = m.forward(&x).unwrap();
        let stride = 7 * 6;
        for b in 0..4 {
            let xb = Tensor::new(vec![1, 7, 6], x.data()[b * stride..(b + 1) * stride].to_vec()).unwrap();
            let yb = m.forward(&xb).unwrap();
            assert_eq!(yb.data(), &all.data()[b * 15..(b + 1) * 15]);
        }
    }

    #[test]
    fn silent_virtual_nodes_match_distance_only() {
        let dist = chain(5);
        let base = Stgcn::new(small(), ModelGraph::from_kind(AdjacencyKind::Distance, &dist, 0, 0.1).unwrap(), 0, 9).unwrap();
        let g = ModelGraph::from_kind(AdjacencyKind::SemiAdaptive, &dist, 2, 0.1).unwrap();
        let mut semi = Stgcn::new(small(), g, 4, 9).unwrap();
        // E1 = E2 zeroes every virtual block
        let e1 = semi.params().get(EMBEDDING_E1).unwrap().clone();
        semi.params_mut().assign(EMBEDDING_E2, e1).unwrap();
        assert!(semi.adjacency().unwrap().real_to_virtual().data().iter().all(|v| *v == 0.0));
        let y0 = base.forward(&input(2, 5, 5, 6)).unwrap();
        let y1 = semi.forward(&input(2, 5, 7, 6)).unwrap();
        assert!(y0.max_abs_diff(&y1) < 1e-12);
    }

    #[test]
    fn same_seed_same_weights() {
        let g = ModelGraph::from_kind(AdjacencyKind::Adaptive, &chain(4), 2, 0.1).unwrap();
        let a = Stgcn::new(small(), g.clone(), 4, 5).unwrap();
        let b = Stgcn::new(small(), g.clone(), 4, 5).unwrap();
        let c = Stgcn::new(small(), g, 4, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
