//! Spatio-temporal graph convolution for traffic forecasting with learned
//! virtual nodes.

pub mod checkpoint;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod training;
pub mod viz;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use data::{NormStats, SplitRatios, TrafficSeries, WindowedDataset};
pub use diagnostics::{pairwise_sensitivity, SensitivityConfig, SensitivityReport};
pub use error::{Error, Result};
pub use eval::{evaluate, MetricsReport};
pub use graph::{AdjacencyKind, AdjacencyMatrix, NodeEmbeddings, RoadGraph};
pub use model::{ModelGraph, Stgcn, StgcnConfig};
pub use params::ParamSet;
pub use pipeline::{run_experiment, sweep_virtual_nodes, ExperimentConfig, PreparedData};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub use training::{train, TrainConfig, TrainLog};
