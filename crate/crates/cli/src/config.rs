//! Run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vnsg_core::data::SyntheticScenario;
use vnsg_core::graph::{DEFAULT_ADAPTIVE_THRESHOLD, DEFAULT_DISTANCE_THRESHOLD};
use vnsg_core::pipeline::DEFAULT_EMBEDDING_DIM;
use vnsg_core::{AdjacencyKind, ExperimentConfig, SplitRatios, StgcnConfig, TrainConfig};

use crate::CliError;

pub const OUT_ENV: &str = "VNSG_OUT";
const DEFAULT_OUT: &str = "vnsg-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticScenario),
    Files {
        flow: PathBuf,
        meta: PathBuf,
        edges: PathBuf,
    },
}

fn default_distance_threshold() -> f64 {
    DEFAULT_DISTANCE_THRESHOLD
}

fn default_adaptive_threshold() -> f64 {
    DEFAULT_ADAPTIVE_THRESHOLD
}

fn default_embedding_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

fn default_mape_epsilon() -> f64 {
    vnsg_core::eval::DEFAULT_MAPE_EPSILON
}

/// Contents of a run config file. `kind` and `data` are required;
/// `n_virtual` is required for learned kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: AdjacencyKind,
    #[serde(default)]
    pub n_virtual: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_distance_threshold")]
    pub distance_threshold: f64,
    #[serde(default = "default_adaptive_threshold")]
    pub adaptive_threshold: f64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_mape_epsilon")]
    pub mape_epsilon: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub model: StgcnConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataSource,
}

impl RunConfig {
    /// Parses TOML text; relative data paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message())))?;
        if let DataSource::Files { flow, meta, edges } = &mut cfg.data {
            for p in [flow, meta, edges] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Fills the virtual-node count implied by fixed kinds.
    pub fn resolve(&mut self) -> Result<(), CliError> {
        match (self.kind, self.n_virtual) {
            (AdjacencyKind::Distance, None) => self.n_virtual = Some(0),
            (AdjacencyKind::AllOnes, None) => self.n_virtual = Some(1),
            (k, None) if k.is_learned() => {
                return Err(CliError::Usage(format!(
                    "config: missing key `n_virtual` (required for kind = {k})"
                )))
            }
            _ => {}
        }
        self.experiment().validate()?;
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            kind: self.kind,
            n_virtual: self.n_virtual.unwrap_or(0),
            distance_threshold: self.distance_threshold,
            adaptive_threshold: self.adaptive_threshold,
            embedding_dim: self.embedding_dim,
            mape_epsilon: self.mape_epsilon,
            split: self.split,
            model: self.model.clone(),
            train: TrainConfig {
                seed: self.seed,
                ..self.train.clone()
            },
        }
    }

    /// Flag, then `VNSG_OUT`, then the file's `output_dir`, then a default.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

/// Output directory for commands that take no config file.
pub fn plain_output_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "semi_adaptive"
n_virtual = 4

[data]
source = "synthetic"
topology = "chain"
num_nodes = 12
days = 2
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let mut c = RunConfig::from_toml(MINIMAL, Path::new(".")).unwrap();
        c.resolve().unwrap();
        assert_eq!(c.model, StgcnConfig::default());
        assert_eq!(c.embedding_dim, 10);
        match &c.data {
            DataSource::Synthetic(s) => assert_eq!(s.incident_rate, 12.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_keys_are_named() {
        let text = MINIMAL.replace("kind = \"semi_adaptive\"\n", "");
        let e = RunConfig::from_toml(&text, Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("kind"), "{e}");
        let e = RunConfig::from_toml("kind = \"distance\"\n", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("data"), "{e}");
        let text = MINIMAL.replace("n_virtual = 4\n", "");
        let mut c = RunConfig::from_toml(&text, Path::new(".")).unwrap();
        let e = c.resolve().unwrap_err();
        assert!(e.to_string().contains("n_virtual"), "{e}");
        let text = MINIMAL.replace("num_nodes = 12\n", "");
        let e = RunConfig::from_toml(&text, Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("num_nodes"), "{e}");
    }

    #[test]
    fn fixed_kinds_imply_virtual_count() {
        let text = MINIMAL.replace("semi_adaptive", "all_ones").replace("n_virtual = 4\n", "");
        let mut c = RunConfig::from_toml(&text, Path::new(".")).unwrap();
        c.resolve().unwrap();
        assert_eq!(c.n_virtual, Some(1));
        let text = MINIMAL.replace("semi_adaptive", "distance");
        let mut c = RunConfig::from_toml(&text, Path::new(".")).unwrap();
        assert!(c.resolve().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let text = "kind = \"distance\"\n[data]\nsource = \"files\"\nflow = \"f.csv\"\nmeta = \"/abs/m.csv\"\nedges = \"e.csv\"\n";
        let c = RunConfig::from_toml(text, Path::new("/cfg")).unwrap();
        assert_eq!(
            c.data,
            DataSource::Files {
                flow: "/cfg/f.csv".into(),
                meta: "/abs/m.csv".into(),
                edges: "/cfg/e.csv".into()
            }
        );
    }
}
