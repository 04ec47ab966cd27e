//! `vnsg`: generate or ingest data, train, evaluate, sweep, diagnose and
//! export visualizations.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vnsg_core::data::Topology;
use vnsg_core::{AdjacencyKind, Error};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else if matches!(e, Error::Config(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "vnsg", version, about = "Traffic forecasting with virtual-node graph convolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Root seed for weights, embeddings and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Output directory (overrides VNSG_OUT and the config file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic scenario as flow, metadata and edge CSVs.
    Generate {
        #[arg(long, value_parser = parse_topology)]
        topology: Topology,
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        incident_rate: Option<f64>,
        #[arg(long)]
        incident_magnitude: Option<f64>,
        #[arg(long)]
        propagation_speed: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate and align LargeST-style CSVs, rewriting them in the native schema.
    Ingest {
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one configuration and score it on the test split.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<AdjacencyKind>,
        #[arg(long)]
        nv: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a checkpoint on the test split of its run's data.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config to take data from instead of the one stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score every (kind, n_v, seed) cell.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated virtual-node counts.
        #[arg(long, value_delimiter = ',', required = true)]
        nv: Vec<usize>,
        /// Comma-separated learned kinds.
        #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "semi_adaptive")]
        kinds: Vec<AdjacencyKind>,
        /// A count (seeds seed..seed+N) or a comma-separated list.
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Per-hop input-output sensitivity of a checkpoint.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        max_hops: usize,
        #[arg(long, default_value_t = vnsg_core::diagnostics::DEFAULT_MAX_PAIRS)]
        max_pairs: usize,
        /// 1-indexed horizon; defaults to the last.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 16)]
        probe_windows: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Real-to-virtual heat map and per-node weight maps of a checkpoint.
    ExportViz {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only this virtual node (0-indexed); default all.
        #[arg(long)]
        virtual_index: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<AdjacencyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cmd: Command) -> Result<(), CliError> {
    use commands::*;
    match cmd {
        Command::Generate {
            topology,
            nodes,
            days,
            seed,
            incident_rate,
            incident_magnitude,
            propagation_speed,
            out,
        } => {
            let mut s = vnsg_core::data::SyntheticScenario::new(topology, nodes, days, seed);
            if let Some(v) = incident_rate {
                s.incident_rate = v;
            }
            if let Some(v) = incident_magnitude {
                s.incident_magnitude = v;
            }
            if let Some(v) = propagation_speed {
                s.propagation_speed = v;
            }
            generate(&s, out.as_deref())
        }
        Command::Ingest { flow, meta, edges, out } => ingest(&flow, &meta, &edges, out.as_deref()),
        Command::Train { config, kind, nv, overrides } => train(&config, kind, nv, &overrides),
        Command::Evaluate { checkpoint, config, out } => evaluate(&checkpoint, config.as_deref(), out.as_deref()),
        Command::Sweep {
            config,
            nv,
            kinds,
            seeds,
            jobs,
            overrides,
        } => sweep(&config, &nv, &kinds, &seeds, jobs, &overrides),
        Command::Diagnose {
            checkpoint,
            config,
            max_hops,
            max_pairs,
            horizon,
            probe_windows,
            out,
        } => diagnose(
            &checkpoint,
            config.as_deref(),
            DiagnoseOptions {
                max_hops,
                max_pairs,
                horizon,
                probe_windows,
            },
            out.as_deref(),
        ),
        Command::ExportViz {
            checkpoint,
            config,
            virtual_index,
            out,
        } => export_viz(&checkpoint, config.as_deref(), virtual_index, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vnsg: {e}");
            ExitCode::from(e.code())
        }
    }
}
