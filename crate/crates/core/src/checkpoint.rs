//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"VNSG"  u32 version  u32 meta_len  meta_len bytes of JSON
//! repeated until EOF:
//!   u32 name_len  name (UTF-8)  u32 rank  rank × u64 extents  f64 values
//! ```
//!
//! The JSON block holds the model configuration, the graph description and
//! the normalization statistics. The fixed graph matrix, if any, is stored
//! as the tensor named `graph.base`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyHeader, AdjacencyKind, AdjacencyMatrix};
use crate::model::{ModelGraph, Stgcn, StgcnConfig};
use crate::params::ParamSet;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"VNSG";
const VERSION: u32 = 1;
const BASE_GRAPH: &str = "graph.base";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GraphMeta {
    kind: AdjacencyKind,
    n_real: usize,
    n_virtual: usize,
    adaptive_threshold: Option<f64>,
    base: Option<AdjacencyHeader>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    model: StgcnConfig,
    graph: GraphMeta,
    embedding_dim: usize,
    norm: Option<NormStats>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// A restored model with the statistics it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Stgcn,
    pub norm: Option<NormStats>,
    /// Free-form run metadata (seeds, configs) stored alongside.
    pub extra: serde_json::Value,
}

fn base_matrix(graph: &ModelGraph) -> Option<&AdjacencyMatrix> {
    match graph {
        ModelGraph::Fixed(a) => Some(a),
        ModelGraph::SemiAdaptive { distance, .. } => Some(distance),
        ModelGraph::Adaptive { .. } => None,
    }
}

fn write_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for e in t.shape() {
        w.write_all(&(*e as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    model: &Stgcn,
    norm: Option<NormStats>,
    extra: &serde_json::Value,
) -> Result<()> {
    let base = base_matrix(model.graph());
    let meta = Meta {
        model: model.config().clone(),
        graph: GraphMeta {
            kind: model.graph().kind(),
            n_real: model.n_real(),
            n_virtual: model.graph().n_virtual(),
            adaptive_threshold: model.graph().adaptive_threshold(),
            base: base.map(AdjacencyMatrix::header),
        },
        embedding_dim: model.embeddings().map_or(0, |e| e.dim()),
        norm,
        extra: extra.clone(),
    };
    let json = serde_json::to_vec(&meta)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    if let Some(a) = base {
        write_tensor(&mut w, BASE_GRAPH, &a.weights)?;
    }
    for (name, t) in model.params().iter() {
        write_tensor(&mut w, name, t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint(
    path: &Path,
    model: &Stgcn,
    norm: Option<NormStats>,
    extra: &serde_json::Value,
) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, norm, extra)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Reads `N` bytes, or `None` at a clean end of stream.
fn read_array<R: Read, const N: usize>(r: &mut R, at_boundary: bool) -> Result<Option<[u8; N]>> {
    let mut buf = [0u8; N];
    let mut filled = 0;
    while filled < N {
        let got = r.read(&mut buf[filled..])?;
        if got == 0 {
            if filled == 0 && at_boundary {
                return Ok(None);
            }
            return Err(bad("truncated file"));
        }
        filled += got;
    }
    Ok(Some(buf))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r, false)?.expect("not at boundary")))
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Option<(String, Tensor)>> {
    let Some(len) = read_array::<_, 4>(r, true)? else {
        return Ok(None);
    };
    let len = u32::from_le_bytes(len) as usize;
    let mut name = vec![0u8; len];
    r.read_exact(&mut name).map_err(|_| bad("truncated tensor name"))?;
    let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
    let rank = read_u32(r)? as usize;
    if rank > 8 {
        return Err(bad(format!("tensor `{name}` has implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let e: [u8; 8] = read_array(r, false)?.expect("not at boundary");
        shape.push(u64::from_le_bytes(e) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let v: [u8; 8] = read_array(r, false)?.expect("not at boundary");
        data.push(f64::from_le_bytes(v));
    }
    Ok(Some((name, Tensor::new(shape, data)?)))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
    if &magic != MAGIC {
        return Err(bad("missing VNSG magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| bad("truncated metadata"))?;
    let meta: Meta = serde_json::from_slice(&json)?;

    let mut base = None;
    let mut params = ParamSet::new();
    while let Some((name, t)) = read_tensor(&mut r)? {
        if name == BASE_GRAPH {
            base = Some(t);
        } else {
            params.push(name, t)?;
        }
    }
    let g = &meta.graph;
    let base = match (&g.base, base) {
        (Some(h), Some(t)) => Some(AdjacencyMatrix::from_header(h, t)?),
        (None, None) => None,
        _ => return Err(bad("graph header and base matrix disagree")),
    };
    let need_base = || bad(format!("{} graph needs a base matrix", g.kind));
    let graph = match g.kind {
        AdjacencyKind::Distance | AdjacencyKind::AllOnes => {
            ModelGraph::Fixed(base.ok_or_else(need_base)?)
        }
        AdjacencyKind::Adaptive => ModelGraph::Adaptive {
            n_real: g.n_real,
            n_virtual: g.n_virtual,
            threshold: g.adaptive_threshold.ok_or_else(|| bad("missing adaptive threshold"))?,
        },
        AdjacencyKind::SemiAdaptive => ModelGraph::SemiAdaptive {
            distance: base.ok_or_else(need_base)?,
            n_virtual: g.n_virtual,
            threshold: g.adaptive_threshold.ok_or_else(|| bad("missing adaptive threshold"))?,
        },
    };
    let model = Stgcn::new(meta.model, graph, meta.embedding_dim, 0)?.with_params(params)?;
    Ok(Checkpoint {
        model,
        norm: meta.norm,
        extra: meta.extra,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_distance_adjacency, DistanceEntry, RoadGraph};

    fn small_distance() -> AdjacencyMatrix {
        let ids = (0..4).map(|i| format!("n{i}")).collect();
        let coords = vec![(0.0, 0.0); 4];
        let d = |from, to, meters| DistanceEntry { from, to, meters };
        let g = RoadGraph::new(
            ids,
            coords,
            vec![d(0, 1, 1.0), d(1, 2, 1.2), d(2, 3, 0.9), d(0, 3, 4.0)],
        )
        .unwrap();
        build_distance_adjacency(&g, 0.1).unwrap()
    }

    fn config() -> StgcnConfig {
        StgcnConfig {
            num_blocks: 1,
            spatial_hidden: 3,
            temporal_hidden: 4,
            kernel_size: 2,
            input_window: 4,
            output_horizons: 2,
            ..Default::default()
        }
    }

    #[test]
    fn roundtrip_every_kind() {
        let dist = small_distance();
        for (kind, nv) in [
            (AdjacencyKind::Distance, 0),
            (AdjacencyKind::AllOnes, 1),
            (AdjacencyKind::Adaptive, 2),
            (AdjacencyKind::SemiAdaptive, 3),
        ] {
            let graph = ModelGraph::from_kind(kind, &dist, nv, 0.1).unwrap();
            let model = Stgcn::new(config(), graph, 5, 11).unwrap();
            let norm = Some(NormStats { mean: 201.25, std: 0.1 + 0.2 });
            let extra = serde_json::json!({"seed": 11});
            let mut bytes = Vec::new();
            write_checkpoint(&mut bytes, &model, norm, &extra).unwrap();
            let back = read_checkpoint(bytes.as_slice()).unwrap();
            assert_eq!(back.model, model, "{kind}");
            assert_eq!(back.norm, norm);
            assert_eq!(back.extra, extra);
            let mut again = Vec::new();
            write_checkpoint(&mut again, &back.model, back.norm, &back.extra).unwrap();
            assert_eq!(bytes, again);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let graph = ModelGraph::from_kind(AdjacencyKind::Distance, &small_distance(), 0, 0.1).unwrap();
        let model = Stgcn::new(config(), graph, 0, 1).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &model, None, &serde_json::Value::Null).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(read_checkpoint(wrong.as_slice()), Err(Error::Checkpoint(_))));
        assert!(read_checkpoint(&[][..]).is_err());
    }

    #[test]
    fn missing_file_is_a_read_error() {
        let err = load_checkpoint(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert!(matches!(err, Error::Read { .. }));
    }
}
