//! Versioned binary graph artifact passed from graph construction to training.

use std::path::Path;

use super::{
    DistanceMode, EdgeSetKind, GeoPoint, GraphConfig, MultipartiteGraph, NodeRef, Partition, PartitionId,
    WeightedEdge,
};
use crate::binio::{Container, Decoder, Encoder};
use crate::error::{GsneError, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 8] = b"GSNEGRPH";
const VERSION: u32 = 1;

/// A built graph plus the held-out houses that are embedded inductively.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphArtifact {
    pub graph: MultipartiteGraph,
    pub config: GraphConfig,
    /// Houses excluded from the graph (test split), encoded at export time.
    pub heldout: Option<Partition>,
}

fn put_partition(enc: &mut Encoder, p: &Partition) {
    enc.u8(p.id.0).u64(p.len() as u64).u64(p.dim() as u64);
    for id in &p.ids {
        enc.str(id);
    }
    for c in &p.coords {
        enc.f64(c.x).f64(c.y);
    }
    enc.f64s(p.attrs.as_slice());
}

fn get_partition(dec: &mut Decoder<'_>) -> Result<Partition> {
    let id = PartitionId(dec.u8()?);
    let n = dec.u64()? as usize;
    let dim = dec.u64()? as usize;
    let ids = (0..n).map(|_| dec.str()).collect::<Result<Vec<_>>>()?;
    let coords = (0..n)
        .map(|_| Ok(GeoPoint::new(dec.f64()?, dec.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    let attrs = Matrix::from_vec(n, dim, dec.f64s()?)?;
    Partition::new(id, ids, coords, attrs)
}

pub fn save_graph(artifact: &GraphArtifact, path: &Path) -> Result<()> {
    let mut c = Container::new(VERSION);
    let mut conf = Encoder::new();
    conf.str(&serde_json::to_string(&artifact.config)?);
    c.push(*b"CONF", conf);
    let mut parts = Encoder::new();
    for p in artifact.graph.partitions() {
        put_partition(&mut parts, p);
    }
    c.push(*b"PART", parts);
    let mut edges = Encoder::new();
    edges.u64(artifact.graph.edge_sets().len() as u64);
    for set in artifact.graph.edge_sets() {
        edges.u8(set.kind.code()).u64(set.len() as u64);
        for e in &set.edges {
            edges
                .u8(e.a.partition.0)
                .u32(e.a.index)
                .u8(e.b.partition.0)
                .u32(e.b.index)
                .f64(e.weight);
        }
    }
    c.push(*b"EDGE", edges);
    if let Some(h) = &artifact.heldout {
        let mut enc = Encoder::new();
        put_partition(&mut enc, h);
        c.push(*b"HOLD", enc);
    }
    c.write(path, MAGIC)
}

pub fn load_graph(path: &Path) -> Result<GraphArtifact> {
    let c = Container::read(path, MAGIC, VERSION)?;
    let config: GraphConfig = serde_json::from_str(&c.require(*b"CONF")?.str()?)
        .map_err(|e| GsneError::load(path, format!("graph config: {e}")))?;
    let mut dec = c.require(*b"PART")?;
    let partitions = (0..PartitionId::COUNT)
        .map(|_| get_partition(&mut dec))
        .collect::<Result<Vec<_>>>()?;
    let mut dec = c.require(*b"EDGE")?;
    let nsets = dec.u64()? as usize;
    let mut sets = Vec::with_capacity(nsets);
    for _ in 0..nsets {
        let kind = EdgeSetKind::from_code(dec.u8()?).ok_or_else(|| GsneError::load(path, "unknown edge set code"))?;
        let m = dec.u64()? as usize;
        let mut edges = Vec::with_capacity(m.min(1 << 24));
        for _ in 0..m {
            let a = NodeRef {
                partition: PartitionId(dec.u8()?),
                index: dec.u32()?,
            };
            let b = NodeRef {
                partition: PartitionId(dec.u8()?),
                index: dec.u32()?,
            };
            edges.push(WeightedEdge { a, b, weight: dec.f64()? });
        }
        sets.push((kind, edges));
    }
    let mode: DistanceMode = config.distance_mode;
    let graph = MultipartiteGraph::from_parts(partitions, sets, mode)
        .map_err(|e| GsneError::load(path, e.to_string()))?;
    let heldout = match c.section(*b"HOLD") {
        Some(mut d) => Some(get_partition(&mut d)?),
        None => None,
    };
    Ok(GraphArtifact { graph, config, heldout })
}
