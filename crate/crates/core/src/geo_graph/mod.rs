//! Attributed, weighted, multipartite geo-spatial network of houses and POIs.

mod build;
mod format;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GsneError, Result};
use crate::linalg::Matrix;

pub use build::{
    build_graph, connect_membership, connect_radius_or_nearest, connect_station_graph, GraphConfig, GraphInput,
};
pub use format::{load_graph, save_graph, GraphArtifact};

/// Mean Earth radius used by the haversine distance, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartitionId(pub u8);

impl PartitionId {
    pub const HOUSES: PartitionId = PartitionId(0);
    pub const REGIONS: PartitionId = PartitionId(1);
    pub const SCHOOLS: PartitionId = PartitionId(2);
    pub const STATIONS: PartitionId = PartitionId(3);

    /// Number of partition slots in a geo-spatial graph.
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            0 => "house",
            1 => "region",
            2 => "school",
            3 => "station",
            _ => "unknown",
        }
    }

    pub fn from_name(name: &str) -> Option<PartitionId> {
        match name {
            "house" => Some(Self::HOUSES),
            "region" => Some(Self::REGIONS),
            "school" => Some(Self::SCHOOLS),
            "station" => Some(Self::STATIONS),
            _ => None,
        }
    }

    pub fn all() -> [PartitionId; 4] {
        [Self::HOUSES, Self::REGIONS, Self::SCHOOLS, Self::STATIONS]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub partition: PartitionId,
    pub index: u32,
}

impl NodeRef {
    pub fn new(partition: PartitionId, index: usize) -> Self {
        NodeRef {
            partition,
            index: index as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Euclidean distance in plane units.
    #[default]
    Planar,
    /// Great-circle distance in meters; `x` is longitude and `y` latitude in degrees.
    Haversine,
}

impl std::str::FromStr for DistanceMode {
    type Err = GsneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planar" => Ok(DistanceMode::Planar),
            "haversine" => Ok(DistanceMode::Haversine),
            other => Err(GsneError::Config(format!("unknown distance mode `{other}`"))),
        }
    }
}

pub fn distance(p: GeoPoint, q: GeoPoint, mode: DistanceMode) -> Result<f64> {
    if !(p.x.is_finite() && p.y.is_finite() && q.x.is_finite() && q.y.is_finite()) {
        return Err(GsneError::Input("non-finite coordinate".into()));
    }
    match mode {
        DistanceMode::Planar => Ok((p.x - q.x).hypot(p.y - q.y)),
        DistanceMode::Haversine => {
            for lat in [p.y, q.y] {
                if !(-90.0..=90.0).contains(&lat) {
                    return Err(GsneError::Input(format!("latitude {lat} outside [-90, 90]")));
                }
            }
            let (lat1, lat2) = (p.y.to_radians(), q.y.to_radians());
            let dlat = lat2 - lat1;
            let dlon = (q.x - p.x).to_radians();
            let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
            Ok(2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin())
        }
    }
}

/// Inverse-distance weight with the distance clamped below at `delta_min`.
#[inline]
pub fn edge_weight(dist: f64, delta_min: f64) -> f64 {
    1.0 / dist.max(delta_min)
}

/// One node partition: ids, locations and the (preprocessed) attribute matrix,
/// one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub id: PartitionId,
    pub ids: Vec<String>,
    pub coords: Vec<GeoPoint>,
    pub attrs: Matrix,
}

impl Partition {
    pub fn new(id: PartitionId, ids: Vec<String>, coords: Vec<GeoPoint>, attrs: Matrix) -> Result<Self> {
        if ids.len() != coords.len() || ids.len() != attrs.rows() {
            return Err(GsneError::Input(format!(
                "{} partition: {} ids, {} coordinates, {} attribute rows",
                id.name(),
                ids.len(),
                coords.len(),
                attrs.rows()
            )));
        }
        if !attrs.is_finite() {
            return Err(GsneError::Input(format!("{} partition has non-finite attributes", id.name())));
        }
        Ok(Partition { id, ids, coords, attrs })
    }

    pub fn empty(id: PartitionId, dim: usize) -> Self {
        Partition {
            id,
            ids: Vec::new(),
            coords: Vec::new(),
            attrs: Matrix::zeros(0, dim),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.attrs.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeSetKind {
    HouseRegion,
    HouseSchool,
    HouseStation,
    SchoolStation,
    StationStation,
}

impl EdgeSetKind {
    pub const ALL: [EdgeSetKind; 5] = [
        EdgeSetKind::HouseRegion,
        EdgeSetKind::HouseSchool,
        EdgeSetKind::HouseStation,
        EdgeSetKind::SchoolStation,
        EdgeSetKind::StationStation,
    ];

    pub fn endpoints(self) -> (PartitionId, PartitionId) {
        use PartitionId as P;
        match self {
            EdgeSetKind::HouseRegion => (P::HOUSES, P::REGIONS),
            EdgeSetKind::HouseSchool => (P::HOUSES, P::SCHOOLS),
            EdgeSetKind::HouseStation => (P::HOUSES, P::STATIONS),
            EdgeSetKind::SchoolStation => (P::SCHOOLS, P::STATIONS),
            EdgeSetKind::StationStation => (P::STATIONS, P::STATIONS),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeSetKind::HouseRegion => "house-region",
            EdgeSetKind::HouseSchool => "house-school",
            EdgeSetKind::HouseStation => "house-station",
            EdgeSetKind::SchoolStation => "school-station",
            EdgeSetKind::StationStation => "station-station",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// The house–POI edge set that links houses to partition `poi`.
    pub fn house_to(poi: PartitionId) -> Option<Self> {
        match poi {
            PartitionId::REGIONS => Some(EdgeSetKind::HouseRegion),
            PartitionId::SCHOOLS => Some(EdgeSetKind::HouseSchool),
            PartitionId::STATIONS => Some(EdgeSetKind::HouseStation),
            _ => None,
        }
    }
}

impl fmt::Display for EdgeSetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EdgeSetKind {
    type Err = GsneError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GsneError::Config(format!("unknown edge set `{s}`")))
    }
}

/// Undirected weighted edge, stored once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub a: NodeRef,
    pub b: NodeRef,
    pub weight: f64,
}

/// The edges between one pair of partitions, plus per-node degrees within
/// this set (indexed `[partition][local index]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub kind: EdgeSetKind,
    pub edges: Vec<WeightedEdge>,
    degrees: Vec<Vec<u32>>,
}

impl EdgeSet {
    pub fn new(kind: EdgeSetKind, edges: Vec<WeightedEdge>, partition_sizes: &[usize]) -> Self {
        let mut degrees: Vec<Vec<u32>> = partition_sizes.iter().map(|&n| vec![0; n]).collect();
        for e in &edges {
            degrees[e.a.partition.index()][e.a.index as usize] += 1;
            degrees[e.b.partition.index()][e.b.index as usize] += 1;
        }
        EdgeSet { kind, edges, degrees }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Unweighted degree of every node of `partition` within this edge set.
    pub fn degrees(&self, partition: PartitionId) -> &[u32] {
        &self.degrees[partition.index()]
    }

    /// Number of directed arcs (each undirected edge yields two).
    pub fn arc_count(&self) -> usize {
        2 * self.edges.len()
    }

    /// Arc `i` as `(from, to, weight)`: arc `2e` runs a→b, arc `2e+1` runs b→a.
    #[inline]
    pub fn arc(&self, i: usize) -> (NodeRef, NodeRef, f64) {
        let e = &self.edges[i / 2];
        if i.is_multiple_of(2) {
            (e.a, e.b, e.weight)
        } else {
            (e.b, e.a, e.weight)
        }
    }

    pub fn arcs(&self) -> impl Iterator<Item = (NodeRef, NodeRef, f64)> + '_ {
        (0..self.arc_count()).map(move |i| self.arc(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipartiteGraph {
    partitions: Vec<Partition>,
    edge_sets: Vec<EdgeSet>,
    pub distance_mode: DistanceMode,
}

impl MultipartiteGraph {
    /// Assemble a graph from parts, validating edge endpoints. Connectivity is
    /// not checked here; see [`MultipartiteGraph::check_connected`].
    pub fn from_parts(
        partitions: Vec<Partition>,
        edge_sets: Vec<(EdgeSetKind, Vec<WeightedEdge>)>,
        distance_mode: DistanceMode,
    ) -> Result<Self> {
        if partitions.len() != PartitionId::COUNT {
            return Err(GsneError::Construction(format!(
                "expected {} partitions, got {}",
                PartitionId::COUNT,
                partitions.len()
            )));
        }
        for (i, p) in partitions.iter().enumerate() {
            if p.id.index() != i {
                return Err(GsneError::Construction("partitions out of order".into()));
            }
        }
        let sizes: Vec<usize> = partitions.iter().map(Partition::len).collect();
        let mut sets = Vec::with_capacity(edge_sets.len());
        for (kind, edges) in edge_sets {
            let (pa, pb) = kind.endpoints();
            for e in &edges {
                let ok = ((e.a.partition == pa && e.b.partition == pb)
                    || (e.a.partition == pb && e.b.partition == pa))
                    && (e.a.index as usize) < sizes[e.a.partition.index()]
                    && (e.b.index as usize) < sizes[e.b.partition.index()];
                if !ok {
                    return Err(GsneError::Construction(format!(
                        "edge {:?}-{:?} does not fit edge set {kind}",
                        e.a, e.b
                    )));
                }
                if !(e.weight > 0.0 && e.weight.is_finite()) {
                    return Err(GsneError::Construction(format!("non-positive weight in {kind}")));
                }
            }
            sets.push(EdgeSet::new(kind, edges, &sizes));
        }
        Ok(MultipartiteGraph {
            partitions,
            edge_sets: sets,
            distance_mode,
        })
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn partition(&self, id: PartitionId) -> &Partition {
        &self.partitions[id.index()]
    }

    pub fn edge_sets(&self) -> &[EdgeSet] {
        &self.edge_sets
    }

    pub fn edge_set(&self, kind: EdgeSetKind) -> Option<&EdgeSet> {
        self.edge_sets.iter().find(|s| s.kind == kind)
    }

    pub fn node_count(&self) -> usize {
        self.partitions.iter().map(Partition::len).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_sets.iter().map(EdgeSet::len).sum()
    }

    /// Attribute dimension per partition slot.
    pub fn dims(&self) -> Vec<usize> {
        self.partitions.iter().map(Partition::dim).collect()
    }

    pub fn attributes(&self, node: NodeRef) -> &[f64] {
        self.partitions[node.partition.index()].attrs.row(node.index as usize)
    }

    pub fn node_name(&self, node: NodeRef) -> String {
        let p = &self.partitions[node.partition.index()];
        format!("{}:{}", p.id.name(), p.ids[node.index as usize])
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.partitions.len());
        let mut acc = 0;
        for p in &self.partitions {
            off.push(acc);
            acc += p.len();
        }
        off
    }

    /// Connected components over all edge sets, as lists of nodes. Components
    /// are ordered by their smallest node.
    pub fn components(&self) -> Vec<Vec<NodeRef>> {
        let off = self.offsets();
        let n = self.node_count();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for set in &self.edge_sets {
            for e in &set.edges {
                let a = off[e.a.partition.index()] + e.a.index as usize;
                let b = off[e.b.partition.index()] + e.b.index as usize;
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        let refs: Vec<NodeRef> = self
            .partitions
            .iter()
            .flat_map(|p| (0..p.len()).map(move |i| NodeRef::new(p.id, i)))
            .collect();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = std::collections::VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp.into_iter().map(|g| refs[g]).collect());
        }
        comps
    }

    pub fn check_connected(&self) -> Result<()> {
        let comps = self.components();
        if comps.len() <= 1 {
            return Ok(());
        }
        let isolated = &comps[1];
        let names: Vec<String> = isolated.iter().take(5).map(|&n| self.node_name(n)).collect();
        Err(GsneError::Construction(format!(
            "graph has {} connected components; component of {} node(s) is disconnected: {}{}",
            comps.len(),
            isolated.len(),
            names.join(", "),
            if isolated.len() > 5 { ", ..." } else { "" }
        )))
    }
}
