use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    distance, edge_weight, DistanceMode, EdgeSetKind, MultipartiteGraph, NodeRef, Partition, PartitionId,
    WeightedEdge,
};
use crate::error::{GsneError, Result};

/// Edge-construction rules. Radii are in meters for haversine coordinates and
/// plane units otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub house_school_radius: f64,
    pub house_station_radius: f64,
    pub school_station_radius: f64,
    pub k_nearest_stations: usize,
    pub delta_min: f64,
    /// Global distance threshold. Accepted for completeness; the per-category
    /// radius rules decide which edges exist.
    pub delta_max: Option<f64>,
    pub distance_mode: DistanceMode,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            house_school_radius: 1000.0,
            house_station_radius: 1000.0,
            school_station_radius: 1000.0,
            k_nearest_stations: 3,
            delta_min: 1.0,
            delta_max: None,
            distance_mode: DistanceMode::Planar,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("house_school_radius", self.house_school_radius),
            ("house_station_radius", self.house_station_radius),
            ("school_station_radius", self.school_station_radius),
            ("delta_min", self.delta_min),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(GsneError::Config(format!("{name} must be positive, got {r}")));
            }
        }
        if self.k_nearest_stations == 0 {
            return Err(GsneError::Config("k_nearest_stations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Houses, the three POI partitions and each house's region index.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub houses: Partition,
    pub regions: Partition,
    pub schools: Partition,
    pub stations: Partition,
    pub house_region: Vec<usize>,
}

fn edge(a: NodeRef, b: NodeRef, dist: f64, delta_min: f64) -> WeightedEdge {
    WeightedEdge {
        a,
        b,
        weight: edge_weight(dist, delta_min),
    }
}

/// Link every source to all targets within `radius`, or to its single nearest
/// target when none is in range. Ties go to the lowest target index.
pub fn connect_radius_or_nearest(
    sources: &Partition,
    targets: &Partition,
    radius: f64,
    mode: DistanceMode,
    delta_min: f64,
) -> Result<Vec<WeightedEdge>> {
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    if targets.is_empty() {
        return Err(GsneError::Construction(format!(
            "cannot connect {} nodes to an empty {} partition",
            sources.id.name(),
            targets.id.name()
        )));
    }
    let mut edges = Vec::new();
    for (i, &p) in sources.coords.iter().enumerate() {
        let src = NodeRef::new(sources.id, i);
        let mut nearest = (f64::INFINITY, 0usize);
        let before = edges.len();
        for (j, &q) in targets.coords.iter().enumerate() {
            let d = distance(p, q, mode)?;
            if d <= radius {
                edges.push(edge(src, NodeRef::new(targets.id, j), d, delta_min));
            }
            if d < nearest.0 {
                nearest = (d, j);
            }
        }
        if edges.len() == before {
            edges.push(edge(src, NodeRef::new(targets.id, nearest.1), nearest.0, delta_min));
        }
    }
    Ok(edges)
}

/// One house–region edge per house, weighted by the distance to the region
/// centroid.
pub fn connect_membership(
    houses: &Partition,
    regions: &Partition,
    assignment: &[usize],
    mode: DistanceMode,
    delta_min: f64,
) -> Result<Vec<WeightedEdge>> {
    if assignment.len() != houses.len() {
        return Err(GsneError::Input(format!(
            "region assignment covers {} of {} houses",
            assignment.len(),
            houses.len()
        )));
    }
    assignment
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            if r >= regions.len() {
                return Err(GsneError::Input(format!(
                    "house {} assigned to region index {r}, but only {} regions exist",
                    houses.ids[i],
                    regions.len()
                )));
            }
            let d = distance(houses.coords[i], regions.coords[r], mode)?;
            Ok(edge(NodeRef::new(houses.id, i), NodeRef::new(regions.id, r), d, delta_min))
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// k-nearest-neighbour station links, deduplicated, then repaired by adding the
/// shortest cross-component link until the station subgraph is connected.
pub fn connect_station_graph(
    stations: &Partition,
    k: usize,
    mode: DistanceMode,
    delta_min: f64,
) -> Result<Vec<WeightedEdge>> {
    let n = stations.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(stations.coords[i], stations.coords[j], mode)?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut pairs = BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist[i * n + a].total_cmp(&dist[i * n + b]).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in &pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if find(&mut parent, i) != find(&mut parent, j) && best.is_none_or(|(d, _, _)| dist[i * n + j] < d)
                {
                    best = Some((dist[i * n + j], i, j));
                }
            }
        }
        match best {
            Some((_, i, j)) => {
                pairs.insert((i, j));
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
            None => break,
        }
    }
    Ok(pairs
        .into_iter()
        .map(|(i, j)| {
            edge(
                NodeRef::new(stations.id, i),
                NodeRef::new(stations.id, j),
                dist[i * n + j],
                delta_min,
            )
        })
        .collect())
}

/// Assemble all edge sets whose partitions are non-empty and verify that the
/// result is connected.
pub fn build_graph(input: GraphInput, config: &GraphConfig) -> Result<MultipartiteGraph> {
    config.validate()?;
    let GraphInput {
        houses,
        regions,
        schools,
        stations,
        house_region,
    } = input;
    if houses.is_empty() {
        return Err(GsneError::Construction("house partition is empty".into()));
    }
    if regions.is_empty() && schools.is_empty() && stations.is_empty() {
        return Err(GsneError::Construction(
            "no POI partitions: at least one of regions, schools, stations is required".into(),
        ));
    }
    for (p, want) in [
        (&houses, PartitionId::HOUSES),
        (&regions, PartitionId::REGIONS),
        (&schools, PartitionId::SCHOOLS),
        (&stations, PartitionId::STATIONS),
    ] {
        if p.id != want {
            return Err(GsneError::Construction(format!(
                "partition {} supplied in the {} slot",
                p.id.name(),
                want.name()
            )));
        }
    }
    let mode = config.distance_mode;
    let dm = config.delta_min;
    let mut sets = Vec::new();
    if !regions.is_empty() {
        sets.push((
            EdgeSetKind::HouseRegion,
            connect_membership(&houses, &regions, &house_region, mode, dm)?,
        ));
    }
    if !schools.is_empty() {
        sets.push((
            EdgeSetKind::HouseSchool,
            connect_radius_or_nearest(&houses, &schools, config.house_school_radius, mode, dm)?,
        ));
    }
    if !stations.is_empty() {
        sets.push((
            EdgeSetKind::HouseStation,
            connect_radius_or_nearest(&houses, &stations, config.house_station_radius, mode, dm)?,
        ));
    }
    if !schools.is_empty() && !stations.is_empty() {
        sets.push((
            EdgeSetKind::SchoolStation,
            connect_radius_or_nearest(&schools, &stations, config.school_station_radius, mode, dm)?,
        ));
    }
    if stations.len() >= 2 {
        sets.push((
            EdgeSetKind::StationStation,
            connect_station_graph(&stations, config.k_nearest_stations, mode, dm)?,
        ));
    }
    let graph = MultipartiteGraph::from_parts(vec![houses, regions, schools, stations], sets, mode)?;
    graph.check_connected()?;
    Ok(graph)
}
