//! Central finite-difference check of the analytic loss gradients on a small
//! two-partition graph.

use rand::Rng;

use crate::encoder::{EncoderHyper, ParamStore};
use crate::error::Result;
use crate::exec::Execution;
use crate::geo_graph::{
    DistanceMode, EdgeSetKind, GeoPoint, MultipartiteGraph, NodeRef, Partition, PartitionId, WeightedEdge,
};
use crate::linalg::Matrix;
use crate::objective::{forward_backward, DirectedSample, Order};
use crate::rng::SeededRng;
use crate::sampling::NoiseDistribution;

pub const FD_STEP: f64 = 1e-4;

/// Parameter draws with a pre-activation closer than this to a ReLU or
/// variance-floor kink are rejected, since central differences straddling a
/// kink do not estimate the gradient.
pub const KINK_MARGIN: f64 = 1e-2;

const MAX_DRAWS: u64 = 1000;

/// Below this magnitude both gradients are treated as zero when forming the
/// relative error.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderCheck {
    pub order: Order,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub params_checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<OrderCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

/// Four houses with three attributes and two regions with two attributes,
/// every house linked to one or both regions.
pub fn toy_graph(seed: u64) -> Result<MultipartiteGraph> {
    let mut rng = SeededRng::new(seed, 7);
    let mut part = |id: PartitionId, n: usize, dim: usize| -> Result<Partition> {
        let ids = (0..n).map(|i| format!("{}{i}", id.name())).collect();
        let coords = (0..n).map(|i| GeoPoint::new(i as f64, 0.0)).collect();
        let attrs = Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.random_range(-1.5..1.5)).collect())?;
        Partition::new(id, ids, coords, attrs)
    };
    let houses = part(PartitionId::HOUSES, 4, 3)?;
    let regions = part(PartitionId::REGIONS, 2, 2)?;
    let h = |i| NodeRef::new(PartitionId::HOUSES, i);
    let r = |i| NodeRef::new(PartitionId::REGIONS, i);
    let edges = vec![
        WeightedEdge { a: h(0), b: r(0), weight: 1.0 },
        WeightedEdge { a: h(1), b: r(0), weight: 0.5 },
        WeightedEdge { a: h(2), b: r(1), weight: 0.25 },
        WeightedEdge { a: h(3), b: r(1), weight: 1.0 },
        WeightedEdge { a: h(1), b: r(1), weight: 0.2 },
    ];
    MultipartiteGraph::from_parts(
        vec![
            houses,
            regions,
            Partition::empty(PartitionId::SCHOOLS, 1),
            Partition::empty(PartitionId::STATIONS, 1),
        ],
        vec![(EdgeSetKind::HouseRegion, edges)],
        DistanceMode::Planar,
    )
}

/// Every arc of the toy graph with `negatives` draws from the target side's
/// noise distribution.
pub fn toy_batch(graph: &MultipartiteGraph, negatives: usize, seed: u64) -> Result<Vec<DirectedSample>> {
    let set = graph
        .edge_set(EdgeSetKind::HouseRegion)
        .expect("toy graph has a house-region edge set");
    let noise_h = NoiseDistribution::build(graph, set.kind, PartitionId::HOUSES)?;
    let noise_r = NoiseDistribution::build(graph, set.kind, PartitionId::REGIONS)?;
    let mut rng = SeededRng::new(seed, 8);
    Ok(set
        .arcs()
        .map(|(src, dst, _)| {
            let noise = if dst.partition == PartitionId::HOUSES { &noise_h } else { &noise_r };
            DirectedSample {
                src,
                dst,
                negatives: noise.sample_negatives(negatives, &mut rng),
            }
        })
        .collect())
}

pub fn toy_hyper() -> EncoderHyper {
    EncoderHyper {
        embed_dim: 4,
        hidden1: 5,
        hidden2: 4,
        ..EncoderHyper::default()
    }
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter of `store`.
pub fn check_order(
    store: &ParamStore,
    graph: &MultipartiteGraph,
    batch: &[DirectedSample],
    order: Order,
    step: f64,
) -> Result<OrderCheck> {
    let analytic = forward_backward(store, graph, batch, order, true, Execution::Sequential)?
        .grads
        .expect("gradients requested");
    let names = store.slice_names();
    let grads: Vec<Vec<f64>> = analytic.slices().into_iter().map(<[f64]>::to_vec).collect();
    let mut probe = store.clone();
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    let loss_at = |p: &ParamStore| -> Result<f64> {
        Ok(forward_backward(p, graph, batch, order, false, Execution::Sequential)?.loss)
    };
    for (s, name) in names.iter().enumerate() {
        for k in 0..grads[s].len() {
            let orig = probe.slices()[s][k];
            probe.slices_mut()[s][k] = orig + step;
            let up = loss_at(&probe)?;
            probe.slices_mut()[s][k] = orig - step;
            let down = loss_at(&probe)?;
            probe.slices_mut()[s][k] = orig;
            let fd = (up - down) / (2.0 * step);
            let an = grads[s][k];
            let scale = an.abs().max(fd.abs());
            let rel = if scale < ABS_FLOOR { 0.0 } else { (an - fd).abs() / scale };
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}]"));
            }
            checked += 1;
        }
    }
    Ok(OrderCheck {
        order,
        max_rel_error: worst.0,
        worst_param: worst.1,
        params_checked: checked,
    })
}

/// Smallest kink distance over every node of `graph` under both encoder roles.
pub fn kink_distance(store: &ParamStore, graph: &MultipartiteGraph) -> Result<f64> {
    let mut d = f64::INFINITY;
    for params in [Some(&store.attr), store.ctx.as_ref()].into_iter().flatten() {
        for p in graph.partitions().iter().filter(|p| !p.is_empty()) {
            let (_, cache) = params.forward_batch(p.id, &p.attrs, &store.hyper)?;
            d = d.min(cache.kink_distance(&store.hyper));
        }
    }
    Ok(d)
}

/// First parameter draw, starting at `seed`, whose kink distance on `graph`
/// is at least [`KINK_MARGIN`].
fn smooth_store(graph: &MultipartiteGraph, seed: u64) -> Result<ParamStore> {
    let dims = graph.dims();
    let mut best = (f64::NEG_INFINITY, None);
    for k in 0..MAX_DRAWS {
        let store = ParamStore::init(toy_hyper(), &dims, seed.wrapping_add(k), true)?;
        let d = kink_distance(&store, graph)?;
        if d >= KINK_MARGIN {
            return Ok(store);
        }
        if d > best.0 {
            best = (d, Some(store));
        }
    }
    Ok(best.1.expect("at least one draw"))
}

/// Run the finite-difference check for both proximity orders on the toy graph.
pub fn run_toy(seed: u64) -> Result<GradcheckReport> {
    let graph = toy_graph(seed)?;
    let batch = toy_batch(&graph, 2, seed)?;
    let store = smooth_store(&graph, seed)?;
    let checks = [Order::First, Order::Second]
        .into_iter()
        .map(|o| check_order(&store, &graph, &batch, o, FD_STEP))
        .collect::<Result<_>>()?;
    Ok(GradcheckReport { checks })
}
