//! The training loop: alternate over edge sets, sample positive arcs through
//! alias tables, draw negatives, and update the encoders.

mod checkpoint;
mod export;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderHyper, ParamStore};
use crate::error::{GsneError, Result};
use crate::exec::Execution;
use crate::geo_graph::{EdgeSetKind, MultipartiteGraph, PartitionId};
use crate::objective::{forward_backward, DirectedSample, Order};
use crate::rng::SeededRng;
use crate::sampling::{AliasTable, NoiseDistribution};

pub use checkpoint::{load_checkpoint, save_checkpoint, write_loss_csv};
pub use export::{export_embeddings, EmbeddingRow, EmbeddingTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proximity {
    First,
    Second,
    #[default]
    Both,
}

impl Proximity {
    pub fn orders(self) -> &'static [Order] {
        match self {
            Proximity::First => &[Order::First],
            Proximity::Second => &[Order::Second],
            Proximity::Both => &[Order::First, Order::Second],
        }
    }
}

impl std::str::FromStr for Proximity {
    type Err = GsneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" | "1st" => Ok(Proximity::First),
            "second" | "2nd" => Ok(Proximity::Second),
            "both" => Ok(Proximity::Both),
            _ => Err(GsneError::Config(format!("unknown proximity '{s}' (first, second, both)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = GsneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(GsneError::Config(format!("unknown optimizer '{s}' (sgd, adam)"))),
        }
    }
}

/// How the edge set for each iteration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternation {
    /// Cycle through the edge sets one iteration at a time.
    #[default]
    Iterative,
    /// Uniform random edge set per iteration.
    Random,
    /// Cycle in blocks of 100 iterations.
    Block100,
}

impl std::str::FromStr for Alternation {
    type Err = GsneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(Alternation::Iterative),
            "random" => Ok(Alternation::Random),
            "block100" => Ok(Alternation::Block100),
            _ => Err(GsneError::Config(format!(
                "unknown alternation '{s}' (iterative, random, block100)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub proximity: Proximity,
    pub iterations: u64,
    pub batch_size: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub alternation: Alternation,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: u64,
    /// Log the smoothed loss every this many iterations (0 disables).
    pub loss_log_every: u64,
    /// Global gradient-norm clip per model (0 disables).
    pub grad_clip: f64,
    /// Train only on these edge sets; empty means all.
    pub edge_sets: Vec<EdgeSetKind>,
    pub encoder: EncoderHyper,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            proximity: Proximity::Both,
            iterations: 30_000,
            batch_size: 128,
            negatives: 5,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 42,
            alternation: Alternation::Iterative,
            checkpoint_every: 0,
            loss_log_every: 1000,
            grad_clip: 5.0,
            edge_sets: Vec::new(),
            encoder: EncoderHyper::default(),
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(GsneError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GsneError::Config("learning_rate must be positive".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(GsneError::Config("grad_clip must be non-negative".into()));
        }
        self.encoder.validate()
    }
}

/// Edge-set index for `iteration` under `policy`. `rng` is only consumed by
/// the random policy.
pub fn select_edge_set<R: Rng + ?Sized>(policy: Alternation, iteration: u64, count: usize, rng: &mut R) -> usize {
    assert!(count >= 1, "no edge sets to select from");
    match policy {
        Alternation::Iterative => (iteration % count as u64) as usize,
        Alternation::Random => rng.random_range(0..count),
        Alternation::Block100 => ((iteration / 100) % count as u64) as usize,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub edge_set: EdgeSetKind,
    pub order: Order,
    pub loss: f64,
}

/// First and second moment estimates, one buffer per parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        OptimizerState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One proximity model with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub order: Order,
    pub params: ParamStore,
    pub opt: OptimizerState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub models: Vec<Model>,
    /// Iterations completed so far.
    pub iteration: u64,
    pub rng: SeededRng,
    pub history: Vec<LossRecord>,
}

impl TrainState {
    /// Fresh state. The first-order model and the second-order model draw
    /// their initial weights from different seeds.
    pub fn init(graph: &MultipartiteGraph, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let dims = graph.dims();
        let models = config
            .proximity
            .orders()
            .iter()
            .map(|&order| {
                let seed = crate::rng::derive_seed(config.seed, order as u64);
                let params = ParamStore::init(config.encoder, &dims, seed, order == Order::Second)?;
                let opt = OptimizerState::new(&params);
                Ok(Model { order, params, opt })
            })
            .collect::<Result<_>>()?;
        Ok(TrainState {
            config: config.clone(),
            models,
            iteration: 0,
            rng: SeededRng::new(config.seed, 2),
            history: Vec::new(),
        })
    }

    pub fn model(&self, order: Order) -> Option<&Model> {
        self.models.iter().find(|m| m.order == order)
    }

    /// Loss values of one model, in iteration order.
    pub fn losses(&self, order: Order) -> Vec<f64> {
        self.history.iter().filter(|r| r.order == order).map(|r| r.loss).collect()
    }
}

struct EdgeSampler {
    kind: EdgeSetKind,
    arcs: AliasTable,
    noise: [Option<NoiseDistribution>; PartitionId::COUNT],
}

/// Alias tables for the edge sets a run trains on.
pub struct Samplers {
    sets: Vec<EdgeSampler>,
}

impl Samplers {
    pub fn build(graph: &MultipartiteGraph, filter: &[EdgeSetKind]) -> Result<Self> {
        let mut sets = Vec::new();
        for kind in EdgeSetKind::ALL {
            if !filter.is_empty() && !filter.contains(&kind) {
                continue;
            }
            let set = match graph.edge_set(kind) {
                Some(s) if !s.is_empty() => s,
                _ => {
                    warn!("edge set {kind} is empty; skipping it");
                    continue;
                }
            };
            let weights: Vec<f64> = set.arcs().map(|(_, _, w)| w).collect();
            let arcs = AliasTable::new(&weights)?;
            let (pa, pb) = kind.endpoints();
            let mut noise: [Option<NoiseDistribution>; PartitionId::COUNT] = Default::default();
            for p in [pa, pb] {
                if noise[p.index()].is_none() {
                    noise[p.index()] = Some(NoiseDistribution::build(graph, kind, p)?);
                }
            }
            sets.push(EdgeSampler { kind, arcs, noise });
        }
        if sets.is_empty() {
            return Err(GsneError::Training("no non-empty edge set to train on".into()));
        }
        Ok(Samplers { sets })
    }

    pub fn kinds(&self) -> Vec<EdgeSetKind> {
        self.sets.iter().map(|s| s.kind).collect()
    }

    /// `batch` positive arcs from edge set `k`, each with `negatives` draws
    /// from the noise distribution of the arc's target partition.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        graph: &MultipartiteGraph,
        k: usize,
        batch: usize,
        negatives: usize,
        rng: &mut R,
    ) -> Vec<DirectedSample> {
        let s = &self.sets[k];
        let set = graph.edge_set(s.kind).expect("sampler built from this graph");
        (0..batch)
            .map(|_| {
                let (src, dst, _) = set.arc(s.arcs.sample(rng));
                let noise = s.noise[dst.partition.index()].as_ref().expect("endpoint noise built");
                DirectedSample {
                    src,
                    dst,
                    negatives: noise.sample_negatives(negatives, rng),
                }
            })
            .collect()
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Apply one optimizer step to `model` given gradients `grads`.
pub fn apply_update(model: &mut Model, grads: &ParamStore, config: &TrainConfig) {
    let g = grads.slices();
    let mut scale = 1.0;
    if config.grad_clip > 0.0 {
        let norm = g.iter().flat_map(|s| s.iter()).map(|x| x * x).sum::<f64>().sqrt();
        if norm > config.grad_clip {
            scale = config.grad_clip / norm;
        }
    }
    let lr = config.learning_rate;
    let opt = &mut model.opt;
    opt.step += 1;
    match config.optimizer {
        OptimizerKind::Sgd => {
            for (p, gs) in model.params.slices_mut().into_iter().zip(&g) {
                for (w, dw) in p.iter_mut().zip(gs.iter()) {
                    *w -= lr * scale * dw;
                }
            }
        }
        OptimizerKind::Adam => {
            let t = opt.step as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            for (s, p) in model.params.slices_mut().into_iter().enumerate() {
                let (m, v) = (&mut opt.m[s], &mut opt.v[s]);
                for k in 0..p.len() {
                    let dw = scale * g[s][k];
                    m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * dw;
                    v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * dw * dw;
                    p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Run one iteration: pick an edge set, sample a batch, and update every
/// model on that batch. On error the state is left as it was before the
/// iteration.
pub fn step(state: &mut TrainState, graph: &MultipartiteGraph, samplers: &Samplers) -> Result<()> {
    let cfg = &state.config;
    let t = state.iteration;
    let mut rng = state.rng.clone();
    let k = select_edge_set(cfg.alternation, t, samplers.sets.len(), &mut rng);
    let kind = samplers.sets[k].kind;
    let batch = samplers.sample_batch(graph, k, cfg.batch_size, cfg.negatives, &mut rng);
    let mut outcomes = Vec::with_capacity(state.models.len());
    for m in &state.models {
        let out = forward_backward(&m.params, graph, &batch, m.order, true, cfg.execution).map_err(|e| match e {
            GsneError::Training(msg) => GsneError::Training(format!(
                "{msg} at iteration {t} ({} model, edge set {kind})",
                m.order.name()
            )),
            other => other,
        })?;
        outcomes.push(out);
    }
    for (m, out) in state.models.iter_mut().zip(outcomes) {
        apply_update(m, out.grads.as_ref().expect("gradients requested"), &state.config);
        if !m.params.is_finite() {
            return Err(GsneError::Numeric(format!(
                "parameters became non-finite at iteration {t} ({} model)",
                m.order.name()
            )));
        }
        state.history.push(LossRecord {
            iteration: t,
            edge_set: kind,
            order: m.order,
            loss: out.loss,
        });
    }
    state.rng = rng;
    state.iteration += 1;
    Ok(())
}

/// Continue training until `state.iteration == until`. `on_checkpoint` is
/// invoked every `checkpoint_every` iterations.
pub fn run_until(
    state: &mut TrainState,
    graph: &MultipartiteGraph,
    until: u64,
    mut on_checkpoint: impl FnMut(&TrainState) -> Result<()>,
) -> Result<()> {
    let samplers = Samplers::build(graph, &state.config.edge_sets)?;
    let log_every = state.config.loss_log_every;
    let mut smooth: Vec<Option<f64>> = vec![None; state.models.len()];
    while state.iteration < until {
        step(state, graph, &samplers)?;
        let n = state.models.len();
        let recent = &state.history[state.history.len() - n..];
        for (s, r) in smooth.iter_mut().zip(recent) {
            *s = Some(s.map_or(r.loss, |v| 0.99 * v + 0.01 * r.loss));
        }
        if log_every > 0 && state.iteration.is_multiple_of(log_every) {
            for (s, r) in smooth.iter().zip(recent) {
                info!(
                    "iteration {} {} loss {:.4} (smoothed {:.4})",
                    state.iteration,
                    r.order.name(),
                    r.loss,
                    s.unwrap_or(r.loss)
                );
            }
        }
        let every = state.config.checkpoint_every;
        if every > 0 && state.iteration.is_multiple_of(every) {
            on_checkpoint(state)?;
        }
    }
    Ok(())
}

/// Train from scratch for `config.iterations` iterations.
pub fn train(graph: &MultipartiteGraph, config: &TrainConfig) -> Result<TrainState> {
    let mut state = TrainState::init(graph, config)?;
    run_until(&mut state, graph, config.iterations, |_| Ok(()))?;
    Ok(state)
}

/// Means of consecutive non-overlapping windows of `values`.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks(window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{toy_graph, toy_hyper};

    fn toy_config(proximity: Proximity, iterations: u64) -> TrainConfig {
        TrainConfig {
            proximity,
            iterations,
            batch_size: 8,
            negatives: 2,
            encoder: toy_hyper(),
            seed: 3,
            loss_log_every: 0,
            execution: Execution::Sequential,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn alternation_policies() {
        let mut rng = SeededRng::new(0, 0);
        let seq: Vec<usize> = (0..10)
            .map(|t| select_edge_set(Alternation::Iterative, t, 5, &mut rng))
            .collect();
        assert_eq!(seq, vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4]);
        assert_eq!(select_edge_set(Alternation::Block100, 250, 3, &mut rng), 2);
        for policy in [Alternation::Iterative, Alternation::Random, Alternation::Block100] {
            for t in 0..300 {
                assert_eq!(select_edge_set(policy, t, 1, &mut rng), 0);
            }
        }
        let mut counts = [0; 3];
        for t in 0..3000 {
            counts[select_edge_set(Alternation::Random, t, 3, &mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| c > 900), "{counts:?}");
    }

    #[test]
    fn zero_iterations_keep_initialization() {
        let g = toy_graph(1).unwrap();
        let cfg = toy_config(Proximity::Both, 0);
        let state = train(&g, &cfg).unwrap();
        assert_eq!(state, TrainState::init(&g, &cfg).unwrap());
        assert!(state.history.is_empty());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let g = toy_graph(1).unwrap();
        let cfg = toy_config(Proximity::Both, 50);
        let a = train(&g, &cfg).unwrap();
        let b = train(&g, &cfg).unwrap();
        assert_eq!(a, b);
        let other = train(&g, &TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.models[0].params, other.models[0].params);
    }

    #[test]
    fn both_reuses_the_standalone_first_order_trajectory() {
        let g = toy_graph(1).unwrap();
        let both = train(&g, &toy_config(Proximity::Both, 30)).unwrap();
        let first = train(&g, &toy_config(Proximity::First, 30)).unwrap();
        assert_eq!(both.models[0], first.models[0]);
        assert_eq!(both.losses(Order::First), first.losses(Order::First));
    }

    #[test]
    fn second_order_model_has_context_encoders() {
        let g = toy_graph(1).unwrap();
        let s = TrainState::init(&g, &toy_config(Proximity::Both, 1)).unwrap();
        assert!(s.model(Order::First).unwrap().params.ctx.is_none());
        assert!(s.model(Order::Second).unwrap().params.ctx.is_some());
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let g = toy_graph(2).unwrap();
        let seq = train(&g, &toy_config(Proximity::Both, 20)).unwrap();
        let par = train(
            &g,
            &TrainConfig {
                execution: Execution::Parallel,
                ..toy_config(Proximity::Both, 20)
            },
        )
        .unwrap();
        assert_eq!(seq.models, par.models);
    }

    #[test]
    fn small_step_does_not_increase_batch_loss() {
        let g = toy_graph(5).unwrap();
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-5,
            grad_clip: 0.0,
            ..toy_config(Proximity::Both, 1)
        };
        let mut state = TrainState::init(&g, &cfg).unwrap();
        let samplers = Samplers::build(&g, &[]).unwrap();
        let batch = samplers.sample_batch(&g, 0, 16, 3, &mut SeededRng::new(9, 0));
        for m in &mut state.models {
            let before = forward_backward(&m.params, &g, &batch, m.order, true, Execution::Sequential).unwrap();
            apply_update(m, before.grads.as_ref().unwrap(), &cfg);
            let after = forward_backward(&m.params, &g, &batch, m.order, false, Execution::Sequential).unwrap();
            assert!(after.loss <= before.loss, "{} > {}", after.loss, before.loss);
        }
    }

    #[test]
    fn edge_set_filter_restricts_sampling() {
        let g = toy_graph(1).unwrap();
        let s = Samplers::build(&g, &[EdgeSetKind::HouseRegion]).unwrap();
        assert_eq!(s.kinds(), vec![EdgeSetKind::HouseRegion]);
        assert!(Samplers::build(&g, &[EdgeSetKind::HouseSchool]).is_err());
    }

    #[test]
    fn window_means_chunks() {
        assert_eq!(window_means(&[1.0, 3.0, 5.0, 7.0, 9.0], 2), vec![2.0, 6.0, 9.0]);
    }
}
