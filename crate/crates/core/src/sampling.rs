//! Weighted positive-arc sampling with alias tables and degree^(3/4) negative
//! sampling.

use rand::Rng;

use crate::error::{GsneError, Result};
use crate::geo_graph::{EdgeSetKind, MultipartiteGraph, NodeRef, PartitionId};

/// Exponent applied to node degrees in the noise distribution.
pub const NOISE_EXPONENT: f64 = 0.75;

/// Walker/Vose alias table: O(M) construction, O(1) draws.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(GsneError::Input("alias table needs at least one weight".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(GsneError::Input(format!("weight {i} is not positive and finite: {w}")));
        }
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// The exact distribution encoded by the table.
    pub fn implied_distribution(&self) -> Vec<f64> {
        let n = self.prob.len() as f64;
        let mut p = vec![0.0; self.prob.len()];
        for (i, (&pr, &al)) in self.prob.iter().zip(&self.alias).enumerate() {
            p[i] += pr / n;
            p[al as usize] += (1.0 - pr) / n;
        }
        p
    }
}

/// Noise distribution over the nodes of one partition, with mass proportional
/// to degree^(3/4) inside one edge set. Nodes with zero degree get no mass.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDistribution {
    pub partition: PartitionId,
    pub edge_set: EdgeSetKind,
    nodes: Vec<u32>,
    masses: Vec<f64>,
    table: AliasTable,
}

impl NoiseDistribution {
    pub fn build(graph: &MultipartiteGraph, edge_set: EdgeSetKind, target: PartitionId) -> Result<Self> {
        let set = graph
            .edge_set(edge_set)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| GsneError::Input(format!("edge set {edge_set} is empty")))?;
        Self::from_degrees(target, edge_set, set.degrees(target))
    }

    pub fn from_degrees(partition: PartitionId, edge_set: EdgeSetKind, degrees: &[u32]) -> Result<Self> {
        let (nodes, raw): (Vec<u32>, Vec<f64>) = degrees
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(i, &d)| (i as u32, (d as f64).powf(NOISE_EXPONENT)))
            .unzip();
        if nodes.is_empty() {
            return Err(GsneError::Input(format!(
                "no {} node has an edge in {edge_set}",
                partition.name()
            )));
        }
        let total: f64 = raw.iter().sum();
        let masses = raw.iter().map(|m| m / total).collect();
        let table = AliasTable::new(&raw)?;
        Ok(NoiseDistribution {
            partition,
            edge_set,
            nodes,
            masses,
            table,
        })
    }

    /// `(local index, mass)` for every node with positive mass.
    pub fn masses(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().zip(&self.masses).map(|(&n, &m)| (n as usize, m))
    }

    pub fn support(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeRef {
        NodeRef {
            partition: self.partition,
            index: self.nodes[self.table.sample(rng)],
        }
    }

    /// `n` independent draws. Draws that happen to be true neighbours are kept.
    pub fn sample_negatives<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<NodeRef> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}
