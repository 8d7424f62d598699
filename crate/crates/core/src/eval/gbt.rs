//! Least-squares gradient boosting with depth-limited regression trees.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{GsneError, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// Fraction of rows each tree is fitted on, drawn without replacement.
    pub subsample: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            trees: 300,
            max_depth: 3,
            shrinkage: 0.1,
            subsample: 0.8,
            min_samples_leaf: 1,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees < 1 {
            return Err(GsneError::Config("gbt needs at least one tree".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(GsneError::Config("gbt shrinkage must lie in (0, 1]".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(GsneError::Config("gbt subsample must lie in (0, 1]".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(GsneError::Config("gbt min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub base: f64,
    pub trees: Vec<Tree>,
    /// Mean squared error on all training rows: before the first tree, then
    /// after each stage.
    pub train_loss: Vec<f64>,
    /// Squared-error change on each stage's own fitting rows (never positive).
    pub inbag_change: Vec<f64>,
}

impl GbtModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|i| {
                let r = x.row(i);
                self.base + self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>()
            })
            .collect()
    }
}

/// Per-node accumulator for the split scan.
#[derive(Clone, Copy)]
struct Scan {
    sum: f64,
    count: usize,
    last: f64,
    best_gain: f64,
    best_feature: usize,
    best_threshold: f64,
}

fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Grow one tree on the rows with `node_of[i] == Some(0)`, level by level,
/// scanning every feature in presorted order.
fn grow_tree(x: &Matrix, order: &[Vec<u32>], resid: &[f64], in_bag: &[bool], params: &GbtParams, shrink: f64) -> Tree {
    let n = x.rows();
    let d = x.cols();
    let mut node_of: Vec<u32> = vec![u32::MAX; n];
    let (mut sum0, mut cnt0) = (0.0, 0usize);
    for i in 0..n {
        if in_bag[i] {
            node_of[i] = 0;
            sum0 += resid[i];
            cnt0 += 1;
        }
    }
    let mut nodes = vec![Node::Leaf(0.0)];
    // (node id, sum, count) of nodes still open at the current level
    let mut frontier: Vec<(usize, f64, usize)> = vec![(0, sum0, cnt0)];
    let min_leaf = params.min_samples_leaf;
    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![u32::MAX; nodes.len()];
        for (k, &(id, _, _)) in frontier.iter().enumerate() {
            slot[id] = k as u32;
        }
        let mut best: Vec<(f64, usize, f64)> = vec![(0.0, usize::MAX, 0.0); frontier.len()];
        let mut scan: Vec<Scan> = Vec::with_capacity(frontier.len());
        for f in 0..d {
            scan.clear();
            scan.extend(frontier.iter().map(|_| Scan {
                sum: 0.0,
                count: 0,
                last: f64::NEG_INFINITY,
                best_gain: 0.0,
                best_feature: usize::MAX,
                best_threshold: 0.0,
            }));
            for &i in &order[f] {
                let i = i as usize;
                let nd = node_of[i];
                if nd == u32::MAX {
                    continue;
                }
                let k = slot[nd as usize];
                if k == u32::MAX {
                    continue;
                }
                let k = k as usize;
                let v = x.get(i, f);
                let s = &mut scan[k];
                let (_, tot_sum, tot_cnt) = frontier[k];
                if s.count >= min_leaf && v > s.last && tot_cnt - s.count >= min_leaf {
                    let (ls, lc) = (s.sum, s.count as f64);
                    let (rs, rc) = (tot_sum - s.sum, (tot_cnt - s.count) as f64);
                    let gain = ls * ls / lc + rs * rs / rc - tot_sum * tot_sum / tot_cnt as f64;
                    if gain > s.best_gain {
                        s.best_gain = gain;
                        s.best_feature = f;
                        s.best_threshold = split_threshold(s.last, v);
                    }
                }
                s.sum += resid[i];
                s.count += 1;
                s.last = v;
            }
            for (b, s) in best.iter_mut().zip(&scan) {
                // strict comparison keeps the lowest feature index on ties
                if s.best_gain > b.0 {
                    *b = (s.best_gain, s.best_feature, s.best_threshold);
                }
            }
        }
        let mut next = Vec::new();
        let mut children: Vec<Option<(usize, usize)>> = vec![None; frontier.len()];
        for (k, &(id, _, _)) in frontier.iter().enumerate() {
            let (gain, feature, threshold) = best[k];
            if feature == usize::MAX || gain <= 1e-12 {
                continue;
            }
            let left = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[id] = Node::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            children[k] = Some((left, left + 1));
        }
        let mut sums = vec![(0.0, 0usize); nodes.len()];
        for i in 0..n {
            let nd = node_of[i];
            if nd == u32::MAX {
                continue;
            }
            let k = slot.get(nd as usize).copied().unwrap_or(u32::MAX);
            if k == u32::MAX {
                continue;
            }
            if let Some((l, r)) = children[k as usize] {
                let Node::Split { feature, threshold, .. } = nodes[nd as usize] else {
                    unreachable!("split node")
                };
                let c = if x.get(i, feature) <= threshold { l } else { r };
                node_of[i] = c as u32;
                sums[c].0 += resid[i];
                sums[c].1 += 1;
            }
        }
        for (l, r) in children.iter().flatten() {
            next.push((*l, sums[*l].0, sums[*l].1));
            next.push((*r, sums[*r].0, sums[*r].1));
        }
        // nodes that did not split keep their leaf value below
        for (k, &(id, s, c)) in frontier.iter().enumerate() {
            if children[k].is_none() {
                nodes[id] = Node::Leaf(if c > 0 { shrink * s / c as f64 } else { 0.0 });
            }
        }
        frontier = next;
    }
    for &(id, s, c) in &frontier {
        nodes[id] = Node::Leaf(if c > 0 { shrink * s / c as f64 } else { 0.0 });
    }
    Tree { nodes }
}

/// Fit a boosted ensemble. Row subsampling draws from `seed`.
pub fn fit_gbt(x: &Matrix, y: &[f64], params: &GbtParams, seed: u64) -> Result<GbtModel> {
    params.validate()?;
    let n = x.rows();
    if n != y.len() || n == 0 {
        return Err(GsneError::Input("gbt needs one target per row".into()));
    }
    let order: Vec<Vec<u32>> = (0..x.cols())
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
            idx
        })
        .collect();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mse = |f: &[f64]| y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let mut train_loss = vec![mse(&fitted)];
    let mut inbag_change = Vec::with_capacity(params.trees);
    let mut rng = SeededRng::new(seed, 21);
    let k = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(params.trees);
    let mut in_bag = vec![false; n];
    for _ in 0..params.trees {
        if k == n {
            in_bag.fill(true);
        } else {
            in_bag.fill(false);
            for i in sample(&mut rng, n, k) {
                in_bag[i] = true;
            }
        }
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let tree = grow_tree(x, &order, &resid, &in_bag, params, params.shrinkage);
        let mut change = 0.0;
        for i in 0..n {
            let t = tree.predict_row(x.row(i));
            if in_bag[i] {
                change += (resid[i] - t) * (resid[i] - t) - resid[i] * resid[i];
            }
            fitted[i] += t;
        }
        inbag_change.push(change);
        train_loss.push(mse(&fitted));
        trees.push(tree);
    }
    Ok(GbtModel {
        base,
        trees,
        train_loss,
        inbag_change,
    })
}
