//! KL divergences between diagonal Gaussians, negative-sampling proximity
//! losses, and their exact gradients with respect to every encoder parameter.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::encoder::{BatchEmbeddings, ForwardCache, GaussianEmbedding, GroupGradient, ParamStore, Role};
use crate::error::{GsneError, Result};
use crate::exec::Execution;
use crate::geo_graph::{MultipartiteGraph, NodeRef, PartitionId};
use crate::linalg::Matrix;

/// `KL(p || q)` for diagonal Gaussians given as mean/variance slices.
pub fn kl_parts(mu_p: &[f64], var_p: &[f64], mu_q: &[f64], var_q: &[f64]) -> f64 {
    let mut s = 0.0;
    for l in 0..mu_p.len() {
        let d = mu_q[l] - mu_p[l];
        s += var_p[l] / var_q[l] + d * d / var_q[l] - 1.0 + (var_q[l] / var_p[l]).ln();
    }
    0.5 * s
}

pub fn kl_diag(p: &GaussianEmbedding, q: &GaussianEmbedding) -> f64 {
    kl_parts(&p.mu, &p.var, &q.mu, &q.var)
}

/// Gradients of `KL(p || q)` as `(d mu_p, d var_p, d mu_q, d var_q)`.
pub fn kl_diag_grad(p: &GaussianEmbedding, q: &GaussianEmbedding) -> [Vec<f64>; 4] {
    let n = p.mu.len();
    let mut g = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for l in 0..n {
        let (vp, vq) = (p.var[l], q.var[l]);
        let d = q.mu[l] - p.mu[l];
        g[0][l] = -d / vq;
        g[1][l] = 0.5 * (1.0 / vq - 1.0 / vp);
        g[2][l] = d / vq;
        g[3][l] = 0.5 * (-vp / (vq * vq) - d * d / (vq * vq) + 1.0 / vq);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceValue {
    pub forward: f64,
    pub backward: f64,
    pub symmetric: f64,
}

pub fn sym_divergence(p: &GaussianEmbedding, q: &GaussianEmbedding) -> DivergenceValue {
    let forward = kl_diag(p, q);
    let backward = kl_diag(q, p);
    DivergenceValue {
        forward,
        backward,
        symmetric: forward + backward,
    }
}

/// Symmetric divergence `KL(p||q) + KL(q||p)` in its combined closed form.
#[inline]
pub fn sym_parts(mu_p: &[f64], var_p: &[f64], mu_q: &[f64], var_q: &[f64]) -> f64 {
    let mut s = 0.0;
    for l in 0..mu_p.len() {
        let (vp, vq) = (var_p[l], var_q[l]);
        let d = mu_p[l] - mu_q[l];
        s += vp / vq + vq / vp + d * d * (1.0 / vp + 1.0 / vq) - 2.0;
    }
    0.5 * s
}

/// Accumulate `scale * d(sym)/d(.)` into the four gradient buffers.
#[inline]
#[allow(clippy::too_many_arguments)]
fn sym_parts_grad(
    mu_p: &[f64],
    var_p: &[f64],
    mu_q: &[f64],
    var_q: &[f64],
    scale: f64,
    g_mu_p: &mut [f64],
    g_var_p: &mut [f64],
    g_mu_q: &mut [f64],
    g_var_q: &mut [f64],
) {
    for l in 0..mu_p.len() {
        let (vp, vq) = (var_p[l], var_q[l]);
        let d = mu_p[l] - mu_q[l];
        let (ip, iq) = (1.0 / vp, 1.0 / vq);
        let dm = d * (ip + iq);
        g_mu_p[l] += scale * dm;
        g_mu_q[l] -= scale * dm;
        g_var_p[l] += scale * 0.5 * (iq - vq * ip * ip - d * d * ip * ip);
        g_var_q[l] += scale * 0.5 * (ip - vp * iq * iq - d * d * iq * iq);
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Joint probability `1 / (1 + e^d)` of an edge with symmetric divergence `d`.
pub fn p1_joint(d_sym: f64) -> f64 {
    sigmoid(-d_sym)
}

/// `ln p1(d) = -softplus(d)`.
pub fn log_p1(d_sym: f64) -> f64 {
    -softplus(d_sym)
}

/// Negative log-likelihood of one directed positive pair against its negatives:
/// `softplus(d(src, dst)) + sum_n softplus(-d(src, neg_n))`.
pub fn pair_loss(src: &GaussianEmbedding, dst: &GaussianEmbedding, negatives: &[GaussianEmbedding]) -> f64 {
    let mut l = softplus(sym_parts(&src.mu, &src.var, &dst.mu, &dst.var));
    for n in negatives {
        l += softplus(-sym_parts(&src.mu, &src.var, &n.mu, &n.var));
    }
    l
}

/// Which proximity objective a model optimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Targets and negatives use the attribute encoders.
    First,
    /// Targets and negatives use the context encoders.
    Second,
}

impl Order {
    pub fn target_role(self) -> Role {
        match self {
            Order::First => Role::Attribute,
            Order::Second => Role::Context,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Order::First => "first",
            Order::Second => "second",
        }
    }
}

/// A positive arc `src -> dst` with the negatives drawn for it.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedSample {
    pub src: NodeRef,
    pub dst: NodeRef,
    pub negatives: Vec<NodeRef>,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Mean per-sample loss.
    pub loss: f64,
    pub grads: Option<ParamStore>,
}

struct Group {
    role: Role,
    partition: PartitionId,
    nodes: Vec<usize>,
    rows: HashMap<u32, usize>,
}

impl Group {
    fn slot(&mut self, idx: u32) -> usize {
        let next = self.nodes.len();
        *self.rows.entry(idx).or_insert_with(|| {
            self.nodes.push(idx as usize);
            next
        })
    }
}

fn role_key(r: Role) -> u8 {
    match r {
        Role::Attribute => 0,
        Role::Context => 1,
    }
}

/// Loss (batch mean) and optionally exact gradients for a batch of directed
/// samples. Each distinct `(role, partition)` group is encoded once.
pub fn forward_backward(
    store: &ParamStore,
    graph: &MultipartiteGraph,
    batch: &[DirectedSample],
    order: Order,
    want_grad: bool,
    exec: Execution,
) -> Result<BatchOutcome> {
    if batch.is_empty() {
        return Err(GsneError::Input("empty batch".into()));
    }
    let target_role = order.target_role();
    store.params(target_role)?;

    let mut keys: BTreeMap<(u8, PartitionId), usize> = BTreeMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut key_of = |role: Role, p: PartitionId, groups: &mut Vec<Group>| -> usize {
        *keys.entry((role_key(role), p)).or_insert_with(|| {
            groups.push(Group {
                role,
                partition: p,
                nodes: Vec::new(),
                rows: HashMap::new(),
            });
            groups.len() - 1
        })
    };
    // (group, row) for src, dst and each negative of every sample
    let mut slots: Vec<((usize, usize), (usize, usize), Vec<(usize, usize)>)> = Vec::with_capacity(batch.len());
    for s in batch {
        let gs = key_of(Role::Attribute, s.src.partition, &mut groups);
        let rs = groups[gs].slot(s.src.index);
        let gd = key_of(target_role, s.dst.partition, &mut groups);
        let rd = groups[gd].slot(s.dst.index);
        let negs = s
            .negatives
            .iter()
            .map(|n| {
                let g = key_of(target_role, n.partition, &mut groups);
                (g, groups[g].slot(n.index))
            })
            .collect();
        slots.push(((gs, rs), (gd, rd), negs));
    }

    let hyper = &store.hyper;
    let encoded: Vec<Result<(BatchEmbeddings, ForwardCache)>> = exec.map(groups.len(), |g| {
        let grp = &groups[g];
        let x = graph.partition(grp.partition).attrs.select_rows(&grp.nodes);
        store.params(grp.role)?.forward_batch(grp.partition, &x, hyper)
    });
    let encoded: Vec<(BatchEmbeddings, ForwardCache)> = encoded.into_iter().collect::<Result<_>>()?;

    let l = hyper.embed_dim;
    let mut d_mu: Vec<Matrix> = groups.iter().map(|g| Matrix::zeros(g.nodes.len(), l)).collect();
    let mut d_var: Vec<Matrix> = groups.iter().map(|g| Matrix::zeros(g.nodes.len(), l)).collect();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut gs_mu = vec![0.0; l];
    let mut gs_var = vec![0.0; l];
    let mut gt_mu = vec![0.0; l];
    let mut gt_var = vec![0.0; l];
    for (s, ((gs, rs), tgt, negs)) in batch.iter().zip(&slots) {
        let src_mu = encoded[*gs].0.mu.row(*rs);
        let src_var = encoded[*gs].0.var.row(*rs);
        let mut sample_loss = 0.0;
        gs_mu.fill(0.0);
        gs_var.fill(0.0);
        for (k, &(gt, rt)) in std::iter::once(tgt).chain(negs.iter()).enumerate() {
            let t_mu = encoded[gt].0.mu.row(rt);
            let t_var = encoded[gt].0.var.row(rt);
            let d = sym_parts(src_mu, src_var, t_mu, t_var);
            // positive pair pulls together, negatives push apart
            let (term, dl_dd) = if k == 0 {
                (softplus(d), sigmoid(d))
            } else {
                (softplus(-d), -sigmoid(-d))
            };
            sample_loss += term;
            if want_grad {
                gt_mu.fill(0.0);
                gt_var.fill(0.0);
                sym_parts_grad(
                    src_mu,
                    src_var,
                    t_mu,
                    t_var,
                    scale * dl_dd,
                    &mut gs_mu,
                    &mut gs_var,
                    &mut gt_mu,
                    &mut gt_var,
                );
                for (a, b) in d_mu[gt].row_mut(rt).iter_mut().zip(&gt_mu) {
                    *a += b;
                }
                for (a, b) in d_var[gt].row_mut(rt).iter_mut().zip(&gt_var) {
                    *a += b;
                }
            }
        }
        if !sample_loss.is_finite() {
            return Err(GsneError::Training(format!(
                "non-finite loss on edge {} -> {}",
                graph.node_name(s.src),
                graph.node_name(s.dst)
            )));
        }
        total += sample_loss;
        if want_grad {
            for (a, b) in d_mu[*gs].row_mut(*rs).iter_mut().zip(&gs_mu) {
                *a += b;
            }
            for (a, b) in d_var[*gs].row_mut(*rs).iter_mut().zip(&gs_var) {
                *a += b;
            }
        }
    }
    let loss = total * scale;

    let grads = if want_grad {
        let group_grads: Vec<GroupGradient> = exec.map(groups.len(), |g| {
            let grp = &groups[g];
            // params() was validated above for both roles in use
            let params = store.params(grp.role).expect("role validated");
            params.backward_batch(grp.partition, &encoded[g].1, &d_mu[g], &d_var[g], hyper)
        });
        let mut out = store.zeros_like();
        for (grp, gg) in groups.iter().zip(&group_grads) {
            match grp.role {
                Role::Attribute => out.attr.add_group(gg),
                Role::Context => out.ctx.as_mut().expect("context present").add_group(gg),
            }
        }
        if !out.is_finite() {
            return Err(GsneError::Training("non-finite gradient".into()));
        }
        Some(out)
    } else {
        None
    };
    Ok(BatchOutcome { loss, grads })
}

/// First-order loss of a batch: targets and negatives use attribute embeddings.
pub fn loss_first_order(store: &ParamStore, graph: &MultipartiteGraph, batch: &[DirectedSample]) -> Result<f64> {
    forward_backward(store, graph, batch, Order::First, false, Execution::Sequential).map(|o| o.loss)
}

/// Second-order loss of a batch: targets and negatives use context embeddings.
pub fn loss_second_order(store: &ParamStore, graph: &MultipartiteGraph, batch: &[DirectedSample]) -> Result<f64> {
    forward_backward(store, graph, batch, Order::Second, false, Execution::Sequential).map(|o| o.loss)
}
