//! Per-partition attribute encoders followed by a shared Gaussian head.
//!
//! A node with features `x` in partition `k` is mapped to
//! `u = relu(W2 relu(W1 x + b1) + b2)`, then to a diagonal Gaussian with
//! `mu = act(Wmu u + bmu)` and `var = max(elu(Wvar u + bvar) + 1, var_floor)`.
//! Attribute and context roles use structurally identical, separately
//! parameterised encoders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GsneError, Result};
use crate::exec::Execution;
use crate::geo_graph::{MultipartiteGraph, NodeRef, PartitionId};
use crate::linalg::{gemm, Matrix, Trans};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanActivation {
    #[default]
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderHyper {
    /// Gaussian embedding dimension.
    pub embed_dim: usize,
    /// First hidden layer width of the attribute encoders.
    pub hidden1: usize,
    /// Output width of the attribute encoders (input of the Gaussian head).
    pub hidden2: usize,
    pub var_floor: f64,
    pub mean_activation: MeanActivation,
}

impl Default for EncoderHyper {
    fn default() -> Self {
        EncoderHyper {
            embed_dim: 32,
            hidden1: 128,
            hidden2: 64,
            var_floor: 1e-6,
            mean_activation: MeanActivation::Relu,
        }
    }
}

impl EncoderHyper {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(GsneError::Config("encoder dimensions must be at least 1".into()));
        }
        if !(self.var_floor > 0.0) {
            return Err(GsneError::Config("var_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Attribute,
    Context,
}

/// Fully connected layer; `w` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Dense {
            w: Matrix::zeros(out, inp),
            b: vec![0.0; out],
        }
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Self {
        let bound = glorot_bound(out, inp);
        let mut d = Dense::zeros(out, inp);
        for x in d.w.as_mut_slice() {
            *x = rng.random_range(-bound..=bound);
        }
        d
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    /// `x W^T + b` for a batch of rows.
    fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&self.b);
        }
        gemm(1.0, x, Trans::No, &self.w, Trans::Yes, 1.0, &mut out);
        out
    }

    fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim())
            .map(|o| self.b[o] + self.w.row(o).iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    /// Accumulate parameter gradients for upstream `delta` (batch x out) and
    /// input `x`; returns the gradient w.r.t. `x` when requested.
    fn backward(&self, x: &Matrix, delta: &Matrix, grad: &mut Dense, want_input: bool) -> Option<Matrix> {
        gemm(1.0, delta, Trans::Yes, x, Trans::No, 1.0, &mut grad.w);
        for r in 0..delta.rows() {
            for (g, d) in grad.b.iter_mut().zip(delta.row(r)) {
                *g += d;
            }
        }
        want_input.then(|| {
            let mut dx = Matrix::zeros(delta.rows(), self.in_dim());
            gemm(1.0, delta, Trans::No, &self.w, Trans::No, 0.0, &mut dx);
            dx
        })
    }

    fn slices(&self) -> [&[f64]; 2] {
        [self.w.as_slice(), &self.b]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w.as_mut_slice(), &mut self.b]
    }

    fn add_assign(&mut self, other: &Dense) {
        for (a, b) in self.w.as_mut_slice().iter_mut().zip(other.w.as_slice()) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }
}

pub fn glorot_bound(out: usize, inp: usize) -> f64 {
    (6.0 / (out + inp).max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEncoder {
    pub hidden: Dense,
    pub output: Dense,
}

/// One full encoder stack: an attribute encoder per partition plus the shared
/// mean and variance heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub partitions: Vec<PartitionEncoder>,
    pub mean: Dense,
    pub var: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmbedding {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

/// Embeddings of a batch of nodes, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEmbeddings {
    pub mu: Matrix,
    pub var: Matrix,
}

impl BatchEmbeddings {
    pub fn get(&self, i: usize) -> GaussianEmbedding {
        GaussianEmbedding {
            mu: self.mu.row(i).to_vec(),
            var: self.var.row(i).to_vec(),
        }
    }
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Matrix,
    a1: Matrix,
    z: Matrix,
    a2: Matrix,
    u: Matrix,
    pre_mu: Matrix,
    pre_var: Matrix,
}

impl ForwardCache {
    /// Smallest distance from any pre-activation to a point where the
    /// encoder is not differentiable.
    pub fn kink_distance(&self, hyper: &EncoderHyper) -> f64 {
        let mut d = [&self.a1, &self.a2]
            .into_iter()
            .flat_map(|m| m.as_slice())
            .fold(f64::INFINITY, |acc, t| acc.min(t.abs()));
        if hyper.mean_activation == MeanActivation::Relu {
            d = self.pre_mu.as_slice().iter().fold(d, |acc, t| acc.min(t.abs()));
        }
        if hyper.var_floor < 1.0 {
            let at = hyper.var_floor.ln();
            d = self.pre_var.as_slice().iter().fold(d, |acc, t| acc.min((t - at).abs()));
        }
        d
    }
}

/// Parameter gradient for one partition group: that partition's encoder and
/// the shared heads.
#[derive(Debug, Clone)]
pub struct GroupGradient {
    pub partition: PartitionId,
    pub encoder: PartitionEncoder,
    pub mean: Dense,
    pub var: Dense,
}

#[inline]
fn relu(t: f64) -> f64 {
    t.max(0.0)
}

#[inline]
pub fn elu(t: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        t.exp_m1()
    }
}

#[inline]
fn elu_grad(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        t.exp()
    }
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(hyper: &EncoderHyper, dims: &[usize], rng: &mut R) -> Self {
        let partitions = dims
            .iter()
            .map(|&d| PartitionEncoder {
                hidden: Dense::glorot(hyper.hidden1, d, rng),
                output: Dense::glorot(hyper.hidden2, hyper.hidden1, rng),
            })
            .collect();
        let mean = Dense::glorot(hyper.embed_dim, hyper.hidden2, rng);
        let var = Dense::glorot(hyper.embed_dim, hyper.hidden2, rng);
        EncoderParams { partitions, mean, var }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.out_dim(), d.in_dim());
        EncoderParams {
            partitions: self
                .partitions
                .iter()
                .map(|p| PartitionEncoder {
                    hidden: z(&p.hidden),
                    output: z(&p.output),
                })
                .collect(),
            mean: z(&self.mean),
            var: z(&self.var),
        }
    }

    /// All parameter tensors in a fixed order: per partition `W1, b1, W2, b2`,
    /// then `Wmu, bmu, Wvar, bvar`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for p in &self.partitions {
            v.extend(p.hidden.slices());
            v.extend(p.output.slices());
        }
        v.extend(self.mean.slices());
        v.extend(self.var.slices());
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for p in &mut self.partitions {
            v.extend(p.hidden.slices_mut());
            v.extend(p.output.slices_mut());
        }
        v.extend(self.mean.slices_mut());
        v.extend(self.var.slices_mut());
        v
    }

    /// Names matching [`EncoderParams::slices`].
    pub fn slice_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for k in 0..self.partitions.len() {
            for n in ["W1", "b1", "W2", "b2"] {
                v.push(format!("{}.{n}", PartitionId(k as u8).name()));
            }
        }
        v.extend(["Wmu", "bmu", "Wvar", "bvar"].map(String::from));
        v
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn add_group(&mut self, g: &GroupGradient) {
        let p = &mut self.partitions[g.partition.index()];
        p.hidden.add_assign(&g.encoder.hidden);
        p.output.add_assign(&g.encoder.output);
        self.mean.add_assign(&g.mean);
        self.var.add_assign(&g.var);
    }

    fn encoder(&self, partition: PartitionId) -> Result<&PartitionEncoder> {
        self.partitions
            .get(partition.index())
            .ok_or_else(|| GsneError::Input(format!("no encoder for partition {}", partition.0)))
    }

    /// Attribute encoding `u` of a single feature vector.
    pub fn encode_attributes(&self, partition: PartitionId, x: &[f64]) -> Result<Vec<f64>> {
        let enc = self.encoder(partition)?;
        if x.len() != enc.hidden.in_dim() {
            return Err(GsneError::Input(format!(
                "{} encoder expects {} features, got {}",
                partition.name(),
                enc.hidden.in_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GsneError::Input("non-finite feature value".into()));
        }
        let z: Vec<f64> = enc.hidden.forward_one(x).into_iter().map(relu).collect();
        Ok(enc.output.forward_one(&z).into_iter().map(relu).collect())
    }

    /// Gaussian head applied to an intermediate encoding `u`.
    pub fn encode_gaussian(&self, u: &[f64], hyper: &EncoderHyper) -> GaussianEmbedding {
        let mu = self
            .mean
            .forward_one(u)
            .into_iter()
            .map(|t| match hyper.mean_activation {
                MeanActivation::Relu => relu(t),
                MeanActivation::Identity => t,
            })
            .collect();
        let var = self
            .var
            .forward_one(u)
            .into_iter()
            .map(|t| (elu(t) + 1.0).max(hyper.var_floor))
            .collect();
        GaussianEmbedding { mu, var }
    }

    /// Batched forward pass for rows of `x`, all from `partition`.
    pub fn forward_batch(
        &self,
        partition: PartitionId,
        x: &Matrix,
        hyper: &EncoderHyper,
    ) -> Result<(BatchEmbeddings, ForwardCache)> {
        let enc = self.encoder(partition)?;
        if x.cols() != enc.hidden.in_dim() {
            return Err(GsneError::Input(format!(
                "{} encoder expects {} features, got {}",
                partition.name(),
                enc.hidden.in_dim(),
                x.cols()
            )));
        }
        let a1 = enc.hidden.forward(x);
        let mut z = a1.clone();
        z.as_mut_slice().iter_mut().for_each(|t| *t = relu(*t));
        let a2 = enc.output.forward(&z);
        let mut u = a2.clone();
        u.as_mut_slice().iter_mut().for_each(|t| *t = relu(*t));
        let pre_mu = self.mean.forward(&u);
        let pre_var = self.var.forward(&u);
        let mut mu = pre_mu.clone();
        if hyper.mean_activation == MeanActivation::Relu {
            mu.as_mut_slice().iter_mut().for_each(|t| *t = relu(*t));
        }
        let mut var = pre_var.clone();
        var.as_mut_slice()
            .iter_mut()
            .for_each(|t| *t = (elu(*t) + 1.0).max(hyper.var_floor));
        Ok((
            BatchEmbeddings { mu, var },
            ForwardCache {
                x: x.clone(),
                a1,
                z,
                a2,
                u,
                pre_mu,
                pre_var,
            },
        ))
    }

    /// Backpropagate `d_mu`, `d_var` (same shape as the batch embeddings).
    pub fn backward_batch(
        &self,
        partition: PartitionId,
        cache: &ForwardCache,
        d_mu: &Matrix,
        d_var: &Matrix,
        hyper: &EncoderHyper,
    ) -> GroupGradient {
        let enc = &self.partitions[partition.index()];
        let mut g = GroupGradient {
            partition,
            encoder: PartitionEncoder {
                hidden: Dense::zeros(enc.hidden.out_dim(), enc.hidden.in_dim()),
                output: Dense::zeros(enc.output.out_dim(), enc.output.in_dim()),
            },
            mean: Dense::zeros(self.mean.out_dim(), self.mean.in_dim()),
            var: Dense::zeros(self.var.out_dim(), self.var.in_dim()),
        };
        let mut d_pm = d_mu.clone();
        if hyper.mean_activation == MeanActivation::Relu {
            for (d, &t) in d_pm.as_mut_slice().iter_mut().zip(cache.pre_mu.as_slice()) {
                if t <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let mut d_pv = d_var.clone();
        for (d, &t) in d_pv.as_mut_slice().iter_mut().zip(cache.pre_var.as_slice()) {
            *d = if elu(t) + 1.0 > hyper.var_floor {
                *d * elu_grad(t)
            } else {
                0.0
            };
        }
        let mut d_u = self.mean.backward(&cache.u, &d_pm, &mut g.mean, true).unwrap();
        let d_u_var = self.var.backward(&cache.u, &d_pv, &mut g.var, true).unwrap();
        for ((d, dv), &t) in d_u
            .as_mut_slice()
            .iter_mut()
            .zip(d_u_var.as_slice())
            .zip(cache.a2.as_slice())
        {
            *d = if t > 0.0 { *d + dv } else { 0.0 };
        }
        let mut d_z = enc.output.backward(&cache.z, &d_u, &mut g.encoder.output, true).unwrap();
        for (d, &t) in d_z.as_mut_slice().iter_mut().zip(cache.a1.as_slice()) {
            if t <= 0.0 {
                *d = 0.0;
            }
        }
        enc.hidden.backward(&cache.x, &d_z, &mut g.encoder.hidden, false);
        g
    }
}

/// All trainable parameters of one proximity model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub hyper: EncoderHyper,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub attr: EncoderParams,
    pub ctx: Option<EncoderParams>,
}

impl ParamStore {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`. The
    /// context encoders draw from an independent stream.
    pub fn init(hyper: EncoderHyper, dims: &[usize], seed: u64, with_context: bool) -> Result<Self> {
        hyper.validate()?;
        let attr = EncoderParams::init(&hyper, dims, &mut SeededRng::new(seed, 0));
        let ctx = with_context.then(|| EncoderParams::init(&hyper, dims, &mut SeededRng::new(seed, 1)));
        Ok(ParamStore {
            hyper,
            dims: dims.to_vec(),
            seed,
            attr,
            ctx,
        })
    }

    pub fn params(&self, role: Role) -> Result<&EncoderParams> {
        match role {
            Role::Attribute => Ok(&self.attr),
            Role::Context => self
                .ctx
                .as_ref()
                .ok_or_else(|| GsneError::Config("context encoders are disabled for this model".into())),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParamStore {
            hyper: self.hyper,
            dims: self.dims.clone(),
            seed: self.seed,
            attr: self.attr.zeros_like(),
            ctx: self.ctx.as_ref().map(EncoderParams::zeros_like),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.attr.slices();
        if let Some(c) = &self.ctx {
            v.extend(c.slices());
        }
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.attr.slices_mut();
        if let Some(c) = &mut self.ctx {
            v.extend(c.slices_mut());
        }
        v
    }

    pub fn slice_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.attr.slice_names().into_iter().map(|n| format!("attr.{n}")).collect();
        if let Some(c) = &self.ctx {
            v.extend(c.slice_names().into_iter().map(|n| format!("ctx.{n}")));
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.attr.is_finite() && self.ctx.as_ref().is_none_or(EncoderParams::is_finite)
    }

    pub fn fill_zero(&mut self) {
        self.attr.fill_zero();
        if let Some(c) = &mut self.ctx {
            c.fill_zero();
        }
    }

    pub fn encode_node(&self, graph: &MultipartiteGraph, node: NodeRef, role: Role) -> Result<GaussianEmbedding> {
        self.encode_features(node.partition, graph.attributes(node), role)
    }

    pub fn encode_features(&self, partition: PartitionId, x: &[f64], role: Role) -> Result<GaussianEmbedding> {
        let p = self.params(role)?;
        let u = p.encode_attributes(partition, x)?;
        Ok(p.encode_gaussian(&u, &self.hyper))
    }

    /// Embeddings for every row of `attrs`, processed in fixed-size chunks.
    pub fn encode_matrix(
        &self,
        partition: PartitionId,
        attrs: &Matrix,
        role: Role,
        exec: Execution,
    ) -> Result<BatchEmbeddings> {
        const CHUNK: usize = 512;
        let p = self.params(role)?;
        let n = attrs.rows();
        let chunks = n.div_ceil(CHUNK);
        let parts = exec.map(chunks, |c| {
            let idx: Vec<usize> = (c * CHUNK..((c + 1) * CHUNK).min(n)).collect();
            p.forward_batch(partition, &attrs.select_rows(&idx), &self.hyper).map(|(e, _)| e)
        });
        let l = self.hyper.embed_dim;
        let mut mu = Vec::with_capacity(n * l);
        let mut var = Vec::with_capacity(n * l);
        for part in parts {
            let part = part?;
            mu.extend_from_slice(part.mu.as_slice());
            var.extend_from_slice(part.var.as_slice());
        }
        Ok(BatchEmbeddings {
            mu: Matrix::from_vec(n, l, mu)?,
            var: Matrix::from_vec(n, l, var)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn hyper(l: usize, h1: usize, h2: usize) -> EncoderHyper {
        EncoderHyper {
            embed_dim: l,
            hidden1: h1,
            hidden2: h2,
            ..EncoderHyper::default()
        }
    }

    #[test]
    fn zero_weights_collapse_to_bias() {
        let h = hyper(2, 3, 2);
        let mut p = EncoderParams::init(&h, &[4], &mut SeededRng::new(1, 0));
        for s in p.slices_mut() {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
        p.partitions[0].output.b = vec![0.7, -0.3];
        let u = p.encode_attributes(PartitionId(0), &[1.0, -5.0, 2.0, 9.0]).unwrap();
        assert_eq!(u, vec![0.7, 0.0]);
    }

    #[test]
    fn identity_weights_pass_non_negative_input() {
        let h = hyper(3, 3, 3);
        let mut p = EncoderParams::init(&h, &[3], &mut SeededRng::new(1, 0));
        let pe = &mut p.partitions[0];
        for d in [&mut pe.hidden, &mut pe.output] {
            d.w.fill(0.0);
            d.b.fill(0.0);
            for i in 0..3 {
                d.w.set(i, i, 1.0);
            }
        }
        let x = [0.5, 0.0, 2.5];
        assert_eq!(p.encode_attributes(PartitionId(0), &x).unwrap(), x.to_vec());
        // negative pre-activations clamp
        assert_eq!(p.encode_attributes(PartitionId(0), &[-1.0, 3.0, -2.0]).unwrap(), vec![0.0, 3.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let h = hyper(2, 3, 2);
        let p = EncoderParams::init(&h, &[4], &mut SeededRng::new(1, 0));
        assert!(matches!(p.encode_attributes(PartitionId(0), &[1.0]), Err(GsneError::Input(_))));
    }

    fn head_with_var_bias(bias: f64) -> (EncoderParams, EncoderHyper) {
        let h = hyper(3, 2, 2);
        let mut p = EncoderParams::init(&h, &[1], &mut SeededRng::new(1, 0));
        p.var.w.fill(0.0);
        p.var.b = vec![bias; 3];
        (p, h)
    }

    #[test]
    fn variance_head_examples() {
        let (p, h) = head_with_var_bias(0.0);
        assert_eq!(p.encode_gaussian(&[0.3, 0.1], &h).var, vec![1.0; 3]);
        let (p, h) = head_with_var_bias(3.0);
        assert_eq!(p.encode_gaussian(&[0.3, 0.1], &h).var, vec![4.0; 3]);
        let (p, h) = head_with_var_bias(-20.0);
        assert_eq!(p.encode_gaussian(&[0.3, 0.1], &h).var, vec![h.var_floor; 3]);
    }

    #[test]
    fn init_is_deterministic_with_zero_bias_and_bounded_weights() {
        let h = hyper(4, 6, 5);
        let a = ParamStore::init(h, &[3, 2], 42, true).unwrap();
        let b = ParamStore::init(h, &[3, 2], 42, true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.attr, *a.ctx.as_ref().unwrap());
        for params in [&a.attr, a.ctx.as_ref().unwrap()] {
            let layers = params
                .partitions
                .iter()
                .flat_map(|p| [&p.hidden, &p.output])
                .chain([&params.mean, &params.var]);
            for d in layers {
                let bound = glorot_bound(d.out_dim(), d.in_dim());
                assert!(d.b.iter().all(|&b| b == 0.0));
                assert!(d.w.as_slice().iter().all(|w| w.abs() <= bound));
            }
        }
    }

    #[test]
    fn context_role_requires_context_params() {
        let s = ParamStore::init(hyper(2, 3, 2), &[2], 1, false).unwrap();
        assert!(matches!(
            s.encode_features(PartitionId(0), &[0.1, 0.2], Role::Context),
            Err(GsneError::Config(_))
        ));
        let s = ParamStore::init(hyper(2, 3, 2), &[2], 1, true).unwrap();
        let a = s.encode_features(PartitionId(0), &[0.4, -0.2], Role::Attribute).unwrap();
        let a2 = s.encode_features(PartitionId(0), &[0.4, -0.2], Role::Attribute).unwrap();
        let c = s.encode_features(PartitionId(0), &[0.4, -0.2], Role::Context).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, c);
    }

    #[test]
    fn batch_matches_single_node_calls() {
        let h = hyper(5, 7, 6);
        let s = ParamStore::init(h, &[3], 5, false).unwrap();
        let mut rng = SeededRng::new(2, 0);
        let x = Matrix::from_vec(9, 3, (0..27).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let batch = s.encode_matrix(PartitionId(0), &x, Role::Attribute, exec).unwrap();
            for i in 0..9 {
                let one = s.encode_features(PartitionId(0), x.row(i), Role::Attribute).unwrap();
                for (a, b) in batch.get(i).mu.iter().zip(&one.mu).chain(batch.get(i).var.iter().zip(&one.var)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn small_input_perturbation_moves_mean_continuously() {
        let s = ParamStore::init(hyper(8, 16, 12), &[4], 3, false).unwrap();
        let x = [0.3, -1.2, 0.8, 2.0];
        let base = s.encode_features(PartitionId(0), &x, Role::Attribute).unwrap();
        for eps in [1e-3, 1e-5, 1e-7] {
            let xp: Vec<f64> = x.iter().map(|v| v + eps).collect();
            let e = s.encode_features(PartitionId(0), &xp, Role::Attribute).unwrap();
            let shift: f64 = e.mu.iter().zip(&base.mu).map(|(a, b)| (a - b).abs()).sum();
            assert!(shift <= 100.0 * eps, "shift {shift} at eps {eps}");
        }
    }

    proptest! {
        #[test]
        fn outputs_respect_floor_sign_and_shape(
            xs in prop::collection::vec(-50.0f64..50.0, 3),
            seed in 0u64..1000,
            k in 0usize..2,
        ) {
            let h = EncoderHyper { var_floor: 1e-6, ..hyper(6, 5, 4) };
            let s = ParamStore::init(h, &[3, 3], seed, false).unwrap();
            let e = s.encode_features(PartitionId(k as u8), &xs, Role::Attribute).unwrap();
            prop_assert_eq!(e.mu.len(), 6);
            prop_assert!(e.var.iter().all(|&v| v >= 1e-6 && v.is_finite()));
            prop_assert!(e.mu.iter().all(|&m| m >= 0.0));
        }
    }
}
