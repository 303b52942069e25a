//! Masked multi-head graph attention.
//!
//! Per head, node features are projected with `W`, scored pairwise with
//! `e_ij = LeakyReLU(a_srcᵀ W h_i + a_dstᵀ W h_j)`, normalised by a softmax
//! over the neighbourhood of `i` (self-loop included) and aggregated as
//! `Σ_j α_ij W h_j`. The two-layer network concatenates eight ELU heads,
//! averages a single linear head on top and squashes the result into `(0, 1)`.

use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::{squash, squash_grad, Matrix, NeuralError, Trainable};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatArch {
    pub input: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl Default for GatArch {
    fn default() -> Self {
        GatArch {
            input: 5,
            heads: 8,
            head_dim: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadCombine {
    Concat,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu if x <= 0.0 => x.exp() - 1.0,
            _ => x,
        }
    }

    fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Elu if x <= 0.0 => x.exp(),
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatHead {
    /// `in × out` projection.
    pub w: Matrix,
    pub a_src: Matrix,
    pub a_dst: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub combine: HeadCombine,
    pub activation: Activation,
}

struct HeadCache {
    z: Matrix,
    u: Matrix,
    alpha: Matrix,
    agg: Matrix,
}

struct LayerCache {
    input: Matrix,
    heads: Vec<HeadCache>,
    output: Matrix,
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

impl GatLayer {
    fn new(input: usize, heads: usize, out: usize, combine: HeadCombine, activation: Activation, rng: Option<&mut dyn rand::RngCore>) -> GatLayer {
        let mut rng = rng;
        let heads = (0..heads)
            .map(|_| match rng.as_deref_mut() {
                Some(r) => GatHead {
                    w: Matrix::random_fan_in(input, out, input, r),
                    a_src: Matrix::random_fan_in(out, 1, 2 * out, r),
                    a_dst: Matrix::random_fan_in(out, 1, 2 * out, r),
                },
                None => GatHead {
                    w: Matrix::zeros(input, out),
                    a_src: Matrix::zeros(out, 1),
                    a_dst: Matrix::zeros(out, 1),
                },
            })
            .collect();
        GatLayer {
            heads,
            combine,
            activation,
        }
    }

    fn head_dim(&self) -> usize {
        self.heads[0].w.cols()
    }

    pub fn output_dim(&self) -> usize {
        match self.combine {
            HeadCombine::Concat => self.head_dim() * self.heads.len(),
            HeadCombine::Mean => self.head_dim(),
        }
    }

    fn forward(&self, h: &Matrix, adj: &[bool]) -> LayerCache {
        let n = h.rows();
        let out_dim = self.head_dim();
        let n_heads = self.heads.len();
        let mut output = Matrix::zeros(n, self.output_dim());
        let mut caches = Vec::with_capacity(n_heads);
        for (k, head) in self.heads.iter().enumerate() {
            let mut z = Matrix::zeros(n, out_dim);
            for i in 0..n {
                let zi = head.w.t_matvec(h.row(i));
                for (c, v) in zi.into_iter().enumerate() {
                    z.set(i, c, v);
                }
            }
            let src: Vec<f64> = (0..n).map(|i| dot(z.row(i), head.a_src.data())).collect();
            let dst: Vec<f64> = (0..n).map(|j| dot(z.row(j), head.a_dst.data())).collect();
            let mut u = Matrix::zeros(n, n);
            let mut alpha = Matrix::zeros(n, n);
            let mut agg = Matrix::zeros(n, out_dim);
            for i in 0..n {
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    if adj[i * n + j] {
                        let uij = src[i] + dst[j];
                        u.set(i, j, uij);
                        max = max.max(leaky(uij));
                    }
                }
                let mut denom = 0.0;
                for j in 0..n {
                    if adj[i * n + j] {
                        let w = (leaky(u.get(i, j)) - max).exp();
                        alpha.set(i, j, w);
                        denom += w;
                    }
                }
                for j in 0..n {
                    if adj[i * n + j] {
                        let a = alpha.get(i, j) / denom;
                        alpha.set(i, j, a);
                        for c in 0..out_dim {
                            agg.add_at(i, c, a * z.get(j, c));
                        }
                    }
                }
                for c in 0..out_dim {
                    let v = self.activation.apply(agg.get(i, c));
                    match self.combine {
                        HeadCombine::Concat => output.set(i, k * out_dim + c, v),
                        HeadCombine::Mean => output.add_at(i, c, v / n_heads as f64),
                    }
                }
            }
            caches.push(HeadCache { z, u, alpha, agg });
        }
        LayerCache {
            input: h.clone(),
            heads: caches,
            output,
        }
    }

    /// Returns the gradient w.r.t. the layer input; parameter gradients are
    /// accumulated into `grads` in (w, a_src, a_dst) order per head.
    fn backward(&self, cache: &LayerCache, adj: &[bool], d_out: &Matrix, grads: &mut [Matrix]) -> Matrix {
        let h = &cache.input;
        let n = h.rows();
        let out_dim = self.head_dim();
        let n_heads = self.heads.len();
        let mut d_input = Matrix::zeros(n, h.cols());
        for (k, (head, hc)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let (gw, rest) = grads[3 * k..3 * k + 3].split_at_mut(1);
            let (ga_src, ga_dst) = rest.split_at_mut(1);
            let (gw, ga_src, ga_dst) = (&mut gw[0], &mut ga_src[0], &mut ga_dst[0]);

            let mut d_agg = Matrix::zeros(n, out_dim);
            for i in 0..n {
                for c in 0..out_dim {
                    let upstream = match self.combine {
                        HeadCombine::Concat => d_out.get(i, k * out_dim + c),
                        HeadCombine::Mean => d_out.get(i, c) / n_heads as f64,
                    };
                    d_agg.set(i, c, upstream * self.activation.grad(hc.agg.get(i, c)));
                }
            }

            let mut dz = Matrix::zeros(n, out_dim);
            let mut d_src = vec![0.0; n];
            let mut d_dst = vec![0.0; n];
            for i in 0..n {
                // agg_i = Σ_j α_ij z_j
                let mut d_alpha = vec![0.0; n];
                for j in 0..n {
                    if !adj[i * n + j] {
                        continue;
                    }
                    let a = hc.alpha.get(i, j);
                    d_alpha[j] = dot(d_agg.row(i), hc.z.row(j));
                    for c in 0..out_dim {
                        dz.add_at(j, c, a * d_agg.get(i, c));
                    }
                }
                let weighted: f64 = (0..n)
                    .filter(|&j| adj[i * n + j])
                    .map(|j| hc.alpha.get(i, j) * d_alpha[j])
                    .sum();
                for j in 0..n {
                    if !adj[i * n + j] {
                        continue;
                    }
                    let de = hc.alpha.get(i, j) * (d_alpha[j] - weighted);
                    let du = de * leaky_grad(hc.u.get(i, j));
                    d_src[i] += du;
                    d_dst[j] += du;
                }
            }
            // src_i = a_src · z_i, dst_j = a_dst · z_j
            for i in 0..n {
                for c in 0..out_dim {
                    ga_src.add_at(c, 0, d_src[i] * hc.z.get(i, c));
                    ga_dst.add_at(c, 0, d_dst[i] * hc.z.get(i, c));
                    dz.add_at(i, c, d_src[i] * head.a_src.get(c, 0) + d_dst[i] * head.a_dst.get(c, 0));
                }
            }
            // z_i = Wᵀ h_i
            for i in 0..n {
                for r in 0..h.cols() {
                    let hir = h.get(i, r);
                    let mut acc = 0.0;
                    for c in 0..out_dim {
                        gw.add_at(r, c, hir * dz.get(i, c));
                        acc += head.w.get(r, c) * dz.get(i, c);
                    }
                    d_input.add_at(i, r, acc);
                }
            }
        }
        d_input
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two stacked attention layers followed by `(tanh(v) + 1) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatNetwork {
    pub arch: GatArch,
    pub layer1: GatLayer,
    pub layer2: GatLayer,
}

/// Result of a forward pass.
#[derive(Clone, Debug)]
pub struct GatOutput {
    /// Per-node score in `(0, 1)`.
    pub scores: Vec<f64>,
    /// Pre-squash value per node.
    pub logits: Vec<f64>,
    /// Attention matrices, layer-major then head.
    pub attention: Vec<Matrix>,
}

impl GatNetwork {
    pub fn zeros(arch: GatArch) -> GatNetwork {
        GatNetwork {
            arch,
            layer1: GatLayer::new(arch.input, arch.heads, arch.head_dim, HeadCombine::Concat, Activation::Elu, None),
            layer2: GatLayer::new(arch.heads * arch.head_dim, 1, 1, HeadCombine::Mean, Activation::Identity, None),
        }
    }

    pub fn random<R: rand::RngCore>(arch: GatArch, rng: &mut R) -> GatNetwork {
        GatNetwork {
            arch,
            layer1: GatLayer::new(arch.input, arch.heads, arch.head_dim, HeadCombine::Concat, Activation::Elu, Some(&mut *rng)),
            layer2: GatLayer::new(arch.heads * arch.head_dim, 1, 1, HeadCombine::Mean, Activation::Identity, Some(&mut *rng)),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|m| m.rows() * m.cols()).sum()
    }

    fn check(&self, x: &Matrix, adj: &Matrix) -> Result<Vec<bool>, NeuralError> {
        let n = x.rows();
        if n == 0 {
            return Err(NeuralError::DimensionMismatch("graph has no nodes".into()));
        }
        if x.cols() != self.arch.input {
            return Err(NeuralError::DimensionMismatch(format!(
                "features have {} columns, network expects {}",
                x.cols(),
                self.arch.input
            )));
        }
        if adj.shape() != (n, n) {
            return Err(NeuralError::DimensionMismatch(format!(
                "adjacency is {:?} for {n} nodes",
                adj.shape()
            )));
        }
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let a = adj.get(i, j) != 0.0;
                if a != (adj.get(j, i) != 0.0) {
                    return Err(NeuralError::AsymmetricAdjacency(i, j));
                }
                mask[i * n + j] = a || i == j;
            }
        }
        Ok(mask)
    }

    pub fn forward(&self, x: &Matrix, adj: &Matrix) -> Result<GatOutput, NeuralError> {
        let mask = self.check(x, adj)?;
        let c1 = self.layer1.forward(x, &mask);
        let c2 = self.layer2.forward(&c1.output, &mask);
        let logits: Vec<f64> = (0..x.rows()).map(|i| c2.output.get(i, 0)).collect();
        let attention = c1.heads.iter().chain(&c2.heads).map(|h| h.alpha.clone()).collect();
        Ok(GatOutput {
            scores: logits.iter().map(|&v| squash(v)).collect(),
            logits,
            attention,
        })
    }
}

/// Features, adjacency and per-node targets; `mask` selects the nodes that
/// enter the loss (all when `None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub x: Matrix,
    pub adj: Matrix,
    pub labels: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl GraphSample {
    fn counted(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[i])
    }
}

impl Trainable for GatNetwork {
    type Sample = GraphSample;

    fn parameters(&self) -> Vec<&Matrix> {
        self.layer1
            .heads
            .iter()
            .chain(&self.layer2.heads)
            .flat_map(|h| [&h.w, &h.a_src, &h.a_dst])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layer1
            .heads
            .iter_mut()
            .chain(self.layer2.heads.iter_mut())
            .flat_map(|h| [&mut h.w, &mut h.a_src, &mut h.a_dst])
            .collect()
    }

    fn loss_and_grad(&self, batch: &[GraphSample], kind: LossKind) -> Result<(f64, Vec<Matrix>), NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::DimensionMismatch("empty batch".into()));
        }
        let mut grads: Vec<Matrix> = self.parameters().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        let split = 3 * self.layer1.heads.len();
        let total_nodes: usize = batch
            .iter()
            .map(|g| (0..g.x.rows()).filter(|&i| g.counted(i)).count())
            .sum();
        if total_nodes == 0 {
            return Err(NeuralError::DimensionMismatch("no labelled nodes".into()));
        }
        let norm = total_nodes as f64;
        let mut loss = 0.0;
        for g in batch {
            if g.labels.len() != g.x.rows() {
                return Err(NeuralError::DimensionMismatch(format!(
                    "{} labels for {} nodes",
                    g.labels.len(),
                    g.x.rows()
                )));
            }
            let mask = self.check(&g.x, &g.adj)?;
            let c1 = self.layer1.forward(&g.x, &mask);
            let c2 = self.layer2.forward(&c1.output, &mask);
            let n = g.x.rows();
            let mut d_logit = Matrix::zeros(n, 1);
            for i in 0..n {
                if !g.counted(i) {
                    continue;
                }
                let v = c2.output.get(i, 0);
                let pred = squash(v);
                loss += kind.value(pred, g.labels[i]) / norm;
                d_logit.set(i, 0, kind.grad(pred, g.labels[i]) / norm * squash_grad(v));
            }
            let (g1, g2) = grads.split_at_mut(split);
            let d_hidden = self.layer2.backward(&c2, &mask, &d_logit, g2);
            self.layer1.backward(&c1, &mask, &d_hidden, g1);
        }
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            a.set(i, i, 1.0);
            for j in i + 1..n {
                if rng.random_bool(p) {
                    a.set(i, j, 1.0);
                    a.set(j, i, 1.0);
                }
            }
        }
        a
    }

    fn random_features(n: usize, rng: &mut impl Rng) -> Matrix {
        let data = (0..n * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(n, 5, data).unwrap()
    }

    #[test]
    fn single_node_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = GatNetwork::random(GatArch::default(), &mut rng);
        let out = net.forward(&random_features(1, &mut rng), &Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        for a in &out.attention {
            assert_eq!(a.get(0, 0), 1.0);
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = GatNetwork::zeros(GatArch::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = net.forward(&random_features(6, &mut rng), &random_graph(6, 0.5, &mut rng)).unwrap();
        assert!(out.scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn asymmetric_adjacency_is_rejected() {
        let net = GatNetwork::zeros(GatArch::default());
        let mut adj = Matrix::zeros(2, 2);
        adj.set(0, 1, 1.0);
        let x = Matrix::zeros(2, 5);
        assert_eq!(net.forward(&x, &adj).unwrap_err(), NeuralError::AsymmetricAdjacency(0, 1));
        assert!(matches!(net.forward(&Matrix::zeros(2, 4), &Matrix::zeros(2, 2)), Err(NeuralError::DimensionMismatch(_))));
    }

    #[test]
    fn missing_self_loops_are_added() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = GatNetwork::random(GatArch::default(), &mut rng);
        let x = random_features(5, &mut rng);
        let mut a = random_graph(5, 0.4, &mut rng);
        let with = net.forward(&x, &a).unwrap();
        for i in 0..5 {
            a.set(i, i, 0.0);
        }
        let without = net.forward(&x, &a).unwrap();
        assert_eq!(with.scores, without.scores);
    }

    #[test]
    fn parameter_budget() {
        let net = GatNetwork::zeros(GatArch::default());
        assert_eq!(net.layer1.output_dim(), 32);
        assert!(net.parameter_count() < 2000);
    }
}
