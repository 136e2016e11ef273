use super::config::{Activation, Attention, ModelConfig};
use super::layers::{self, Pooled};
use super::params::{LayerIndex, ModelParams, ParamIndex, layout};
use crate::autodiff::{matmul_raw, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::mergetree::{node_features, persistence_matrix, MergeTree};

/// Everything the network reads from one merge tree, precomputed once.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeInput {
    pub id: String,
    pub f: Vec<f64>,
    /// Node features, `n x 1`.
    pub features: Tensor,
    /// 0/1 adjacency over tree edges, `n x n`.
    pub adjacency: Tensor,
    /// `D^-1/2 (A + I) D^-1/2`.
    pub gcn_adjacency: Tensor,
    /// Per-node topological weights `sum_u e_un / Norm`, `n x 1`; `None` when
    /// the persistence matrix is all zero.
    pub topo_weights: Option<Tensor>,
}

/// Node weights from a persistence matrix; they sum to one.
pub fn topo_weights(t: &MergeTree) -> Option<Vec<f64>> {
    let rows = persistence_matrix(t).row_sums();
    let norm: f64 = rows.iter().sum();
    if norm > 0.0 {
        Some(rows.into_iter().map(|r| r / norm).collect())
    } else {
        None
    }
}

impl TreeInput {
    pub fn new(t: &MergeTree) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::Argument(format!("tree {} is empty", t.source_id)));
        }
        let n = t.len();
        let mut adj = vec![0.0; n * n];
        for (c, p) in t.edges() {
            adj[c * n + p] = 1.0;
            adj[p * n + c] = 1.0;
        }
        let deg: Vec<f64> = (0..n)
            .map(|v| 1.0 + adj[v * n..(v + 1) * n].iter().sum::<f64>())
            .collect();
        let mut gcn = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                let a = if u == v { 1.0 } else { adj[u * n + v] };
                if a != 0.0 {
                    gcn[u * n + v] = a / (deg[u] * deg[v]).sqrt();
                }
            }
        }
        let topo = match topo_weights(t) {
            Some(w) => Some(Tensor::new(vec![n, 1], w)?),
            None => None,
        };
        Ok(Self {
            id: t.source_id.clone(),
            f: t.nodes.iter().map(|nd| nd.f).collect(),
            features: node_features(t),
            adjacency: Tensor::new(vec![n, n], adj)?,
            gcn_adjacency: Tensor::new(vec![n, n], gcn)?,
            topo_weights: topo,
        })
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// Model parameters recorded on a graph.
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Encoder outputs for one tree.
pub struct Encoded {
    /// Final node embeddings, `n x m`.
    pub nodes: Var,
    pub context: Var,
    pub pool: Pooled,
}

/// A configured network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mtnn {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub index: ParamIndex,
}

impl Mtnn {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        let (_, index) = layout(&config);
        Ok(Self {
            config,
            params,
            index,
        })
    }

    pub fn init(config: ModelConfig) -> Result<Self> {
        let params = super::params::init_params(&config)?;
        Self::new(config, params)
    }

    /// Records all parameters on `g`; trainable ones when `train` is set.
    pub fn bind(&self, g: &mut Graph, train: bool) -> Bound {
        let vars = self
            .params
            .tensors
            .iter()
            .map(|t| {
                if train {
                    g.param(t)
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Runs the encoder, context and attention pooling on one tree.
    pub fn encode(&self, g: &mut Graph, p: &Bound, tree: &TreeInput) -> Result<Encoded> {
        let mut h = g.constant(tree.features.clone());
        let adj = match self.index.layers.first() {
            Some(LayerIndex::Gcn { .. }) => g.constant(tree.gcn_adjacency.clone()),
            _ => g.constant(tree.adjacency.clone()),
        };
        for layer in &self.index.layers {
            h = match *layer {
                LayerIndex::Gcn { w, b } => layers::gcn_layer(g, h, adj, p.vars[w], p.vars[b])?,
                LayerIndex::Gin {
                    w1,
                    b1,
                    w2,
                    b2,
                    eps,
                } => layers::gin_layer(
                    g,
                    h,
                    adj,
                    p.vars[w1],
                    p.vars[b1],
                    p.vars[w2],
                    p.vars[b2],
                    p.vars[eps],
                )?,
            };
        }
        let wc = p.vars[self.index.wc];
        let context = match (self.config.attention, &tree.topo_weights) {
            (Attention::Topological, Some(w)) => layers::topo_context(g, h, wc, w)?,
            _ => layers::global_context_plain(g, h, wc)?,
        };
        let pool = layers::attention_pool(g, h, context)?;
        Ok(Encoded {
            nodes: h,
            context,
            pool,
        })
    }

    /// Similarity histogram of two encoded trees, recorded as a constant.
    pub fn histogram(&self, g: &mut Graph, e1: &Encoded, e2: &Encoded) -> Result<Var> {
        let hist = layers::node_histogram(
            g.value(e1.nodes),
            g.value(e2.nodes),
            self.config.hist_bins,
        )?;
        for (k, &x) in hist.iter().enumerate() {
            g.note_branch((k as u64) << 32 ^ x.to_bits());
        }
        Ok(g.constant(Tensor::row_vector(&hist)))
    }

    /// Score from two encoded trees and a histogram row.
    pub fn head(&self, g: &mut Graph, p: &Bound, e1: &Encoded, e2: &Encoded, hist: Var) -> Result<Var> {
        let d_tree = layers::ntn(
            g,
            e1.pool.pooled,
            e2.pool.pooled,
            p.vars[self.index.ntn_w],
            p.vars[self.index.ntn_v],
            p.vars[self.index.ntn_b],
            self.config.ntn_activation,
        )?;
        let joint = g.concat_cols(d_tree, hist)?;
        let mlp: Vec<(Var, Var)> = self
            .index
            .mlp
            .iter()
            .map(|&(w, b)| (p.vars[w], p.vars[b]))
            .collect();
        layers::mlp_head(g, joint, &mlp)
    }

    /// Full pair score `1 x 1` from two encoded trees.
    pub fn score(&self, g: &mut Graph, p: &Bound, e1: &Encoded, e2: &Encoded) -> Result<Var> {
        let hist = self.histogram(g, e1, e2)?;
        self.head(g, p, e1, e2, hist)
    }

    /// Score of an ordered tree pair. The tensor network is not symmetric,
    /// so callers wanting a symmetric function should use
    /// [`Mtnn::predict`], which orders the pair by tree id.
    pub fn forward_pair(&self, t1: &TreeInput, t2: &TreeInput) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let e1 = self.encode(&mut g, &p, t1)?;
        let e2 = self.encode(&mut g, &p, t2)?;
        let s = self.score(&mut g, &p, &e1, &e2)?;
        Ok(g.value(s).item())
    }

    pub fn predict(&self, t1: &TreeInput, t2: &TreeInput) -> Result<f64> {
        if t2.id < t1.id {
            self.forward_pair(t2, t1)
        } else {
            self.forward_pair(t1, t2)
        }
    }

    /// Encodes a tree once for repeated pair scoring.
    pub fn embed(&self, tree: &TreeInput) -> Result<Embedding> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let e = self.encode(&mut g, &p, tree)?;
        Ok(Embedding {
            id: tree.id.clone(),
            nodes: g.value(e.nodes).clone(),
            pooled: g.value(e.pool.pooled).clone(),
            attention: g.value(e.pool.attention).data().to_vec(),
        })
    }

    /// Pair score from cached embeddings, ordered by tree id. Runs the head
    /// directly on the parameter buffers, with the same operation order as
    /// the tape, so it matches [`Mtnn::predict`] exactly.
    pub fn score_embeddings(&self, a: &Embedding, b: &Embedding) -> Result<f64> {
        let (a, b) = if b.id < a.id { (b, a) } else { (a, b) };
        let hist = layers::node_histogram(&a.nodes, &b.nodes, self.config.hist_bins)?;
        let (h1, h2) = (a.pooled.data(), b.pooled.data());
        let m = self.config.embed_dim();
        let k = self.config.ntn_k;
        if h1.len() != m || h2.len() != m {
            return Err(Error::shape("score_embeddings", format!("pooled widths {} and {}, expected {m}", h1.len(), h2.len())));
        }
        let w = self.params.tensors[self.index.ntn_w].data();
        let mut z = vec![0.0; k];
        for (s, o) in z.iter_mut().enumerate() {
            let slice = &w[s * m * m..(s + 1) * m * m];
            let mut acc = 0.0;
            for i in 0..m {
                let row = &slice[i * m..(i + 1) * m];
                let dot: f64 = row.iter().zip(h2).map(|(x, y)| x * y).sum();
                acc += h1[i] * dot;
            }
            *o = acc;
        }
        let cat: Vec<f64> = h1.iter().chain(h2).copied().collect();
        let lin = matmul_raw(&cat, self.params.tensors[self.index.ntn_v].data(), 1, 2 * m, k);
        let bias = self.params.tensors[self.index.ntn_b].data();
        let mut x: Vec<f64> = Vec::with_capacity(k + hist.len());
        for ((zi, li), bi) in z.iter().zip(&lin).zip(bias) {
            let v = zi + li + bi;
            x.push(match self.config.ntn_activation {
                Activation::Relu => v.max(0.0),
                Activation::Tanh => v.tanh(),
                Activation::Sigmoid => layers::sigmoid(v),
            });
        }
        x.extend_from_slice(&hist);
        let last = self.index.mlp.len() - 1;
        for (i, &(wi, bi)) in self.index.mlp.iter().enumerate() {
            let wt = &self.params.tensors[wi];
            let (rows, cols) = wt.dims2().expect("head weights are matrices");
            let mut y = matmul_raw(&x, wt.data(), 1, rows, cols);
            for (o, bv) in y.iter_mut().zip(self.params.tensors[bi].data()) {
                let v = *o + bv;
                *o = if i < last { v.max(0.0) } else { layers::sigmoid(v) };
            }
            x = y;
        }
        Ok(x[0])
    }
}

/// Cached per-tree encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub id: String,
    pub nodes: Tensor,
    pub pooled: Tensor,
    /// Attention scalar per node.
    pub attention: Vec<f64>,
}
