use std::path::Path;

use super::config::{Encoder, ModelConfig};
use crate::autodiff::{AdamState, Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Positions of one encoder layer's tensors inside [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerIndex {
    /// `h' = ReLU(A_hat H W + b)`.
    Gcn { w: usize, b: usize },
    /// `h' = W2 ReLU(W1 ((1 + eps) h + sum h_u) + b1) + b2`.
    Gin {
        w1: usize,
        b1: usize,
        w2: usize,
        b2: usize,
        eps: usize,
    },
}

/// Positions of every tensor inside [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIndex {
    pub layers: Vec<LayerIndex>,
    /// Context matrix, `m x m`.
    pub wc: usize,
    /// Bilinear slices, `K x m x m`.
    pub ntn_w: usize,
    /// Linear term on `[H1; H2]`, stored transposed as `2m x K`.
    pub ntn_v: usize,
    pub ntn_b: usize,
    /// `(weight, bias)` per head layer.
    pub mlp: Vec<(usize, usize)>,
}

/// Names and shapes of all parameters, in storage order.
pub fn layout(cfg: &ModelConfig) -> (Vec<(String, Vec<usize>)>, ParamIndex) {
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
    let mut add = |name: String, shape: Vec<usize>| {
        specs.push((name, shape));
        specs.len() - 1
    };
    let mut layers = Vec::new();
    let mut d_in = 1;
    for (l, &d) in cfg.layer_dims.iter().enumerate() {
        layers.push(match cfg.encoder {
            Encoder::Gcn => LayerIndex::Gcn {
                w: add(format!("enc{l}.w"), vec![d_in, d]),
                b: add(format!("enc{l}.b"), vec![1, d]),
            },
            Encoder::Gin => LayerIndex::Gin {
                w1: add(format!("enc{l}.w1"), vec![d_in, d]),
                b1: add(format!("enc{l}.b1"), vec![1, d]),
                w2: add(format!("enc{l}.w2"), vec![d, d]),
                b2: add(format!("enc{l}.b2"), vec![1, d]),
                eps: add(format!("enc{l}.eps"), vec![1, 1]),
            },
        });
        d_in = d;
    }
    let m = cfg.embed_dim();
    let k = cfg.ntn_k;
    let wc = add("att.wc".into(), vec![m, m]);
    let ntn_w = add("ntn.w".into(), vec![k, m, m]);
    let ntn_v = add("ntn.v".into(), vec![2 * m, k]);
    let ntn_b = add("ntn.b".into(), vec![1, k]);
    let mut mlp = Vec::new();
    for (i, pair) in cfg.mlp_dims.windows(2).enumerate() {
        let w = add(format!("mlp{i}.w"), vec![pair[0], pair[1]]);
        let b = add(format!("mlp{i}.b"), vec![1, pair[1]]);
        mlp.push((w, b));
    }
    let index = ParamIndex {
        layers,
        wc,
        ntn_w,
        ntn_v,
        ntn_b,
        mlp,
    };
    (specs, index)
}

/// All trainable tensors of a model, with their names.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Checks names and shapes against the layout of `cfg`.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let (specs, _) = layout(cfg);
        if specs.len() != self.tensors.len() || self.names.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (have, t)) in specs.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != have || shape.as_slice() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {have} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases and zero GIN epsilons, deterministic
/// in `cfg.seed`.
pub fn init_params(cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let (specs, index) = layout(cfg);
    let mut rng = Rng::derive(cfg.seed, 0x1417);
    let mut zero = vec![false; specs.len()];
    for layer in &index.layers {
        match *layer {
            LayerIndex::Gcn { b, .. } => zero[b] = true,
            LayerIndex::Gin { b1, b2, eps, .. } => {
                zero[b1] = true;
                zero[b2] = true;
                zero[eps] = true;
            }
        }
    }
    zero[index.ntn_b] = true;
    for &(_, b) in &index.mlp {
        zero[b] = true;
    }
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    for (i, (name, shape)) in specs.into_iter().enumerate() {
        let t = if zero[i] {
            Tensor::zeros(&shape)
        } else {
            let (fan_in, fan_out) = (shape[shape.len() - 2], shape[shape.len() - 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.range(-limit, limit)).collect();
            Tensor::new(shape, data)?
        };
        names.push(name);
        tensors.push(t);
    }
    Ok(ModelParams { names, tensors })
}

/// Builds a checkpoint holding the model config, any extra settings,
/// parameters and optional optimizer state.
pub fn to_checkpoint(
    cfg: &ModelConfig,
    extra: &[(String, String)],
    params: &ModelParams,
    optimizer: Option<&AdamState>,
) -> Checkpoint {
    let mut config = cfg.to_pairs();
    config.extend(extra.iter().cloned());
    Checkpoint {
        config,
        params: params
            .names
            .iter()
            .cloned()
            .zip(params.tensors.iter().cloned())
            .collect(),
        optimizer: optimizer.cloned(),
    }
}

pub fn from_checkpoint(ck: &Checkpoint) -> Result<(ModelConfig, ModelParams)> {
    let cfg = ModelConfig::from_pairs(&ck.config)?;
    let params = ModelParams {
        names: ck.params.iter().map(|(n, _)| n.clone()).collect(),
        tensors: ck.params.iter().map(|(_, t)| t.clone()).collect(),
    };
    params.check(&cfg)?;
    Ok((cfg, params))
}

pub fn save_model(
    path: impl AsRef<Path>,
    cfg: &ModelConfig,
    extra: &[(String, String)],
    params: &ModelParams,
    optimizer: Option<&AdamState>,
) -> Result<()> {
    let path = path.as_ref();
    let text = to_checkpoint(cfg, extra, params, optimizer).to_text();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelParams, Checkpoint)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::parse(&text)?;
    let (cfg, params) = from_checkpoint(&ck)?;
    Ok((cfg, params, ck))
}
