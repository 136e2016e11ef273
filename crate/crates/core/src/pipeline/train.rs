use std::collections::HashMap;
use std::path::PathBuf;

use super::data::Pair;
use crate::autodiff::{AdamState, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::mtnn::{save_model, Encoded, Mtnn, TreeInput};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Seeds the per-epoch pair shuffles.
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables periodic
    /// checkpoints; the final one is still written when a directory is set).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Extra key/value lines stored in every checkpoint header.
    pub checkpoint_meta: Vec<(String, String)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            lr: 1e-3,
            weight_decay: 5e-4,
            seed: 0,
            checkpoint_every: 10,
            checkpoint_dir: None,
            checkpoint_meta: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} / weight decay {} must be non-negative",
                self.lr, self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("weight_decay".into(), self.weight_decay.to_string()),
            ("train_seed".into(), self.seed.to_string()),
        ]
    }
}

/// Summary of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean squared error over all pairs seen in the epoch, measured before
    /// each batch's update.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: Mtnn,
    pub losses: Vec<f64>,
    pub optimizer: AdamState,
}

/// Mean squared error of one batch, recorded on `g`. Each distinct tree is
/// encoded once; pairs are scored in tree-id order.
pub fn batch_loss(
    g: &mut Graph,
    model: &Mtnn,
    vars: &crate::mtnn::Bound,
    inputs: &[TreeInput],
    batch: &[Pair],
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut encoded: HashMap<usize, Encoded> = HashMap::new();
    let mut order: Vec<usize> = batch.iter().flat_map(|p| [p.i, p.j]).collect();
    order.sort_unstable();
    order.dedup();
    for k in order {
        let e = model.encode(g, vars, &inputs[k])?;
        encoded.insert(k, e);
    }
    let mut total: Option<Var> = None;
    for p in batch {
        let (a, b) = if inputs[p.j].id < inputs[p.i].id {
            (p.j, p.i)
        } else {
            (p.i, p.j)
        };
        let s = model.score(g, vars, &encoded[&a], &encoded[&b])?;
        let t = g.constant(Tensor::scalar(p.target));
        let d = g.sub(s, t)?;
        let sq = g.square(d)?;
        total = Some(match total {
            None => sq,
            Some(acc) => g.add(acc, sq)?,
        });
    }
    g.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64)
}

/// Minimizes the mean squared error between pair scores and targets with
/// Adam. Pairs are reshuffled every epoch from a seed derived from
/// `cfg.seed` and the epoch number.
pub fn train(
    model: Mtnn,
    inputs: &[TreeInput],
    pairs: &[Pair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainResult> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Argument("no training pairs".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.i >= inputs.len() || p.j >= inputs.len()) {
        return Err(Error::Data(format!(
            "pair ({}, {}) refers past the {} loaded trees",
            p.i,
            p.j,
            inputs.len()
        )));
    }
    let mut model = model;
    let mut opt = AdamState::new(&model.params.tensors, cfg.lr, cfg.weight_decay);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<Pair> = pairs.to_vec();
    for epoch in 1..=cfg.epochs {
        order.copy_from_slice(pairs);
        Rng::derive(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new();
            let vars = model.bind(&mut g, true);
            let loss = batch_loss(&mut g, &model, &vars, inputs, batch)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: value,
                });
            }
            sum += value * batch.len() as f64;
            g.backward(loss)?;
            let grads: Vec<Tensor> = vars.vars.iter().map(|&v| g.grad(v).unwrap()).collect();
            opt.step(&mut model.params.tensors, &grads)?;
        }
        if !model.params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss: f64::NAN,
            });
        }
        let stats = EpochStats {
            epoch,
            loss: sum / pairs.len() as f64,
        };
        losses.push(stats.loss);
        on_epoch(&stats);
        if let Some(dir) = &cfg.checkpoint_dir {
            let periodic = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
            if periodic || epoch == cfg.epochs {
                let name = if epoch == cfg.epochs {
                    "model.ckpt".to_string()
                } else {
                    format!("epoch{epoch:04}.ckpt")
                };
                let mut extra = cfg.to_pairs();
                extra.push(("epoch".into(), epoch.to_string()));
                extra.extend(cfg.checkpoint_meta.iter().cloned());
                save_model(dir.join(name), &model.config, &extra, &model.params, Some(&opt))?;
            }
        }
    }
    Ok(TrainResult {
        model,
        losses,
        optimizer: opt,
    })
}
