use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::data::Pair;
use crate::error::{Error, Result};
use crate::groundtruth::interleaving_distance;
use crate::mergetree::MergeTree;
use crate::mtnn::{Embedding, Mtnn, TreeInput};
use crate::rng::Rng;

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Scores for every pair, in pair order. Each tree referenced by a pair is
/// encoded once. Work is spread over `workers` threads; results do not
/// depend on the worker count.
pub fn predict_pairs(
    model: &Mtnn,
    inputs: &[TreeInput],
    pairs: &[Pair],
    workers: usize,
) -> Result<Vec<f64>> {
    let mut used = vec![false; inputs.len()];
    for p in pairs {
        if p.i >= inputs.len() || p.j >= inputs.len() {
            return Err(Error::Data(format!(
                "pair ({}, {}) refers past the {} loaded trees",
                p.i,
                p.j,
                inputs.len()
            )));
        }
        used[p.i] = true;
        used[p.j] = true;
    }
    let pool = pool(workers)?;
    pool.install(|| {
        let emb: Vec<Option<Embedding>> = inputs
            .par_iter()
            .zip(&used)
            .map(|(t, &u)| if u { model.embed(t).map(Some) } else { Ok(None) })
            .collect::<Result<_>>()?;
        pairs
            .par_iter()
            .map(|p| {
                let a = emb[p.i].as_ref().expect("embedded");
                let b = emb[p.j].as_ref().expect("embedded");
                model.score_embeddings(a, b)
            })
            .collect()
    })
}

/// Held-out error of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    /// `1000 * mse`.
    pub mse_scaled: f64,
    pub pairs: Vec<Pair>,
    pub predictions: Vec<f64>,
    /// Extra key/value lines echoed into the report (configuration, timing).
    pub meta: Vec<(String, String)>,
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> f64 {
    let n = predictions.len().max(1) as f64;
    predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

impl EvalReport {
    pub fn from_predictions(pairs: Vec<Pair>, predictions: Vec<f64>) -> Result<Self> {
        if pairs.is_empty() || pairs.len() != predictions.len() {
            return Err(Error::Argument(format!(
                "{} predictions for {} pairs",
                predictions.len(),
                pairs.len()
            )));
        }
        let targets: Vec<f64> = pairs.iter().map(|p| p.target).collect();
        let mse = mse(&predictions, &targets);
        Ok(Self {
            mse,
            mse_scaled: mse * 1000.0,
            pairs,
            predictions,
            meta: Vec::new(),
        })
    }

    /// Key/value summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "pairs {}", self.pairs.len()).unwrap();
        writeln!(out, "mse {:e}", self.mse).unwrap();
        writeln!(out, "mse_scaled {:e}", self.mse_scaled).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "{k} {v}").unwrap();
        }
        out
    }

    /// Per-pair residuals as CSV with tree ids.
    pub fn residuals_csv(&self, ids: &[String]) -> String {
        let mut out = String::from("tree_a,tree_b,target,prediction,residual\n");
        for (p, &y) in self.pairs.iter().zip(&self.predictions) {
            writeln!(
                out,
                "{},{},{:e},{:e},{:e}",
                ids[p.i],
                ids[p.j],
                p.target,
                y,
                y - p.target
            )
            .unwrap();
        }
        out
    }
}

pub fn evaluate(
    model: &Mtnn,
    inputs: &[TreeInput],
    pairs: &[Pair],
    workers: usize,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("no evaluation pairs".into()));
    }
    let predictions = predict_pairs(model, inputs, pairs, workers)?;
    EvalReport::from_predictions(pairs.to_vec(), predictions)
}

/// `count` distinct unordered pairs among `members`, seeded; all pairs when
/// fewer exist.
pub fn sample_pairs(members: &[usize], count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut all = Vec::new();
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            all.push((i, j));
        }
    }
    if count < all.len() {
        Rng::derive(seed, 0xbe7c).shuffle(&mut all);
        all.truncate(count);
    }
    all
}

/// Wall-clock comparison of exact distances and model inference on the same
/// pairs, both on the calling thread.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub pairs: usize,
    pub exact_seconds: f64,
    /// Encoding each involved tree once, then scoring every pair.
    pub model_seconds: f64,
    /// Running the full network from scratch for every pair.
    pub model_uncached_seconds: f64,
    /// Checksum of exact distances (keeps the work observable).
    pub exact_checksum: f64,
    pub model_checksum: f64,
}

impl BenchReport {
    pub fn exact_us_per_pair(&self) -> f64 {
        1e6 * self.exact_seconds / self.pairs as f64
    }

    pub fn model_us_per_pair(&self) -> f64 {
        1e6 * self.model_seconds / self.pairs as f64
    }

    pub fn model_uncached_us_per_pair(&self) -> f64 {
        1e6 * self.model_uncached_seconds / self.pairs as f64
    }

    /// `exact / model`.
    pub fn speedup(&self) -> f64 {
        self.exact_seconds / self.model_seconds.max(f64::MIN_POSITIVE)
    }

    pub fn speedup_uncached(&self) -> f64 {
        self.exact_seconds / self.model_uncached_seconds.max(f64::MIN_POSITIVE)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "pairs {}", self.pairs).unwrap();
        writeln!(out, "exact_seconds {:e}", self.exact_seconds).unwrap();
        writeln!(out, "model_seconds {:e}", self.model_seconds).unwrap();
        writeln!(out, "model_uncached_seconds {:e}", self.model_uncached_seconds).unwrap();
        writeln!(out, "exact_us_per_pair {:.3}", self.exact_us_per_pair()).unwrap();
        writeln!(out, "model_us_per_pair {:.3}", self.model_us_per_pair()).unwrap();
        writeln!(out, "model_uncached_us_per_pair {:.3}", self.model_uncached_us_per_pair()).unwrap();
        writeln!(out, "speedup {:.3}", self.speedup()).unwrap();
        writeln!(out, "speedup_uncached {:.3}", self.speedup_uncached()).unwrap();
        out
    }
}

pub fn benchmark(
    model: &Mtnn,
    trees: &[MergeTree],
    inputs: &[TreeInput],
    pairs: &[(usize, usize)],
) -> Result<BenchReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("no pairs to benchmark".into()));
    }
    if trees.len() != inputs.len() {
        return Err(Error::Argument("trees and model inputs differ in length".into()));
    }
    let start = Instant::now();
    let mut exact_checksum = 0.0;
    for &(i, j) in pairs {
        exact_checksum += interleaving_distance(&trees[i], &trees[j])?;
    }
    let exact_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut cache: Vec<Option<Embedding>> = vec![None; inputs.len()];
    let mut model_checksum = 0.0;
    for &(i, j) in pairs {
        for k in [i, j] {
            if cache[k].is_none() {
                cache[k] = Some(model.embed(&inputs[k])?);
            }
        }
        model_checksum += model.score_embeddings(
            cache[i].as_ref().expect("cached"),
            cache[j].as_ref().expect("cached"),
        )?;
    }
    let model_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut uncached = 0.0;
    for &(i, j) in pairs {
        uncached += model.predict(&inputs[i], &inputs[j])?;
    }
    let model_uncached_seconds = start.elapsed().as_secs_f64();
    debug_assert!((uncached - model_checksum).abs() <= 1e-9 * pairs.len() as f64);

    Ok(BenchReport {
        pairs: pairs.len(),
        exact_seconds,
        model_seconds,
        model_uncached_seconds,
        exact_checksum,
        model_checksum,
    })
}
