use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    Gcn,
    Gin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attention {
    /// Unweighted mean of node embeddings as global context.
    Plain,
    /// Persistence-weighted context built from the tree's persistence matrix.
    Topological,
}

/// Activation applied to the tensor network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

macro_rules! token_enum {
    ($ty:ty, $what:literal, $($variant:path => $tok:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $tok),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($tok => Ok($variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }
        }
    };
}

token_enum!(Encoder, "encoder", Encoder::Gcn => "gcn", Encoder::Gin => "gin");
token_enum!(Attention, "attention", Attention::Plain => "plain", Attention::Topological => "topological");
token_enum!(
    Activation, "activation",
    Activation::Relu => "relu", Activation::Tanh => "tanh", Activation::Sigmoid => "sigmoid"
);

/// Architecture of the pair-scoring network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: Encoder,
    pub attention: Attention,
    /// Output widths of the three encoder layers; the input width is 1.
    pub layer_dims: Vec<usize>,
    /// Number of tensor network slices.
    pub ntn_k: usize,
    pub hist_bins: usize,
    /// Widths of the scoring head, input first; the input must equal
    /// `ntn_k + hist_bins` and the output must be 1.
    pub mlp_dims: Vec<usize>,
    pub ntn_activation: Activation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: Encoder::Gin,
            attention: Attention::Topological,
            layer_dims: vec![64, 32, 16],
            ntn_k: 16,
            hist_bins: 16,
            mlp_dims: vec![32, 16, 8, 1],
            ntn_activation: Activation::Relu,
            seed: 0,
        }
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn split(key: &str, s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: bad width {t:?}")))
        })
        .collect()
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() != 3 || self.layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "encoder needs three non-zero layer widths, got {:?}",
                self.layer_dims
            )));
        }
        if self.ntn_k == 0 || self.hist_bins == 0 {
            return Err(Error::Config("ntn_k and hist_bins must be positive".into()));
        }
        if self.mlp_dims.len() < 2
            || self.mlp_dims[0] != self.ntn_k + self.hist_bins
            || *self.mlp_dims.last().unwrap() != 1
            || self.mlp_dims.contains(&0)
        {
            return Err(Error::Config(format!(
                "head widths {:?} must start at ntn_k + hist_bins = {} and end at 1",
                self.mlp_dims,
                self.ntn_k + self.hist_bins
            )));
        }
        Ok(())
    }

    /// Width of the final node embeddings.
    pub fn embed_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("encoder".into(), self.encoder.to_string()),
            ("attention".into(), self.attention.to_string()),
            ("layer_dims".into(), join(&self.layer_dims)),
            ("ntn_k".into(), self.ntn_k.to_string()),
            ("hist_bins".into(), self.hist_bins.to_string()),
            ("mlp_dims".into(), join(&self.mlp_dims)),
            ("ntn_activation".into(), self.ntn_activation.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    /// Reads a config back from key/value pairs; unknown keys are ignored so
    /// the same block can carry training settings.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            let num = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("{k}: bad integer {v:?}")))
            };
            match k.as_str() {
                "encoder" => cfg.encoder = v.parse()?,
                "attention" => cfg.attention = v.parse()?,
                "layer_dims" => cfg.layer_dims = split(k, v)?,
                "ntn_k" => cfg.ntn_k = num(v)? as usize,
                "hist_bins" => cfg.hist_bins = num(v)? as usize,
                "mlp_dims" => cfg.mlp_dims = split(k, v)?,
                "ntn_activation" => cfg.ntn_activation = v.parse()?,
                "seed" => cfg.seed = num(v)?,
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ModelConfig::from_pairs(&cfg.to_pairs()).unwrap(), cfg);
        let gcn = ModelConfig {
            encoder: Encoder::Gcn,
            attention: Attention::Plain,
            ntn_activation: Activation::Tanh,
            seed: 9,
            ..cfg
        };
        assert_eq!(ModelConfig::from_pairs(&gcn.to_pairs()).unwrap(), gcn);
    }

    #[test]
    fn invalid_configs() {
        let bad_head = ModelConfig {
            mlp_dims: vec![30, 1],
            ..ModelConfig::default()
        };
        assert!(bad_head.validate().is_err());
        let two_layers = ModelConfig {
            layer_dims: vec![8, 8],
            ..ModelConfig::default()
        };
        assert!(two_layers.validate().is_err());
        assert!("gat".parse::<Encoder>().is_err());
    }
}
