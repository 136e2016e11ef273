use std::fmt::Write as _;

use crate::error::Result;
use crate::mtnn::{Mtnn, TreeInput};

/// One node's attention scalar and topological weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    pub tree: String,
    pub node: usize,
    pub f: f64,
    pub attention: f64,
    /// Persistence-based weight; 1 for a lone node.
    pub weight: f64,
}

pub fn export_attention(model: &Mtnn, trees: &[TreeInput]) -> Result<Vec<AttentionRow>> {
    let mut rows = Vec::new();
    for t in trees {
        let e = model.embed(t)?;
        for (node, (&f, &attention)) in t.f.iter().zip(&e.attention).enumerate() {
            let weight = match &t.topo_weights {
                Some(w) => w.data()[node],
                None => 1.0 / t.len() as f64,
            };
            rows.push(AttentionRow {
                tree: t.id.clone(),
                node,
                f,
                attention,
                weight,
            });
        }
    }
    Ok(rows)
}

pub fn attention_csv(rows: &[AttentionRow]) -> String {
    let mut out = String::from("tree,node,f,att,weight\n");
    for r in rows {
        writeln!(out, "{},{},{:e},{:e},{:e}", r.tree, r.node, r.f, r.attention, r.weight).unwrap();
    }
    out
}
