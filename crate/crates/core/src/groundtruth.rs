//! Labeled interleaving distance between merge trees, edit-cost functions and
//! normalized pairwise distance tables.
//!
//! Both trees of a pair share the label set `0..a` with `a = max(n1, n2)`.
//! Each tree labels its nodes in canonical order (f, subtree minimum, subtree
//! size, node id) and hands any surplus labels to its root. The labeling of
//! one tree depends only on that tree and `a`, so the distance is symmetric
//! by construction.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mergetree::MergeTree;

/// Map from labels `0..a` onto tree nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    /// `assignment[label] = node`.
    pub assignment: Vec<usize>,
}

impl Labeling {
    pub fn label_count(&self) -> usize {
        self.assignment.len()
    }

    /// Checks that every label points into the tree and every node is hit.
    pub fn validate(&self, t: &MergeTree) -> Result<()> {
        let mut hit = vec![false; t.len()];
        for (label, &v) in self.assignment.iter().enumerate() {
            if v >= t.len() {
                return Err(Error::Argument(format!(
                    "label {label} maps to node {v}, tree has {} nodes",
                    t.len()
                )));
            }
            hit[v] = true;
        }
        if let Some(v) = hit.iter().position(|h| !h) {
            return Err(Error::Argument(format!("node {v} carries no label")));
        }
        Ok(())
    }
}

/// Nodes in canonical order: f, then subtree minimum, then subtree size,
/// then id.
pub fn canonical_order(t: &MergeTree) -> Vec<usize> {
    let lo = t.subtree_min();
    let size = t.subtree_sizes();
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| {
        t.f(a)
            .total_cmp(&t.f(b))
            .then(lo[a].total_cmp(&lo[b]))
            .then(size[a].cmp(&size[b]))
            .then(a.cmp(&b))
    });
    order
}

/// Labels one tree with `a >= t.len()` labels.
pub fn label_tree(t: &MergeTree, a: usize) -> Result<Labeling> {
    if t.is_empty() {
        return Err(Error::Argument("cannot label an empty tree".into()));
    }
    if a < t.len() {
        return Err(Error::Argument(format!(
            "{a} labels cannot cover {} nodes",
            t.len()
        )));
    }
    let mut assignment = canonical_order(t);
    assignment.resize(a, t.root());
    Ok(Labeling { assignment })
}

/// Shared labeling of a tree pair.
pub fn label_pair(t1: &MergeTree, t2: &MergeTree) -> Result<(Labeling, Labeling)> {
    let a = t1.len().max(t2.len());
    Ok((label_tree(t1, a)?, label_tree(t2, a)?))
}

/// Symmetric `a x a` matrix of LCA function values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LcaMatrix {
    pub size: usize,
    pub data: Vec<f64>,
}

impl LcaMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }
}

/// `f(LCA(u, v))` for every node pair, row-major `n x n`.
pub fn node_lca_values(t: &MergeTree) -> Vec<f64> {
    let n = t.len();
    let mut depth = vec![0usize; n];
    // Parents of a join tree have larger f, so descending post order from the
    // root visits parents first.
    let mut top_down = t.post_order();
    top_down.reverse();
    for &v in &top_down {
        if let Some(p) = t.parent[v] {
            depth[v] = depth[p] + 1;
        }
    }
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for v in u..n {
            let (mut a, mut b) = (u, v);
            while depth[a] > depth[b] {
                a = t.parent[a].expect("deeper node has a parent");
            }
            while depth[b] > depth[a] {
                b = t.parent[b].expect("deeper node has a parent");
            }
            while a != b {
                a = t.parent[a].expect("non-root");
                b = t.parent[b].expect("non-root");
            }
            out[u * n + v] = t.f(a);
            out[v * n + u] = t.f(a);
        }
    }
    out
}

pub fn lca_matrix(t: &MergeTree, labeling: &Labeling) -> Result<LcaMatrix> {
    let n = t.len();
    if let Some(&v) = labeling.assignment.iter().find(|&&v| v >= n) {
        return Err(Error::Argument(format!(
            "label maps to node {v}, tree has {n} nodes"
        )));
    }
    let nodes = node_lca_values(t);
    let a = labeling.label_count();
    let mut data = vec![0.0; a * a];
    for (i, &u) in labeling.assignment.iter().enumerate() {
        for (j, &v) in labeling.assignment.iter().enumerate() {
            data[i * a + j] = nodes[u * n + v];
        }
    }
    Ok(LcaMatrix { size: a, data })
}

/// L-infinity difference of the two LCA matrices under the shared labeling.
pub fn interleaving_distance(t1: &MergeTree, t2: &MergeTree) -> Result<f64> {
    let (l1, l2) = label_pair(t1, t2)?;
    let (n1, n2) = (t1.len(), t2.len());
    let (v1, v2) = (node_lca_values(t1), node_lca_values(t2));
    let mut best = 0.0f64;
    for (i, (&u1, &u2)) in l1.assignment.iter().zip(&l2.assignment).enumerate() {
        for (&w1, &w2) in l1.assignment[i..].iter().zip(&l2.assignment[i..]) {
            let d = (v1[u1 * n1 + w1] - v2[u2 * n2 + w2]).abs();
            if d > best {
                best = d;
            }
        }
    }
    Ok(best)
}

/// Birth and death values of a persistence pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairValues {
    pub birth: f64,
    pub death: f64,
}

impl PairValues {
    pub fn new(birth: f64, death: f64) -> Result<Self> {
        if death < birth || birth.is_nan() || death.is_nan() {
            return Err(Error::Argument(format!(
                "pair death {death} below birth {birth}"
            )));
        }
        Ok(Self { birth, death })
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

pub fn relabel_cost(m: PairValues, s: PairValues) -> Result<f64> {
    let (m, s) = (PairValues::new(m.birth, m.death)?, PairValues::new(s.birth, s.death)?);
    let shift = (m.birth - s.birth).abs().max((m.death - s.death).abs());
    Ok(shift.min((m.persistence() + s.persistence()) / 2.0))
}

pub fn delete_cost(m: PairValues) -> Result<f64> {
    Ok(PairValues::new(m.birth, m.death)?.persistence() / 2.0)
}

pub fn insert_cost(s: PairValues) -> Result<f64> {
    delete_cost(s)
}

/// Symmetric pairwise distances with max normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    pub ids: Vec<String>,
    /// Row-major `n x n` raw distances.
    pub raw: Vec<f64>,
    pub norm: f64,
}

impl DistanceTable {
    /// Builds a table from raw distances, normalizing by the largest
    /// off-diagonal entry (1 when all are zero).
    pub fn from_raw(ids: Vec<String>, raw: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if n == 0 || raw.len() != n * n {
            return Err(Error::Data(format!(
                "distance table needs {n} x {n} entries, got {}",
                raw.len()
            )));
        }
        let max = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| raw[i * n + j])
            .fold(0.0, f64::max);
        let norm = if max > 0.0 { max } else { 1.0 };
        Ok(Self { ids, raw, norm })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn raw(&self, i: usize, j: usize) -> f64 {
        self.raw[i * self.len() + j]
    }

    pub fn normalized(&self, i: usize, j: usize) -> f64 {
        self.raw(i, j) / self.norm
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Same raw distances divided by another constant, e.g. the one of the
    /// table a model was trained on.
    pub fn with_norm(&self, norm: f64) -> Result<Self> {
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Argument(format!("normalization constant {norm}")));
        }
        Ok(Self {
            norm,
            ..self.clone()
        })
    }

    /// Checks that the ids match a tree list, in order.
    pub fn check_ids(&self, trees: &[MergeTree]) -> Result<()> {
        if trees.len() != self.len() {
            return Err(Error::Data(format!(
                "table has {} trees, tree file has {}",
                self.len(),
                trees.len()
            )));
        }
        for (k, (id, t)) in self.ids.iter().zip(trees).enumerate() {
            if *id != t.source_id {
                return Err(Error::Data(format!(
                    "table id {id} at position {k} does not match tree {}",
                    t.source_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let n = self.len();
        let mut out = self.ids.join(",");
        out.push('\n');
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", self.raw(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        writeln!(out, "# norm {:.16e}", self.norm).unwrap();
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty distance table"))?;
        let ids: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if ids.iter().any(|s| s.is_empty() || s.starts_with('#')) {
            return Err(Error::parse(1, "header must list tree ids"));
        }
        let n = ids.len();
        let mut raw = Vec::with_capacity(n * n);
        let mut norm = None;
        let mut rows = 0;
        for (k, line) in lines {
            let lineno = k + 1;
            if let Some(rest) = line.trim().strip_prefix('#') {
                let tok: Vec<&str> = rest.split_whitespace().collect();
                if tok.len() == 2 && tok[0] == "norm" {
                    let c: f64 = tok[1]
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad norm {:?}", tok[1])))?;
                    norm = Some(c);
                    continue;
                }
                return Err(Error::parse(lineno, format!("unknown metadata {line:?}")));
            }
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(lineno, format!("bad distance {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != n {
                return Err(Error::parse(
                    lineno,
                    format!("row has {} entries, expected {n}", row.len()),
                ));
            }
            raw.extend(row);
            rows += 1;
        }
        if rows != n {
            return Err(Error::parse(
                text.lines().count(),
                format!("table has {rows} rows for {n} ids"),
            ));
        }
        let norm = norm.ok_or_else(|| Error::parse(text.lines().count(), "missing `# norm` line"))?;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::parse(text.lines().count(), format!("bad norm {norm}")));
        }
        Ok(Self { ids, raw, norm })
    }
}

/// All pairwise interleaving distances. Cells are independent, so the result
/// does not depend on `workers`.
pub fn pairwise_table(trees: &[MergeTree], workers: usize) -> Result<DistanceTable> {
    if trees.len() < 2 {
        return Err(Error::Argument(format!(
            "pairwise table needs at least 2 trees, got {}",
            trees.len()
        )));
    }
    let n = trees.len();
    let row = |i: usize| -> Result<Vec<f64>> {
        (i + 1..n)
            .map(|j| interleaving_distance(&trees[i], &trees[j]))
            .collect()
    };
    let upper: Vec<Vec<f64>> = if workers <= 1 {
        (0..n).map(row).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(row).collect::<Result<_>>())?
    };
    let mut raw = vec![0.0; n * n];
    for (i, r) in upper.iter().enumerate() {
        for (k, &d) in r.iter().enumerate() {
            let j = i + 1 + k;
            raw[i * n + j] = d;
            raw[j * n + i] = d;
        }
    }
    DistanceTable::from_raw(trees.iter().map(|t| t.source_id.clone()).collect(), raw)
}

pub fn save_table(table: &DistanceTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, table.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<DistanceTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DistanceTable::parse_csv(&text)
}
