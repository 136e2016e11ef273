//! Join trees of scalar fields, elder-rule persistence pairs, persistence
//! simplification and the persistence-weighted matrix consumed by the model.
//!
//! # Tree file
//!
//! ```text
//! trees <count>
//! tree <source_id> <n>
//! node <id> <kind> <f>        (n lines, ids 0..n in order, kind = minimum|saddle|root)
//! edge <child> <parent>       (n - 1 lines)
//! pair <birth> <death>        (one line per leaf)
//! ...                         (next tree)
//! ```
//!
//! Function values use shortest round-trip float notation, so a save/load
//! cycle reproduces trees exactly.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalarfield::{normalize_field, ScalarField};
use crate::unionfind::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Minimum,
    Saddle,
    Root,
}

impl NodeKind {
    pub fn token(self) -> &'static str {
        match self {
            NodeKind::Minimum => "minimum",
            NodeKind::Saddle => "saddle",
            NodeKind::Root => "root",
        }
    }

    fn from_token(s: &str) -> Option<Self> {
        match s {
            "minimum" => Some(NodeKind::Minimum),
            "saddle" => Some(NodeKind::Saddle),
            "root" => Some(NodeKind::Root),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub f: f64,
    pub kind: NodeKind,
}

/// A component born at minimum `birth` that dies at `death`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub birth: usize,
    pub death: usize,
    pub persistence: f64,
}

/// A critical-node join tree. Node ids are indices into `nodes`; trees built
/// from fields number nodes in sweep order, so ids double as the tie-break
/// for equal function values.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeTree {
    pub source_id: String,
    pub nodes: Vec<Node>,
    pub parent: Vec<Option<usize>>,
    pub pairs: Vec<PersistencePair>,
}

/// Total order used for sweeps and tie-breaks: function value, then index.
fn order_key(fa: f64, a: usize, fb: f64, b: usize) -> Ordering {
    fa.total_cmp(&fb).then(a.cmp(&b))
}

impl MergeTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn f(&self, v: usize) -> f64 {
        self.nodes[v].f
    }

    pub fn root(&self) -> usize {
        self.parent
            .iter()
            .position(Option::is_none)
            .expect("merge tree without root")
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len()];
        for (v, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                ch[p].push(v);
            }
        }
        ch
    }

    pub fn leaves(&self) -> Vec<usize> {
        let ch = self.children();
        (0..self.len()).filter(|&v| ch[v].is_empty()).collect()
    }

    /// Undirected tree edges as `(child, parent)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (v, p)))
            .collect()
    }

    /// Nodes ordered so that every child precedes its parent.
    pub fn post_order(&self) -> Vec<usize> {
        let ch = self.children();
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root(), false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                out.push(v);
            } else {
                stack.push((v, true));
                for &c in ch[v].iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// The pair of the oldest minimum, which dies at the root.
    pub fn global_pair(&self) -> Option<&PersistencePair> {
        let root = self.root();
        self.pairs
            .iter()
            .filter(|p| p.death == root)
            .min_by(|a, b| order_key(self.f(a.birth), a.birth, self.f(b.birth), b.birth))
    }

    /// Checks the structural invariants: one root carrying the maximum,
    /// monotone values towards the root, minima at the leaves, saddles with
    /// at least two children, one pair per leaf.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let bad = |msg: String| Err(Error::Data(format!("tree {}: {msg}", self.source_id)));
        if n == 0 {
            return bad("empty tree".into());
        }
        if self.parent.len() != n {
            return bad("parent list length mismatch".into());
        }
        let roots: Vec<usize> = (0..n).filter(|&v| self.parent[v].is_none()).collect();
        if roots.len() != 1 {
            return bad(format!("expected one root, found {}", roots.len()));
        }
        let root = roots[0];
        for v in 0..n {
            if !self.nodes[v].f.is_finite() {
                return bad(format!("node {v} has non-finite value"));
            }
            if let Some(p) = self.parent[v] {
                if p >= n || p == v {
                    return bad(format!("node {v} has invalid parent {p}"));
                }
                if self.f(p) < self.f(v) {
                    return bad(format!("node {v} is above its parent {p}"));
                }
            }
        }
        // Every node must reach the root without revisiting.
        for v in 0..n {
            let (mut u, mut steps) = (v, 0);
            while let Some(p) = self.parent[u] {
                u = p;
                steps += 1;
                if steps > n {
                    return bad("cycle in parent links".into());
                }
            }
        }
        let ch = self.children();
        for v in 0..n {
            let expect = if v == root {
                NodeKind::Root
            } else if ch[v].is_empty() {
                NodeKind::Minimum
            } else {
                NodeKind::Saddle
            };
            if self.nodes[v].kind != expect {
                return bad(format!("node {v} should be {}", expect.token()));
            }
            if v != root && !ch[v].is_empty() && ch[v].len() < 2 {
                return bad(format!("saddle {v} has a single child"));
            }
        }
        let leaves = ch.iter().filter(|c| c.is_empty()).count();
        if self.pairs.len() != leaves {
            return bad(format!("{} pairs for {leaves} leaves", self.pairs.len()));
        }
        for p in &self.pairs {
            if p.birth >= n || p.death >= n {
                return bad(format!("pair ({}, {}) out of range", p.birth, p.death));
            }
        }
        Ok(())
    }

    /// Relabels nodes: node `v` becomes node `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> MergeTree {
        let n = self.len();
        assert_eq!(perm.len(), n);
        let mut nodes = self.nodes.clone();
        let mut parent = vec![None; n];
        for v in 0..n {
            nodes[perm[v]] = self.nodes[v];
            parent[perm[v]] = self.parent[v].map(|p| perm[p]);
        }
        let pairs = self
            .pairs
            .iter()
            .map(|p| PersistencePair {
                birth: perm[p.birth],
                death: perm[p.death],
                persistence: p.persistence,
            })
            .collect();
        MergeTree {
            source_id: self.source_id.clone(),
            nodes,
            parent,
            pairs,
        }
    }

    /// Number of nodes at or below each node.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut size = vec![1; self.len()];
        for v in self.post_order() {
            if let Some(p) = self.parent[v] {
                size[p] += size[v];
            }
        }
        size
    }

    /// Smallest function value at or below each node.
    pub fn subtree_min(&self) -> Vec<f64> {
        let mut lo: Vec<f64> = self.nodes.iter().map(|n| n.f).collect();
        for v in self.post_order() {
            if let Some(p) = self.parent[v] {
                lo[p] = lo[p].min(lo[v]);
            }
        }
        lo
    }
}

/// Builds the critical-node join tree together with the grid vertex of each
/// node.
///
/// Vertices are swept in ascending `(f, index)` order with union-find over the
/// grid adjacency. A vertex without lower neighbours starts a leaf, a vertex
/// touching two or more lower components becomes a saddle, and the last
/// vertex (the global maximum) becomes the root. Regular vertices are never
/// materialized. Values come from the normalized field; a constant field
/// yields a single root node.
pub fn build_join_tree_mapped(field: &ScalarField) -> (MergeTree, Vec<usize>) {
    let norm = normalize_field(field);
    let values = &norm.values;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| order_key(values[a], a, values[b], b));

    if n == 1 || values[order[0]] == values[order[n - 1]] {
        let top = order[n - 1];
        let tree = MergeTree {
            source_id: field.id.clone(),
            nodes: vec![Node {
                f: values[top],
                kind: NodeKind::Root,
            }],
            parent: vec![None],
            pairs: vec![PersistencePair {
                birth: 0,
                death: 0,
                persistence: 0.0,
            }],
        };
        return (tree, vec![top]);
    }

    let mut rank = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        rank[v] = k;
    }
    let mut uf = UnionFind::new(n);
    // Highest tree node of the component represented by each union-find root.
    let mut top = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut vertex_of = Vec::new();
    let mut nbrs = Vec::with_capacity(4);
    let mut comps = Vec::with_capacity(4);

    for (k, &v) in order.iter().enumerate() {
        field.neighbors(v, &mut nbrs);
        comps.clear();
        for &u in &nbrs {
            if rank[u] < k {
                let r = uf.find(u);
                if !comps.contains(&r) {
                    comps.push(r);
                }
            }
        }
        let last = k == n - 1;
        if comps.is_empty() {
            let id = nodes.len();
            nodes.push(Node {
                f: values[v],
                kind: NodeKind::Minimum,
            });
            parent.push(None);
            vertex_of.push(v);
            top[v] = id;
        } else if comps.len() == 1 && !last {
            let r = uf.union(comps[0], v);
            top[r] = top[comps[0]];
        } else {
            let id = nodes.len();
            nodes.push(Node {
                f: values[v],
                kind: if last { NodeKind::Root } else { NodeKind::Saddle },
            });
            parent.push(None);
            vertex_of.push(v);
            // Children in sweep order of their subtrees' top nodes.
            let mut tops: Vec<usize> = comps.iter().map(|&r| top[r]).collect();
            tops.sort_unstable();
            for t in tops {
                parent[t] = Some(id);
            }
            let mut r = v;
            for &c in &comps {
                r = uf.union(r, c);
            }
            top[r] = id;
        }
    }

    let mut tree = MergeTree {
        source_id: field.id.clone(),
        nodes,
        parent,
        pairs: Vec::new(),
    };
    tree.pairs = persistence_pairs(&tree);
    (tree, vertex_of)
}

pub fn build_join_tree(field: &ScalarField) -> MergeTree {
    build_join_tree_mapped(field).0
}

/// Elder-rule pairing. At every merge the branch whose oldest minimum has the
/// larger `(f, id)` dies; the oldest minimum overall pairs with the root.
/// Pairs are returned sorted by birth node.
pub fn persistence_pairs(t: &MergeTree) -> Vec<PersistencePair> {
    let ch = t.children();
    let mut oldest = vec![usize::MAX; t.len()];
    let mut pairs = Vec::with_capacity(t.len());
    let older = |a: usize, b: usize| order_key(t.f(a), a, t.f(b), b) == Ordering::Less;
    for v in t.post_order() {
        if ch[v].is_empty() {
            oldest[v] = v;
        } else {
            let survivor = ch[v]
                .iter()
                .map(|&c| oldest[c])
                .reduce(|a, b| if older(a, b) { a } else { b })
                .unwrap();
            for &c in &ch[v] {
                if oldest[c] != survivor {
                    pairs.push(PersistencePair {
                        birth: oldest[c],
                        death: v,
                        persistence: t.f(v) - t.f(oldest[c]),
                    });
                }
            }
            oldest[v] = survivor;
        }
        if t.parent[v].is_none() {
            pairs.push(PersistencePair {
                birth: oldest[v],
                death: v,
                persistence: t.f(v) - t.f(oldest[v]),
            });
        }
    }
    pairs.sort_by_key(|p| p.birth);
    pairs
}

/// Persistence simplification: repeatedly removes the lowest-persistence
/// non-global pair with persistence below `tau` (ties broken by death node,
/// then birth node), deleting its minimum and contracting the saddle if it
/// is left with a single child. The root is never contracted.
pub fn simplify(t: &MergeTree, tau: f64) -> Result<MergeTree> {
    if !(tau >= 0.0) {
        return Err(Error::Argument(format!("simplification threshold must be >= 0, got {tau}")));
    }
    let mut tree = t.clone();
    if tree.pairs.is_empty() {
        tree.pairs = persistence_pairs(&tree);
    }
    loop {
        let global = tree.global_pair().copied();
        let victim = tree
            .pairs
            .iter()
            .filter(|p| Some(**p) != global && p.persistence < tau && p.birth != p.death)
            .min_by(|a, b| {
                a.persistence
                    .total_cmp(&b.persistence)
                    .then(a.death.cmp(&b.death))
                    .then(a.birth.cmp(&b.birth))
            })
            .copied();
        let Some(victim) = victim else { break };
        tree = remove_leaf(&tree, victim.birth);
        tree.pairs = persistence_pairs(&tree);
    }
    Ok(tree)
}

/// Deletes leaf `leaf`, contracts its parent if that leaves a non-root node
/// with one child, and renumbers the survivors preserving relative order.
fn remove_leaf(t: &MergeTree, leaf: usize) -> MergeTree {
    let mut alive = vec![true; t.len()];
    let mut parent = t.parent.clone();
    alive[leaf] = false;
    if let Some(s) = t.parent[leaf] {
        let remaining: Vec<usize> = (0..t.len())
            .filter(|&v| alive[v] && parent[v] == Some(s))
            .collect();
        if remaining.len() == 1 && parent[s].is_some() {
            parent[remaining[0]] = parent[s];
            alive[s] = false;
        }
    }
    let mut new_id = vec![usize::MAX; t.len()];
    let mut next = 0;
    for v in 0..t.len() {
        if alive[v] {
            new_id[v] = next;
            next += 1;
        }
    }
    let mut nodes = Vec::with_capacity(next);
    let mut new_parent = Vec::with_capacity(next);
    for v in (0..t.len()).filter(|&v| alive[v]) {
        nodes.push(t.nodes[v]);
        new_parent.push(parent[v].map(|p| new_id[p]));
    }
    MergeTree {
        source_id: t.source_id.clone(),
        nodes,
        parent: new_parent,
        pairs: Vec::new(),
    }
}

/// Node function values as an `n x 1` matrix in node order.
pub fn node_features(t: &MergeTree) -> Tensor {
    Tensor::new(vec![t.len(), 1], t.nodes.iter().map(|n| n.f).collect())
        .expect("feature shape matches node count")
}

/// Symmetric `n x n` matrix of absolute function differences over tree edges
/// and over persistence pairs whose nodes are not adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl PersistenceMatrix {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.n + v]
    }

    fn set_sym(&mut self, u: usize, v: usize, w: f64) {
        self.data[u * self.n + v] = w;
        self.data[v * self.n + u] = w;
    }

    /// Total weight incident to each node.
    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    /// Row support: the neighbourhood of each node (edges and pair entries).
    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        (0..self.n).filter(|&v| self.get(u, v) > 0.0).collect()
    }
}

pub fn persistence_matrix(t: &MergeTree) -> PersistenceMatrix {
    let n = t.len();
    let mut m = PersistenceMatrix {
        n,
        data: vec![0.0; n * n],
    };
    for (c, p) in t.edges() {
        m.set_sym(c, p, (t.f(p) - t.f(c)).abs());
    }
    for pair in &t.pairs {
        let (b, d) = (pair.birth, pair.death);
        if b == d || t.parent[b] == Some(d) || t.parent[d] == Some(b) {
            continue;
        }
        m.set_sym(b, d, (t.f(d) - t.f(b)).abs());
    }
    m
}

pub fn write_trees(trees: &[MergeTree]) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "trees {}", trees.len()).unwrap();
    for t in trees {
        if t.source_id.is_empty() || t.source_id.chars().any(char::is_whitespace) {
            return Err(Error::Argument(format!("invalid tree id {:?}", t.source_id)));
        }
        writeln!(out, "tree {} {}", t.source_id, t.len()).unwrap();
        for (i, node) in t.nodes.iter().enumerate() {
            writeln!(out, "node {i} {} {}", node.kind.token(), node.f).unwrap();
        }
        for (c, p) in t.edges() {
            writeln!(out, "edge {c} {p}").unwrap();
        }
        for p in &t.pairs {
            writeln!(out, "pair {} {}", p.birth, p.death).unwrap();
        }
    }
    Ok(out)
}

pub fn parse_trees(text: &str) -> Result<Vec<MergeTree>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();
    let (lineno, header) = lines.next().ok_or_else(|| Error::parse(1, "missing trees header"))?;
    let count: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["trees", c] => c
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad tree count: {e}")))?,
        _ => return Err(Error::parse(lineno, format!("expected `trees <count>`, got {header:?}"))),
    };

    let index = |tok: &str, line: usize| -> Result<usize> {
        tok.parse()
            .map_err(|e| Error::parse(line, format!("bad node index {tok:?}: {e}")))
    };

    let mut trees = Vec::with_capacity(count);
    while let Some((lineno, line)) = lines.next() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let (id, n) = match tok.as_slice() {
            ["tree", id, n] => (id.to_string(), index(n, lineno)?),
            _ => return Err(Error::parse(lineno, format!("expected tree header, got {line:?}"))),
        };
        if n == 0 {
            return Err(Error::parse(lineno, "tree with zero nodes"));
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let (l, line) = lines
                .next()
                .ok_or_else(|| Error::parse(lineno, format!("tree {id}: truncated node list")))?;
            match line.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["node", nid, kind, f] => {
                    if index(nid, l)? != i {
                        return Err(Error::parse(l, format!("expected node {i}")));
                    }
                    let kind = NodeKind::from_token(kind)
                        .ok_or_else(|| Error::parse(l, format!("unknown node kind {kind:?}")))?;
                    let f: f64 = f
                        .parse()
                        .map_err(|e| Error::parse(l, format!("bad value {f:?}: {e}")))?;
                    nodes.push(Node { f, kind });
                }
                _ => return Err(Error::parse(l, format!("expected node line, got {line:?}"))),
            }
        }
        let mut parent = vec![None; n];
        let mut pairs = Vec::new();
        while let Some(&(l, line)) = lines.peek() {
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["edge", c, p] => {
                    let (c, p) = (index(c, l)?, index(p, l)?);
                    if c >= n || p >= n || parent[c].is_some() {
                        return Err(Error::parse(l, format!("invalid edge {c} -> {p}")));
                    }
                    parent[c] = Some(p);
                }
                ["pair", b, d] => {
                    let (b, d) = (index(b, l)?, index(d, l)?);
                    if b >= n || d >= n {
                        return Err(Error::parse(l, format!("pair ({b}, {d}) out of range")));
                    }
                    pairs.push(PersistencePair {
                        birth: b,
                        death: d,
                        persistence: nodes[d].f - nodes[b].f,
                    });
                }
                ["tree", ..] => break,
                _ => return Err(Error::parse(l, format!("unexpected line {line:?}"))),
            }
            lines.next();
        }
        let tree = MergeTree {
            source_id: id,
            nodes,
            parent,
            pairs,
        };
        tree.validate()
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        trees.push(tree);
    }
    if trees.len() != count {
        return Err(Error::parse(
            lineno,
            format!("header announces {count} trees, found {}", trees.len()),
        ));
    }
    Ok(trees)
}

pub fn save_trees(trees: &[MergeTree], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_trees(trees)?).map_err(|e| Error::io(path, e))
}

pub fn load_trees(path: impl AsRef<Path>) -> Result<Vec<MergeTree>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trees(&text)
}
