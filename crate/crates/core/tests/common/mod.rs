//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's algorithms; the
//! oracles recompute everything by brute force.

#![allow(dead_code)]

use mtnn::mergetree::{MergeTree, Node, NodeKind, PersistencePair};
use mtnn::rng::Rng;
use mtnn::scalarfield::ScalarField;

/// Min-max normalization written out independently.
pub fn normalized(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 0.0 {
        values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

fn grid_neighbors(dims: &[usize], v: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if dims.len() == 1 {
        if v > 0 {
            out.push(v - 1);
        }
        if v + 1 < dims[0] {
            out.push(v + 1);
        }
    } else {
        let (rows, cols) = (dims[0], dims[1]);
        let (r, c) = (v / cols, v % cols);
        if r > 0 {
            out.push(v - cols);
        }
        if r + 1 < rows {
            out.push(v + cols);
        }
        if c > 0 {
            out.push(v - 1);
        }
        if c + 1 < cols {
            out.push(v + 1);
        }
    }
    out
}

/// Strict total order on vertices: value, then index.
fn below(f: &[f64], a: usize, b: usize) -> bool {
    f[a] < f[b] || (f[a] == f[b] && a < b)
}

/// Connected components (as vertex sets) of the sub-level set strictly below
/// vertex `v`, found by flood fill, restricted to those touching `v`.
fn lower_components(f: &[f64], dims: &[usize], v: usize) -> Vec<Vec<usize>> {
    let n = f.len();
    let mut label = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if !below(f, s, v) || label[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut stack = vec![s];
        let mut members = Vec::new();
        label[s] = id;
        while let Some(x) = stack.pop() {
            members.push(x);
            for y in grid_neighbors(dims, x) {
                if below(f, y, v) && label[y] == usize::MAX {
                    label[y] = id;
                    stack.push(y);
                }
            }
        }
        comps.push(members);
    }
    let mut touching: Vec<usize> = grid_neighbors(dims, v)
        .into_iter()
        .filter(|&u| below(f, u, v))
        .map(|u| label[u])
        .collect();
    touching.sort_unstable();
    touching.dedup();
    touching.into_iter().map(|c| comps[c].clone()).collect()
}

/// Join tree of a field computed from sub-level set components by brute
/// force. Node ids follow the vertex order; a constant field gives a single
/// root node.
pub fn oracle_join_tree(field: &ScalarField) -> MergeTree {
    let f = normalized(&field.values);
    let dims = &field.dims;
    let n = f.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap().then(a.cmp(&b)));
    let top = order[n - 1];
    if n == 1 || f[order[0]] == f[top] {
        return MergeTree {
            source_id: field.id.clone(),
            nodes: vec![Node { f: f[top], kind: NodeKind::Root }],
            parent: vec![None],
            pairs: vec![PersistencePair { birth: 0, death: 0, persistence: 0.0 }],
        };
    }
    // Critical vertices: minima (no lower neighbour), merges (two or more
    // lower components touching) and the global maximum.
    let mut critical = Vec::new();
    let mut kinds = Vec::new();
    let mut lower = Vec::new();
    for &v in &order {
        let comps = lower_components(&f, dims, v);
        let kind = if v == top {
            Some(NodeKind::Root)
        } else if comps.is_empty() {
            Some(NodeKind::Minimum)
        } else if comps.len() >= 2 {
            Some(NodeKind::Saddle)
        } else {
            None
        };
        if let Some(k) = kind {
            critical.push(v);
            kinds.push(k);
            lower.push(comps);
        }
    }
    let m = critical.len();
    // Parent: the first later critical vertex whose touching lower
    // component contains this one.
    let mut parent = vec![None; m];
    for a in 0..m {
        for b in a + 1..m {
            if lower[b].iter().any(|c| c.contains(&critical[a])) {
                parent[a] = Some(b);
                break;
            }
        }
    }
    // Elder rule directly on vertex sets: at each merge, every touching
    // component except the one holding the globally lowest vertex dies.
    let rank = |v: usize| order.iter().position(|&x| x == v).unwrap();
    let node_of = |v: usize| critical.iter().position(|&x| x == v).unwrap();
    let mut pairs = Vec::new();
    for b in 0..m {
        if kinds[b] == NodeKind::Minimum {
            continue;
        }
        let oldest: Vec<usize> = lower[b]
            .iter()
            .map(|c| *c.iter().min_by_key(|&&x| rank(x)).unwrap())
            .collect();
        let survivor = *oldest.iter().min_by_key(|&&x| rank(x)).unwrap();
        for &o in &oldest {
            if o != survivor {
                pairs.push((node_of(o), b));
            }
        }
        if kinds[b] == NodeKind::Root {
            pairs.push((node_of(survivor), b));
        }
    }
    pairs.sort_unstable();
    let nodes: Vec<Node> = critical
        .iter()
        .zip(&kinds)
        .map(|(&v, &kind)| Node { f: f[v], kind })
        .collect();
    MergeTree {
        source_id: field.id.clone(),
        pairs: pairs
            .into_iter()
            .map(|(b, d)| PersistencePair { birth: b, death: d, persistence: nodes[d].f - nodes[b].f })
            .collect(),
        nodes,
        parent,
    }
}

/// LCA by walking ancestor lists.
pub fn oracle_lca(t: &MergeTree, u: usize, v: usize) -> usize {
    let mut anc = vec![u];
    while let Some(p) = t.parent[*anc.last().unwrap()] {
        anc.push(p);
    }
    let mut w = v;
    loop {
        if anc.contains(&w) {
            return w;
        }
        w = t.parent[w].expect("trees share a root");
    }
}

/// Interleaving distance written from the definition: canonical labels,
/// explicit LCA matrices, entry-wise maximum.
pub fn oracle_interleaving(t1: &MergeTree, t2: &MergeTree) -> f64 {
    let a = t1.len().max(t2.len());
    let labels = |t: &MergeTree| -> Vec<usize> {
        let n = t.len();
        let mut lo: Vec<f64> = t.nodes.iter().map(|x| x.f).collect();
        let mut size = vec![1usize; n];
        // Nodes sorted by f bottom up give children before parents.
        let mut by_f: Vec<usize> = (0..n).collect();
        by_f.sort_by(|&x, &y| t.nodes[x].f.partial_cmp(&t.nodes[y].f).unwrap().then(x.cmp(&y)));
        for &v in &by_f {
            if let Some(p) = t.parent[v] {
                lo[p] = lo[p].min(lo[v]);
                size[p] += size[v];
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| {
            t.nodes[x]
                .f
                .partial_cmp(&t.nodes[y].f)
                .unwrap()
                .then(lo[x].partial_cmp(&lo[y]).unwrap())
                .then(size[x].cmp(&size[y]))
                .then(x.cmp(&y))
        });
        let root = (0..n).find(|&v| t.parent[v].is_none()).unwrap();
        order.resize(a, root);
        order
    };
    let (l1, l2) = (labels(t1), labels(t2));
    let mut best = 0.0f64;
    for i in 0..a {
        for j in 0..a {
            let x = t1.nodes[oracle_lca(t1, l1[i], l1[j])].f;
            let y = t2.nodes[oracle_lca(t2, l2[i], l2[j])].f;
            best = best.max((x - y).abs());
        }
    }
    best
}

/// Random field with values drawn from a small integer set so ties are
/// common.
pub fn random_field(rng: &mut Rng, dims: Vec<usize>, levels: usize) -> ScalarField {
    let n: usize = dims.iter().product();
    let values = (0..n).map(|_| rng.int_inclusive(0, levels - 1) as f64).collect();
    ScalarField::new(format!("r{}", rng.next_u64() % 100_000), dims, values).unwrap()
}

/// A random valid merge tree built from a random 1D field.
pub fn random_tree(rng: &mut Rng, id: &str) -> MergeTree {
    let len = rng.int_inclusive(2, 24);
    let mut field = random_field(rng, vec![len], 12);
    field.id = id.to_string();
    mtnn::mergetree::build_join_tree(&field)
}

/// Distance between two equal-length float slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
