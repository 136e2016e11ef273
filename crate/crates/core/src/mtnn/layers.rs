//! Building blocks of the network, each recorded on a [`Graph`].

use super::config::Activation;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// `ReLU(A_hat H W + b)` with `A_hat` the symmetrically normalized
/// adjacency including self loops.
pub fn gcn_layer(g: &mut Graph, h: Var, a_hat: Var, w: Var, b: Var) -> Result<Var> {
    let (d_in, d_out) = g
        .value(w)
        .dims2()
        .ok_or_else(|| Error::shape("gcn_layer", "weight must be a matrix"))?;
    // Multiply on the narrow side first.
    let z = if d_out < d_in {
        let hw = g.matmul(h, w)?;
        g.matmul(a_hat, hw)?
    } else {
        let ah = g.matmul(a_hat, h)?;
        g.matmul(ah, w)?
    };
    let z = g.add(z, b)?;
    g.relu(z)
}

/// `MLP((1 + eps) h + sum of neighbour h)` with a Linear-ReLU-Linear MLP.
/// `adj` is the plain 0/1 adjacency without self loops.
#[allow(clippy::too_many_arguments)]
pub fn gin_layer(
    g: &mut Graph,
    h: Var,
    adj: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    eps: Var,
) -> Result<Var> {
    let neigh = g.matmul(adj, h)?;
    let scaled = g.mul(h, eps)?;
    let own = g.add(h, scaled)?;
    let agg = g.add(own, neigh)?;
    let z = g.matmul(agg, w1)?;
    let z = g.add(z, b1)?;
    let z = g.relu(z)?;
    let z = g.matmul(z, w2)?;
    g.add(z, b2)
}

/// `tanh(mean_n(h_n) W_c)` as a `1 x m` row.
pub fn global_context_plain(g: &mut Graph, h: Var, wc: Var) -> Result<Var> {
    let n = rows(g, h, "global_context_plain")?;
    let s = g.sum_rows(h)?;
    let mean = g.scale(s, 1.0 / n as f64)?;
    let z = g.matmul(mean, wc)?;
    g.tanh(z)
}

/// `tanh((1/|V|) sum_n w_n h_n W_c)` with per-node weights `w` (`n x 1`).
pub fn topo_context(g: &mut Graph, h: Var, wc: Var, weights: &Tensor) -> Result<Var> {
    let n = rows(g, h, "topo_context")?;
    if weights.shape() != [n, 1] {
        return Err(Error::shape(
            "topo_context",
            format!("weights {:?} for {n} nodes", weights.shape()),
        ));
    }
    let w = g.constant(weights.clone());
    let weighted = g.mul(h, w)?;
    let s = g.sum_rows(weighted)?;
    let mean = g.scale(s, 1.0 / n as f64)?;
    let z = g.matmul(mean, wc)?;
    g.tanh(z)
}

/// Attention-weighted node embeddings and their sum.
pub struct Pooled {
    /// `sigmoid(h_n . c)` per node, `n x 1`.
    pub attention: Var,
    /// Reweighted node embeddings, `n x m`.
    pub nodes: Var,
    /// Sum of reweighted embeddings, `1 x m`.
    pub pooled: Var,
}

pub fn attention_pool(g: &mut Graph, h: Var, c: Var) -> Result<Pooled> {
    let ct = g.transpose(c)?;
    let scores = g.matmul(h, ct)?;
    let attention = g.sigmoid(scores)?;
    let nodes = g.mul(h, attention)?;
    let pooled = g.sum_rows(nodes)?;
    Ok(Pooled {
        attention,
        nodes,
        pooled,
    })
}

/// Tensor network comparison: `act(H1 W_t[k] H2^T + [H1, H2] V + b)` for
/// every slice `k`, as a `1 x K` row. `v` is stored as `2m x K`.
pub fn ntn(
    g: &mut Graph,
    h1: Var,
    h2: Var,
    w: Var,
    v: Var,
    b: Var,
    act: Activation,
) -> Result<Var> {
    let bil = g.bilinear(h1, w, h2)?;
    let cat = g.concat_cols(h1, h2)?;
    let lin = g.matmul(cat, v)?;
    let z = g.add(bil, lin)?;
    let z = g.add(z, b)?;
    match act {
        Activation::Relu => g.relu(z),
        Activation::Tanh => g.tanh(z),
        Activation::Sigmoid => g.sigmoid(z),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bin of a similarity in `[0, 1]`: half-open bins `[k/B, (k+1)/B)` with 1.0
/// in the last bin.
pub fn bin_of(s: f64, bins: usize) -> usize {
    ((s * bins as f64).floor() as usize).min(bins - 1)
}

/// Normalized histogram of `sigmoid(H1 H2^T)` after zero-padding the smaller
/// embedding matrix to `max(n1, n2)` rows. Not differentiable; callers feed
/// the result into the graph as a constant.
pub fn node_histogram(h1: &Tensor, h2: &Tensor, bins: usize) -> Result<Vec<f64>> {
    let (n1, m1) = h1
        .dims2()
        .ok_or_else(|| Error::shape("node_histogram", "embeddings must be matrices"))?;
    let (n2, m2) = h2
        .dims2()
        .ok_or_else(|| Error::shape("node_histogram", "embeddings must be matrices"))?;
    if m1 != m2 || bins == 0 {
        return Err(Error::shape(
            "node_histogram",
            format!("widths {m1} vs {m2}, {bins} bins"),
        ));
    }
    let n = n1.max(n2);
    let mut counts = vec![0usize; bins];
    let (a, b) = (h1.data(), h2.data());
    for i in 0..n1 {
        let ri = &a[i * m1..(i + 1) * m1];
        for j in 0..n2 {
            let rj = &b[j * m1..(j + 1) * m1];
            let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            counts[bin_of(sigmoid(dot), bins)] += 1;
        }
    }
    // Every product with a padding row is exactly zero.
    counts[bin_of(0.5, bins)] += n * n - n1 * n2;
    let total = (n * n) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Scoring head: ReLU between layers, sigmoid on the scalar output.
pub fn mlp_head(g: &mut Graph, x: Var, layers: &[(Var, Var)]) -> Result<Var> {
    let mut z = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        z = g.matmul(z, w)?;
        z = g.add(z, b)?;
        z = if i + 1 < layers.len() {
            g.relu(z)?
        } else {
            g.sigmoid(z)?
        };
    }
    Ok(z)
}

fn rows(g: &Graph, v: Var, op: &'static str) -> Result<usize> {
    match g.value(v).dims2() {
        Some((n, _)) if n > 0 => Ok(n),
        _ => Err(Error::shape(op, format!("need a non-empty matrix, got {:?}", g.value(v).shape()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn gcn_three_node_path_by_hand() {
        // Path 0 - 1 - 2: degrees with self loops 2, 3, 2.
        let mut g = Graph::new();
        let s = |a: f64, b: f64| 1.0 / (a * b).sqrt();
        let a_hat = Tensor::from_rows(&[
            vec![s(2.0, 2.0), s(2.0, 3.0), 0.0],
            vec![s(3.0, 2.0), s(3.0, 3.0), s(3.0, 2.0)],
            vec![0.0, s(2.0, 3.0), s(2.0, 2.0)],
        ])
        .unwrap();
        let h = g.constant(Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap());
        let a = g.constant(a_hat);
        let w = g.constant(Tensor::row_vector(&[1.0, -1.0]));
        let b = g.constant(Tensor::row_vector(&[0.5, 0.0]));
        let out = gcn_layer(&mut g, h, a, w, b).unwrap();
        let agg = [
            0.5 * 1.0 + 2.0 / 6f64.sqrt(),
            1.0 / 6f64.sqrt() + 2.0 / 3.0 + 3.0 / 6f64.sqrt(),
            2.0 / 6f64.sqrt() + 0.5 * 3.0,
        ];
        let want: Vec<f64> = agg.iter().flat_map(|&x| [x + 0.5, 0.0]).collect();
        assert!(close(g.value(out).data(), &want, 1e-12));
    }

    #[test]
    fn gin_star_by_hand() {
        // Centre 0 with leaves 1, 2; eps = 0.5; MLP: w1 = [2], w2 = [1], b = 0.
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_rows(&[vec![1.0], vec![-2.0], vec![3.0]]).unwrap());
        let adj = g.constant(
            Tensor::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]])
                .unwrap(),
        );
        let w1 = g.constant(Tensor::scalar(2.0));
        let w2 = g.constant(Tensor::scalar(1.0));
        let z = g.constant(Tensor::scalar(0.0));
        let eps = g.constant(Tensor::scalar(0.5));
        let out = gin_layer(&mut g, h, adj, w1, z, w2, z, eps).unwrap();
        // centre 1.5 + 1 = 2.5 -> 5; leaf1 -3 + 1 = -2 -> 0; leaf2 4.5 + 1 = 5.5 -> 11.
        assert!(close(g.value(out).data(), &[5.0, 0.0, 11.0], 1e-12));
    }

    #[test]
    fn contexts_by_hand() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![2.0, 1.0]]).unwrap());
        let wc = g.constant(Tensor::identity(2));
        let c = global_context_plain(&mut g, h, wc).unwrap();
        assert!(close(g.value(c).data(), &[1f64.tanh(), 1f64.tanh()], 1e-15));
        let w = Tensor::from_rows(&[vec![0.5], vec![0.25], vec![0.25]]).unwrap();
        let c = topo_context(&mut g, h, wc, &w).unwrap();
        let want = [(0.5 + 0.5) / 3.0, (0.5 + 0.25) / 3.0];
        assert!(close(g.value(c).data(), &[f64::tanh(want[0]), f64::tanh(want[1])], 1e-15));
        let zero = g.constant(Tensor::zeros(&[2, 2]));
        let c = global_context_plain(&mut g, h, zero).unwrap();
        assert!(g.value(c).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn attention_by_hand() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap());
        let c = g.constant(Tensor::row_vector(&[0.5, 0.25]));
        let p = attention_pool(&mut g, h, c).unwrap();
        let (s0, s1) = (sigmoid(1.0), sigmoid(1.25));
        assert!(close(g.value(p.attention).data(), &[s0, s1], 1e-15));
        assert!(close(g.value(p.pooled).data(), &[s0 + 3.0 * s1, 2.0 * s0 - s1], 1e-15));
        let zero = g.constant(Tensor::row_vector(&[0.0, 0.0]));
        let p = attention_pool(&mut g, h, zero).unwrap();
        assert!(close(g.value(p.pooled).data(), &[2.0, 0.5], 1e-15));
    }

    #[test]
    fn ntn_by_hand() {
        let mut g = Graph::new();
        let h1 = g.constant(Tensor::row_vector(&[1.0, 2.0]));
        let h2 = g.constant(Tensor::row_vector(&[3.0, -1.0]));
        // Slice 0 identity, slice 1 [[0, 1], [0, 0]].
        let w = g.constant(Tensor::new(vec![2, 2, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap());
        let v = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let b = g.constant(Tensor::row_vector(&[0.0, -1.0]));
        let out = ntn(&mut g, h1, h2, w, v, b, Activation::Relu).unwrap();
        // slice 0: <h1, h2> = 1 plus h1[0] = 1 -> 2; slice 1: h1[0] h2[1] = -1, plus h2[1] = -1, minus 1 -> relu 0.
        assert!(close(g.value(out).data(), &[2.0, 0.0], 1e-15));
    }

    #[test]
    fn histogram_rules() {
        let zeros = Tensor::zeros(&[3, 4]);
        let hist = node_histogram(&zeros, &Tensor::zeros(&[2, 4]), 16).unwrap();
        assert_eq!(hist[8], 1.0);
        assert_eq!(hist.iter().sum::<f64>(), 1.0);
        assert_eq!(bin_of(1.0, 16), 15);
        assert_eq!(bin_of(0.0, 16), 0);
        assert_eq!(bin_of(0.0625, 16), 1);
        // One node each with a large positive product: one entry near 1.
        let a = Tensor::row_vector(&[10.0]);
        let hist = node_histogram(&a, &a, 4).unwrap();
        assert_eq!(hist, vec![0.0, 0.0, 0.0, 1.0]);
        // Padding: 1 x 2 against 2 nodes -> 4 cells, 2 padded at 0.5.
        let b = Tensor::from_rows(&[vec![10.0], vec![-10.0]]).unwrap();
        let hist = node_histogram(&a, &b, 4).unwrap();
        assert_eq!(hist, vec![0.25, 0.0, 0.5, 0.25]);
    }

    #[test]
    fn head_range_and_zero_weights() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row_vector(&[1.0, -2.0]));
        let w = g.constant(Tensor::zeros(&[2, 2]));
        let b = g.constant(Tensor::zeros(&[1, 2]));
        let w2 = g.constant(Tensor::zeros(&[2, 1]));
        let b2 = g.constant(Tensor::zeros(&[1, 1]));
        let out = mlp_head(&mut g, x, &[(w, b), (w2, b2)]).unwrap();
        assert_eq!(g.value(out).item(), 0.5);
        // Hand 2-2-1: w = I, b = 0, w2 = [1, 1], b2 = -1: relu([1, -2]) = [1, 0] -> sigmoid(0).
        let wi = g.constant(Tensor::identity(2));
        let w2 = g.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let b2 = g.constant(Tensor::scalar(-1.0));
        let out = mlp_head(&mut g, x, &[(wi, b), (w2, b2)]).unwrap();
        assert_eq!(g.value(out).item(), 0.5);
    }
}
