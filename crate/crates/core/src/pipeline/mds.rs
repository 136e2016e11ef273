use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns of a row-major `n x n` matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n {
        return Err(Error::shape("symmetric_eigen", format!("{} entries for n = {n}", a.len())));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b * n + b].total_cmp(&m[a * n + a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        // Fix the sign: the largest-magnitude component is positive.
        let big = (0..n)
            .max_by(|&a, &b| v[a * n + k].abs().total_cmp(&v[b * n + k].abs()))
            .unwrap_or(0);
        let sign = if v[big * n + k] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[r * n + col] = sign * v[r * n + k];
        }
    }
    Ok((values, vectors))
}

/// Classical multidimensional scaling of a distance matrix to two
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsResult {
    pub coords: Vec<[f64; 2]>,
    /// Mean distance from each item to the others.
    pub mean_dist: Vec<f64>,
    /// The two leading eigenvalues of the double-centred matrix.
    pub eigenvalues: [f64; 2],
}

impl MdsResult {
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = String::from("id,x,y,mean_dist\n");
        for ((id, c), m) in ids.iter().zip(&self.coords).zip(&self.mean_dist) {
            writeln!(out, "{id},{:e},{:e},{:e}", c[0], c[1], m).unwrap();
        }
        out
    }
}

/// Eigenvalues below this fraction of the leading one are rounding noise and
/// count as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// `B = -1/2 J D^2 J`, coordinates from the two leading eigenpairs
/// (negative or negligible eigenvalues contribute zero).
pub fn mds(dist: &[f64], n: usize) -> Result<MdsResult> {
    if n < 3 || dist.len() != n * n {
        return Err(Error::Argument(format!(
            "MDS needs a square table of at least 3 items, got {} entries",
            dist.len()
        )));
    }
    let sq: Vec<f64> = dist.iter().map(|d| d * d).collect();
    let row_mean: Vec<f64> = (0..n)
        .map(|i| sq[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let total = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // Columns means equal row means for a symmetric table.
            b[i * n + j] = -0.5 * (sq[i * n + j] - row_mean[i] - row_mean[j] + total);
        }
    }
    let (values, vectors) = symmetric_eigen(&b, n)?;
    let floor = EIGEN_FLOOR * values[0].abs();
    let keep = |v: f64| if v > floor { v } else { 0.0 };
    let lam = [keep(values[0]), keep(values[1])];
    let coords = (0..n)
        .map(|r| {
            [
                vectors[r * n] * lam[0].sqrt(),
                vectors[r * n + 1] * lam[1].sqrt(),
            ]
        })
        .collect();
    let mean_dist = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| dist[i * n + j]).sum::<f64>() / (n - 1) as f64)
        .collect();
    Ok(MdsResult {
        coords,
        mean_dist,
        eigenvalues: [values[0], values[1]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_known_matrix() {
        // [[2, 1], [1, 2]] has eigenvalues 3 and 1.
        let (vals, vecs) = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        let h = 0.5f64.sqrt();
        assert!((vecs[0] - h).abs() < 1e-14 && (vecs[2] - h).abs() < 1e-14);
    }

    #[test]
    fn identical_items_sit_at_origin() {
        let r = mds(&[0.0; 16], 4).unwrap();
        assert!(r.coords.iter().all(|c| c[0] == 0.0 && c[1] == 0.0));
    }

    #[test]
    fn square_is_recovered() {
        // Unit square corners: sides 1, diagonals sqrt 2.
        let s = 2f64.sqrt();
        let d = [0.0, 1.0, s, 1.0, 1.0, 0.0, 1.0, s, s, 1.0, 0.0, 1.0, 1.0, s, 1.0, 0.0];
        let r = mds(&d, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (r.coords[i], r.coords[j]);
                let e = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!((e - d[i * 4 + j]).abs() < 1e-10);
            }
        }
        assert!((r.mean_dist[0] - (2.0 + s) / 3.0).abs() < 1e-15);
    }
}
