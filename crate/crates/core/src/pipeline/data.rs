use crate::error::{Error, Result};
use crate::groundtruth::DistanceTable;
use crate::rng::Rng;

/// Seeded 80/20 split of `0..n` into train and test indices, each sorted.
pub fn split_trees(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 5 {
        return Err(Error::Argument(format!("need at least 5 trees to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::derive(seed, 0x5917).shuffle(&mut idx);
    let n_train = (n * 4 + 2) / 5;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A training or evaluation pair: tree positions `i < j` and the normalized
/// target distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub target: f64,
}

/// All unordered pairs among `members` (positions into the table's tree
/// list), optionally subsampled to `limit` pairs without replacement.
pub fn make_pairs(
    members: &[usize],
    table: &DistanceTable,
    limit: Option<(usize, u64)>,
) -> Result<Vec<Pair>> {
    let n = table.len();
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&m| m >= n) {
        return Err(Error::Data(format!(
            "tree position {bad} has no row in a {n}-tree distance table"
        )));
    }
    let mut pairs = Vec::with_capacity(sorted.len() * sorted.len().saturating_sub(1) / 2);
    for (a, &i) in sorted.iter().enumerate() {
        for &j in &sorted[a + 1..] {
            let target = table.normalized(i, j);
            if !target.is_finite() {
                return Err(Error::Data(format!("missing distance for trees {i}, {j}")));
            }
            pairs.push(Pair { i, j, target });
        }
    }
    if let Some((limit, seed)) = limit {
        if limit < pairs.len() {
            Rng::derive(seed, 0xa1b).shuffle(&mut pairs);
            pairs.truncate(limit);
            pairs.sort_by_key(|p| (p.i, p.j));
        }
    }
    Ok(pairs)
}
