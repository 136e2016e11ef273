mod common;

use common::{oracle_interleaving, oracle_lca, random_tree};
use mtnn::groundtruth::{
    canonical_order, interleaving_distance, label_pair, lca_matrix, load_table, pairwise_table,
    relabel_cost, save_table, DistanceTable, PairValues,
};
use mtnn::mergetree::{MergeTree, Node, NodeKind, PersistencePair};
use mtnn::rng::Rng;
use proptest::prelude::*;

fn two_node(id: &str, top: f64) -> MergeTree {
    MergeTree {
        source_id: id.into(),
        nodes: vec![
            Node { f: 0.0, kind: NodeKind::Minimum },
            Node { f: top, kind: NodeKind::Root },
        ],
        parent: vec![Some(1), None],
        pairs: vec![PersistencePair { birth: 0, death: 1, persistence: top }],
    }
}

#[test]
fn two_node_trees_differ_by_root_gap() {
    let d = interleaving_distance(&two_node("a", 2.0), &two_node("b", 3.0)).unwrap();
    assert!((d - 1.0).abs() < 1e-12);
}

#[test]
fn matches_definition_on_random_pairs() {
    let mut rng = Rng::new(5);
    for k in 0..100 {
        let a = random_tree(&mut rng, &format!("a{k}"));
        let b = random_tree(&mut rng, &format!("b{k}"));
        let d = interleaving_distance(&a, &b).unwrap();
        assert!((d - oracle_interleaving(&a, &b)).abs() < 1e-12);
        assert!((d - interleaving_distance(&b, &a).unwrap()).abs() < 1e-12);
        assert!(interleaving_distance(&a, &a).unwrap().abs() < 1e-12);
    }
}

#[test]
fn lca_entries_match_ancestor_walk() {
    let mut rng = Rng::new(8);
    for k in 0..30 {
        let a = random_tree(&mut rng, &format!("a{k}"));
        let b = random_tree(&mut rng, &format!("b{k}"));
        let (la, _) = label_pair(&a, &b).unwrap();
        let m = lca_matrix(&a, &la).unwrap();
        for i in 0..m.size {
            for j in 0..m.size {
                let want = a.f(oracle_lca(&a, la.assignment[i], la.assignment[j]));
                assert_eq!(m.get(i, j), want);
            }
        }
    }
}

proptest! {
    #[test]
    fn distance_is_a_bounded_symmetric_dissimilarity(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = random_tree(&mut Rng::new(s1), "a");
        let b = random_tree(&mut Rng::new(s2), "b");
        let d = interleaving_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, interleaving_distance(&b, &a).unwrap());
        prop_assert_eq!(interleaving_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn lca_dominates_the_diagonal(s in any::<u64>()) {
        let a = random_tree(&mut Rng::new(s), "a");
        let (la, _) = label_pair(&a, &a).unwrap();
        let m = lca_matrix(&a, &la).unwrap();
        for i in 0..m.size {
            for j in 0..m.size {
                prop_assert!(m.get(i, j) >= m.get(i, i).max(m.get(j, j)));
            }
        }
    }

    #[test]
    fn canonical_order_is_a_permutation(s in any::<u64>()) {
        let a = random_tree(&mut Rng::new(s), "a");
        let mut order = canonical_order(&a);
        order.sort_unstable();
        prop_assert_eq!(order, (0..a.len()).collect::<Vec<_>>());
    }

    #[test]
    fn relabel_is_bounded_by_shift_and_half_persistences(
        b1 in 0.0f64..1.0, p1 in 0.0f64..1.0, b2 in 0.0f64..1.0, p2 in 0.0f64..1.0,
    ) {
        let m = PairValues::new(b1, b1 + p1).unwrap();
        let s = PairValues::new(b2, b2 + p2).unwrap();
        let c = relabel_cost(m, s).unwrap();
        prop_assert!(c >= 0.0);
        let shift = (b1 - b2).abs().max((b1 + p1 - b2 - p2).abs());
        prop_assert!(c <= (p1 + p2) / 2.0 + 1e-12);
        prop_assert!(c <= shift + 1e-12);
        prop_assert_eq!(c, relabel_cost(s, m).unwrap());
    }
}

#[test]
fn table_is_normalized_by_its_largest_entry() {
    let mut rng = Rng::new(2);
    let trees: Vec<MergeTree> = (0..12).map(|k| random_tree(&mut rng, &format!("t{k:02}"))).collect();
    let table = pairwise_table(&trees, 2).unwrap();
    let n = trees.len();
    let mut max = 0.0f64;
    for i in 0..n {
        assert_eq!(table.raw(i, i), 0.0);
        for j in 0..n {
            assert_eq!(table.raw(i, j), table.raw(j, i));
            assert!((table.raw(i, j) - oracle_interleaving(&trees[i], &trees[j])).abs() < 1e-12);
            max = max.max(table.raw(i, j));
        }
    }
    assert_eq!(table.norm, max);
    let top = (0..n * n).map(|k| table.normalized(k / n, k % n)).fold(0.0, f64::max);
    assert_eq!(top, 1.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    save_table(&table, &path).unwrap();
    assert_eq!(load_table(&path).unwrap(), table);
    assert_eq!(DistanceTable::parse_csv(&table.to_csv()).unwrap(), table);
}

#[test]
fn worker_count_does_not_change_the_table() {
    let mut rng = Rng::new(9);
    let trees: Vec<MergeTree> = (0..10).map(|k| random_tree(&mut rng, &format!("t{k}"))).collect();
    assert_eq!(pairwise_table(&trees, 1).unwrap(), pairwise_table(&trees, 3).unwrap());
}
