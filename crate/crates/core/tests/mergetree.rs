mod common;

use common::{oracle_join_tree, random_field};
use mtnn::mergetree::{
    build_join_tree, load_trees, persistence_matrix, persistence_pairs, save_trees, simplify,
    MergeTree, NodeKind,
};
use mtnn::rng::Rng;
use mtnn::scalarfield::{generate, EnsembleSpec, ScalarField};
use proptest::prelude::*;

fn field_strategy() -> impl Strategy<Value = ScalarField> {
    prop_oneof![
        (1usize..=32).prop_flat_map(|n| prop::collection::vec(0u8..10, n).prop_map(move |v| {
            ScalarField::new("p", vec![n], v.into_iter().map(f64::from).collect()).unwrap()
        })),
        (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| {
            prop::collection::vec(-1.0f64..1.0, r * c)
                .prop_map(move |v| ScalarField::new("q", vec![r, c], v).unwrap())
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn join_tree_matches_brute_force(field in field_strategy()) {
        let t = build_join_tree(&field);
        prop_assert_eq!(t, oracle_join_tree(&field));
    }

    #[test]
    fn built_trees_are_valid(field in field_strategy()) {
        let t = build_join_tree(&field);
        prop_assert!(t.validate().is_ok());
        prop_assert_eq!(t.nodes.iter().filter(|n| n.kind == NodeKind::Root).count(), 1);
        prop_assert_eq!(t.pairs.clone(), persistence_pairs(&t));
    }

    #[test]
    fn simplify_is_idempotent_and_monotone(field in field_strategy(), a in 0.0f64..0.6, b in 0.0f64..0.6) {
        let t = build_join_tree(&field);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s_lo = simplify(&t, lo).unwrap();
        let s_hi = simplify(&t, hi).unwrap();
        prop_assert!(s_lo.validate().is_ok());
        prop_assert_eq!(simplify(&s_hi, hi).unwrap(), s_hi.clone());
        prop_assert!(s_hi.len() <= s_lo.len());
        let global = s_hi.global_pair().unwrap();
        for p in &s_hi.pairs {
            if p != global {
                prop_assert!(p.persistence >= hi);
            }
        }
        // The global pair spans the whole range and always survives.
        prop_assert_eq!(s_hi.global_pair().unwrap().persistence, t.global_pair().unwrap().persistence);
    }

    #[test]
    fn persistence_matrix_is_symmetric_with_zero_diagonal(field in field_strategy()) {
        let t = build_join_tree(&field);
        let e = persistence_matrix(&t);
        for u in 0..t.len() {
            prop_assert_eq!(e.get(u, u), 0.0);
            for v in 0..t.len() {
                prop_assert_eq!(e.get(u, v), e.get(v, u));
                prop_assert!(e.get(u, v) >= 0.0);
            }
        }
    }
}

#[test]
fn oracle_agrees_on_tie_heavy_fields() {
    let mut rng = Rng::new(11);
    for _ in 0..200 {
        let len = rng.int_inclusive(1, 32);
        let f = random_field(&mut rng, vec![len], 4);
        assert_eq!(build_join_tree(&f), oracle_join_tree(&f), "{:?}", f.values);
    }
    for _ in 0..50 {
        let dims = vec![rng.int_inclusive(1, 8), rng.int_inclusive(1, 8)];
        let f = random_field(&mut rng, dims, 5);
        assert_eq!(build_join_tree(&f), oracle_join_tree(&f), "{:?}", f.values);
    }
}

#[test]
fn w_shaped_profile() {
    let f = ScalarField::new("w", vec![5], vec![0.0, 3.0, 1.0, 2.0, 4.0]).unwrap();
    let t = build_join_tree(&f);
    let values: Vec<f64> = t.nodes.iter().map(|n| n.f).collect();
    assert_eq!(values, vec![0.0, 0.25, 0.75, 1.0]);
    assert_eq!(t.parent, vec![Some(2), Some(2), Some(3), None]);
    let pairs: Vec<(usize, usize)> = t.pairs.iter().map(|p| (p.birth, p.death)).collect();
    assert_eq!(pairs, vec![(0, 3), (1, 2)]);
}

#[test]
fn generated_ensemble_round_trips_through_disk() {
    let mut spec = EnsembleSpec::gauss2d(6, 12, 12, 3);
    spec.drift = 0.5;
    let trees: Vec<MergeTree> = generate(&spec)
        .unwrap()
        .iter()
        .map(|f| simplify(&build_join_tree(f), 0.02).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trees.txt");
    save_trees(&trees, &path).unwrap();
    assert_eq!(load_trees(&path).unwrap(), trees);
}
