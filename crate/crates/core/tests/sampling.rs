use std::collections::BTreeSet;

use biasaudit_core::dataset::{build_pseudo_datasets, sample_split};
use biasaudit_core::grid::{cell_seed, enumerate_combinations};
use biasaudit_core::{DatasetManifest, ImageRecord, PseudoDatasetSpec};
use proptest::prelude::*;

fn manifest(n: usize) -> DatasetManifest {
    let records = (0..n).map(|i| ImageRecord::new(format!("img-{i:05}"), format!("{i}.png"), 64, 48)).collect();
    DatasetManifest::new("src", "Source", "/data/src", records, None).unwrap()
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_exact_disjoint_and_replayable(n in 1usize..400, a in 0usize..200, b in 0usize..200, seed: u64) {
        let m = manifest(n);
        match sample_split(&m, a, b, seed) {
            Ok(s) => {
                prop_assert!(a + b <= n);
                prop_assert_eq!(s.train_indices.len(), a);
                prop_assert_eq!(s.val_indices.len(), b);
                prop_assert!(s.is_disjoint());
                prop_assert!(s.train_indices.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(s.train_indices.iter().chain(&s.val_indices).all(|&i| i < n));
                prop_assert_eq!(sample_split(&m, a, b, seed).unwrap(), s);
            }
            Err(_) => prop_assert!(a + b > n),
        }
    }

    #[test]
    fn pseudo_sets_are_pairwise_disjoint(k in 1usize..6, per in 1usize..40, val in 0usize..10, seed: u64) {
        let m = manifest(k * (per + val) + 7);
        let spec = PseudoDatasetSpec { source_dataset_id: "src".into(), k, n_per_set: per, n_val_per_set: val, seed };
        let sets = build_pseudo_datasets(&m, &spec).unwrap();
        prop_assert_eq!(sets.len(), k);
        let mut seen = BTreeSet::new();
        for s in &sets {
            prop_assert_eq!(s.train_indices.len(), per);
            prop_assert_eq!(s.val_indices.len(), val);
            for &i in s.train_indices.iter().chain(&s.val_indices) {
                prop_assert!(seen.insert(i), "index {} reused", i);
            }
        }
        prop_assert_eq!(build_pseudo_datasets(&m, &spec).unwrap(), sets);
    }

    #[test]
    fn combinations_count_and_uniqueness(n in 1usize..9, k in 1usize..9) {
        let pool: Vec<usize> = (0..n).collect();
        match enumerate_combinations(&pool, k) {
            Ok(rows) => {
                prop_assert_eq!(rows.len(), binomial(n, k));
                let unique: BTreeSet<_> = rows.iter().cloned().collect();
                prop_assert_eq!(unique.len(), rows.len());
                prop_assert!(rows.iter().all(|r| r.len() == k && r.windows(2).all(|w| w[0] < w[1])));
                prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            }
            Err(_) => prop_assert!(k > n),
        }
    }
}

#[test]
fn seeds_change_the_split() {
    let m = manifest(1000);
    let splits: BTreeSet<Vec<usize>> = (0..10).map(|s| sample_split(&m, 100, 50, s).unwrap().train_indices).collect();
    assert_eq!(splits.len(), 10);
}

#[test]
fn split_ignores_manifest_line_order() {
    let forward = manifest(300);
    let mut records: Vec<_> = forward.images().to_vec();
    records.reverse();
    let backward = DatasetManifest::new("src", "Source", "/data/src", records, None).unwrap();
    let ids = |m: &DatasetManifest| -> Vec<String> {
        sample_split(m, 40, 10, 3).unwrap().train_indices.iter().map(|&i| m.record(i).image_id.clone()).collect()
    };
    assert_eq!(ids(&forward), ids(&backward));
}

#[test]
fn table_panel_has_twenty_rows() {
    let pool = ["yfcc", "cc", "datacomp", "wit", "laion", "imagenet"];
    let rows = enumerate_combinations(&pool, 3).unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0], ["yfcc", "cc", "datacomp"]);
    assert_eq!(rows[19], ["wit", "laion", "imagenet"]);
    for name in pool {
        assert_eq!(rows.iter().filter(|r| r.contains(&name)).count(), 10);
    }
}

#[test]
fn cell_seeds_are_distinct() {
    let seeds: BTreeSet<u64> = (0..500).map(|i| cell_seed(7, i)).collect();
    assert_eq!(seeds.len(), 500);
    assert_eq!(cell_seed(7, 3), cell_seed(7, 3));
}
