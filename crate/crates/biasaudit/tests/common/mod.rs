//! Store fixtures shared by the report tests and the acceptance runner.
#![allow(dead_code)]

use biasaudit::store::{CellInfo, Outcome, ResultsStore, StoredRun};
use biasaudit::suite::SuiteKind;
use biasaudit_core::{AugmentationLevel, ConvergenceStatus, RunRecord};

pub const CORPORA: [&str; 6] = ["yfcc", "cc", "datacomp", "wit", "laion", "imagenet"];

/// Three-way combinations (dataset positions in `CORPORA`) with their
/// published accuracies.
pub const TOP_PANEL: [([usize; 3], f64); 20] = [
    ([0, 1, 2], 84.7),
    ([0, 1, 3], 83.9),
    ([0, 1, 4], 85.0),
    ([0, 1, 5], 92.7),
    ([0, 2, 3], 85.8),
    ([0, 2, 4], 72.1),
    ([0, 2, 5], 90.2),
    ([0, 3, 4], 86.6),
    ([0, 3, 5], 86.7),
    ([0, 4, 5], 91.9),
    ([1, 2, 3], 83.6),
    ([1, 2, 4], 62.8),
    ([1, 2, 5], 82.8),
    ([1, 3, 4], 84.3),
    ([1, 3, 5], 91.3),
    ([1, 4, 5], 84.1),
    ([2, 3, 4], 71.5),
    ([2, 3, 5], 88.9),
    ([2, 4, 5], 68.2),
    ([3, 4, 5], 90.7),
];

/// Pseudo-set training outcomes: `(images per set, w/o aug, w/ aug)`,
/// `None` marking a run that failed to converge.
pub const PSEUDO: [(usize, Option<f64>, Option<f64>); 4] = [
    (100, Some(100.0), Some(100.0)),
    (1_000, Some(100.0), Some(100.0)),
    (10_000, Some(100.0), None),
    (100_000, None, None),
];

pub const HUMAN_ACCURACIES: [f64; 20] =
    [40., 41., 42., 42., 43., 43., 44., 44., 44., 44., 44., 45., 46., 47., 48., 48., 49., 49., 52., 53.];

pub fn record(val: f64, train: f64, status: ConvergenceStatus) -> RunRecord {
    RunRecord { val_accuracy: val, train_accuracy: train, convergence_status: status, ..Default::default() }
}

pub fn stored(suite: &str, key: String, cell: CellInfo, record: RunRecord) -> StoredRun {
    StoredRun { config_hash: key, suite: suite.into(), cell, outcome: Outcome::Completed { record, transfer: None }, recorded_at_ms: 0 }
}

pub fn combination_runs() -> Vec<StoredRun> {
    TOP_PANEL
        .iter()
        .enumerate()
        .map(|(i, (pos, acc))| {
            let mut cell = CellInfo::new(SuiteKind::Combinations, pos.iter().map(|&p| CORPORA[p].to_string()).collect());
            cell.ordinal = i;
            stored("combinations", format!("combo-{i:02}"), cell, record(*acc, 100.0, ConvergenceStatus::Converged))
        })
        .collect()
}

pub fn pseudo_runs() -> Vec<StoredRun> {
    let mut out = Vec::new();
    for (i, &(n, plain, full)) in PSEUDO.iter().enumerate() {
        for (j, (level, value)) in [(AugmentationLevel::None, plain), (AugmentationLevel::RandCropRandAugMix, full)].into_iter().enumerate() {
            let mut cell = CellInfo::new(SuiteKind::Pseudo, vec!["yfcc".into()]);
            cell.ordinal = i * 2 + j;
            cell.images_per_dataset = n;
            cell.augmentation = level;
            let rec = match value {
                Some(acc) => record(33.3, acc, ConvergenceStatus::Converged),
                None => record(33.3, 34.0, ConvergenceStatus::Failed),
            };
            out.push(stored("pseudo", format!("pseudo-{i}-{j}"), cell, rec));
        }
    }
    out
}

pub fn seed_store(store: &mut ResultsStore, runs: impl IntoIterator<Item = StoredRun>) {
    for r in runs {
        store.append(r).expect("append fixture");
    }
}
