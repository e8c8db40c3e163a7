use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use biasaudit::config::DatasetEntry;
use biasaudit::store::{now_ms, Outcome, ResultsStore, StoredRun};
use biasaudit::suite::{run_suite, Cell, CellExecutor, SuiteSpec, TrainingExecutor};
use biasaudit::{Error, Result};
use biasaudit_core::RunRecord;

#[derive(Default)]
struct Mock {
    calls: AtomicUsize,
    seen: Mutex<Vec<String>>,
    fail_ordinal: Option<usize>,
}

impl CellExecutor for Mock {
    fn execute(&self, _spec: &SuiteSpec, cell: &Cell) -> Result<Outcome> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().unwrap().push(cell.key.clone());
        if Some(cell.info.ordinal) == self.fail_ordinal {
            return Err(Error::Format("boom".into()));
        }
        let record = RunRecord { val_accuracy: cell.info.ordinal as f64, ..Default::default() };
        Ok(Outcome::Completed { record, transfer: None })
    }
}

const AUG_GRID: &str = r"
name: aug
kind: augmentation
seed: 5
pool:
  - { id: yfcc, source: synthetic, style: alpha, count: 80 }
  - { id: cc, source: synthetic, style: beta, count: 80 }
  - { id: datacomp, source: synthetic, style: gamma, count: 80 }
base: { n_val: 10 }
grid:
  levels: [none, rand_crop]
  scales: [20, 40]
";

fn spec() -> SuiteSpec {
    SuiteSpec::parse(AUG_GRID).unwrap()
}

#[test]
fn rerun_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec();
    let mock = Mock::default();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let first = run_suite(&spec, &mut store, &mock, false).unwrap();
    assert_eq!((first.cells, first.executed, first.skipped), (4, 4, 0));
    let lines = std::fs::read_to_string(dir.path().join("runs.jsonl")).unwrap().lines().count();

    let mut reopened = ResultsStore::open(dir.path()).unwrap();
    let second = run_suite(&spec, &mut reopened, &mock, false).unwrap();
    assert_eq!((second.executed, second.skipped), (0, 4));
    assert_eq!(mock.calls.load(Ordering::SeqCst), 4);
    assert_eq!(std::fs::read_to_string(dir.path().join("runs.jsonl")).unwrap().lines().count(), lines);
}

#[test]
fn precomputed_cell_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec();
    let cells = spec.cells().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    store
        .append(StoredRun {
            config_hash: cells[2].key.clone(),
            suite: spec.name.clone(),
            cell: cells[2].info.clone(),
            outcome: Outcome::Completed { record: RunRecord::default(), transfer: None },
            recorded_at_ms: now_ms(),
        })
        .unwrap();
    let mock = Mock::default();
    let summary = run_suite(&spec, &mut store, &mock, false).unwrap();
    assert_eq!(summary.executed, 3);
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);
    assert!(!mock.seen.lock().unwrap().contains(&cells[2].key));
    assert_eq!(store.latest().len(), 4);
}

#[test]
fn failures_are_recorded_and_retried() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let flaky = Mock { fail_ordinal: Some(1), ..Default::default() };
    let s = run_suite(&spec, &mut store, &flaky, false).unwrap();
    assert_eq!((s.executed, s.failed), (4, 1));
    let failed: Vec<_> = store.latest().into_iter().filter(|r| !r.outcome.is_done()).collect();
    assert_eq!(failed.len(), 1);
    assert!(matches!(&failed[0].outcome, Outcome::Failed { error } if error.contains("boom")));

    let steady = Mock::default();
    let s = run_suite(&spec, &mut store, &steady, false).unwrap();
    assert_eq!((s.executed, s.failed, s.skipped), (1, 0, 3));
    assert_eq!(store.history().len(), 5);
    assert!(store.latest().iter().all(|r| r.outcome.is_done()));
}

#[test]
fn force_reruns_everything() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    run_suite(&spec, &mut store, &Mock::default(), false).unwrap();
    let s = run_suite(&spec, &mut store, &Mock::default(), true).unwrap();
    assert_eq!(s.executed, 4);
    assert_eq!(store.history().len(), 8);
    assert_eq!(store.latest().len(), 4);
}

#[test]
fn parallel_workers_cover_each_cell_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = spec();
    spec.parallelism = 3;
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let mock = Mock::default();
    run_suite(&spec, &mut store, &mock, false).unwrap();
    let seen = mock.seen.lock().unwrap();
    let unique: BTreeSet<&String> = seen.iter().collect();
    assert_eq!((seen.len(), unique.len()), (4, 4));
}

#[test]
fn growing_the_grid_keeps_existing_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    run_suite(&spec(), &mut store, &Mock::default(), false).unwrap();
    let grown = SuiteSpec::parse(&AUG_GRID.replace("scales: [20, 40]", "scales: [20, 40, 60]")).unwrap();
    let mock = Mock::default();
    let s = run_suite(&grown, &mut store, &mock, false).unwrap();
    assert_eq!((s.cells, s.executed), (6, 2));
}

#[test]
fn cell_keys_separate_kinds_and_values() {
    let a = spec().cells().unwrap();
    let keys: BTreeSet<&String> = a.iter().map(|c| &c.key).collect();
    assert_eq!(keys.len(), 4);
    let scale = SuiteSpec::parse(&AUG_GRID.replace("kind: augmentation", "kind: data_scale")).unwrap().cells().unwrap();
    assert!(scale.iter().all(|c| !keys.contains(&c.key)));
}

#[test]
fn real_training_cell_runs_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let yaml = r"
name: tiny
kind: model_size
seed: 1
pool:
  - { id: a, source: synthetic, style: alpha, count: 40 }
  - { id: b, source: synthetic, style: delta, count: 40 }
base:
  n_train: 16
  n_val: 8
  train: { preset: desk, ref_epochs: 2, batch_size: 16, ref_dataset_size: 32 }
grid:
  widths: [0.25]
";
    let spec = SuiteSpec::parse(yaml).unwrap();
    let mut store = ResultsStore::open(&dir.path().join("store")).unwrap();
    let exec = TrainingExecutor { out_dir: Some(dir.path().join("runs")) };
    let s = run_suite(&spec, &mut store, &exec, false).unwrap();
    assert_eq!((s.executed, s.failed), (1, 0));
    let run = store.latest()[0].clone();
    let record = run.outcome.record().unwrap();
    assert_eq!(record.iterations, 4);
    assert_eq!(record.class_names, ["a", "b"]);
    assert_eq!(record.loss_series.len(), 4);
    assert!(record.loss_series.iter().all(|l| l.is_finite()));
    assert!(run.cell.param_count > 0);
    let run_dirs: Vec<_> = std::fs::read_dir(dir.path().join("runs/tiny")).unwrap().collect();
    assert_eq!(run_dirs.len(), 1);
}

#[test]
fn unknown_dataset_style_is_a_failed_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = spec();
    spec.pool[0] = DatasetEntry::synthetic("yfcc", "no-such-style", 80, 0);
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let s = run_suite(&spec, &mut store, &TrainingExecutor::default(), false).unwrap();
    assert_eq!(s.failed, 4);
}

#[test]
fn growing_the_pool_keeps_combination_keys() {
    let yaml = |n: usize| {
        let pool: String = ["alpha", "beta", "gamma", "delta", "epsilon"][..n]
            .iter()
            .enumerate()
            .map(|(i, s)| format!("  - {{ id: d{i}, source: synthetic, style: {s}, count: 50 }}\n"))
            .collect();
        format!("name: combos\nkind: combinations\nseed: 2\npool:\n{pool}")
    };
    let small = SuiteSpec::parse(&yaml(4)).unwrap().cells().unwrap();
    let large = SuiteSpec::parse(&yaml(5)).unwrap().cells().unwrap();
    assert_eq!((small.len(), large.len()), (4, 10));
    let keys: BTreeSet<&String> = large.iter().map(|c| &c.key).collect();
    assert!(small.iter().all(|c| keys.contains(&c.key)));
}
