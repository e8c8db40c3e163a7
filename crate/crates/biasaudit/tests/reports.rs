mod common;

use biasaudit::report::{render_histogram, render_report, RenderOptions, Template};
use biasaudit::store::{CellInfo, Outcome, ResultsStore, StoredRun, TransferSummary};
use biasaudit::suite::SuiteKind;
use biasaudit_core::study::aggregate_histogram;
use biasaudit_core::{ConvergenceStatus, CorruptionSpec};
use common::*;

fn render(runs: &[StoredRun], t: Template, reference: bool) -> String {
    let refs: Vec<&StoredRun> = runs.iter().collect();
    render_report(&refs, t, RenderOptions { reference }).unwrap().markdown
}

#[test]
fn combination_rows_carry_marks_and_values() {
    let md = render(&combination_runs(), Template::CombinationsTable, false);
    assert!(md.contains("| yfcc | cc | datacomp | wit | laion | imagenet | accuracy |\n"), "{md}");
    assert!(md.contains("| x | x | x |  |  |  | 84.7 |\n"), "{md}");
    assert!(md.contains("| x | x |  |  |  | x | 92.7 |\n"));
    assert!(md.contains("|  |  |  | x | x | x | 90.7 |\n"));
    assert_eq!(md.lines().filter(|l| l.ends_with(" |") && l.contains("| x")).count(), 20);
    let first = md.lines().position(|l| l.ends_with("84.7 |")).unwrap();
    let last = md.lines().position(|l| l.ends_with("90.7 |")).unwrap();
    assert!(first < last);
}

#[test]
fn reference_column_shows_published_values() {
    let mut runs = combination_runs();
    if let Outcome::Completed { record, .. } = &mut runs[0].outcome {
        record.val_accuracy = 51.25;
    }
    let md = render(&runs, Template::CombinationsTable, true);
    assert!(md.contains("| x | x | x |  |  |  | 51.2 | 84.7 |\n"), "{md}");
}

#[test]
fn failed_pseudo_runs_render_as_fail() {
    let md = render(&pseudo_runs(), Template::PseudoTable, false);
    let expected = "| imgs per set | w/o aug | w/ aug |\n| --- | --- | --- |\n| 100 | 100.0 | 100.0 |\n| 1K | 100.0 | 100.0 |\n| 10K | 100.0 | fail |\n| 100K | fail | fail |\n";
    assert!(md.ends_with(expected), "{md}");
}

#[test]
fn histogram_bins_match_counts() {
    let r = render_histogram(&aggregate_histogram(&HUMAN_ACCURACIES, 5.0).unwrap());
    assert!(r.markdown.contains("| 40-45 | 11 |\n| 45-50 | 7 |\n| 50-55 | 2 |\n"), "{}", r.markdown);
    assert!(r.markdown.contains("users: 20, mean: 45.4, median: 44.0"));
    let csv = r.csv.unwrap();
    assert!(csv.starts_with("lo,hi,users\n0,5,0\n"));
    assert!(csv.contains("40,45,11\n45,50,7\n"));
    assert_eq!(csv.lines().count(), 21);
    assert_eq!(r.svg.unwrap().matches("<rect").count(), 21);
}

#[test]
fn empty_store_renders_headers_only() {
    for t in Template::ALL.into_iter().filter(|&t| t != Template::StudyHistogram) {
        let r = render_report(&[], t, RenderOptions::default()).unwrap();
        let body: Vec<&str> = r.markdown.lines().filter(|l| l.starts_with('|')).collect();
        assert!(body.len() <= 2, "{t:?}: {}", r.markdown);
    }
    assert!(render_report(&[], Template::StudyHistogram, RenderOptions::default()).is_err());
}

#[test]
fn output_is_byte_stable_across_reopen_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = combination_runs();
    runs.extend(pseudo_runs());
    {
        let mut store = ResultsStore::open(dir.path()).unwrap();
        seed_store(&mut store, runs.iter().rev().cloned());
    }
    let store = ResultsStore::open(dir.path()).unwrap();
    for t in [Template::CombinationsTable, Template::PseudoTable] {
        let a = render_report(&store.latest(), t, RenderOptions { reference: true }).unwrap();
        let b = render(&runs, t, true);
        assert_eq!(a.markdown, b);
    }
}

#[test]
fn latest_entry_wins() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let mut runs = combination_runs();
    seed_store(&mut store, runs.clone());
    if let Outcome::Completed { record, .. } = &mut runs[0].outcome {
        record.val_accuracy = 12.0;
    }
    store.append(runs[0].clone()).unwrap();
    let md = render_report(&store.latest(), Template::CombinationsTable, RenderOptions::default()).unwrap().markdown;
    assert!(md.contains("| x | x | x |  |  |  | 12.0 |\n"));
    assert!(!md.contains("84.7"));
}

#[test]
fn plots_emit_csv_and_svg() {
    let runs: Vec<StoredRun> = [(0.25, 1_000, 61.0), (0.5, 4_000, 70.5), (1.0, 16_000, 74.0)]
        .iter()
        .enumerate()
        .map(|(i, &(w, params, acc))| {
            let mut cell = CellInfo::new(SuiteKind::ModelSize, vec!["yfcc".into(), "cc".into(), "datacomp".into()]);
            cell.ordinal = i;
            cell.width_multiplier = w;
            cell.param_count = params;
            stored("size", format!("size-{i}"), cell, record(acc, 100.0, ConvergenceStatus::Converged))
        })
        .collect();
    let refs: Vec<&StoredRun> = runs.iter().collect();
    let r = render_report(&refs, Template::SizePlot, RenderOptions::default()).unwrap();
    assert_eq!(
        r.csv.unwrap(),
        "series,param_count,width_multiplier,val_accuracy\nyfcc+cc+datacomp,1000,0.25,61.0\nyfcc+cc+datacomp,4000,0.5,70.5\nyfcc+cc+datacomp,16000,1,74.0\n"
    );
    let svg = r.svg.unwrap();
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    assert_eq!(svg.matches("<circle").count(), 3);
}

#[test]
fn corruption_rows_use_table_labels() {
    let specs = [CorruptionSpec::none(), CorruptionSpec::gaussian_blur(3.0), CorruptionSpec::low_resolution(32.0)];
    let runs: Vec<StoredRun> = specs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut cell = CellInfo::new(SuiteKind::Corruption, vec!["yfcc".into(), "cc".into(), "datacomp".into()]);
            cell.ordinal = i;
            cell.corruption = *c;
            stored("corr", format!("c{i}"), cell, record(50.0 + i as f64, 100.0, ConvergenceStatus::Converged))
        })
        .collect();
    let md = render(&runs, Template::CorruptionTable, true);
    assert!(md.contains("| none | 50.0 | 84.7 |\n"), "{md}");
    assert!(md.contains("| Gaussian blur (radius: 3) | 51.0 | 80.9 |\n"), "{md}");
    assert!(md.contains("| low resolution (32×32) | 52.0 | 68.4 |\n"), "{md}");
}

#[test]
fn probe_table_lists_random_then_tasks() {
    let groups: [&[&str]; 2] = [&["yfcc", "cc", "datacomp"], &["yfcc", "cc", "datacomp", "wit"]];
    let mut runs: Vec<StoredRun> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut cell = CellInfo::new(SuiteKind::Probe, g.iter().map(|s| s.to_string()).collect());
            cell.ordinal = i;
            StoredRun {
                config_hash: format!("p{i}"),
                suite: "probe".into(),
                cell,
                outcome: Outcome::Completed {
                    record: record(90.0, 100.0, ConvergenceStatus::Converged),
                    transfer: Some(TransferSummary { trained: 20.0 + i as f64, random: 9.0 }),
                },
                recorded_at_ms: 0,
            }
        })
        .collect();
    let mut cell = CellInfo::new(SuiteKind::Probe, vec![]);
    cell.ordinal = 5;
    cell.label = "MAE".into();
    runs.push(StoredRun { config_hash: "ext".into(), suite: "probe".into(), cell, outcome: Outcome::Probed { accuracy: 55.5 }, recorded_at_ms: 0 });
    let md = render(&runs, Template::ProbeTable, true);
    assert!(
        md.ends_with("| random weights | 9.0 | 6.7 |\n| Y+C+D | 20.0 | 27.7 |\n| Y+C+D+W | 21.0 | 34.2 |\n| MAE | 55.5 | 68.0 |\n"),
        "{md}"
    );
}
