use std::path::PathBuf;

use biasaudit::config::ExperimentConfig;
use biasaudit::study_server::StudyServiceConfig;
use biasaudit::suite::SuiteSpec;

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn experiment_examples_resolve() {
    for (file, classes) in [("experiment.yaml", 3), ("pseudo.yaml", 3)] {
        let cfg = ExperimentConfig::load(&example(file)).unwrap();
        cfg.validate().unwrap();
        cfg.resolve().unwrap();
        assert_eq!(cfg.num_classes(), classes, "{file}");
    }
}

#[test]
fn suite_examples_expand() {
    for (file, cells) in [("augmentation_suite.yaml", 8), ("corruption_suite.yaml", 5)] {
        let spec = SuiteSpec::load(&example(file)).unwrap();
        assert_eq!(spec.cells().unwrap().len(), cells, "{file}");
    }
}

#[test]
fn study_example_loads() {
    let cfg = StudyServiceConfig::load(&example("study.yaml")).unwrap();
    assert_eq!(cfg.study.questions, 100);
    assert_eq!(cfg.datasets.len(), cfg.study.datasets.len());
}
