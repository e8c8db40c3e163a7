//! Command-line interface.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use biasaudit_core::dataset::{build_pseudo_datasets, sample_split, ImageSource};
use biasaudit_core::probe::{linear_probe, ProbeConfig};
use biasaudit_core::study::aggregate_histogram;
use biasaudit_core::synth::{SyntheticSource, SyntheticStyle};
use biasaudit_core::train::Part;
use biasaudit_core::PseudoDatasetSpec;
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::digest;
use crate::error::{Error, IoContext, Result};
use crate::experiment::{evaluate_files, run_experiment, Materials, RunOptions};
use crate::features::{self, FeatureFile, LabelFile};
use crate::ingest::{build_dataset, encode_png, ImageCache};
use crate::manifest::{register_dataset, write_manifest};
use crate::report::{render_histogram, render_report, RenderOptions, Report, Template};
use crate::store::ResultsStore;
use crate::study_server::{self, StudyService, StudyServiceConfig};
use crate::suite::{run_suite, SuiteSpec, TrainingExecutor};

#[derive(Debug, Parser)]
#[command(name = "biasaudit", version, about = "Dataset-classification bias audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, sample and split dataset manifests.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train a dataset classifier from an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory for metrics, checkpoints and the run record.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the validation splits of an experiment config.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        val: PathBuf,
    },
    /// Extract frozen features for a config's train and val images.
    Features {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// 0-based layer; defaults to the deepest probe layer.
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Linear probe on a feature cache.
    Probe {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run experiment grids.
    #[command(subcommand)]
    Suite(SuiteCmd),
    /// Render a report from the results store or study data.
    Report {
        #[arg(long)]
        template: String,
        #[arg(long, default_value = "results")]
        store: PathBuf,
        /// Write `<template>.md` (plus `.csv`/`.svg` for plots) here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Show published reference values beside measured ones.
        #[arg(long)]
        reference: bool,
        /// JSON array of per-user accuracies (study_histogram).
        #[arg(long)]
        accuracies: Option<PathBuf>,
        /// Study service config and data directory (study_histogram).
        #[arg(long, requires = "study_data")]
        study_config: Option<PathBuf>,
        #[arg(long)]
        study_data: Option<PathBuf>,
        #[arg(long, default_value_t = 5.0)]
        bin_width: f64,
    },
    /// Human study service.
    #[command(subcommand)]
    Study(StudyCmd),
    /// Print fingerprints of all seeded computations.
    Digest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Scan an image directory into a manifest.
    Build {
        root: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        display_name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Store preprocessed images in this cache.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Sample a train/val split.
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        val: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split one manifest into disjoint pseudo-datasets.
    Pseudo {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        n_val: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic dataset to PNG files.
    Synth {
        #[arg(long)]
        style: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum SuiteCmd {
    /// Execute missing cells.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "results")]
        store: PathBuf,
        /// Re-run cells that already completed.
        #[arg(long)]
        force: bool,
        /// Keep per-cell metrics and checkpoints here.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// List the cells of a suite with their store keys.
    Cells {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum StudyCmd {
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Event log and image directory; sessions survive restarts.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").at(p),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_report(template: Template, report: &Report, out: Option<&Path>) -> Result<()> {
    let Some(dir) = out else {
        print!("{}", report.markdown);
        return Ok(());
    };
    std::fs::create_dir_all(dir).at(dir)?;
    let name = template.as_str();
    let files = [("md", Some(&report.markdown)), ("csv", report.csv.as_ref()), ("svg", report.svg.as_ref())];
    for (ext, body) in files {
        if let Some(body) = body {
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::write(&path, body).at(&path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(cmd) => dataset(cmd),
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let run = run_experiment(&cfg, &RunOptions { out_dir: out })?;
            let mut summary = run.record;
            summary.loss_series.clear();
            summary.val_accuracy_series.clear();
            emit_json(&summary, None)
        }
        Command::Eval { ckpt, val } => emit_json(&evaluate_files(&ckpt, &val)?, None),
        Command::Features { ckpt, config, layer, out, labels } => {
            let (model, _) = checkpoint::load(&ckpt)?;
            let cfg = ExperimentConfig::load(&config)?;
            let resolved = cfg.resolve()?;
            let materials = Materials::prepare(&cfg)?;
            let data = materials.audit_data()?;
            let layer = match layer {
                Some(l) => l,
                None => *ProbeConfig::default()
                    .layer_indices(biasaudit_core::model::FeatureExtractor::num_layers(&model))
                    .last()
                    .expect("at least one layer"),
            };
            let mut ids = Vec::new();
            let mut images = Vec::new();
            let mut label_rows = Vec::new();
            let mut val_rows = Vec::new();
            for part in [Part::Train, Part::Val] {
                let inputs = data.eval_inputs(part, &resolved.train.geometry)?;
                for (pos, (img, label)) in inputs.into_iter().enumerate() {
                    let (l, index) = data.items(part)[pos];
                    ids.push(format!("{}/{}", data.class_names()[l], data.image_id(l, index)));
                    if part == Part::Val {
                        val_rows.push(images.len());
                    }
                    images.push(img);
                    label_rows.push(label);
                }
            }
            let extractor_hash = features::digest(&checkpoint::encode(&model));
            let f = FeatureFile {
                extractor_hash,
                split_hash: features::split_hash(&ids, layer),
                matrix: biasaudit_core::probe::extract_features(&model, &images, layer)?,
            };
            features::write(&out, &f)?;
            let lf = LabelFile { n_classes: data.num_classes(), labels: label_rows, val_rows };
            std::fs::write(&labels, serde_json::to_vec_pretty(&lf)?).at(&labels)?;
            emit_json(&serde_json::json!({ "rows": f.matrix.rows, "cols": f.matrix.cols, "layer": layer }), None)
        }
        Command::Probe { features: fpath, labels, epochs, seed } => {
            let f = features::read(&fpath)?;
            let lf = LabelFile::load(&labels)?;
            let (train, train_labels, val, val_labels) = lf.partition(&f.matrix)?;
            let mut cfg = ProbeConfig::default();
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = linear_probe(&train, &train_labels, &val, &val_labels, lf.n_classes, &cfg)?;
            if report.degenerate {
                eprintln!("warning: features have zero variance; reporting chance accuracy");
            }
            emit_json(&report, None)
        }
        Command::Suite(SuiteCmd::Run { spec, store, force, runs }) => {
            let spec = SuiteSpec::load(&spec)?;
            let mut store = ResultsStore::open(&store)?;
            let summary = run_suite(&spec, &mut store, &TrainingExecutor { out_dir: runs }, force)?;
            emit_json(&summary, None)
        }
        Command::Suite(SuiteCmd::Cells { spec }) => {
            let spec = SuiteSpec::load(&spec)?;
            for c in spec.cells()? {
                println!("{:03} {} {}", c.info.ordinal, &c.key[..16], c.config.name);
            }
            Ok(())
        }
        Command::Report { template, store, out, reference, accuracies, study_config, study_data, bin_width } => {
            let template: Template = template.parse()?;
            let report = if template == Template::StudyHistogram {
                let values: Vec<f64> = match (accuracies, study_config, study_data) {
                    (Some(p), _, _) => serde_json::from_slice(&std::fs::read(&p).at(&p)?)?,
                    (None, Some(cfg), Some(data)) => {
                        StudyService::from_config(&StudyServiceConfig::load(&cfg)?, Some(&data))?.completed_accuracies()
                    }
                    _ => return Err(Error::Format("study_histogram needs --accuracies or --study-config with --study-data".into())),
                };
                render_histogram(&aggregate_histogram(&values, bin_width)?)
            } else {
                let store = ResultsStore::open(&store)?;
                render_report(&store.latest(), template, RenderOptions { reference })?
            };
            write_report(template, &report, out.as_deref())
        }
        Command::Study(StudyCmd::Serve { config, data, addr }) => {
            let svc = Arc::new(StudyService::from_config(&StudyServiceConfig::load(&config)?, Some(&data))?);
            let rt = tokio::runtime::Runtime::new().at("tokio runtime")?;
            eprintln!("study service listening on http://{addr}");
            rt.block_on(study_server::serve(svc, addr))
        }
        Command::Digest { seed } => {
            print!("{}", digest::render(&digest::determinism_digests(seed)?));
            Ok(())
        }
    }
}

fn dataset(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Build { root, id, display_name, out, cache } => {
            let cache = cache.map(ImageCache::new);
            let (manifest, report) = build_dataset(&root, &id, display_name.as_deref().unwrap_or(&id), cache.as_ref())?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{id}.jsonl")));
            write_manifest(&manifest, &out)?;
            for bad in &report.undecodable {
                eprintln!("warning: {bad} could not be decoded and will not be sampled");
            }
            emit_json(&serde_json::json!({ "manifest": out, "images": report.images, "undecodable": report.undecodable.len() }), None)
        }
        DatasetCmd::Sample { manifest, train, val, seed, out } => {
            let m = register_dataset(&manifest)?;
            emit_json(&sample_split(&m, train, val, seed)?, out.as_deref())
        }
        DatasetCmd::Pseudo { manifest, k, n, n_val, seed, out } => {
            let m = register_dataset(&manifest)?;
            let spec = PseudoDatasetSpec { source_dataset_id: m.dataset_id.clone(), k, n_per_set: n, n_val_per_set: n_val, seed };
            emit_json(&build_pseudo_datasets(&m, &spec)?, out.as_deref())
        }
        DatasetCmd::Synth { style, count, seed, out_dir } => {
            let s = SyntheticStyle::preset(&style).ok_or_else(|| Error::Format(format!("unknown synthetic style `{style}`")))?;
            let source = SyntheticSource::new(s, seed);
            let manifest = source.manifest(&style, count)?;
            std::fs::create_dir_all(&out_dir).at(&out_dir)?;
            for r in manifest.images() {
                let path = out_dir.join(format!("{}.png", r.image_id));
                std::fs::write(&path, encode_png(&source.load(r)?)).at(&path)?;
            }
            emit_json(&serde_json::json!({ "dir": out_dir, "images": count }), None)
        }
    }
}
