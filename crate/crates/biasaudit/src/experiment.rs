//! Running one experiment config: data preparation, training, metrics and
//! checkpoint files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use biasaudit_core::dataset::{build_pseudo_datasets, sample_split, ImageSource};
use biasaudit_core::hash::hash64;
use biasaudit_core::probe::{transfer_probe, LabeledImages, TransferReport};
use biasaudit_core::synth::{labeled_set, SyntheticSource, SyntheticStyle, SEMANTIC_CLASSES};
use biasaudit_core::train::{evaluate, train_classifier, AuditData, ClassData, EvalResult, Part, TrainObserver};
use biasaudit_core::transform::eval_transform;
use biasaudit_core::{
    CorruptionSpec, DatasetManifest, Geometry, Image, PseudoDatasetSpec, ReferenceCnn, RunRecord, SplitSpec, TrainError,
};
use serde::Serialize;

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::{DatasetEntry, ExperimentConfig, SourceSpec, TransferSpec};
use crate::error::{Error, IoContext, Result};
use crate::ingest::{FileSource, ImageCache};
use crate::manifest::register_dataset;

pub type DynSource = Box<dyn ImageSource + Send + Sync>;

/// Opens the manifest and pixel source behind a dataset entry.
pub fn open_dataset(entry: &DatasetEntry) -> Result<(DatasetManifest, DynSource)> {
    match &entry.source {
        SourceSpec::Manifest { manifest, images, cache } => {
            let mut m = register_dataset(manifest)?;
            m.dataset_id = entry.id.clone();
            let source = FileSource::new(&m, images.as_deref(), cache.as_ref().map(ImageCache::new));
            Ok((m, Box::new(source)))
        }
        SourceSpec::Synthetic { style, count, seed } => {
            let style = SyntheticStyle::preset(style)
                .ok_or_else(|| Error::Format(format!("unknown synthetic style `{style}`")))?;
            let source = SyntheticSource::new(style, *seed);
            Ok((source.manifest(&entry.id, *count)?, Box::new(source)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPlan {
    pub name: String,
    /// Index into the opened datasets.
    pub dataset: usize,
    pub split: SplitSpec,
    pub signature: CorruptionSpec,
}

/// Opened datasets plus the per-class splits of one config.
pub struct Materials {
    pub manifests: Vec<DatasetManifest>,
    sources: Vec<DynSource>,
    pub classes: Vec<ClassPlan>,
    pub corruption: CorruptionSpec,
}

impl Materials {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut manifests = Vec::new();
        let mut sources = Vec::new();
        let mut classes = Vec::new();
        if let Some(p) = &cfg.pseudo {
            let (m, s) = open_dataset(&p.source)?;
            let spec = PseudoDatasetSpec {
                source_dataset_id: m.dataset_id.clone(),
                k: p.k,
                n_per_set: cfg.n_train,
                n_val_per_set: cfg.n_val,
                seed: cfg.seed,
            };
            for (i, split) in build_pseudo_datasets(&m, &spec)?.into_iter().enumerate() {
                let signature = p.signatures.get(i).copied().unwrap_or(p.source.signature);
                classes.push(ClassPlan { name: split.dataset_id.clone(), dataset: 0, split, signature });
            }
            manifests.push(m);
            sources.push(s);
        } else {
            for (i, entry) in cfg.datasets.iter().enumerate() {
                let (m, s) = open_dataset(entry)?;
                let split = sample_split(&m, cfg.n_train, cfg.n_val, cfg.seed)?;
                classes.push(ClassPlan { name: entry.id.clone(), dataset: i, split, signature: entry.signature });
                manifests.push(m);
                sources.push(s);
            }
        }
        Ok(Self { manifests, sources, classes, corruption: cfg.corruption })
    }

    pub fn source(&self, dataset: usize) -> &dyn ImageSource {
        self.sources[dataset].as_ref()
    }

    pub fn audit_data(&self) -> Result<AuditData<'_>> {
        let classes = self
            .classes
            .iter()
            .map(|c| ClassData {
                name: c.name.clone(),
                manifest: &self.manifests[c.dataset],
                source: self.sources[c.dataset].as_ref(),
                split: c.split.clone(),
                signature: c.signature,
            })
            .collect();
        Ok(AuditData::new(classes, self.corruption)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Receives `metrics.jsonl`, checkpoints, `record.json` and `config.json`.
    pub out_dir: Option<PathBuf>,
}

pub struct RunOutput {
    pub model: ReferenceCnn,
    pub record: RunRecord,
}

#[derive(Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event<'a> {
    Iteration { iteration: usize, loss: f32, lr: f32 },
    Validation { iteration: usize, accuracy: f64 },
    Checkpoint { iteration: usize, path: &'a str },
}

struct FileObserver {
    metrics: Option<BufWriter<File>>,
    ckpt_dir: Option<PathBuf>,
    meta: CheckpointMeta,
    error: Option<Error>,
}

impl FileObserver {
    fn emit(&mut self, event: &Event<'_>) {
        if let (Some(w), None) = (&mut self.metrics, &self.error) {
            let line = serde_json::to_string(event).expect("events serialize");
            if let Err(e) = writeln!(w, "{line}") {
                self.error = Some(Error::Io { path: "metrics.jsonl".into(), source: e });
            }
        }
    }
}

impl TrainObserver for FileObserver {
    fn on_iteration(&mut self, iteration: usize, loss: f32, lr: f32) {
        self.emit(&Event::Iteration { iteration, loss, lr });
    }

    fn on_validation(&mut self, iteration: usize, accuracy: f64) {
        self.emit(&Event::Validation { iteration, accuracy });
    }

    fn on_checkpoint(&mut self, iteration: usize, model: &ReferenceCnn) {
        let Some(dir) = self.ckpt_dir.clone() else { return };
        let path = dir.join(format!("ckpt-{iteration:08}.bin"));
        self.meta.iteration = iteration;
        if let Err(e) = checkpoint::save(&path, model, &self.meta) {
            self.error.get_or_insert(e);
            return;
        }
        let shown = path.to_string_lossy().into_owned();
        self.emit(&Event::Checkpoint { iteration, path: &shown });
    }
}

/// Trains the classifier described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    let resolved = cfg.resolve()?;
    let config_hash = resolved.hash()?;
    let materials = Materials::prepare(cfg)?;
    let mut data = materials.audit_data()?;
    data.materialize(resolved.train.cache_bytes)?;

    let meta = CheckpointMeta {
        config_hash: config_hash.clone(),
        class_names: cfg.class_names(),
        iteration: 0,
        budget: resolved.train.budget(),
        model: resolved.model.clone(),
        param_count: 0,
    };
    let mut observer = FileObserver { metrics: None, ckpt_dir: None, meta, error: None };
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).at(dir)?;
        let cfg_path = dir.join("config.json");
        std::fs::write(&cfg_path, serde_json::to_vec_pretty(cfg)?).at(&cfg_path)?;
        let splits_path = dir.join("splits.json");
        std::fs::write(&splits_path, serde_json::to_vec_pretty(&materials.classes)?).at(&splits_path)?;
        let metrics = dir.join("metrics.jsonl");
        observer.metrics = Some(BufWriter::new(File::create(&metrics).at(&metrics)?));
        observer.ckpt_dir = Some(dir.join("checkpoints"));
        observer.meta.param_count = biasaudit_core::model::count_parameters(&resolved.model)?;
    }

    let start = Instant::now();
    let (model, mut record) =
        train_classifier(&data, &resolved.model, &resolved.train, &resolved.augmentation, &mut observer)?;
    record.wall_time_secs = start.elapsed().as_secs_f64();
    record.config_hash = config_hash;
    if let Some(e) = observer.error.take() {
        return Err(e);
    }
    if let Some(mut w) = observer.metrics.take() {
        w.flush().at("metrics.jsonl")?;
    }
    if let Some(dir) = &opts.out_dir {
        let mut meta = observer.meta.clone();
        meta.iteration = record.iterations;
        checkpoint::save(&dir.join("model.bin"), &model, &meta)?;
        let rec = dir.join("record.json");
        std::fs::write(&rec, serde_json::to_vec_pretty(&record)?).at(&rec)?;
    }
    Ok(RunOutput { model, record })
}

/// Scores a checkpoint on the validation splits derived from `cfg`.
pub fn evaluate_checkpoint(model: &ReferenceCnn, cfg: &ExperimentConfig) -> Result<EvalResult> {
    let resolved = cfg.resolve()?;
    let splits = cfg.num_classes();
    if model.spec().num_classes != splits {
        return Err(TrainError::ClassMismatch { model: model.spec().num_classes, splits }.into());
    }
    let materials = Materials::prepare(cfg)?;
    let data = materials.audit_data()?;
    let inputs = data.eval_inputs(Part::Val, &resolved.train.geometry)?;
    Ok(evaluate(model, &inputs)?)
}

/// Loads a checkpoint and evaluates it against `config`'s validation splits.
pub fn evaluate_files(ckpt: &Path, config: &Path) -> Result<EvalResult> {
    let (model, _) = checkpoint::load(ckpt)?;
    evaluate_checkpoint(&model, &ExperimentConfig::load(config)?)
}

/// Probes `model`'s frozen backbone on a synthetic semantic labeled set, next
/// to a randomly initialized network of the same architecture.
pub fn synthetic_transfer(model: &ReferenceCnn, spec: &TransferSpec, geometry: &Geometry) -> Result<TransferReport> {
    let style = SyntheticStyle::preset(&spec.style)
        .ok_or_else(|| Error::Format(format!("unknown synthetic style `{}`", spec.style)))?;
    let source = SyntheticSource::new(style, spec.seed);
    let (manifest, labels) = labeled_set(&source, "semantic", spec.n_train + spec.n_val)?;
    let images = manifest
        .images()
        .iter()
        .map(|r| Ok(eval_transform(&source.load(r)?, geometry)))
        .collect::<Result<Vec<Image>>>()?;
    let (train, val) = images.split_at(spec.n_train);
    let (train_labels, val_labels) = labels.split_at(spec.n_train);
    let random = ReferenceCnn::new(model.spec(), hash64(spec.probe.seed, "random-backbone"))?;
    Ok(transfer_probe(
        model,
        &random,
        &LabeledImages { images: train, labels: train_labels },
        &LabeledImages { images: val, labels: val_labels },
        SEMANTIC_CLASSES,
        &spec.probe,
    )?)
}
