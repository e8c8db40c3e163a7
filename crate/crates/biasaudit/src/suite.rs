//! Experiment grids: expanding a suite spec into cells and running the cells
//! that the results store does not already hold.
//!
//! Suite files are YAML:
//!
//! ```yaml
//! name: combos
//! kind: combinations      # model_size | data_scale | augmentation | corruption | pseudo | probe
//! seed: 0
//! k: 3
//! pool:
//!   - { id: yfcc, source: synthetic, style: alpha, count: 600 }
//!   - { id: cc, source: synthetic, style: beta, count: 600 }
//! base: { n_train: 256, n_val: 100, augmentation: { level: none } }
//! grid: { widths: [0.25, 0.5], scales: [100, 1000] }
//! parallelism: 1
//! ```

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use biasaudit_core::grid::{cell_seed, enumerate_combinations};
use biasaudit_core::model::count_parameters;
use biasaudit_core::{AugmentationLevel, AugmentationPolicy, CorruptionSpec};
use serde::{Deserialize, Serialize};

use crate::config::{canonical_json, DatasetEntry, ExperimentConfig, ModelChoice, PseudoEntry, TrainSection, TransferSpec};
use crate::error::{Error, IoContext, Result};
use crate::experiment::{run_experiment, synthetic_transfer, RunOptions};
use crate::ingest::sha256_hex;
use crate::store::{now_ms, CellInfo, Outcome, ResultsStore, StoredRun, TransferSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Combinations,
    ModelSize,
    DataScale,
    Augmentation,
    Corruption,
    Pseudo,
    Probe,
}

/// Settings shared by every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub model: ModelChoice,
    pub train: TrainSection,
    pub augmentation: AugmentationPolicy,
    pub corruption: CorruptionSpec,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            n_train: 256,
            n_val: 100,
            model: ModelChoice::width(0.5),
            train: TrainSection::desk(),
            augmentation: AugmentationPolicy::new(AugmentationLevel::None),
            corruption: CorruptionSpec::none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub widths: Vec<f32>,
    /// Training images per dataset.
    pub scales: Vec<usize>,
    pub levels: Vec<AugmentationLevel>,
    pub corruptions: Vec<CorruptionSpec>,
    /// Pretext tasks use the first `n` pool datasets.
    pub dataset_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub name: String,
    pub kind: SuiteKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pool: Vec<DatasetEntry>,
    /// Datasets per task; defaults to 3 for combinations, else the whole pool.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub base: BaseConfig,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub pseudo: Option<PseudoEntry>,
    #[serde(default)]
    pub transfer: Option<TransferSpec>,
    #[serde(default = "one")]
    pub parallelism: usize,
}

fn one() -> usize {
    1
}

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: String,
    pub config: ExperimentConfig,
    pub info: CellInfo,
}

impl SuiteSpec {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_yaml::from_str(text)?)
    }

    /// Reads a suite; relative dataset paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::parse(&std::fs::read_to_string(path).at(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut spec.pool {
            d.resolve_paths(base);
        }
        if let Some(p) = &mut spec.pseudo {
            p.source.resolve_paths(base);
        }
        Ok(spec)
    }

    fn blank(&self) -> ExperimentConfig {
        ExperimentConfig {
            name: String::new(),
            datasets: Vec::new(),
            pseudo: None,
            n_train: self.base.n_train,
            n_val: self.base.n_val,
            model: self.base.model.clone(),
            train: self.base.train.clone(),
            augmentation: self.base.augmentation,
            corruption: self.base.corruption,
            seed: 0,
        }
    }

    fn k(&self) -> usize {
        self.k.unwrap_or(if self.kind == SuiteKind::Combinations { 3 } else { self.pool.len() })
    }

    fn first_k(&self) -> Result<Vec<DatasetEntry>> {
        let k = self.k();
        if k > self.pool.len() {
            return Err(Error::Format(format!("suite `{}`: k = {k} but the pool has {}", self.name, self.pool.len())));
        }
        Ok(self.pool[..k].to_vec())
    }

    fn need<'a, T>(&self, v: &'a [T], field: &str) -> Result<&'a [T]> {
        if v.is_empty() {
            return Err(Error::Format(format!("suite `{}`: grid.{field} is empty", self.name)));
        }
        Ok(v)
    }

    fn scales(&self) -> Vec<usize> {
        if self.grid.scales.is_empty() {
            vec![self.base.n_train]
        } else {
            self.grid.scales.clone()
        }
    }

    /// Every cell in grid order. A cell's seed is folded from the suite seed
    /// and its position along each grid axis, so appending values to any axis
    /// (or datasets to a combinations pool) leaves existing cells intact.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let pseudo_or_pool = |cfg: &mut ExperimentConfig| -> Result<()> {
            match &self.pseudo {
                Some(p) => cfg.pseudo = Some(p.clone()),
                None => cfg.datasets = self.first_k()?,
            }
            Ok(())
        };
        let mut configs: Vec<(Vec<usize>, ExperimentConfig)> = Vec::new();
        match self.kind {
            SuiteKind::Combinations => {
                let positions: Vec<usize> = (0..self.pool.len()).collect();
                let combos = enumerate_combinations(&positions, self.k())
                    .map_err(|e| Error::Format(format!("suite `{}`: {e}", self.name)))?;
                for pos in combos {
                    let datasets = pos.iter().map(|&i| self.pool[i].clone()).collect();
                    configs.push((pos, ExperimentConfig { datasets, ..self.blank() }));
                }
            }
            SuiteKind::ModelSize => {
                for (i, &w) in self.need(&self.grid.widths, "widths")?.iter().enumerate() {
                    let mut c = ExperimentConfig { model: ModelChoice { width_multiplier: w, ..self.base.model.clone() }, ..self.blank() };
                    pseudo_or_pool(&mut c)?;
                    configs.push((vec![i], c));
                }
            }
            SuiteKind::DataScale => {
                for (i, &n) in self.need(&self.grid.scales, "scales")?.iter().enumerate() {
                    let mut c = ExperimentConfig { n_train: n, ..self.blank() };
                    pseudo_or_pool(&mut c)?;
                    configs.push((vec![i], c));
                }
            }
            SuiteKind::Augmentation => {
                for (i, &level) in self.need(&self.grid.levels, "levels")?.iter().enumerate() {
                    for (j, n) in self.scales().into_iter().enumerate() {
                        let augmentation = AugmentationPolicy { level, ..self.base.augmentation };
                        let mut c = ExperimentConfig { n_train: n, augmentation, ..self.blank() };
                        pseudo_or_pool(&mut c)?;
                        configs.push((vec![i, j], c));
                    }
                }
            }
            SuiteKind::Corruption => {
                for (i, &corruption) in self.need(&self.grid.corruptions, "corruptions")?.iter().enumerate() {
                    let mut c = ExperimentConfig { corruption, ..self.blank() };
                    pseudo_or_pool(&mut c)?;
                    configs.push((vec![i], c));
                }
            }
            SuiteKind::Pseudo => {
                let pseudo = self
                    .pseudo
                    .clone()
                    .ok_or_else(|| Error::Format(format!("suite `{}`: pseudo suites need `pseudo`", self.name)))?;
                let levels = if self.grid.levels.is_empty() { vec![self.base.augmentation.level] } else { self.grid.levels.clone() };
                for (i, n) in self.scales().into_iter().enumerate() {
                    for (j, &level) in levels.iter().enumerate() {
                        let augmentation = AugmentationPolicy { level, ..self.base.augmentation };
                        let c = ExperimentConfig { n_train: n, augmentation, pseudo: Some(pseudo.clone()), ..self.blank() };
                        configs.push((vec![i, j], c));
                    }
                }
            }
            SuiteKind::Probe => {
                if self.transfer.is_none() {
                    return Err(Error::Format(format!("suite `{}`: probe suites need `transfer`", self.name)));
                }
                for (i, &n) in self.need(&self.grid.dataset_counts, "dataset_counts")?.iter().enumerate() {
                    if n < 2 || n > self.pool.len() {
                        return Err(Error::Format(format!("suite `{}`: dataset count {n} out of range", self.name)));
                    }
                    configs.push((vec![i], ExperimentConfig { datasets: self.pool[..n].to_vec(), ..self.blank() }));
                }
            }
        }
        configs
            .into_iter()
            .enumerate()
            .map(|(ordinal, (coords, mut config))| {
                config.seed = coords.iter().fold(self.seed, |seed, &c| cell_seed(seed, c));
                config.name = format!("{}/{ordinal:03}", self.name);
                self.cell(ordinal, config)
            })
            .collect()
    }

    fn cell(&self, ordinal: usize, config: ExperimentConfig) -> Result<Cell> {
        let resolved = config.resolve()?;
        let transfer = if self.kind == SuiteKind::Probe { self.transfer.as_ref() } else { None };
        let key_value = serde_json::json!({ "kind": self.kind, "config": resolved, "transfer": transfer });
        let key = sha256_hex(canonical_json(&key_value).as_bytes());
        let datasets = match &config.pseudo {
            Some(p) => vec![p.source.id.clone()],
            None => config.datasets.iter().map(|d| d.id.clone()).collect(),
        };
        let info = CellInfo {
            kind: self.kind,
            ordinal,
            datasets,
            width_multiplier: config.model.width_multiplier,
            param_count: count_parameters(&resolved.model)?,
            images_per_dataset: config.n_train,
            augmentation: config.augmentation.level,
            corruption: config.corruption,
            label: String::new(),
        };
        Ok(Cell { key, config, info })
    }
}

/// Runs one cell.
pub trait CellExecutor: Sync {
    fn execute(&self, spec: &SuiteSpec, cell: &Cell) -> Result<Outcome>;
}

/// Trains each cell for real; probe cells also run the transfer probe.
#[derive(Debug, Clone, Default)]
pub struct TrainingExecutor {
    /// Per-cell run directories go under here when set.
    pub out_dir: Option<PathBuf>,
}

impl CellExecutor for TrainingExecutor {
    fn execute(&self, spec: &SuiteSpec, cell: &Cell) -> Result<Outcome> {
        let out_dir = self.out_dir.as_ref().map(|d| d.join(&spec.name).join(format!("{:03}-{}", cell.info.ordinal, &cell.key[..12])));
        let run = run_experiment(&cell.config, &RunOptions { out_dir })?;
        let transfer = match (&spec.transfer, spec.kind) {
            (Some(t), SuiteKind::Probe) => {
                let geometry = cell.config.resolve()?.train.geometry;
                let rep = synthetic_transfer(&run.model, t, &geometry)?;
                Some(TransferSummary { trained: rep.trained.accuracy, random: rep.random.accuracy })
            }
            _ => None,
        };
        Ok(Outcome::Completed { record: run.record, transfer })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SuiteSummary {
    pub cells: usize,
    pub skipped: usize,
    pub executed: usize,
    pub failed: usize,
}

/// Executes the cells the store lacks (all of them with `force`). Failed
/// cells are recorded and retried on the next run; the suite keeps going.
pub fn run_suite(
    spec: &SuiteSpec,
    store: &mut ResultsStore,
    executor: &dyn CellExecutor,
    force: bool,
) -> Result<SuiteSummary> {
    let cells = spec.cells()?;
    let pending: Vec<&Cell> = cells.iter().filter(|c| force || !store.is_complete(&c.key)).collect();
    let mut summary = SuiteSummary { cells: cells.len(), skipped: cells.len() - pending.len(), ..Default::default() };

    let next = AtomicUsize::new(0);
    let shared = Mutex::new((store, Vec::<Error>::new(), 0usize));
    let workers = spec.parallelism.clamp(1, pending.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = pending.get(i) else { break };
                let outcome = executor
                    .execute(spec, cell)
                    .unwrap_or_else(|e| Outcome::Failed { error: e.to_string() });
                let run = StoredRun {
                    config_hash: cell.key.clone(),
                    suite: spec.name.clone(),
                    cell: cell.info.clone(),
                    outcome,
                    recorded_at_ms: now_ms(),
                };
                let mut guard = shared.lock().expect("store lock");
                let (store, errors, failed) = &mut *guard;
                if !run.outcome.is_done() {
                    *failed += 1;
                }
                if let Err(e) = store.append(run) {
                    errors.push(e);
                }
            });
        }
    });
    let (_, mut errors, failed) = shared.into_inner().expect("store lock");
    if let Some(e) = errors.pop() {
        return Err(e);
    }
    summary.executed = pending.len();
    summary.failed = failed;
    Ok(summary)
}
