//! Append-only results store.
//!
//! A store is a directory holding `runs.jsonl`, one [`StoredRun`] per line in
//! execution order, and `index.json`, a derived map from config hash to the
//! latest entry that is rewritten after every append. The log is the source
//! of truth: a torn final line left by a crash is dropped on open, and the
//! index is rebuilt from the log whenever the store is opened.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use biasaudit_core::{AugmentationLevel, CorruptionSpec, RunRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::suite::SuiteKind;

pub const LOG_FILE: &str = "runs.jsonl";
pub const INDEX_FILE: &str = "index.json";

/// What a cell varied, kept alongside the result so reports need no config
/// lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub kind: SuiteKind,
    pub ordinal: usize,
    /// Class names: dataset ids, or the pseudo-set source id for pseudo cells.
    pub datasets: Vec<String>,
    pub width_multiplier: f32,
    pub param_count: usize,
    pub images_per_dataset: usize,
    pub augmentation: AugmentationLevel,
    pub corruption: CorruptionSpec,
    /// Free-form row label, used by probe rows that have no training run.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

impl CellInfo {
    pub fn new(kind: SuiteKind, datasets: Vec<String>) -> Self {
        Self {
            kind,
            ordinal: 0,
            datasets,
            width_multiplier: 1.0,
            param_count: 0,
            images_per_dataset: 0,
            augmentation: AugmentationLevel::None,
            corruption: CorruptionSpec::none(),
            label: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub trained: f64,
    pub random: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed {
        record: RunRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transfer: Option<TransferSummary>,
    },
    /// A probe on features from an external extractor; nothing was trained.
    Probed { accuracy: f64 },
    Failed { error: String },
}

impl Outcome {
    pub fn is_done(&self) -> bool {
        !matches!(self, Self::Failed { .. })
    }

    pub fn record(&self) -> Option<&RunRecord> {
        match self {
            Self::Completed { record, .. } => Some(record),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub config_hash: String,
    pub suite: String,
    pub cell: CellInfo,
    pub outcome: Outcome,
    pub recorded_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    line: usize,
    done: bool,
}

pub struct ResultsStore {
    dir: PathBuf,
    log: File,
    runs: Vec<StoredRun>,
    /// Hash to position in `runs` of the latest entry.
    latest: BTreeMap<String, usize>,
}

impl ResultsStore {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).at(dir)?;
        let path = dir.join(LOG_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::Io { path, source: e }),
        };
        let mut runs = Vec::new();
        let mut valid_len = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            // An unterminated last line is an interrupted append.
            if !line.ends_with('\n') {
                break;
            }
            valid_len += line.len();
            let body = line.trim_end();
            if body.is_empty() {
                continue;
            }
            let run = serde_json::from_str(body)
                .map_err(|e| Error::Parse { path: path.clone(), line: i + 1, message: e.to_string() })?;
            runs.push(run);
        }
        if valid_len < text.len() {
            let f = OpenOptions::new().write(true).open(&path).at(&path)?;
            f.set_len(valid_len as u64).at(&path)?;
        }
        let log = OpenOptions::new().create(true).append(true).open(&path).at(&path)?;
        let mut store = Self { dir: dir.to_path_buf(), log, runs: Vec::new(), latest: BTreeMap::new() };
        for run in runs {
            store.insert(run);
        }
        store.write_index()?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn insert(&mut self, run: StoredRun) {
        self.latest.insert(run.config_hash.clone(), self.runs.len());
        self.runs.push(run);
    }

    fn write_index(&self) -> Result<()> {
        let index: BTreeMap<&str, IndexEntry> = self
            .latest
            .iter()
            .map(|(h, &i)| (h.as_str(), IndexEntry { line: i + 1, done: self.runs[i].outcome.is_done() }))
            .collect();
        let path = self.dir.join(INDEX_FILE);
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&index)?).at(&tmp)?;
        std::fs::rename(&tmp, &path).at(&path)
    }

    /// Appends and syncs one line, then refreshes the index.
    pub fn append(&mut self, run: StoredRun) -> Result<()> {
        let path = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_string(&run)?;
        line.push('\n');
        self.log.write_all(line.as_bytes()).at(&path)?;
        self.log.sync_data().at(&path)?;
        self.insert(run);
        self.write_index()
    }

    /// True when the latest entry for `config_hash` succeeded.
    pub fn is_complete(&self, config_hash: &str) -> bool {
        self.get(config_hash).is_some_and(|r| r.outcome.is_done())
    }

    pub fn get(&self, config_hash: &str) -> Option<&StoredRun> {
        self.latest.get(config_hash).map(|&i| &self.runs[i])
    }

    /// Every log line, oldest first.
    pub fn history(&self) -> &[StoredRun] {
        &self.runs
    }

    /// The latest entry per config hash, ordered by where each hash first
    /// appears in the log.
    pub fn latest(&self) -> Vec<&StoredRun> {
        let mut seen = BTreeMap::new();
        for (i, r) in self.runs.iter().enumerate() {
            seen.entry(r.config_hash.as_str()).or_insert(i);
        }
        let mut firsts: Vec<(usize, &str)> = seen.into_iter().map(|(h, i)| (i, h)).collect();
        firsts.sort_unstable();
        firsts.into_iter().map(|(_, h)| &self.runs[self.latest[h]]).collect()
    }
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}
