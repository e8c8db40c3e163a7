//! Experiment configuration files (YAML or JSON).
//!
//! ```yaml
//! name: ycd-desk
//! seed: 0
//! n_train: 256
//! n_val: 100
//! datasets:
//!   - { id: yfcc, source: manifest, manifest: manifests/yfcc.jsonl, images: /data/yfcc }
//!   - { id: cc, source: synthetic, style: beta, count: 2000 }
//! model: { width_multiplier: 0.5 }
//! train: { preset: desk, ref_epochs: 300 }
//! augmentation: { level: none }
//! corruption: { kind: gaussian_blur, parameter: 3 }
//! ```
//!
//! The config hash is SHA-256 over the canonical JSON of the resolved
//! configuration (presets expanded, defaults filled, `name` excluded), so
//! formatting or key order never changes it but any semantic field does.

use std::path::{Path, PathBuf};

use biasaudit_core::model::REFERENCE_CNN;
use biasaudit_core::probe::ProbeConfig;
use biasaudit_core::{AugmentationPolicy, CorruptionSpec, ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::ingest::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum SourceSpec {
    Manifest {
        manifest: PathBuf,
        /// Image root; defaults to the manifest's `root_uri`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cache: Option<PathBuf>,
    },
    Synthetic {
        style: String,
        count: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    #[serde(flatten)]
    pub source: SourceSpec,
    /// Corruption applied to this dataset only (injected bias).
    #[serde(default, skip_serializing_if = "is_none_corruption")]
    pub signature: CorruptionSpec,
}

fn is_none_corruption(c: &CorruptionSpec) -> bool {
    *c == CorruptionSpec::none()
}

impl DatasetEntry {
    pub fn synthetic(id: &str, style: &str, count: usize, seed: u64) -> Self {
        Self {
            id: id.into(),
            source: SourceSpec::Synthetic { style: style.into(), count, seed },
            signature: CorruptionSpec::none(),
        }
    }

    pub fn with_signature(mut self, signature: CorruptionSpec) -> Self {
        self.signature = signature;
        self
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let SourceSpec::Manifest { manifest, images, cache } = &mut self.source {
            for p in [Some(manifest), images.as_mut(), cache.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// Classes drawn as disjoint subsets of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEntry {
    pub source: DatasetEntry,
    pub k: usize,
    /// Optional per-set corruption signatures (empty, or one per set).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signatures: Vec<CorruptionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelChoice {
    pub backend: String,
    pub width_multiplier: f32,
    pub depth_multiplier: f32,
    pub base_width: usize,
}

impl Default for ModelChoice {
    fn default() -> Self {
        Self { backend: REFERENCE_CNN.into(), width_multiplier: 1.0, depth_multiplier: 1.0, base_width: 8 }
    }
}

impl ModelChoice {
    pub fn width(width_multiplier: f32) -> Self {
        Self { width_multiplier, ..Self::default() }
    }

    pub fn spec(&self, num_classes: usize) -> ModelSpec {
        ModelSpec {
            backend_name: self.backend.clone(),
            width_multiplier: self.width_multiplier,
            depth_multiplier: self.depth_multiplier,
            num_classes,
            base_width: self.base_width,
        }
    }
}

/// Semantic labeled set used to probe a trained dataset classifier. The
/// images come from a synthetic source whose pattern classes are the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    #[serde(default = "uniform_style")]
    pub style: String,
    #[serde(default)]
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    #[serde(default)]
    pub probe: ProbeConfig,
}

fn uniform_style() -> String {
    "uniform".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainPreset {
    /// The full-scale recipe (batch 4096, 224 crops, ImageNet-1K reference).
    Full,
    #[default]
    Desk,
}

/// A preset plus field overrides, e.g. `{ preset: desk, batch_size: 64 }`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default)]
    pub preset: TrainPreset,
    #[serde(flatten)]
    pub overrides: serde_json::Map<String, serde_json::Value>,
}

impl TrainSection {
    pub fn desk() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.overrides.insert(key.into(), value.into());
        self
    }

    pub fn resolve(&self) -> Result<TrainConfig> {
        let base = match self.preset {
            TrainPreset::Full => TrainConfig::default(),
            TrainPreset::Desk => TrainConfig::desk(),
        };
        let mut value = serde_json::to_value(base)?;
        let map = value.as_object_mut().expect("struct serializes to an object");
        for (k, v) in &self.overrides {
            if !map.contains_key(k) {
                return Err(Error::Format(format!("unknown train field `{k}`")));
            }
            map.insert(k.clone(), v.clone());
        }
        Ok(serde_json::from_value(value)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo: Option<PseudoEntry>,
    /// Training images per class.
    pub n_train: usize,
    /// Validation images per class.
    pub n_val: usize,
    #[serde(default)]
    pub model: ModelChoice,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub augmentation: AugmentationPolicy,
    #[serde(default)]
    pub corruption: CorruptionSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Everything that determines a run's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub datasets: Vec<DatasetEntry>,
    pub pseudo: Option<PseudoEntry>,
    pub n_train: usize,
    pub n_val: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub augmentation: AugmentationPolicy,
    pub corruption: CorruptionSpec,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn parse(text: &str, yaml: bool) -> Result<Self> {
        Ok(if yaml { serde_yaml::from_str(text)? } else { serde_json::from_str(text)? })
    }

    /// Reads a config; relative dataset paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
        let mut cfg = Self::parse(&text, yaml)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for d in &mut self.datasets {
            d.resolve_paths(base);
        }
        if let Some(p) = &mut self.pseudo {
            p.source.resolve_paths(base);
        }
    }

    pub fn num_classes(&self) -> usize {
        self.pseudo.as_ref().map_or(self.datasets.len(), |p| p.k)
    }

    pub fn class_names(&self) -> Vec<String> {
        match &self.pseudo {
            Some(p) => (0..p.k).map(|i| format!("{}#p{i}", p.source.id)).collect(),
            None => self.datasets.iter().map(|d| d.id.clone()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pseudo.is_some() && !self.datasets.is_empty() {
            return Err(Error::Format("use either `datasets` or `pseudo`, not both".into()));
        }
        if let Some(p) = &self.pseudo {
            if !p.signatures.is_empty() && p.signatures.len() != p.k {
                return Err(Error::Format(format!("pseudo: {} signatures for k = {}", p.signatures.len(), p.k)));
            }
        }
        if self.num_classes() < 2 {
            return Err(Error::Format("at least 2 datasets are required".into()));
        }
        let mut ids: Vec<&str> = self.datasets.iter().map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Format("duplicate dataset id".into()));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        self.validate()?;
        let mut train = self.train.resolve()?;
        train.seed = self.seed;
        Ok(ResolvedConfig {
            datasets: self.datasets.clone(),
            pseudo: self.pseudo.clone(),
            n_train: self.n_train,
            n_val: self.n_val,
            model: self.model.spec(self.num_classes()),
            train,
            augmentation: self.augmentation,
            corruption: self.corruption,
            seed: self.seed,
        })
    }

    pub fn config_hash(&self) -> Result<String> {
        self.resolve()?.hash()
    }
}

impl ResolvedConfig {
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(canonical_json(&serde_json::to_value(self)?).as_bytes()))
    }
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const YAML: &str = "
n_train: 10
n_val: 5
datasets:
  - { id: a, source: synthetic, style: alpha, count: 50 }
  - { id: b, source: synthetic, style: beta, count: 50, signature: { kind: gaussian_blur, parameter: 3 } }
train: { preset: desk, batch_size: 16 }
augmentation: { level: none }
";

    #[test]
    fn yaml_round_trip_and_overrides() {
        let cfg = ExperimentConfig::parse(YAML, true).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.train.batch_size, 16);
        assert_eq!(r.train.ref_dataset_size, 256);
        assert_eq!(r.model.num_classes, 2);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&json, false).unwrap(), cfg);
    }

    #[test]
    fn unknown_train_field_rejected() {
        let cfg = ExperimentConfig::parse(&YAML.replace("batch_size", "batch_sz"), true).unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn hash_ignores_name_and_formatting() {
        let a = ExperimentConfig::parse(YAML, true).unwrap();
        let mut b = ExperimentConfig::parse(&serde_json::to_string_pretty(&a).unwrap(), false).unwrap();
        b.name = "renamed".into();
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        b.seed = 1;
        assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
    }

    #[test]
    fn spelled_out_defaults_hash_equal() {
        let a = ExperimentConfig::parse(YAML, true).unwrap();
        let b = ExperimentConfig::parse(&YAML.replace("batch_size: 16", "batch_size: 16, ref_epochs: 300"), true).unwrap();
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
    }
}
