//! Feature cache files and the labels files that go with them.
//!
//! Cache layout (little endian): `b"BIASFEAT"`, `u32` version, `u64` rows,
//! `u64` cols, `u8` dtype tag (0 = f32), 32-byte extractor hash, 32-byte
//! split hash, then `rows × cols` row-major values. Files are written to a
//! temporary name and renamed, so concurrent readers never see a partial
//! matrix.

use std::path::{Path, PathBuf};

use biasaudit_core::model::FeatureExtractor;
use biasaudit_core::probe::{extract_features, FeatureMatrix};
use biasaudit_core::{Image, ProbeError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"BIASFEAT";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const HEADER: usize = 8 + 4 + 8 + 8 + 1 + 32 + 32;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub extractor_hash: [u8; 32],
    pub split_hash: [u8; 32],
    pub matrix: FeatureMatrix,
}

pub fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Identifies the image list a matrix was computed from.
pub fn split_hash<S: AsRef<str>>(image_ids: &[S], layer: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((layer as u64).to_le_bytes());
    for id in image_ids {
        let id = id.as_ref();
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
    }
    h.finalize().into()
}

pub fn encode(f: &FeatureFile) -> Vec<u8> {
    let m = &f.matrix;
    let mut out = Vec::with_capacity(HEADER + m.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols as u64).to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&f.extractor_hash);
    out.extend_from_slice(&f.split_hash);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FeatureFile> {
    let bad = |m: &str| Error::Format(format!("feature cache: {m}"));
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(bad("bad header"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes")) as usize;
    if u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) != VERSION {
        return Err(bad("unsupported version"));
    }
    let (rows, cols) = (u64_at(12), u64_at(20));
    if bytes[28] != DTYPE_F32 {
        return Err(bad("unsupported dtype"));
    }
    let extractor_hash = bytes[29..61].try_into().expect("32 bytes");
    let split_hash = bytes[61..93].try_into().expect("32 bytes");
    let payload = &bytes[HEADER..];
    if payload.len() != rows * cols * 4 {
        return Err(ProbeError::DimensionMismatch { expected: rows * cols, found: payload.len() / 4 }.into());
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(FeatureFile { extractor_hash, split_hash, matrix: FeatureMatrix::new(rows, cols, data)? })
}

pub fn write(path: &Path, f: &FeatureFile) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, encode(f)).at(&tmp)?;
    std::fs::rename(&tmp, path).at(path)
}

pub fn read(path: &Path) -> Result<FeatureFile> {
    decode(&std::fs::read(path).at(path)?)
}

pub fn cache_path(dir: &Path, extractor_hash: &[u8; 32], split_hash: &[u8; 32]) -> PathBuf {
    dir.join(format!("{}-{}.feat", &hex::encode(extractor_hash)[..16], &hex::encode(split_hash)[..16]))
}

/// Returns cached features for `(extractor, images, layer)`, computing and
/// storing them on a miss. A cached file whose width disagrees with the
/// extractor is an error rather than silently recomputed.
pub fn extract_cached<E: FeatureExtractor + ?Sized>(
    dir: &Path,
    extractor: &E,
    extractor_hash: [u8; 32],
    image_ids: &[String],
    images: &[Image],
    layer: usize,
) -> Result<FeatureFile> {
    let split_hash = split_hash(image_ids, layer);
    let path = cache_path(dir, &extractor_hash, &split_hash);
    let expected_cols = extractor.feature_dim(layer)?;
    if path.exists() {
        let f = read(&path)?;
        if f.matrix.cols != expected_cols || f.matrix.rows != images.len() {
            return Err(ProbeError::DimensionMismatch { expected: expected_cols, found: f.matrix.cols }.into());
        }
        if f.extractor_hash == extractor_hash && f.split_hash == split_hash {
            return Ok(f);
        }
    }
    let f = FeatureFile { extractor_hash, split_hash, matrix: extract_features(extractor, images, layer)? };
    write(&path, &f)?;
    Ok(f)
}

/// Class label per feature row plus the rows held out for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFile {
    pub n_classes: usize,
    pub labels: Vec<usize>,
    pub val_rows: Vec<usize>,
}

impl LabelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).at(path)?;
        let f: Self = serde_json::from_slice(&text)?;
        if f.labels.iter().any(|&l| l >= f.n_classes) || f.val_rows.iter().any(|&r| r >= f.labels.len()) {
            return Err(Error::Format(format!("{}: label or row out of range", path.display())));
        }
        Ok(f)
    }

    /// Splits matrix rows into `(train, train_labels, val, val_labels)`.
    pub fn partition(&self, m: &FeatureMatrix) -> Result<(FeatureMatrix, Vec<usize>, FeatureMatrix, Vec<usize>)> {
        if m.rows != self.labels.len() {
            return Err(ProbeError::LabelMismatch { rows: m.rows, labels: self.labels.len() }.into());
        }
        let mut is_val = vec![false; m.rows];
        for &r in &self.val_rows {
            is_val[r] = true;
        }
        let pick = |want: bool| -> Result<(FeatureMatrix, Vec<usize>)> {
            let rows: Vec<usize> = (0..m.rows).filter(|&r| is_val[r] == want).collect();
            let data = rows.iter().flat_map(|&r| m.row(r).iter().copied()).collect();
            Ok((FeatureMatrix::new(rows.len(), m.cols, data)?, rows.iter().map(|&r| self.labels[r]).collect()))
        };
        let (train, train_labels) = pick(false)?;
        let (val, val_labels) = pick(true)?;
        Ok((train, train_labels, val, val_labels))
    }
}
