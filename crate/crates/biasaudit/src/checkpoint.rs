//! Checkpoint files: a small binary container for the flat parameter
//! buffer, plus a JSON sidecar (`<file>.json`) with run metadata.
//!
//! Layout (little endian): `b"BIASCKPT"`, `u32` version, `u32` spec length,
//! spec JSON, `u64` parameter count, parameters as `f32`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use biasaudit_core::{ModelSpec, ReferenceCnn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::ingest::sha256_hex;

const MAGIC: &[u8; 8] = b"BIASCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub class_names: Vec<String>,
    pub iteration: usize,
    pub budget: usize,
    pub model: ModelSpec,
    pub param_count: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(model: &ReferenceCnn) -> Vec<u8> {
    let spec = serde_json::to_vec(model.spec()).expect("spec serializes");
    let mut out = Vec::with_capacity(24 + spec.len() + model.params().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ReferenceCnn> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(bad("unsupported version"));
    }
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
    let spec_len = u32::from_le_bytes(u32buf) as usize;
    if r.len() < spec_len + 8 {
        return Err(bad("truncated spec"));
    }
    let spec: ModelSpec = serde_json::from_slice(&r[..spec_len])?;
    r = &r[spec_len..];
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|_| bad("truncated header"))?;
    let n = u64::from_le_bytes(u64buf) as usize;
    if r.len() != n * 4 {
        return Err(bad("parameter payload size mismatch"));
    }
    let params = r.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(ReferenceCnn::from_params(&spec, params)?)
}

/// Hash of the parameters and architecture; identifies an extractor.
pub fn model_hash(model: &ReferenceCnn) -> String {
    sha256_hex(&encode(model))
}

pub fn save(path: &Path, model: &ReferenceCnn, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).at(&tmp)?;
    f.write_all(&encode(model)).at(&tmp)?;
    f.sync_all().at(&tmp)?;
    std::fs::rename(&tmp, path).at(path)?;
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_vec_pretty(meta)?).at(&side)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ReferenceCnn, Option<CheckpointMeta>)> {
    let bytes = std::fs::read(path).at(path)?;
    let model = decode(&bytes)?;
    let side = sidecar_path(path);
    let meta = match std::fs::read(&side) {
        Ok(b) => Some(serde_json::from_slice(&b)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::Io { path: side, source: e }),
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let model = ReferenceCnn::new(&ModelSpec::reference(0.5, 3), 4).unwrap();
        let back = decode(&encode(&model)).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(back.spec(), model.spec());
    }

    #[test]
    fn corrupt_payload_rejected() {
        let model = ReferenceCnn::new(&ModelSpec::reference(0.5, 3), 4).unwrap();
        let mut bytes = encode(&model);
        bytes.pop();
        assert!(decode(&bytes).is_err());
        bytes[0] = b'X';
        assert!(decode(&bytes).is_err());
    }
}
