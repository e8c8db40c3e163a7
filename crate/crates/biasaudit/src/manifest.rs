//! Line-delimited JSON manifests.
//!
//! The first line is a header object; each following line is one image:
//!
//! ```text
//! {"dataset_id":"yfcc","display_name":"YFCC","root_uri":"/data/yfcc","predefined_train_split":[0,2]}
//! {"image_id":"a","path":"a.jpg","width":640,"height":480}
//! ```
//!
//! `predefined_train_split` indexes image lines in file order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use biasaudit_core::{DatasetManifest, ImageRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    dataset_id: String,
    display_name: String,
    root_uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predefined_train_split: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    notes: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Line {
    image_id: String,
    path: String,
    width: u32,
    height: u32,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    decode_ok: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// Parses manifest text; `origin` is only used in error messages.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<DatasetManifest> {
    let parse_err = |line: usize, message: String| Error::Parse { path: origin.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (n, first) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let header: Header = serde_json::from_str(first).map_err(|e| parse_err(n + 1, e.to_string()))?;
    let mut records = Vec::new();
    for (n, l) in lines {
        let r: Line = serde_json::from_str(l).map_err(|e| parse_err(n + 1, e.to_string()))?;
        records.push(ImageRecord { image_id: r.image_id, relative_path: r.path, width: r.width, height: r.height, decode_ok: r.decode_ok });
    }
    let split = match header.predefined_train_split {
        Some(file_indices) => Some(file_order_to_sorted(&records, &file_indices)?),
        None => None,
    };
    Ok(DatasetManifest::new(header.dataset_id, header.display_name, header.root_uri, records, split)?
        .with_notes(header.notes))
}

fn file_order_to_sorted(records: &[ImageRecord], file_indices: &[usize]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].image_id.cmp(&records[b].image_id));
    let mut rank = vec![0; records.len()];
    for (sorted, &file) in order.iter().enumerate() {
        rank[file] = sorted;
    }
    file_indices
        .iter()
        .map(|&i| {
            rank.get(i)
                .copied()
                .ok_or(biasaudit_core::DatasetError::SplitIndexOutOfRange { index: i, len: records.len() }.into())
        })
        .collect()
}

/// Loads a manifest file: records come back sorted by id, duplicate ids and
/// empty listings are errors.
pub fn register_dataset(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).at(path)?;
    parse_manifest(&text, path)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut w = BufWriter::new(file);
    let header = Header {
        dataset_id: manifest.dataset_id.clone(),
        display_name: manifest.display_name.clone(),
        root_uri: manifest.root_uri.clone(),
        predefined_train_split: manifest.predefined_train_split().map(<[usize]>::to_vec),
        notes: manifest.notes.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?).at(path)?;
    for r in manifest.images() {
        let line = Line {
            image_id: r.image_id.clone(),
            path: r.relative_path.clone(),
            width: r.width,
            height: r.height,
            decode_ok: r.decode_ok,
        };
        writeln!(w, "{}", serde_json::to_string(&line)?).at(path)?;
    }
    w.flush().at(path)
}

/// Reads newline-delimited JSON values, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).at(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_indices_follow_file_order() {
        let text = r#"{"dataset_id":"d","display_name":"D","root_uri":"/x","predefined_train_split":[0]}
{"image_id":"b","path":"b.jpg","width":2,"height":2}
{"image_id":"a","path":"a.jpg","width":2,"height":2}
"#;
        let m = parse_manifest(text, Path::new("m.jsonl")).unwrap();
        assert_eq!(m.predefined_train_split(), Some(&[1][..]));
        assert_eq!(m.record(1).image_id, "b");
    }

    #[test]
    fn bad_line_reports_position() {
        let text = "{\"dataset_id\":\"d\",\"display_name\":\"D\",\"root_uri\":\"\"}\n{\"image_id\":1}\n";
        let err = parse_manifest(text, Path::new("m.jsonl")).unwrap_err();
        assert!(err.to_string().starts_with("m.jsonl:2:"), "{err}");
    }
}
