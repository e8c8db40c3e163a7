//! Building manifests from image directories and loading stored images.
//!
//! Stored images are RGB with the shorter side capped at 500 pixels. They are
//! kept as PNG files in a content-addressed cache keyed by dataset id, image
//! id and the preprocessing version, so a change in preprocessing never
//! serves stale pixels.

use std::path::{Path, PathBuf};

use biasaudit_core::dataset::{preprocess_dims, ImageSource};
use biasaudit_core::{DatasetError, DatasetManifest, Image, ImageRecord};
use image::imageops::FilterType;
use image::RgbImage;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{IoContext, Result};

pub const PREPROCESS_VERSION: u32 = 1;
const EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Decodes any supported file to RGB and applies the ingestion resize.
pub fn decode_and_preprocess(bytes: &[u8]) -> Result<RgbImage> {
    let rgb = image::load_from_memory(bytes)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let (nw, nh) = preprocess_dims(w, h);
    if (nw, nh) == (w, h) {
        return Ok(rgb);
    }
    Ok(image::imageops::resize(&rgb, nw as u32, nh as u32, FilterType::Triangle))
}

pub fn to_core(rgb: &RgbImage) -> Image {
    Image::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

pub fn encode_png(img: &Image) -> Vec<u8> {
    let raw = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8()).expect("buffer matches dims");
    encode_rgb_png(&raw)
}

fn encode_rgb_png(img: &RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("png encoding to memory");
    out.into_inner()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct ImageCache {
    dir: PathBuf,
}

impl ImageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(dataset_id: &str, image_id: &str) -> String {
        let mut h = Sha256::new();
        h.update(PREPROCESS_VERSION.to_le_bytes());
        h.update((dataset_id.len() as u64).to_le_bytes());
        h.update(dataset_id.as_bytes());
        h.update(image_id.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn path(&self, dataset_id: &str, image_id: &str) -> PathBuf {
        let key = Self::key(dataset_id, image_id);
        self.dir.join(&key[..2]).join(format!("{key}.png"))
    }

    pub fn get(&self, dataset_id: &str, image_id: &str) -> Option<RgbImage> {
        let bytes = std::fs::read(self.path(dataset_id, image_id)).ok()?;
        image::load_from_memory(&bytes).ok().map(|i| i.to_rgb8())
    }

    /// Writes through a temporary file so readers never see partial PNGs.
    pub fn put(&self, dataset_id: &str, image_id: &str, img: &RgbImage) -> Result<PathBuf> {
        let path = self.path(dataset_id, image_id);
        let parent = path.parent().expect("cache paths have a parent");
        std::fs::create_dir_all(parent).at(parent)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, encode_rgb_png(img)).at(&tmp)?;
        std::fs::rename(&tmp, &path).at(&path)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildReport {
    pub images: usize,
    pub undecodable: Vec<String>,
}

/// Scans `root` for images (sorted walk, ids are `/`-separated relative
/// paths). Undecodable files stay in the manifest flagged `decode_ok = false`
/// so sampling skips them. Stored dimensions are recorded.
pub fn build_dataset(
    root: &Path,
    dataset_id: &str,
    display_name: &str,
    cache: Option<&ImageCache>,
) -> Result<(DatasetManifest, BuildReport)> {
    let mut records = Vec::new();
    let mut undecodable = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| crate::error::Error::Format(format!("{}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let id = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        let bytes = std::fs::read(path).at(path)?;
        match decode_and_preprocess(&bytes) {
            Ok(img) => {
                if let Some(cache) = cache {
                    cache.put(dataset_id, &id, &img)?;
                }
                records.push(ImageRecord::new(id.clone(), id, img.width(), img.height()));
            }
            Err(_) => {
                undecodable.push(id.clone());
                records.push(ImageRecord::undecodable(id.clone(), id));
            }
        }
    }
    let report = BuildReport { images: records.len(), undecodable };
    let manifest = DatasetManifest::new(dataset_id, display_name, root.to_string_lossy(), records, None)?;
    Ok((manifest, report))
}

/// Loads manifest records from disk, preferring the cache.
#[derive(Debug, Clone)]
pub struct FileSource {
    pub dataset_id: String,
    pub root: PathBuf,
    pub cache: Option<ImageCache>,
}

impl FileSource {
    pub fn new(manifest: &DatasetManifest, root: Option<&Path>, cache: Option<ImageCache>) -> Self {
        Self {
            dataset_id: manifest.dataset_id.clone(),
            root: root.map_or_else(|| PathBuf::from(&manifest.root_uri), Path::to_path_buf),
            cache,
        }
    }

    pub fn load_rgb(&self, record: &ImageRecord) -> std::result::Result<RgbImage, DatasetError> {
        if let Some(img) = self.cache.as_ref().and_then(|c| c.get(&self.dataset_id, &record.image_id)) {
            return Ok(img);
        }
        let path = self.root.join(&record.relative_path);
        let bytes = std::fs::read(&path).map_err(|e| DatasetError::Load(format!("{}: {e}", path.display())))?;
        let img = decode_and_preprocess(&bytes).map_err(|e| DatasetError::Load(format!("{}: {e}", path.display())))?;
        if let Some(cache) = &self.cache {
            // A failed cache write only costs a re-decode next time.
            let _ = cache.put(&self.dataset_id, &record.image_id, &img);
        }
        Ok(img)
    }
}

impl ImageSource for FileSource {
    fn load(&self, record: &ImageRecord) -> std::result::Result<Image, DatasetError> {
        Ok(to_core(&self.load_rgb(record)?))
    }
}
