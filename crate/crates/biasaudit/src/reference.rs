//! Published full-scale results, shown beside measured values when a report
//! is rendered with `--reference`. Keys use the one-letter corpus codes
//! below.

use biasaudit_core::{AugmentationLevel, CorruptionKind, CorruptionSpec};

/// Dataset id → corpus letter.
pub const DATASETS: [(&str, char); 6] =
    [("yfcc", 'Y'), ("cc", 'C'), ("datacomp", 'D'), ("wit", 'W'), ("laion", 'L'), ("imagenet", 'I')];

pub fn letter(dataset_id: &str) -> Option<char> {
    DATASETS.iter().find(|(id, _)| *id == dataset_id).map(|&(_, l)| l)
}

/// Letters in corpus order, e.g. `YCD`; `None` if any id is unknown.
pub fn letters(datasets: &[String]) -> Option<String> {
    let mut ls = datasets.iter().map(|d| letter(d)).collect::<Option<Vec<char>>>()?;
    ls.sort_by_key(|l| DATASETS.iter().position(|&(_, x)| x == *l));
    Some(ls.into_iter().collect())
}

/// `Y+C+D` style label, falling back to the raw ids.
pub fn combination_label(datasets: &[String]) -> String {
    match letters(datasets) {
        Some(ls) => ls.chars().map(String::from).collect::<Vec<_>>().join("+"),
        None => datasets.join("+"),
    }
}

const COMBINATIONS: [(&str, f64); 23] = [
    ("YCD", 84.7),
    ("YCW", 83.9),
    ("YCL", 85.0),
    ("YCI", 92.7),
    ("YDW", 85.8),
    ("YDL", 72.1),
    ("YDI", 90.2),
    ("YWL", 86.6),
    ("YWI", 86.7),
    ("YLI", 91.9),
    ("CDW", 83.6),
    ("CDL", 62.8),
    ("CDI", 82.8),
    ("CWL", 84.3),
    ("CWI", 91.3),
    ("CLI", 84.1),
    ("DWL", 71.5),
    ("DWI", 88.9),
    ("DLI", 68.2),
    ("WLI", 90.7),
    ("YCDW", 79.1),
    ("YCDWL", 67.4),
    ("YCDWLI", 69.2),
];

pub fn combination(datasets: &[String]) -> Option<f64> {
    let key = letters(datasets)?;
    COMBINATIONS.iter().find(|(k, _)| *k == key).map(|&(_, v)| v)
}

/// YCD accuracy by augmentation level and training images per dataset.
pub fn augmentation(level: AugmentationLevel, images: usize) -> Option<f64> {
    let col = [10_000, 100_000, 1_000_000].iter().position(|&n| n == images)?;
    let row = match level {
        AugmentationLevel::None => [43.2, 71.9, 76.8],
        AugmentationLevel::RandCrop => [66.1, 74.5, 84.2],
        AugmentationLevel::RandCropRandAug => [70.2, 78.0, 85.0],
        AugmentationLevel::RandCropRandAugMix => [72.4, 80.1, 84.7],
    };
    Some(row[col])
}

/// YCD accuracy on corrupted data.
pub fn corruption(c: &CorruptionSpec) -> Option<f64> {
    let p = c.parameter;
    let hit = |x: f32| (p - x).abs() < 1e-6;
    Some(match c.kind {
        CorruptionKind::None => 84.7,
        CorruptionKind::ColorJitter if hit(1.0) => 81.1,
        CorruptionKind::ColorJitter if hit(2.0) => 80.2,
        CorruptionKind::GaussianNoise if hit(0.2) => 77.3,
        CorruptionKind::GaussianNoise if hit(0.3) => 75.1,
        CorruptionKind::GaussianBlur if hit(3.0) => 80.9,
        CorruptionKind::GaussianBlur if hit(5.0) => 78.1,
        CorruptionKind::LowResolution if hit(64.0) => 78.4,
        CorruptionKind::LowResolution if hit(32.0) => 68.4,
        _ => return None,
    })
}

/// Pseudo-dataset training accuracy (`"100.0"` or `"fail"`), without
/// augmentation or with the full ladder.
pub fn pseudo(level: AugmentationLevel, images: usize) -> Option<String> {
    let row = [100, 1_000, 10_000, 100_000].iter().position(|&n| n == images)?;
    let failed = match level {
        AugmentationLevel::None => [false, false, false, true],
        AugmentationLevel::RandCropRandAugMix => [false, false, true, true],
        _ => return None,
    };
    Some(if failed[row] { "fail".into() } else { "100.0".into() })
}

/// Linear-probe results by row label.
pub fn probe(label: &str) -> Option<f64> {
    Some(match label {
        "fully-supervised" => 82.9,
        "MAE trained on IN-1K" => 76.2,
        "MAE trained on YCD" => 78.4,
        "random weights" => 6.7,
        "Y+C+D" => 27.7,
        "Y+C+D+W" => 34.2,
        "Y+C+D+W+L" => 34.2,
        "Y+C+D+W+L+I" => 34.8,
        "MAE" => 68.0,
        "MoCo v3" => 76.7,
        _ => return None,
    })
}
