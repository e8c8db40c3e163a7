//! Fingerprints of every seeded computation, printed by `biasaudit digest`.
//! Two processes (or machines) agree on all lines iff sampling, corruption,
//! transforms and grid enumeration are bit-reproducible.

use biasaudit_core::dataset::{build_pseudo_datasets, sample_split, ImageSource};
use biasaudit_core::grid::enumerate_combinations;
use biasaudit_core::synth::{SyntheticSource, SyntheticStyle};
use biasaudit_core::transform::{apply_corruption, eval_transform, train_transform};
use biasaudit_core::{
    AugmentationLevel, AugmentationPolicy, CorruptionSpec, CounterRng, Geometry, Image, PseudoDatasetSpec,
};
use sha2::{Digest, Sha256};

use crate::error::Result;

fn image_digest(h: &mut Sha256, img: &Image) {
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    for v in img.data() {
        h.update(v.to_bits().to_le_bytes());
    }
}

fn hex(h: Sha256) -> String {
    hex::encode(h.finalize())
}

/// `(name, sha256)` pairs in a fixed order.
pub fn determinism_digests(seed: u64) -> Result<Vec<(String, String)>> {
    let source = SyntheticSource::new(SyntheticStyle::preset("alpha").expect("preset"), seed);
    let manifest = source.manifest("src", 600)?;
    let mut out = Vec::new();

    let split = sample_split(&manifest, 200, 50, seed)?;
    out.push(("sample_split".into(), hex(Sha256::new().chain_update(serde_json::to_vec(&split)?))));

    let spec = PseudoDatasetSpec { source_dataset_id: "src".into(), k: 3, n_per_set: 100, n_val_per_set: 30, seed };
    let sets = build_pseudo_datasets(&manifest, &spec)?;
    out.push(("build_pseudo_datasets".into(), hex(Sha256::new().chain_update(serde_json::to_vec(&sets)?))));

    let images: Vec<(String, Image)> = (0..4)
        .map(|i| {
            let r = manifest.record(i * 7);
            Ok((r.image_id.clone(), source.load(r)?))
        })
        .collect::<Result<_>>()?;
    let corruptions = [
        CorruptionSpec::none(),
        CorruptionSpec::color_jitter(1.0),
        CorruptionSpec::gaussian_noise(0.2),
        CorruptionSpec::gaussian_blur(3.0),
        CorruptionSpec::low_resolution(32.0),
    ];
    for c in corruptions {
        let mut h = Sha256::new();
        for (id, img) in &images {
            image_digest(&mut h, &apply_corruption(img, &c.with_seed_base(seed), id)?);
        }
        out.push((format!("apply_corruption/{}", c.label()), hex(h)));
    }

    let mut h = Sha256::new();
    for (_, img) in &images {
        image_digest(&mut h, &eval_transform(img, &Geometry::default()));
        image_digest(&mut h, &eval_transform(img, &Geometry::scaled(32)));
    }
    out.push(("eval_transform".into(), hex(h)));

    let mut h = Sha256::new();
    let policy = AugmentationPolicy::new(AugmentationLevel::RandCropRandAug);
    for (i, (_, img)) in images.iter().enumerate() {
        let mut rng = CounterRng::new(seed).fork(i as u64);
        image_digest(&mut h, &train_transform(img, &policy, &Geometry::scaled(32), &mut rng));
    }
    out.push(("train_transform".into(), hex(h)));

    let pool = ["yfcc", "cc", "datacomp", "wit", "laion", "imagenet"];
    let combos = enumerate_combinations(&pool, 3).expect("k <= pool");
    out.push(("enumerate_combinations".into(), hex(Sha256::new().chain_update(serde_json::to_vec(&combos)?))));
    Ok(out)
}

pub fn render(digests: &[(String, String)]) -> String {
    digests.iter().map(|(k, v)| format!("{k} {v}\n")).collect()
}
