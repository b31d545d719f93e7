//! Synthetic corpora with known structure, for tests, benchmarks and demos.

use std::path::{Path, PathBuf};

use crate::classify::{ImageSource, MemoryImages};
use crate::error::{Error, Result};
use crate::manifest::{save_manifest, DatasetManifest, Sample};
use crate::raster::{save_png, ImageBuffer};
use crate::rng::Rng;

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn build(
    names: &[String],
    per_dataset: usize,
    mut make: impl FnMut(usize, usize) -> ImageBuffer,
) -> (Vec<DatasetManifest>, MemoryImages) {
    let mut images = MemoryImages::default();
    let manifests = names
        .iter()
        .enumerate()
        .map(|(d, name)| {
            let samples = (0..per_dataset)
                .map(|i| {
                    let id = format!("{name}-{i:05}");
                    images.insert(name, &id, make(d, i));
                    Sample::new(id.clone(), format!("{id}.png"))
                })
                .collect();
            DatasetManifest::new(name.clone(), samples).expect("unique ids")
        })
        .collect();
    (manifests, images)
}

/// One dataset per entry of `means`. Every image has a color drawn per
/// channel from `N(mean, sigma)` plus per-pixel noise of the same scale.
pub fn color_datasets(
    means: &[f64],
    sigma: f64,
    per_dataset: usize,
    side: usize,
    seed: u64,
) -> (Vec<DatasetManifest>, MemoryImages) {
    let names: Vec<String> = (0..means.len()).map(|d| format!("color{d}")).collect();
    build(&names, per_dataset, |d, i| {
        let mut rng = Rng::keyed(seed, format!("color:{d}:{i}").as_bytes());
        let base: Vec<f64> = (0..3).map(|_| rng.normal(means[d], sigma)).collect();
        ImageBuffer::from_fn(side, side, 3, |_, _, c| clamp_u8(base[c] + rng.normal(0.0, sigma))).expect("geometry")
    })
}

/// A left-to-right ramp with random offset and slope.
pub fn horizontal_ramp(rng: &mut Rng, side: usize) -> ImageBuffer {
    let base = rng.uniform() * 60.0;
    let slope = (150.0 + rng.uniform() * 40.0) / side as f64;
    let noise: Vec<f64> = (0..side * side).map(|_| rng.normal(0.0, 4.0)).collect();
    ImageBuffer::from_fn(side, side, 1, |x, y, _| clamp_u8(base + slope * x as f64 + noise[y * side + x]))
        .expect("geometry")
}

/// Two datasets that differ only in layout: `horizontal` holds left-to-right
/// ramps and `vertical` holds transposed ramps, so both draw their pixel
/// values from the same distribution.
pub fn layout_datasets(per_dataset: usize, side: usize, seed: u64) -> (Vec<DatasetManifest>, MemoryImages) {
    let names = vec!["horizontal".to_string(), "vertical".to_string()];
    build(&names, per_dataset, |d, i| {
        let mut rng = Rng::keyed(seed, format!("layout:{d}:{i}").as_bytes());
        let ramp = horizontal_ramp(&mut rng, side);
        if d == 0 {
            ramp
        } else {
            ImageBuffer::from_fn(side, side, 1, |x, y, _| ramp.get(y, x, 0)).expect("geometry")
        }
    })
}

/// One dataset of i.i.d. noise images.
pub fn homogeneous_dataset(n: usize, side: usize, seed: u64) -> (DatasetManifest, MemoryImages) {
    let (mut ms, images) = build(&["homogeneous".to_string()], n, |_, i| {
        let mut rng = Rng::keyed(seed, format!("noise:{i}").as_bytes());
        let base = rng.normal(128.0, 30.0);
        ImageBuffer::from_fn(side, side, 3, |_, _, _| clamp_u8(base + rng.normal(0.0, 25.0))).expect("geometry")
    });
    (ms.remove(0), images)
}

/// Documents drawn from disjoint planted vocabularies: topic `t` uses the
/// words `t{t}w{j}` for `j < words_per_topic`, with probability proportional
/// to `1 / (j + 1)`, so the true top words of a topic are `w0, w1, ...`.
/// Returns the documents with their topic labels.
pub fn planted_topic_documents(
    topics: usize,
    words_per_topic: usize,
    docs_per_topic: usize,
    doc_len: usize,
    seed: u64,
) -> (Vec<Vec<String>>, Vec<usize>) {
    let mut rng = Rng::keyed(seed, b"planted");
    let cumulative: Vec<f64> = (0..words_per_topic)
        .scan(0.0, |acc, j| {
            *acc += 1.0 / (j + 1) as f64;
            Some(*acc)
        })
        .collect();
    let total = cumulative.last().copied().unwrap_or(0.0);
    let word = |rng: &mut Rng| {
        let u = rng.uniform() * total;
        cumulative.partition_point(|&c| c <= u).min(words_per_topic - 1)
    };
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for t in 0..topics {
        for _ in 0..docs_per_topic {
            docs.push((0..doc_len).map(|_| format!("t{t}w{}", word(&mut rng))).collect());
            labels.push(t);
        }
    }
    (docs, labels)
}

/// Caption datasets: each caption mixes `shared` words with words from the
/// dataset's own pool (`own` of `doc_len` tokens).
pub fn caption_datasets(
    datasets: usize,
    per_dataset: usize,
    doc_len: usize,
    own: usize,
    seed: u64,
) -> (Vec<DatasetManifest>, MemoryImages) {
    const SHARED: [&str; 8] = ["photo", "image", "people", "outdoor", "picture", "scene", "view", "day"];
    let mut rng = Rng::keyed(seed, b"captions");
    let names: Vec<String> = (0..datasets).map(|d| format!("captions{d}")).collect();
    let manifests = names
        .iter()
        .enumerate()
        .map(|(d, name)| {
            let samples = (0..per_dataset)
                .map(|i| {
                    let words: Vec<String> = (0..doc_len)
                        .map(|j| {
                            if j < own {
                                format!("d{d}word{}", rng.below(6))
                            } else {
                                SHARED[rng.below(SHARED.len())].to_string()
                            }
                        })
                        .collect();
                    let text = words.join(" ");
                    Sample::new(format!("{name}-{i:05}"), format!("{name}-{i:05}.png"))
                        .with_captions(Some(text.clone()), Some(text))
                })
                .collect();
            DatasetManifest::new(name.clone(), samples).expect("unique ids")
        })
        .collect();
    (manifests, MemoryImages::default())
}

/// Writes each manifest as `<dir>/<name>.jsonl` with its in-memory images
/// as PNGs under `<dir>/<name>/`. Samples without an image keep their path
/// unwritten. Returns the manifest paths in order.
pub fn write_to_disk(manifests: &[DatasetManifest], images: &MemoryImages, dir: &Path) -> Result<Vec<PathBuf>> {
    manifests
        .iter()
        .map(|m| {
            let image_dir = dir.join(&m.name);
            std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
            let mut samples = Vec::with_capacity(m.len());
            for s in &m.samples {
                let mut s = s.clone();
                let file = format!("{}/{}", m.name, s.image_path);
                if let Ok(img) = images.load(m, &s) {
                    save_png(&img, dir.join(&file))?;
                }
                s.image_path = file;
                samples.push(s);
            }
            let path = dir.join(format!("{}.jsonl", m.name));
            save_manifest(&DatasetManifest::new(m.name.clone(), samples)?, &path)?;
            Ok(path)
        })
        .collect()
}
