use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::{bag_of_objects, image_features, stack_rows, FeatureKind, FeatureSpec, WordVocabulary};
use super::softmax::{evaluate, SoftmaxModel, TrainConfig};
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, Sample, Vocabulary};
use crate::par::Parallelism;
use crate::raster::{load_image, ImageBuffer};
use crate::rng::Rng;
use crate::split::{sample_split, SampleRef};
use crate::textlens::{caption_name, tokenize};
use crate::transforms::{mean_rgb, TransformSpec};

/// Where pixels come from. Implementations must be shareable across threads.
pub trait ImageSource: Sync {
    fn load(&self, manifest: &DatasetManifest, sample: &Sample) -> Result<ImageBuffer>;
}

/// Reads image files referenced by the manifest.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiskImages;

impl ImageSource for DiskImages {
    fn load(&self, manifest: &DatasetManifest, sample: &Sample) -> Result<ImageBuffer> {
        load_image(manifest.image_path(sample))
    }
}

/// Images held in memory, keyed by manifest name and sample id.
#[derive(Clone, Debug, Default)]
pub struct MemoryImages {
    images: HashMap<(String, String), ImageBuffer>,
}

impl MemoryImages {
    pub fn insert(&mut self, manifest: &str, sample_id: &str, img: ImageBuffer) {
        self.images.insert((manifest.to_owned(), sample_id.to_owned()), img);
    }
}

impl ImageSource for MemoryImages {
    fn load(&self, manifest: &DatasetManifest, sample: &Sample) -> Result<ImageBuffer> {
        self.images
            .get(&(manifest.name.clone(), sample.id.clone()))
            .cloned()
            .ok_or_else(|| Error::MissingAnnotation {
                sample: sample.id.clone(),
                what: "image",
            })
    }
}

/// Settings echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub transform: TransformSpec,
    pub features: FeatureSpec,
    pub train: TrainConfig,
    pub resize: usize,
    pub n_trials: usize,
    pub n_train: usize,
    pub n_val: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub class_names: Vec<String>,
    pub per_trial_accuracy: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over trials.
    pub std: f64,
    /// Rows are true classes, columns predictions, summed over trials.
    pub confusion: Vec<Vec<u64>>,
    pub config: TrialConfig,
}

/// Everything one trial produced, for analyses beyond the summary.
#[derive(Clone, Debug)]
pub struct TrialDetail {
    pub model: SoftmaxModel,
    pub val: Vec<SampleRef>,
    pub val_labels: Vec<usize>,
    pub predictions: Vec<usize>,
    pub train_accuracy: f64,
}

/// One experiment: which manifests, how images are prepared and featurized,
/// and how the classifier is trained. Dataset `m` is class `m`.
#[derive(Clone, Copy)]
pub struct Experiment<'a> {
    pub manifests: &'a [DatasetManifest],
    pub images: &'a dyn ImageSource,
    pub transform: &'a TransformSpec,
    pub features: &'a FeatureSpec,
    pub train: &'a TrainConfig,
    /// Images are resized to `resize x resize` before the transform; 0 keeps
    /// the decoded size.
    pub resize: usize,
    pub object_vocab: Option<&'a Vocabulary>,
    pub parallelism: Parallelism,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoRow {
    pub size: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    PatchSize(Vec<usize>),
    FilterRadius(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: TrialReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRgbRow {
    pub dataset: String,
    pub id: String,
    pub means: Vec<f64>,
}

pub const DEFAULT_RESIZE: usize = 64;

enum Prepared {
    Dense(HashMap<SampleRef, Vec<f64>>),
    Tokens(HashMap<SampleRef, Vec<String>>),
}

impl<'a> Experiment<'a> {
    pub fn new(
        manifests: &'a [DatasetManifest],
        images: &'a dyn ImageSource,
        transform: &'a TransformSpec,
        features: &'a FeatureSpec,
        train: &'a TrainConfig,
    ) -> Self {
        Experiment {
            manifests,
            images,
            transform,
            features,
            train,
            resize: DEFAULT_RESIZE,
            object_vocab: None,
            parallelism: Parallelism::default(),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.manifests.iter().map(|m| m.name.clone()).collect()
    }

    fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        if matches!(self.features.kind, FeatureKind::BagOfObjects) && self.object_vocab.is_none() {
            return Err(Error::InvalidConfig("bag_of_objects features need an object vocabulary".into()));
        }
        Ok(())
    }

    /// Loads, resizes and transforms one image.
    pub fn load_transformed(&self, r: SampleRef) -> Result<crate::raster::FeatureImage> {
        let manifest = &self.manifests[r.0];
        let sample = &manifest.samples[r.1];
        let mut img = self.images.load(manifest, sample)?;
        if self.resize > 0 && (img.width(), img.height()) != (self.resize, self.resize) {
            img = img.resize(self.resize, self.resize);
        }
        self.transform.apply(&img, &sample.id)
    }

    /// Features of one sample. Bag-of-words needs a vocabulary fitted on a
    /// training split and is handled by the trial runner instead.
    pub fn sample_features(&self, r: SampleRef) -> Result<Vec<f64>> {
        match &self.features.kind {
            FeatureKind::BagOfObjects => {
                let vocab = self.object_vocab.ok_or_else(|| {
                    Error::InvalidConfig("bag_of_objects features need an object vocabulary".into())
                })?;
                let idx = self.manifests[r.0].samples[r.1].object_indices(vocab)?;
                Ok(bag_of_objects(&idx, vocab.len()))
            }
            FeatureKind::BagOfWords { .. } => Err(Error::FeatureKindMismatch {
                expected: "a per-sample feature kind",
                found: "bag_of_words".into(),
            }),
            kind => image_features(&self.load_transformed(r)?, kind),
        }
    }

    fn prepare(&self, refs: &[SampleRef]) -> Result<Prepared> {
        if let FeatureKind::BagOfWords { caption, tokenizer, .. } = &self.features.kind {
            let tokens = self.parallelism.try_map(refs, |&r| {
                let s = &self.manifests[r.0].samples[r.1];
                s.caption(*caption)
                    .map(|c| (r, tokenize(c, tokenizer)))
                    .ok_or_else(|| Error::MissingAnnotation {
                        sample: s.id.clone(),
                        what: caption_name(*caption),
                    })
            })?;
            return Ok(Prepared::Tokens(tokens.into_iter().collect()));
        }
        let rows = self.parallelism.try_map(refs, |&r| Ok::<_, Error>((r, self.sample_features(r)?)))?;
        Ok(Prepared::Dense(rows.into_iter().collect()))
    }

    fn design(&self, prepared: &Prepared, train: &[SampleRef], val: &[SampleRef]) -> Result<(Array2<f64>, Array2<f64>)> {
        match prepared {
            Prepared::Dense(map) => {
                let rows = |refs: &[SampleRef]| stack_rows(&refs.iter().map(|r| map[r].as_slice()).collect::<Vec<_>>());
                Ok((rows(train)?, rows(val)?))
            }
            Prepared::Tokens(map) => {
                let FeatureKind::BagOfWords { vocab_size, .. } = self.features.kind else {
                    unreachable!("tokens are only prepared for bag-of-words")
                };
                let vocab = WordVocabulary::most_frequent(train.iter().map(|r| &map[r]), vocab_size);
                let rows = |refs: &[SampleRef]| -> Result<Array2<f64>> {
                    let enc: Vec<Vec<f64>> = refs.iter().map(|r| vocab.encode(&map[r])).collect();
                    let mut m = stack_rows(&enc.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
                    if m.ncols() == 0 {
                        m = Array2::zeros((refs.len(), 1));
                    }
                    Ok(m)
                };
                Ok((rows(train)?, rows(val)?))
            }
        }
    }

    fn fit_and_score(
        &self,
        prepared: &Prepared,
        train: &[(SampleRef, usize)],
        val: &[(SampleRef, usize)],
        class_names: Vec<String>,
        seed: u64,
    ) -> Result<TrialDetail> {
        let train_refs: Vec<SampleRef> = train.iter().map(|p| p.0).collect();
        let val_refs: Vec<SampleRef> = val.iter().map(|p| p.0).collect();
        let train_labels: Vec<usize> = train.iter().map(|p| p.1).collect();
        let val_labels: Vec<usize> = val.iter().map(|p| p.1).collect();
        let (xt, xv) = self.design(prepared, &train_refs, &val_refs)?;
        let cfg = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let (model, _) = SoftmaxModel::train(&xt, &train_labels, class_names, self.features.clone(), &cfg)?;
        let train_accuracy = evaluate(&model, &xt, &train_labels)?.accuracy;
        let predictions = model.predict(&xv)?;
        Ok(TrialDetail {
            model,
            val: val_refs,
            val_labels,
            predictions,
            train_accuracy,
        })
    }

    /// Trial `t` draws its split and trains with seed `train.seed + t`.
    pub fn run_trials(&self, n_trials: usize, n_train: usize, n_val: usize) -> Result<TrialReport> {
        Ok(self.run_trials_detailed(n_trials, n_train, n_val)?.0)
    }

    pub fn run_trials_detailed(
        &self,
        n_trials: usize,
        n_train: usize,
        n_val: usize,
    ) -> Result<(TrialReport, Vec<TrialDetail>)> {
        self.validate()?;
        if n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        let seeds: Vec<u64> = (0..n_trials as u64).map(|t| self.train.seed.wrapping_add(t)).collect();
        let splits = seeds
            .iter()
            .map(|&s| sample_split(self.manifests, n_train, n_val, s))
            .collect::<Result<Vec<_>>>()?;
        let needed: Vec<SampleRef> = splits
            .iter()
            .flat_map(|s| s.train.iter().chain(&s.val).copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let prepared = self.prepare(&needed)?;
        let names = self.class_names();
        let details = self.parallelism.try_map_range(n_trials, |t| {
            let label = |&r: &SampleRef| (r, r.0);
            let train: Vec<_> = splits[t].train.iter().map(label).collect();
            let val: Vec<_> = splits[t].val.iter().map(label).collect();
            self.fit_and_score(&prepared, &train, &val, names.clone(), seeds[t])
        })?;
        let report = self.summarize(&details, n_trials, n_train, n_val);
        Ok((report, details))
    }

    fn summarize(&self, details: &[TrialDetail], n_trials: usize, n_train: usize, n_val: usize) -> TrialReport {
        let k = self.manifests.len();
        let mut confusion = vec![vec![0u64; k]; k];
        let per_trial_accuracy: Vec<f64> = details
            .iter()
            .map(|d| {
                let mut correct = 0usize;
                for (&t, &p) in d.val_labels.iter().zip(&d.predictions) {
                    confusion[t][p] += 1;
                    correct += usize::from(t == p);
                }
                correct as f64 / d.val_labels.len().max(1) as f64
            })
            .collect();
        let (mean, std) = mean_std(&per_trial_accuracy);
        TrialReport {
            class_names: self.class_names(),
            per_trial_accuracy,
            mean,
            std,
            confusion,
            config: TrialConfig {
                transform: self.transform.clone(),
                features: self.features.clone(),
                train: self.train.clone(),
                resize: self.resize,
                n_trials,
                n_train,
                n_val,
            },
        }
    }

    /// Runs [`Self::run_trials`] once per axis value with the value
    /// substituted into the base transform.
    pub fn sweep(&self, axis: &SweepAxis, n_trials: usize, n_train: usize, n_val: usize) -> Result<Vec<SweepRow>> {
        let values: Vec<(f64, TransformSpec)> = match axis {
            SweepAxis::PatchSize(sizes) => sizes
                .iter()
                .map(|&p| Ok((p as f64, with_patch(self.transform, p)?)))
                .collect::<Result<_>>()?,
            SweepAxis::FilterRadius(radii) => radii
                .iter()
                .map(|&r| Ok((r, with_radius(self.transform, r)?)))
                .collect::<Result<_>>()?,
        };
        if values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        values
            .into_iter()
            .map(|(value, transform)| {
                let exp = Experiment {
                    transform: &transform,
                    ..*self
                };
                Ok(SweepRow {
                    value,
                    report: exp.run_trials(n_trials, n_train, n_val)?,
                })
            })
            .collect()
    }

    /// Splits manifest `manifest` into `k` disjoint pseudo-datasets and
    /// checks whether the classifier can tell them apart on held-out samples.
    ///
    /// A shuffle of the manifest is cut into `k` training blocks of
    /// `max(sizes)` followed by `k` validation blocks of `val_per_dataset`.
    /// Each size trains on the first `size` samples of every block.
    pub fn pseudo_dataset_check(
        &self,
        manifest: usize,
        k: usize,
        sizes: &[usize],
        val_per_dataset: usize,
    ) -> Result<Vec<PseudoRow>> {
        self.validate()?;
        if k < 2 || sizes.is_empty() || val_per_dataset == 0 {
            return Err(Error::InvalidConfig(
                "pseudo-dataset check needs k >= 2, at least one size and a validation size".into(),
            ));
        }
        let source = &self.manifests[manifest];
        let max_size = *sizes.iter().max().expect("nonempty");
        let needed = k * (max_size + val_per_dataset);
        if needed > source.len() {
            return Err(Error::InsufficientSamples {
                manifest: source.name.clone(),
                needed,
                available: source.len(),
            });
        }
        let perm = Rng::keyed(self.train.seed, b"pseudo").permutation(source.len());
        let used: Vec<SampleRef> = perm[..needed].iter().map(|&s| (manifest, s)).collect();
        let prepared = self.prepare(&used)?;
        let names: Vec<String> = (0..k).map(|j| format!("{}#{}", source.name, j + 1)).collect();
        let val: Vec<(SampleRef, usize)> = (0..k)
            .flat_map(|j| {
                let start = k * max_size + j * val_per_dataset;
                perm[start..start + val_per_dataset].iter().map(move |&s| ((manifest, s), j))
            })
            .collect();
        self.parallelism.try_map(sizes, |&size| {
            let train: Vec<(SampleRef, usize)> = (0..k)
                .flat_map(|j| perm[j * max_size..j * max_size + size].iter().map(move |&s| ((manifest, s), j)))
                .collect();
            let d = self.fit_and_score(&prepared, &train, &val, names.clone(), self.train.seed)?;
            let correct = d.val_labels.iter().zip(&d.predictions).filter(|(a, b)| a == b).count();
            Ok(PseudoRow {
                size,
                train_accuracy: d.train_accuracy,
                val_accuracy: correct as f64 / d.val_labels.len() as f64,
            })
        })
    }

    /// Exact per-channel means of every decoded image, before resizing.
    pub fn mean_rgb_rows(&self) -> Result<Vec<MeanRgbRow>> {
        let refs: Vec<SampleRef> = self
            .manifests
            .iter()
            .enumerate()
            .flat_map(|(m, man)| (0..man.len()).map(move |s| (m, s)))
            .collect();
        self.parallelism.try_map(&refs, |&(m, s)| {
            let manifest = &self.manifests[m];
            let sample = &manifest.samples[s];
            let img = self.images.load(manifest, sample)?;
            Ok(MeanRgbRow {
                dataset: manifest.name.clone(),
                id: sample.id.clone(),
                means: mean_rgb(&img).means,
            })
        })
    }
}

fn with_patch(base: &TransformSpec, patch: usize) -> Result<TransformSpec> {
    match base {
        TransformSpec::PatchShuffle { mode, seed, .. } | TransformSpec::PixelShuffle { mode, seed } => {
            Ok(TransformSpec::PatchShuffle {
                patch,
                mode: *mode,
                seed: *seed,
            })
        }
        other => Err(Error::InvalidConfig(format!(
            "a patch-size sweep needs a shuffle transform, not {}",
            other.name()
        ))),
    }
}

fn with_radius(base: &TransformSpec, radius: f64) -> Result<TransformSpec> {
    match base {
        TransformSpec::FftFilter(spec) => {
            let mut spec = spec.clone();
            spec.radius = radius;
            Ok(TransformSpec::FftFilter(spec))
        }
        other => Err(Error::InvalidConfig(format!(
            "a radius sweep needs an fft_filter transform, not {}",
            other.name()
        ))),
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{caption_datasets, color_datasets, homogeneous_dataset, layout_datasets};
    use crate::textlens::TokenizerConfig;
    use crate::transforms::ShuffleMode;

    fn mean_rgb_spec() -> FeatureSpec {
        FeatureSpec::new(FeatureKind::MeanRgb)
    }

    #[test]
    fn color_separated_datasets() {
        let (ms, imgs) = color_datasets(&[60.0, 128.0, 196.0], 20.0, 60, 16, 1);
        let f = FeatureSpec {
            normalize: true,
            ..mean_rgb_spec()
        };
        let (t, c) = (TransformSpec::Identity, TrainConfig::default());
        let mut exp = Experiment::new(&ms, &imgs, &t, &f, &c);
        exp.resize = 0;
        let r = exp.run_trials(2, 30, 20).unwrap();
        assert!(r.mean >= 0.95, "{r:?}");
        for row in &r.confusion {
            assert_eq!(row.iter().sum::<u64>(), 20 * 2);
        }
        assert_eq!(r.mean, (r.per_trial_accuracy[0] + r.per_trial_accuracy[1]) / 2.0);
    }

    #[test]
    fn identical_distributions_near_chance_and_deterministic() {
        let (ms, imgs) = color_datasets(&[128.0, 128.0], 20.0, 200, 8, 2);
        let (t, f, c) = (TransformSpec::Identity, mean_rgb_spec(), TrainConfig::default());
        let mut exp = Experiment::new(&ms, &imgs, &t, &f, &c);
        exp.resize = 0;
        let r = exp.run_trials(3, 100, 100).unwrap();
        assert!((r.mean - 0.5).abs() <= 0.05, "{}", r.mean);
        exp.parallelism = Parallelism::Sequential;
        assert_eq!(exp.run_trials(3, 100, 100).unwrap(), r);
        let one = exp.run_trials(1, 100, 100).unwrap();
        assert_eq!(one.std, 0.0);
    }

    #[test]
    fn sweep_rows_and_substitution() {
        let (ms, imgs) = layout_datasets(40, 32, 3);
        let t = TransformSpec::PixelShuffle {
            mode: ShuffleMode::RandomOrder,
            seed: 0,
        };
        let f = FeatureSpec::new(FeatureKind::RawPixels { side: 8 });
        let c = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let mut exp = Experiment::new(&ms, &imgs, &t, &f, &c);
        exp.resize = 32;
        let rows = exp.sweep(&SweepAxis::PatchSize(vec![8, 8]), 1, 20, 10).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], rows[1]);
        assert!(matches!(
            rows[0].report.config.transform,
            TransformSpec::PatchShuffle { patch: 8, .. }
        ));
        assert!(exp.sweep(&SweepAxis::PatchSize(vec![]), 1, 20, 10).is_err());
        assert!(exp.sweep(&SweepAxis::FilterRadius(vec![4.0]), 1, 20, 10).is_err());
    }

    #[test]
    fn pseudo_datasets() {
        let (m, imgs) = homogeneous_dataset(150, 8, 4);
        let ms = [m];
        let (t, f, c) = (TransformSpec::Identity, mean_rgb_spec(), TrainConfig::default());
        let mut exp = Experiment::new(&ms, &imgs, &t, &f, &c);
        exp.resize = 0;
        let rows = exp.pseudo_dataset_check(0, 3, &[10, 20], 30).unwrap();
        assert_eq!(rows.iter().map(|r| r.size).collect::<Vec<_>>(), [10, 20]);
        assert!(matches!(
            exp.pseudo_dataset_check(0, 3, &[40], 20),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn pseudo_datasets_can_be_memorized() {
        let (m, imgs) = homogeneous_dataset(240, 8, 5);
        let ms = [m];
        let t = TransformSpec::Identity;
        let f = FeatureSpec::new(FeatureKind::RawPixels { side: 8 });
        let c = TrainConfig {
            epochs: 200,
            label_smoothing: 0.0,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut exp = Experiment::new(&ms, &imgs, &t, &f, &c);
        exp.resize = 0;
        let rows = exp.pseudo_dataset_check(0, 2, &[10], 100).unwrap();
        assert_eq!(rows[0].train_accuracy, 1.0);
        assert!((rows[0].val_accuracy - 0.5).abs() <= 0.1, "{rows:?}");
    }

    #[test]
    fn bag_of_words_separates_disjoint_captions() {
        let (ms, imgs) = caption_datasets(2, 100, 8, 3, 6);
        let f = FeatureSpec::new(FeatureKind::BagOfWords {
            vocab_size: 50,
            caption: Default::default(),
            tokenizer: TokenizerConfig::default(),
        });
        let (t, c) = (TransformSpec::Identity, TrainConfig::default());
        let exp = Experiment::new(&ms, &imgs, &t, &f, &c);
        assert!(exp.run_trials(2, 50, 50).unwrap().mean >= 0.99);
        let one = FeatureSpec::new(FeatureKind::BagOfWords {
            vocab_size: 1,
            caption: Default::default(),
            tokenizer: TokenizerConfig::default(),
        });
        let exp = Experiment::new(&ms, &imgs, &t, &one, &c);
        assert!(exp.run_trials(2, 50, 50).unwrap().mean <= 0.65);
    }

    #[test]
    fn missing_image_is_reported() {
        let (ms, _) = color_datasets(&[10.0, 20.0], 1.0, 5, 4, 0);
        let empty = MemoryImages::default();
        let (t, f, c) = (TransformSpec::Identity, mean_rgb_spec(), TrainConfig::default());
        let exp = Experiment::new(&ms, &empty, &t, &f, &c);
        assert!(matches!(exp.run_trials(1, 2, 2), Err(Error::MissingAnnotation { .. })));
    }
}
