use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::CaptionField;
use crate::raster::{resample_bilinear, FeatureImage};
use crate::textlens::TokenizerConfig;
use crate::transforms::hog_features;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Bilinear resize to `side x side`, all channels, scaled to [0, 1].
    RawPixels { side: usize },
    /// Per-channel means scaled to [0, 1].
    MeanRgb,
    Hog {
        #[serde(default = "default_cell")]
        cell: usize,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    /// Binary presence over the object vocabulary.
    BagOfObjects,
    /// L2-normalized token counts over the most frequent training tokens.
    BagOfWords {
        vocab_size: usize,
        #[serde(default)]
        caption: CaptionField,
        #[serde(default)]
        tokenizer: TokenizerConfig,
    },
}

fn default_cell() -> usize {
    8
}

fn default_bins() -> usize {
    9
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::RawPixels { .. } => "raw_pixels",
            FeatureKind::MeanRgb => "mean_rgb",
            FeatureKind::Hog { .. } => "hog",
            FeatureKind::BagOfObjects => "bag_of_objects",
            FeatureKind::BagOfWords { .. } => "bag_of_words",
        }
    }

    pub fn uses_images(&self) -> bool {
        matches!(
            self,
            FeatureKind::RawPixels { .. } | FeatureKind::MeanRgb | FeatureKind::Hog { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    #[serde(flatten)]
    pub kind: FeatureKind,
    /// Standardize each feature with train-split statistics.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            kind: FeatureKind::RawPixels { side: 16 },
            normalize: true,
        }
    }
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind) -> Self {
        FeatureSpec { kind, normalize: false }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            FeatureKind::RawPixels { side } if *side < 2 => {
                Err(Error::InvalidConfig("raw_pixels side must be at least 2".into()))
            }
            FeatureKind::Hog { cell, bins } if *cell == 0 || *bins == 0 => {
                Err(Error::InvalidConfig("HOG cell and bins must be positive".into()))
            }
            FeatureKind::BagOfWords { vocab_size: 0, .. } => {
                Err(Error::InvalidConfig("bag_of_words vocab_size must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Features of an image-derived kind. Other kinds are rejected.
pub fn image_features(img: &FeatureImage, kind: &FeatureKind) -> Result<Vec<f64>> {
    match *kind {
        FeatureKind::RawPixels { side } => Ok(resample_bilinear(
            img.data(),
            img.width(),
            img.height(),
            img.channels(),
            side,
            side,
        )
        .into_iter()
        .map(|v| v / 255.0)
        .collect()),
        FeatureKind::MeanRgb => {
            let c = img.channels();
            let mut sums = vec![0u64; c];
            for px in img.data().chunks_exact(c) {
                for (s, &v) in sums.iter_mut().zip(px) {
                    *s += u64::from(v);
                }
            }
            let n = (img.width() * img.height()) as f64;
            Ok(sums.into_iter().map(|s| s as f64 / n / 255.0).collect())
        }
        FeatureKind::Hog { cell, bins } => Ok(hog_features(&img.to_image()?, cell, bins)?.features),
        _ => Err(Error::FeatureKindMismatch {
            expected: "an image feature kind",
            found: kind.name().into(),
        }),
    }
}

pub fn bag_of_objects(indices: &[usize], vocab_len: usize) -> Vec<f64> {
    let mut v = vec![0.0; vocab_len];
    for &i in indices {
        v[i] = 1.0;
    }
    v
}

/// The `size` most frequent tokens, count descending then alphabetical.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordVocabulary {
    pub words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl WordVocabulary {
    pub fn most_frequent<'a, D>(documents: impl IntoIterator<Item = D>, size: usize) -> Self
    where
        D: IntoIterator<Item = &'a String>,
    {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for doc in documents {
            for t in doc {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
        let words: Vec<String> = ranked.into_iter().take(size).map(|(w, _)| w.to_owned()).collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        WordVocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Counts over the vocabulary, L2-normalized. Out-of-vocabulary tokens
    /// are ignored and an all-unknown document maps to zeros.
    pub fn encode(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.words.len()];
        for t in tokens {
            if let Some(&i) = self.index.get(t) {
                v[i] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Per-feature standardization fitted on training rows. Constant features
/// are centered but not scaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Array1<f64> = x.sum_axis(Axis(0)) / n;
        let var: Array1<f64> = x
            .rows()
            .into_iter()
            .fold(Array1::zeros(x.ncols()), |acc, r| acc + (&r - &mean).mapv(|d| d * d))
            / n;
        Standardizer {
            mean: mean.to_vec(),
            scale: var.iter().map(|&v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect(),
        }
    }

    pub fn apply(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Stacks equal-length feature vectors into an `N x D` matrix.
pub fn stack_rows(rows: &[&[f64]]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut flat = Vec::with_capacity(rows.len() * d);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "feature row {i} has {} values, expected {d}",
                r.len()
            )));
        }
        flat.extend_from_slice(r);
    }
    Ok(Array2::from_shape_vec((rows.len(), d), flat).expect("shape checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ImageBuffer;
    use crate::rng::Rng;

    /// Direct bilinear resampler written against the pixel accessor.
    fn bilinear_oracle(img: &ImageBuffer, side: usize) -> Vec<f64> {
        let scale = img.width() as f64 / side as f64;
        let coord = |o: usize, n: usize| {
            let s = ((o as f64 + 0.5) * scale - 0.5).max(0.0).min((n - 1) as f64);
            let lo = s.floor() as usize;
            (lo, (lo + 1).min(n - 1), s - lo as f64)
        };
        let mut out = Vec::new();
        for oy in 0..side {
            for ox in 0..side {
                let (x0, x1, fx) = coord(ox, img.width());
                let (y0, y1, fy) = coord(oy, img.height());
                for c in 0..img.channels() {
                    let p = |x, y| img.get(x, y, c) as f64;
                    let v = p(x0, y0) * (1.0 - fx) * (1.0 - fy)
                        + p(x1, y0) * fx * (1.0 - fy)
                        + p(x0, y1) * (1.0 - fx) * fy
                        + p(x1, y1) * fx * fy;
                    out.push(v / 255.0);
                }
            }
        }
        out
    }

    #[test]
    fn raw_pixels_match_bilinear_oracle() {
        let mut rng = Rng::new(2, 0);
        let img = ImageBuffer::from_fn(8, 8, 3, |_, _, _| rng.below(256) as u8).unwrap();
        let got = image_features(&img.clone().into(), &FeatureKind::RawPixels { side: 4 }).unwrap();
        let want = bilinear_oracle(&img, 4);
        assert_eq!(got.len(), 48);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_rgb_white() {
        let img = ImageBuffer::filled(5, 3, &[255, 255, 255]).unwrap();
        assert_eq!(image_features(&img.into(), &FeatureKind::MeanRgb).unwrap(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn objects_presence() {
        assert_eq!(bag_of_objects(&[2, 5], 8), [0., 0., 1., 0., 0., 1., 0., 0.]);
    }

    #[test]
    fn non_image_kind_rejected() {
        let img = ImageBuffer::filled(4, 4, &[0]).unwrap();
        assert!(matches!(
            image_features(&img.into(), &FeatureKind::BagOfObjects),
            Err(Error::FeatureKindMismatch { .. })
        ));
    }

    #[test]
    fn word_vocab_and_encoding() {
        let d = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let docs = [d(&["b", "a", "b"]), d(&["c", "a", "d"])];
        let v = WordVocabulary::most_frequent(&docs, 3);
        assert_eq!(v.words, ["a", "b", "c"]);
        let e = v.encode(&d(&["b", "b", "zz"]));
        assert_eq!(e, [0.0, 1.0, 0.0]);
        let e = v.encode(&d(&["a", "b"]));
        assert!((e[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(v.encode(&d(&["zz"])), [0.0; 3]);
    }

    #[test]
    fn standardizer_uses_given_rows() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let s = Standardizer::fit(&x);
        let mut y = x.clone();
        s.apply(&mut y);
        assert!((y[[0, 0]] + (1.5f64).sqrt()).abs() < 1e-12);
        assert_eq!(y.column(1).to_vec(), [0.0; 3]);
    }

    #[test]
    fn spec_from_toml() {
        let s: FeatureSpec = toml::from_str("kind = \"raw_pixels\"\nside = 16\nnormalize = true").unwrap();
        assert_eq!(s.kind, FeatureKind::RawPixels { side: 16 });
        assert!(s.normalize);
        let s: FeatureSpec = toml::from_str("kind = \"hog\"").unwrap();
        assert_eq!(s.kind, FeatureKind::Hog { cell: 8, bins: 9 });
        assert!(FeatureSpec::new(FeatureKind::RawPixels { side: 1 }).validate().is_err());
    }
}
