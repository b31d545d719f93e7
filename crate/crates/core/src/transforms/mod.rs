//! Image transformations that keep or suppress one kind of information.
//!
//! Every transform maps an [`ImageBuffer`] to a new image (plus, for some,
//! side outputs such as feature vectors or keypoints). [`TransformSpec`] is the
//! serializable description used by the harness and the CLI.

mod canny;
mod draw;
mod frequency;
mod gray;
mod hog;
mod shuffle;
mod sift;

pub use canny::{canny, CannySpec};
pub use frequency::{
    equalize_histogram, fft_filter, filter_gray_f64, Band, FilterKind, FrequencyFilterSpec,
    Rescale,
};
pub use gray::{blur_gaussian, gray_f64, mean_rgb, to_grayscale, MeanRgb};
pub use hog::{hog_features, hog_render, HogOutput};
pub use shuffle::{patch_shuffle, pixel_shuffle, shuffle_permutation, ShuffleMode};
pub use sift::{sift_keypoints, Keypoint, SiftParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{FeatureImage, ImageBuffer};

/// Stacks the channels of `b` after those of `a`.
pub fn concat_channels(a: &FeatureImage, b: &FeatureImage) -> Result<FeatureImage> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (ca, cb) = (a.channels(), b.channels());
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    FeatureImage::new(a.width(), a.height(), ca + cb, data)
}

fn default_hog_cell() -> usize {
    8
}

fn default_hog_bins() -> usize {
    9
}

/// A transformation together with its parameters, as written in spec files:
///
/// ```toml
/// transform = "patch_shuffle"
/// patch = 16
/// mode = "random_order"
/// seed = 3
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    #[default]
    Identity,
    Grayscale,
    MeanRgb,
    PixelShuffle {
        mode: ShuffleMode,
        #[serde(default)]
        seed: u64,
    },
    PatchShuffle {
        patch: usize,
        mode: ShuffleMode,
        #[serde(default)]
        seed: u64,
    },
    Canny(CannySpec),
    FftFilter(FrequencyFilterSpec),
    Hog {
        #[serde(default = "default_hog_cell")]
        cell: usize,
        #[serde(default = "default_hog_bins")]
        bins: usize,
    },
    Sift,
    Concat {
        first: Box<TransformSpec>,
        second: Box<TransformSpec>,
    },
}

impl TransformSpec {
    /// Applies the transform. `sample_id` keys random-order shuffles.
    pub fn apply(&self, img: &ImageBuffer, sample_id: &str) -> Result<FeatureImage> {
        let out = match self {
            TransformSpec::Identity => img.clone(),
            TransformSpec::Grayscale => to_grayscale(img),
            TransformSpec::MeanRgb => mean_rgb(img).image,
            TransformSpec::PixelShuffle { mode, seed } => pixel_shuffle(img, *mode, *seed, sample_id),
            TransformSpec::PatchShuffle { patch, mode, seed } => {
                patch_shuffle(img, *patch, *mode, *seed, sample_id)?
            }
            TransformSpec::Canny(spec) => canny(img, spec)?,
            TransformSpec::FftFilter(spec) => fft_filter(img, spec)?,
            TransformSpec::Hog { cell, bins } => hog_render(img, *cell, *bins)?.image,
            TransformSpec::Sift => sift_keypoints(img, &SiftParams::default())?.1,
            TransformSpec::Concat { first, second } => {
                let a = first.apply(img, sample_id)?;
                let b = second.apply(img, sample_id)?;
                return concat_channels(&a, &b);
            }
        };
        Ok(out.into())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TransformSpec::PatchShuffle { patch: 0, .. } => {
                Err(Error::InvalidConfig("patch size must be at least 1".into()))
            }
            TransformSpec::Canny(spec) => spec.validate(),
            TransformSpec::FftFilter(spec) => spec.validate(),
            TransformSpec::Hog { cell, bins } if *cell == 0 || *bins == 0 => {
                Err(Error::InvalidConfig("HOG cell and bins must be positive".into()))
            }
            TransformSpec::Concat { first, second } => {
                first.validate()?;
                second.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformSpec::Identity => "identity",
            TransformSpec::Grayscale => "grayscale",
            TransformSpec::MeanRgb => "mean_rgb",
            TransformSpec::PixelShuffle { .. } => "pixel_shuffle",
            TransformSpec::PatchShuffle { .. } => "patch_shuffle",
            TransformSpec::Canny(_) => "canny",
            TransformSpec::FftFilter(_) => "fft_filter",
            TransformSpec::Hog { .. } => "hog",
            TransformSpec::Sift => "sift",
            TransformSpec::Concat { .. } => "concat",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_gray_gray_and_rgb_gray() {
        let a: FeatureImage = ImageBuffer::filled(3, 2, &[7]).unwrap().into();
        let b: FeatureImage = ImageBuffer::filled(3, 2, &[9]).unwrap().into();
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.channels(), 2);
        assert_eq!(ab.channel_slice(0..1).unwrap(), a);

        let rgb: FeatureImage = ImageBuffer::from_fn(3, 2, 3, |x, y, c| (x + 3 * y + 10 * c) as u8)
            .unwrap()
            .into();
        let four = concat_channels(&rgb, &b).unwrap();
        assert_eq!(four.channels(), 4);
        assert_eq!(four.channel_slice(0..3).unwrap(), rgb);
        assert_eq!(four.channel_slice(3..4).unwrap(), b);
    }

    #[test]
    fn concat_rejects_size_mismatch() {
        let a: FeatureImage = ImageBuffer::filled(3, 2, &[7]).unwrap().into();
        let b: FeatureImage = ImageBuffer::filled(2, 3, &[9]).unwrap().into();
        assert!(matches!(concat_channels(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn spec_parses_from_toml() {
        let s: TransformSpec =
            toml::from_str("transform = \"patch_shuffle\"\npatch = 16\nmode = \"fixed_order\"\n").unwrap();
        assert_eq!(
            s,
            TransformSpec::PatchShuffle {
                patch: 16,
                mode: ShuffleMode::FixedOrder,
                seed: 0
            }
        );
        let s: TransformSpec = toml::from_str(
            "transform = \"fft_filter\"\nband = \"high_pass\"\nkind = { butterworth = { order = 2 } }\nradius = 30.0\n",
        )
        .unwrap();
        assert!(matches!(s, TransformSpec::FftFilter(_)));
        let s: TransformSpec = toml::from_str(
            "transform = \"concat\"\nfirst = { transform = \"canny\" }\nsecond = { transform = \"grayscale\" }\n",
        )
        .unwrap();
        let img = ImageBuffer::filled(8, 8, &[1, 2, 3]).unwrap();
        assert_eq!(s.apply(&img, "x").unwrap().channels(), 2);
    }
}
