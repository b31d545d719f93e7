//! Dataset-bias analysis toolkit.
//!
//! Transform images to isolate one information channel, train a dataset-origin
//! classifier on each channel, and explain the differences with object- and
//! caption-level analyses.

pub mod classify;
pub mod cli;
pub mod error;
pub mod llm;
pub mod manifest;
pub mod objects;
pub mod par;
pub mod raster;
pub mod rng;
pub mod split;
pub mod synthetic;
pub mod textlens;
pub mod transforms;

pub use error::{Error, Result};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, Sample, Vocabulary};
pub use raster::{load_image, save_png, FeatureImage, ImageBuffer};
pub use rng::Rng;
pub use split::{sample_split, Split};
