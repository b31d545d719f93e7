//! Caption analytics: tokenization, phrase counts, topic models and
//! bag-of-words caption classification.

mod corpus;
mod lda;
mod tokenize;

pub use corpus::{corpus_from_manifests, manifest_tokens, Corpus};
pub use lda::{lda_fit, top_word_indices, top_words, LdaConfig, LdaSampler, TopicModel};
pub use tokenize::{is_stopword, phrase_frequencies, tokenize, PhraseCount, TokenizerConfig};

pub(crate) use corpus::caption_name;

use crate::classify::{Experiment, FeatureKind, FeatureSpec, MemoryImages, TrainConfig, TrialReport};
use crate::error::Result;
use crate::manifest::{CaptionField, DatasetManifest};
use crate::transforms::TransformSpec;

/// Dataset classification from captions alone, using bag-of-words features
/// as a cheap proxy for a learned sentence encoder.
pub fn caption_classification(
    manifests: &[DatasetManifest],
    field: CaptionField,
    vocab_size: usize,
    train: &TrainConfig,
    n_trials: usize,
    n_train: usize,
    n_val: usize,
) -> Result<TrialReport> {
    let images = MemoryImages::default();
    let features = FeatureSpec::new(FeatureKind::BagOfWords {
        vocab_size,
        caption: field,
        tokenizer: TokenizerConfig::default(),
    });
    let transform = TransformSpec::Identity;
    Experiment::new(manifests, &images, &transform, &features, train).run_trials(n_trials, n_train, n_val)
}
