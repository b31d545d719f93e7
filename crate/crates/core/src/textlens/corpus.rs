use std::collections::{BTreeSet, HashMap};

use super::tokenize::{tokenize, TokenizerConfig};
use crate::error::{Error, Result};
use crate::manifest::{CaptionField, DatasetManifest};

/// Tokenized captions with dataset labels and a sorted vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Vec<usize>>,
    pub dataset_labels: Vec<usize>,
    pub vocab: Vec<String>,
}

impl Corpus {
    pub fn from_tokens(documents: &[Vec<String>], dataset_labels: Vec<usize>) -> Result<Self> {
        if documents.len() != dataset_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} documents but {} labels",
                documents.len(),
                dataset_labels.len()
            )));
        }
        let vocab: Vec<String> = documents
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let documents = documents
            .iter()
            .map(|d| d.iter().map(|t| index[t.as_str()]).collect())
            .collect();
        Ok(Corpus {
            documents,
            dataset_labels,
            vocab,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

/// Tokenized captions of every sample, grouped per manifest.
pub fn manifest_tokens(
    manifests: &[DatasetManifest],
    field: CaptionField,
    cfg: &TokenizerConfig,
) -> Result<Vec<Vec<Vec<String>>>> {
    manifests
        .iter()
        .map(|m| {
            m.samples
                .iter()
                .map(|s| {
                    s.caption(field)
                        .map(|c| tokenize(c, cfg))
                        .ok_or_else(|| Error::MissingAnnotation {
                            sample: s.id.clone(),
                            what: caption_name(field),
                        })
                })
                .collect()
        })
        .collect()
}

pub(crate) fn caption_name(field: CaptionField) -> &'static str {
    match field {
        CaptionField::Short => "caption_short",
        CaptionField::Long => "caption_long",
    }
}

/// One document per sample, labelled by manifest index.
pub fn corpus_from_manifests(
    manifests: &[DatasetManifest],
    field: CaptionField,
    cfg: &TokenizerConfig,
) -> Result<Corpus> {
    let grouped = manifest_tokens(manifests, field, cfg)?;
    let labels = grouped.iter().enumerate().flat_map(|(m, d)| std::iter::repeat_n(m, d.len())).collect();
    let docs: Vec<Vec<String>> = grouped.into_iter().flatten().collect();
    Corpus::from_tokens(&docs, labels)
}
