use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const STOPWORDS: &str = include_str!("stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub remove_stopwords: bool,
    pub min_length: usize,
    /// Append adjacent pairs joined with `_` after the unigrams.
    pub bigrams: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            remove_stopwords: true,
            min_length: 2,
            bigrams: false,
        }
    }
}

/// Lowercases, splits on anything that is not alphanumeric, then filters.
/// Bigrams pair neighbours in the filtered sequence.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens: Vec<String> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= cfg.min_length.max(1))
        .filter(|t| !(cfg.remove_stopwords && is_stopword(t)))
        .map(str::to_owned)
        .collect();
    if cfg.bigrams {
        let pairs: Vec<String> = tokens.windows(2).map(|w| format!("{}_{}", w[0], w[1])).collect();
        tokens.extend(pairs);
    }
    tokens
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseCount {
    pub phrase: String,
    pub count: u64,
}

/// Counts every token of every document and returns the `n_top` most
/// frequent, count descending then alphabetical.
pub fn phrase_frequencies<D: AsRef<[String]>>(documents: &[D], n_top: usize) -> Vec<PhraseCount> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in documents {
        for t in doc.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<PhraseCount> = counts
        .into_iter()
        .map(|(p, count)| PhraseCount {
            phrase: p.to_owned(),
            count,
        })
        .collect();
    // BTreeMap order is alphabetical and the sort is stable.
    ranked.sort_by_key(|p| std::cmp::Reverse(p.count));
    ranked.truncate(n_top);
    ranked
}
