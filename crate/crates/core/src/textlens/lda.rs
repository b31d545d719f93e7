use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 5,
            alpha: 0.1,
            beta: 0.01,
            iterations: 500,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics < 2 {
            return Err(Error::InvalidConfig("LDA needs at least 2 topics".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidConfig("LDA alpha and beta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicModel {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vec<String>,
    /// Topic-word distributions, `topics x |vocab|`.
    pub phi: Vec<Vec<f64>>,
    /// Document-topic distributions, `documents x topics`.
    pub theta: Vec<Vec<f64>>,
    #[serde(skip)]
    pub assignments: Vec<Vec<usize>>,
}

/// Collapsed Gibbs sampler state.
pub struct LdaSampler<'a> {
    corpus: &'a Corpus,
    k: usize,
    alpha: f64,
    beta: f64,
    z: Vec<Vec<usize>>,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_total: Vec<u32>,
    weights: Vec<f64>,
    rng: Rng,
}

impl<'a> LdaSampler<'a> {
    /// Assigns every token a uniformly random topic.
    pub fn new(corpus: &'a Corpus, cfg: &LdaConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(Error::InvalidConfig("LDA corpus is empty".into()));
        }
        if let Some(d) = corpus.documents.iter().position(Vec::is_empty) {
            return Err(Error::EmptyDocument(d));
        }
        let (k, v) = (cfg.topics, corpus.vocab.len());
        let mut rng = Rng::keyed(cfg.seed, b"lda");
        let mut doc_topic = vec![0u32; corpus.len() * k];
        let mut topic_word = vec![0u32; k * v];
        let mut topic_total = vec![0u32; k];
        let z = corpus
            .documents
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let t = rng.below(k);
                        doc_topic[d * k + t] += 1;
                        topic_word[t * v + w] += 1;
                        topic_total[t] += 1;
                        t
                    })
                    .collect()
            })
            .collect();
        Ok(LdaSampler {
            corpus,
            k,
            alpha: cfg.alpha,
            beta: cfg.beta,
            z,
            doc_topic,
            topic_word,
            topic_total,
            weights: vec![0.0; k],
            rng,
        })
    }

    /// Resamples every token once, in document order.
    pub fn sweep(&mut self) {
        let (k, v) = (self.k, self.corpus.vocab.len());
        let vbeta = v as f64 * self.beta;
        for (d, doc) in self.corpus.documents.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = self.z[d][i];
                self.doc_topic[d * k + old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_total[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (f64::from(self.doc_topic[d * k + t]) + self.alpha)
                        * (f64::from(self.topic_word[t * v + w]) + self.beta)
                        / (f64::from(self.topic_total[t]) + vbeta);
                    total += p;
                    self.weights[t] = total;
                }
                let u = self.rng.uniform() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.z[d][i] = new;
                self.doc_topic[d * k + new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_total[new] += 1;
            }
        }
    }

    /// Recounts from the assignments and compares with the running tables,
    /// and checks that every document and word keeps its token count.
    pub fn counts_consistent(&self) -> bool {
        let (k, v) = (self.k, self.corpus.vocab.len());
        let mut dt = vec![0u32; self.doc_topic.len()];
        let mut tw = vec![0u32; self.topic_word.len()];
        let mut word_freq = vec![0u32; v];
        for (d, doc) in self.corpus.documents.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let t = self.z[d][i];
                dt[d * k + t] += 1;
                tw[t * v + w] += 1;
                word_freq[w] += 1;
            }
        }
        let docs_ok = self
            .corpus
            .documents
            .iter()
            .enumerate()
            .all(|(d, doc)| self.doc_topic[d * k..(d + 1) * k].iter().sum::<u32>() as usize == doc.len());
        let words_ok = (0..v).all(|w| (0..k).map(|t| self.topic_word[t * v + w]).sum::<u32>() == word_freq[w]);
        let totals_ok = (0..k).all(|t| self.topic_word[t * v..(t + 1) * v].iter().sum::<u32>() == self.topic_total[t]);
        dt == self.doc_topic && tw == self.topic_word && docs_ok && words_ok && totals_ok
    }

    /// Posterior-mean estimates from the current counts.
    pub fn model(&self) -> TopicModel {
        let (k, v) = (self.k, self.corpus.vocab.len());
        let phi = (0..k)
            .map(|t| {
                let denom = f64::from(self.topic_total[t]) + v as f64 * self.beta;
                (0..v)
                    .map(|w| (f64::from(self.topic_word[t * v + w]) + self.beta) / denom)
                    .collect()
            })
            .collect();
        let theta = self
            .corpus
            .documents
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                let denom = doc.len() as f64 + k as f64 * self.alpha;
                (0..k)
                    .map(|t| (f64::from(self.doc_topic[d * k + t]) + self.alpha) / denom)
                    .collect()
            })
            .collect();
        TopicModel {
            topics: k,
            alpha: self.alpha,
            beta: self.beta,
            vocab: self.corpus.vocab.clone(),
            phi,
            theta,
            assignments: self.z.clone(),
        }
    }
}

pub fn lda_fit(corpus: &Corpus, cfg: &LdaConfig) -> Result<TopicModel> {
    let mut sampler = LdaSampler::new(corpus, cfg)?;
    for _ in 0..cfg.iterations {
        sampler.sweep();
    }
    Ok(sampler.model())
}

/// Indices of the `per_topic` highest-probability words of each topic, ties
/// broken alphabetically (the vocabulary is sorted, so by index).
pub fn top_word_indices(model: &TopicModel, per_topic: usize) -> Vec<Vec<usize>> {
    model
        .phi
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| model.vocab[a].cmp(&model.vocab[b])));
            idx.truncate(per_topic);
            idx
        })
        .collect()
}

pub fn top_words(model: &TopicModel, per_topic: usize) -> Vec<Vec<String>> {
    top_word_indices(model, per_topic)
        .into_iter()
        .map(|ws| ws.into_iter().map(|w| model.vocab[w].clone()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&[&str]]) -> Corpus {
        let docs: Vec<Vec<String>> = docs.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect();
        let n = docs.len();
        Corpus::from_tokens(&docs, vec![0; n]).unwrap()
    }

    fn cfg(topics: usize, iterations: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            topics,
            iterations,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn single_word_vocab() {
        let c = corpus(&[&["x", "x"], &["x"]]);
        let m = lda_fit(&c, &cfg(2, 5, 1)).unwrap();
        for row in &m.phi {
            assert_eq!(row, &vec![1.0]);
        }
    }

    #[test]
    fn rows_normalized_and_positive() {
        let c = corpus(&[&["a", "b", "c"], &["c", "d"], &["a", "a", "e"]]);
        let m = lda_fit(&c, &cfg(3, 20, 2)).unwrap();
        for row in m.phi.iter().chain(&m.theta) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn conservation_every_sweep_and_determinism() {
        let c = corpus(&[&["a", "b", "c", "a"], &["c", "d"], &["e", "a", "e"]]);
        let mut s = LdaSampler::new(&c, &cfg(3, 0, 9)).unwrap();
        assert!(s.counts_consistent());
        for _ in 0..30 {
            s.sweep();
            assert!(s.counts_consistent());
        }
        assert_eq!(lda_fit(&c, &cfg(3, 30, 9)).unwrap(), s.model());
    }

    #[test]
    fn rejects_bad_input() {
        let c = corpus(&[&["a"], &[]]);
        assert!(matches!(lda_fit(&c, &cfg(2, 1, 0)), Err(Error::EmptyDocument(1))));
        let c = corpus(&[&["a"]]);
        assert!(lda_fit(&c, &cfg(1, 1, 0)).is_err());
    }

    #[test]
    fn top_word_ties_alphabetical() {
        let m = TopicModel {
            topics: 2,
            alpha: 0.1,
            beta: 0.01,
            vocab: vec!["a".into(), "b".into(), "c".into()],
            phi: vec![vec![0.5, 0.3, 0.2], vec![1.0 / 3.0; 3]],
            theta: vec![],
            assignments: vec![],
        };
        assert_eq!(top_word_indices(&m, 2), vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(top_words(&m, 3)[1], ["a", "b", "c"]);
    }
}
