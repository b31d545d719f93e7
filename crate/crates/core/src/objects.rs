//! Object-level analytics over presence annotations: per-dataset class
//! shares, unique-object counts, coefficient rankings and the majority-share
//! rule.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::classify::{FeatureKind, SoftmaxModel};
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, Vocabulary};

/// Binary sample-by-class presence, stored as sorted class indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct PresenceMatrix {
    rows: Vec<Vec<usize>>,
    dataset_labels: Vec<usize>,
    class_names: Vec<String>,
    dataset_names: Vec<String>,
}

pub fn build_presence(manifests: &[DatasetManifest], vocab: &Vocabulary) -> Result<PresenceMatrix> {
    let mut rows = Vec::new();
    let mut dataset_labels = Vec::new();
    for (d, m) in manifests.iter().enumerate() {
        for s in &m.samples {
            rows.push(s.object_indices(vocab)?);
            dataset_labels.push(d);
        }
    }
    Ok(PresenceMatrix {
        rows,
        dataset_labels,
        class_names: vocab.names().to_vec(),
        dataset_names: manifests.iter().map(|m| m.name.clone()).collect(),
    })
}

impl PresenceMatrix {
    /// Builds from raw rows; duplicate indices collapse.
    pub fn from_rows(
        rows: Vec<Vec<usize>>,
        dataset_labels: Vec<usize>,
        class_names: Vec<String>,
        dataset_names: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != dataset_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} dataset labels",
                rows.len(),
                dataset_labels.len()
            )));
        }
        if dataset_labels.iter().any(|&d| d >= dataset_names.len()) {
            return Err(Error::DimensionMismatch("dataset label out of range".into()));
        }
        let rows = rows
            .into_iter()
            .map(|r| {
                let set: BTreeSet<usize> = r.into_iter().collect();
                if set.iter().any(|&c| c >= class_names.len()) {
                    return Err(Error::DimensionMismatch("class index out of range".into()));
                }
                Ok(set.into_iter().collect())
            })
            .collect::<Result<_>>()?;
        Ok(PresenceMatrix {
            rows,
            dataset_labels,
            class_names,
            dataset_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.dataset_names.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn dataset_labels(&self) -> &[usize] {
        &self.dataset_labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn dataset_names(&self) -> &[String] {
        &self.dataset_names
    }

    /// Dense 0/1 row.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        crate::classify::bag_of_objects(&self.rows[i], self.n_classes())
    }

    /// Images containing each class, per dataset: `classes x datasets`.
    pub fn counts(&self) -> Vec<Vec<u64>> {
        let mut c = vec![vec![0u64; self.n_datasets()]; self.n_classes()];
        for (row, &d) in self.rows.iter().zip(&self.dataset_labels) {
            for &k in row {
                c[k][d] += 1;
            }
        }
        c
    }

    /// Images containing each class.
    pub fn support(&self) -> Vec<u64> {
        self.counts().iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub class: usize,
    pub name: String,
    pub counts: Vec<u64>,
    /// `counts / support`.
    pub shares: Vec<f64>,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassShareTable {
    pub dataset_names: Vec<String>,
    pub min_support: u64,
    /// Classes meeting the support threshold, by class index.
    pub classes: Vec<ClassShare>,
    /// Per dataset, the top classes by that dataset's share (indices into
    /// the vocabulary).
    pub top: Vec<Vec<usize>>,
}

pub const DEFAULT_MIN_SUPPORT: u64 = 20;

/// Share of each class's images contributed by each dataset. Rankings sort by
/// share descending, then support descending, then class index.
pub fn class_shares(pm: &PresenceMatrix, min_support: u64, top_k: usize) -> Result<ClassShareTable> {
    if min_support == 0 {
        return Err(Error::InvalidConfig("min_support must be at least 1".into()));
    }
    let classes: Vec<ClassShare> = pm
        .counts()
        .into_iter()
        .enumerate()
        .filter_map(|(class, counts)| {
            let support: u64 = counts.iter().sum();
            (support >= min_support).then(|| ClassShare {
                class,
                name: pm.class_names[class].clone(),
                shares: counts.iter().map(|&c| c as f64 / support as f64).collect(),
                counts,
                support,
            })
        })
        .collect();
    let top = (0..pm.n_datasets())
        .map(|d| {
            let mut order: Vec<&ClassShare> = classes.iter().collect();
            order.sort_by(|a, b| {
                b.shares[d]
                    .total_cmp(&a.shares[d])
                    .then(b.support.cmp(&a.support))
                    .then(a.class.cmp(&b.class))
            });
            order.into_iter().take(top_k).map(|c| c.class).collect()
        })
        .collect();
    Ok(ClassShareTable {
        dataset_names: pm.dataset_names.clone(),
        min_support,
        classes,
        top,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniqueObjectHistogram {
    pub dataset: String,
    /// `histogram[n]` images contain exactly `n` distinct classes.
    pub histogram: Vec<u64>,
    pub mean: f64,
}

/// Distribution of distinct classes per image, per dataset. All histograms
/// share one length.
pub fn unique_object_stats(pm: &PresenceMatrix) -> Vec<UniqueObjectHistogram> {
    let len = pm.rows.iter().map(Vec::len).max().unwrap_or(0) + 1;
    (0..pm.n_datasets())
        .map(|d| {
            let mut histogram = vec![0u64; len];
            let (mut total, mut n) = (0usize, 0usize);
            for (row, _) in pm.rows.iter().zip(&pm.dataset_labels).filter(|(_, &l)| l == d) {
                histogram[row.len()] += 1;
                total += row.len();
                n += 1;
            }
            UniqueObjectHistogram {
                dataset: pm.dataset_names[d].clone(),
                histogram,
                mean: if n == 0 { 0.0 } else { total as f64 / n as f64 },
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub class: usize,
    pub name: String,
    pub weight: f64,
    pub support: u64,
}

/// Per dataset, classes with support at least `min_frequency` ordered by the
/// dataset's coefficient, largest first, ties by class index.
pub fn rank_classes_by_coefficients(
    model: &SoftmaxModel,
    pm: &PresenceMatrix,
    min_frequency: u64,
) -> Result<Vec<Vec<RankedClass>>> {
    if model.feature_spec.kind != FeatureKind::BagOfObjects {
        return Err(Error::FeatureKindMismatch {
            expected: "bag_of_objects",
            found: model.feature_spec.kind.name().into(),
        });
    }
    if model.n_features() != pm.n_classes() || model.n_classes() != pm.n_datasets() {
        return Err(Error::VocabularyMismatch(format!(
            "model is {}x{}, presence data has {} datasets and {} classes",
            model.n_classes(),
            model.n_features(),
            pm.n_datasets(),
            pm.n_classes()
        )));
    }
    let support = pm.support();
    Ok((0..model.n_classes())
        .map(|d| {
            let w = model.weights.row(d);
            let mut keep: Vec<usize> = (0..pm.n_classes()).filter(|&c| support[c] >= min_frequency).collect();
            keep.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
            keep.into_iter()
                .map(|c| RankedClass {
                    class: c,
                    name: pm.class_names[c].clone(),
                    weight: w[c],
                    support: support[c],
                })
                .collect()
        })
        .collect())
}

/// Parameter-free classifier: each label predicts the dataset where it was
/// most frequent in training, ties to the lowest dataset index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorityRule {
    /// `label x dataset` training counts.
    pub counts: Vec<Vec<u64>>,
    /// `None` for labels never seen in training.
    pub predicted: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorityOutcome {
    pub predictions: Vec<usize>,
    /// Samples whose label was unseen at fit time (predicted as dataset 0).
    pub unseen: Vec<bool>,
    pub accuracy: f64,
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a} labels but {b} dataset labels")));
    }
    Ok(())
}

impl MajorityRule {
    pub fn fit(labels: &[usize], datasets: &[usize], n_labels: usize, n_datasets: usize) -> Result<Self> {
        check_aligned(labels.len(), datasets.len())?;
        let mut counts = vec![vec![0u64; n_datasets]; n_labels];
        for (&l, &d) in labels.iter().zip(datasets) {
            if l >= n_labels || d >= n_datasets {
                return Err(Error::DimensionMismatch("label or dataset index out of range".into()));
            }
            counts[l][d] += 1;
        }
        let predicted = counts
            .iter()
            .map(|row| {
                let best = row.iter().copied().max().unwrap_or(0);
                (best > 0).then(|| row.iter().position(|&c| c == best).expect("max exists"))
            })
            .collect();
        Ok(MajorityRule { counts, predicted })
    }

    pub fn apply(&self, labels: &[usize], datasets: &[usize]) -> Result<MajorityOutcome> {
        check_aligned(labels.len(), datasets.len())?;
        let mut predictions = Vec::with_capacity(labels.len());
        let mut unseen = Vec::with_capacity(labels.len());
        for &l in labels {
            let p = self.predicted.get(l).copied().flatten();
            unseen.push(p.is_none());
            predictions.push(p.unwrap_or(0));
        }
        let correct = predictions.iter().zip(datasets).filter(|(p, d)| p == d).count();
        Ok(MajorityOutcome {
            accuracy: correct as f64 / labels.len().max(1) as f64,
            predictions,
            unseen,
        })
    }
}

/// Label index of every sample, in manifest order.
pub fn single_labels(manifests: &[DatasetManifest], vocab: &Vocabulary) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut labels = Vec::new();
    let mut datasets = Vec::new();
    for (d, m) in manifests.iter().enumerate() {
        for s in &m.samples {
            labels.push(s.label_index(vocab)?);
            datasets.push(d);
        }
    }
    Ok((labels, datasets))
}

/// Sorted distinct labels across manifests, as a vocabulary.
pub fn label_vocabulary(manifests: &[DatasetManifest]) -> Result<Vocabulary> {
    let mut names = BTreeSet::new();
    for m in manifests {
        for s in &m.samples {
            names.insert(s.label.clone().ok_or_else(|| Error::MissingAnnotation {
                sample: s.id.clone(),
                what: "label",
            })?);
        }
    }
    Vocabulary::new(names)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareAccuracyRow {
    pub label: usize,
    pub support: u64,
    pub majority_share: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareAccuracy {
    pub rows: Vec<ShareAccuracyRow>,
    /// `None` when either column has zero variance or fewer than 2 rows.
    pub pearson_r: Option<f64>,
    pub degenerate: bool,
}

/// Per label, the largest single-dataset share of its samples against the
/// fraction of its samples classified correctly.
pub fn accuracy_vs_majority_share(
    predictions: &[usize],
    datasets: &[usize],
    labels: &[usize],
    n_labels: usize,
    n_datasets: usize,
    min_support: u64,
) -> Result<ShareAccuracy> {
    check_aligned(labels.len(), datasets.len())?;
    check_aligned(predictions.len(), datasets.len())?;
    let mut counts = vec![vec![0u64; n_datasets]; n_labels];
    let mut correct = vec![0u64; n_labels];
    for ((&p, &d), &l) in predictions.iter().zip(datasets).zip(labels) {
        if l >= n_labels || d >= n_datasets {
            return Err(Error::DimensionMismatch("label or dataset index out of range".into()));
        }
        counts[l][d] += 1;
        correct[l] += u64::from(p == d);
    }
    let rows: Vec<ShareAccuracyRow> = counts
        .iter()
        .enumerate()
        .filter_map(|(label, row)| {
            let support: u64 = row.iter().sum();
            (support > 0 && support >= min_support).then(|| ShareAccuracyRow {
                label,
                support,
                majority_share: *row.iter().max().expect("nonempty") as f64 / support as f64,
                accuracy: correct[label] as f64 / support as f64,
            })
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.majority_share).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let pearson_r = pearson(&xs, &ys);
    Ok(ShareAccuracy {
        degenerate: pearson_r.is_none(),
        rows,
        pearson_r,
    })
}

/// Pearson correlation from centered sums.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}
