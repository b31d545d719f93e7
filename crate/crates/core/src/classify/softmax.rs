use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::features::{FeatureSpec, Standardizer};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.1,
            weight_decay: 1e-4,
            label_smoothing: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must be in [0, 1)");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

/// Multinomial logistic regression. Inputs are standardized with the stored
/// statistics, when present, before the affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxModel {
    /// `classes x features`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub class_names: Vec<String>,
    pub feature_spec: FeatureSpec,
    pub standardizer: Option<Standardizer>,
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Mean label-smoothed cross-entropy plus `weight_decay / 2 * |W|^2` and its
/// gradient. The bias is not decayed.
pub fn loss_and_gradient(
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    x: ArrayView2<f64>,
    labels: &[usize],
    label_smoothing: f64,
    weight_decay: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let (k, n) = (weights.nrows(), x.nrows());
    let logits = x.dot(&weights.t()) + bias;
    let mut loss = 0.0;
    let mut delta = Array2::<f64>::zeros((n, k));
    let off = label_smoothing / k as f64;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_z = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        for c in 0..k {
            let target = off + if c == labels[i] { 1.0 - label_smoothing } else { 0.0 };
            let log_p = row[c] - log_z;
            loss -= target * log_p;
            delta[[i, c]] = log_p.exp() - target;
        }
    }
    let inv_n = 1.0 / n.max(1) as f64;
    loss = loss * inv_n + 0.5 * weight_decay * weights.iter().map(|w| w * w).sum::<f64>();
    let grad_w = delta.t().dot(&x) * inv_n + weights * weight_decay;
    let grad_b = delta.sum_axis(Axis(0)) * inv_n;
    (loss, grad_w, grad_b)
}

/// Weights and the per-epoch training objective (averaged over batches,
/// so with one full batch it is the exact objective before each step).
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub epoch_losses: Vec<f64>,
}

fn check_labels(n: usize, labels: &[usize], n_classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} rows but {} labels", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidConfig(format!("label {l} outside 0..{n_classes}")));
    }
    Ok(())
}

/// Mini-batch SGD from zero weights with a constant rate. Batches are drawn
/// from a fresh shuffle each epoch.
pub fn fit_softmax(x: &Array2<f64>, labels: &[usize], n_classes: usize, cfg: &TrainConfig) -> Result<Fit> {
    cfg.validate()?;
    let (n, d) = x.dim();
    check_labels(n, labels, n_classes)?;
    let mut present = vec![false; n_classes];
    labels.iter().for_each(|&l| present[l] = true);
    let distinct = present.iter().filter(|&&p| p).count();
    if n_classes < 2 || distinct < 2 {
        return Err(Error::DegenerateLabels(distinct));
    }
    if n < n_classes {
        return Err(Error::InvalidConfig(format!("{n} training rows for {n_classes} classes")));
    }

    let mut weights = Array2::zeros((n_classes, d));
    let mut bias = Array1::zeros(n_classes);
    let mut rng = Rng::keyed(cfg.seed, b"sgd");
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let full_batch = cfg.batch_size >= n;
    for epoch in 0..cfg.epochs {
        let order: Vec<usize> = if full_batch { (0..n).collect() } else { rng.permutation(n) };
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, gw, gb) = if full_batch {
                loss_and_gradient(&weights, &bias, x.view(), labels, cfg.label_smoothing, cfg.weight_decay)
            } else {
                let xb = x.select(Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                loss_and_gradient(&weights, &bias, xb.view(), &yb, cfg.label_smoothing, cfg.weight_decay)
            };
            if !loss.is_finite() || gw.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += loss * chunk.len() as f64;
            weights.scaled_add(-cfg.learning_rate, &gw);
            bias.scaled_add(-cfg.learning_rate, &gb);
        }
        epoch_losses.push(total / n as f64);
    }
    Ok(Fit {
        weights,
        bias,
        epoch_losses,
    })
}

impl SoftmaxModel {
    /// Fits the optional standardizer on `x`, then the weights.
    pub fn train(
        x: &Array2<f64>,
        labels: &[usize],
        class_names: Vec<String>,
        feature_spec: FeatureSpec,
        cfg: &TrainConfig,
    ) -> Result<(SoftmaxModel, Vec<f64>)> {
        let standardizer = feature_spec.normalize.then(|| Standardizer::fit(x));
        let fit = match &standardizer {
            Some(s) => {
                let mut xs = x.clone();
                s.apply(&mut xs);
                fit_softmax(&xs, labels, class_names.len(), cfg)?
            }
            None => fit_softmax(x, labels, class_names.len(), cfg)?,
        };
        let model = SoftmaxModel {
            weights: fit.weights,
            bias: fit.bias,
            class_names,
            feature_spec,
            standardizer,
        };
        Ok((model, fit.epoch_losses))
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    /// Standardized copy of the inputs (or a plain copy).
    pub fn prepare(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let mut x = x.clone();
        if let Some(s) = &self.standardizer {
            s.apply(&mut x);
        }
        Ok(x)
    }

    pub fn logits(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.prepare(x)?.dot(&self.weights.t()) + &self.bias)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(self
            .logits(x)?
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<usize>,
}

pub fn evaluate(model: &SoftmaxModel, x: &Array2<f64>, labels: &[usize]) -> Result<Evaluation> {
    check_labels(x.nrows(), labels, model.n_classes())?;
    let predictions = model.predict(x)?;
    let k = model.n_classes();
    let mut confusion = vec![vec![0u64; k]; k];
    for (&t, &p) in labels.iter().zip(&predictions) {
        confusion[t][p] += 1;
    }
    let correct = labels.iter().zip(&predictions).filter(|(t, p)| t == p).count();
    Ok(Evaluation {
        accuracy: correct as f64 / labels.len().max(1) as f64,
        confusion,
        predictions,
    })
}
