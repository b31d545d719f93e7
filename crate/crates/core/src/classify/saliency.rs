use super::features::FeatureKind;
use super::softmax::{argmax, SoftmaxModel};
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub side: usize,
    pub predicted: usize,
    /// Class with the second-highest logit.
    pub runner_up: usize,
    /// Channel-summed contribution to the margin, row-major `side x side`.
    pub heat: Vec<f64>,
    /// `heat` min-max scaled to [0, 255].
    pub image: ImageBuffer,
}

/// Per-pixel contributions to the logit margin of the predicted class over
/// the runner-up class of a linear model on raw pixels.
///
/// The runner-up is fixed per sample rather than chosen per pixel, so the
/// heat values sum to the margin minus the bias difference.
pub fn linear_saliency(model: &SoftmaxModel, features: &[f64]) -> Result<SaliencyMap> {
    let FeatureKind::RawPixels { side } = model.feature_spec.kind else {
        return Err(Error::FeatureKindMismatch {
            expected: "raw_pixels",
            found: model.feature_spec.kind.name().into(),
        });
    };
    let x = ndarray::Array2::from_shape_vec((1, features.len()), features.to_vec())
        .expect("one row");
    let logits = model.logits(&x)?;
    let row = logits.row(0);
    let predicted = argmax(row.iter().copied());
    let runner_up = argmax(row.iter().enumerate().map(|(c, &v)| if c == predicted { f64::NEG_INFINITY } else { v }));
    let xs = model.prepare(&x)?;
    let pixels = side * side;
    if !features.len().is_multiple_of(pixels) {
        return Err(Error::DimensionMismatch(format!(
            "{} features do not tile a {side}x{side} image",
            features.len()
        )));
    }
    let channels = features.len() / pixels;
    let (wp, wr) = (model.weights.row(predicted), model.weights.row(runner_up));
    let heat: Vec<f64> = (0..pixels)
        .map(|p| {
            (0..channels)
                .map(|c| {
                    let i = p * channels + c;
                    (wp[i] - wr[i]) * xs[[0, i]]
                })
                .sum()
        })
        .collect();
    let lo = heat.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = heat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = heat
        .iter()
        .map(|&h| if hi > lo { (255.0 * (h - lo) / (hi - lo)).round() as u8 } else { 0 })
        .collect();
    Ok(SaliencyMap {
        side,
        predicted,
        runner_up,
        heat,
        image: ImageBuffer::new(side, side, 1, data)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::FeatureSpec;
    use crate::rng::Rng;
    use ndarray::{Array1, Array2};

    fn model(k: usize, side: usize, c: usize, rng: &mut Rng) -> SoftmaxModel {
        SoftmaxModel {
            weights: Array2::from_shape_fn((k, side * side * c), |_| rng.normal(0.0, 1.0)),
            bias: Array1::from_shape_fn(k, |_| rng.normal(0.0, 1.0)),
            class_names: (0..k).map(|i| i.to_string()).collect(),
            feature_spec: FeatureSpec::new(FeatureKind::RawPixels { side }),
            standardizer: None,
        }
    }

    #[test]
    fn zero_input_gives_zero_heat() {
        let m = model(3, 4, 3, &mut Rng::new(1, 0));
        let s = linear_saliency(&m, &[0.0; 48]).unwrap();
        assert!(s.heat.iter().all(|&h| h == 0.0));
        assert!(s.image.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn single_weight_is_hottest() {
        let mut m = model(2, 4, 1, &mut Rng::new(2, 0));
        m.weights.fill(0.0);
        m.bias.fill(0.0);
        m.weights[[1, 9]] = 5.0;
        let s = linear_saliency(&m, &[1.0; 16]).unwrap();
        assert_eq!(s.predicted, 1);
        assert_eq!(argmax(s.heat.iter().copied()), 9);
        assert_eq!(s.image.data()[9], 255);
    }

    #[test]
    fn heat_sums_to_margin() {
        let mut rng = Rng::new(3, 0);
        let m = model(4, 5, 3, &mut rng);
        let x: Vec<f64> = (0..75).map(|_| rng.uniform()).collect();
        let s = linear_saliency(&m, &x).unwrap();
        let logits = m.logits(&Array2::from_shape_vec((1, 75), x).unwrap()).unwrap();
        let margin = logits[[0, s.predicted]] - logits[[0, s.runner_up]] - (m.bias[s.predicted] - m.bias[s.runner_up]);
        assert!((s.heat.iter().sum::<f64>() - margin).abs() < 1e-9);
        assert!(logits.row(0).iter().enumerate().all(|(c, &v)| c == s.predicted || v <= logits[[0, s.runner_up]]));
    }

    #[test]
    fn wrong_kind() {
        let mut m = model(2, 2, 1, &mut Rng::new(4, 0));
        m.feature_spec = FeatureSpec::new(FeatureKind::MeanRgb);
        assert!(matches!(linear_saliency(&m, &[0.0; 4]), Err(Error::FeatureKindMismatch { .. })));
    }
}
