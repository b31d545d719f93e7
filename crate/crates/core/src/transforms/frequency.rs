use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::gray::gray_f64;
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    LowPass,
    HighPass,
}

fn default_order() -> u32 {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ideal,
    Butterworth {
        #[serde(default = "default_order")]
        order: u32,
    },
}

/// How the real-valued filter output is mapped back to 8 bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rescale {
    /// Min-max for high-pass output, clamp for low-pass output.
    #[default]
    Auto,
    Clamp,
    MinMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyFilterSpec {
    pub band: Band,
    pub kind: FilterKind,
    /// Cutoff distance from the spectrum center, in frequency-index units.
    pub radius: f64,
    /// Histogram-equalize the result (for visualization exports).
    #[serde(default)]
    pub equalize_output: bool,
    #[serde(default)]
    pub rescale: Rescale,
}

impl FrequencyFilterSpec {
    pub fn new(band: Band, kind: FilterKind, radius: f64) -> Self {
        FrequencyFilterSpec {
            band,
            kind,
            radius,
            equalize_output: false,
            rescale: Rescale::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius.is_nan() || self.radius <= 0.0 {
            return Err(Error::InvalidConfig(format!("filter radius {} must be positive", self.radius)));
        }
        if let FilterKind::Butterworth { order: 0 } = self.kind {
            return Err(Error::InvalidConfig("Butterworth order must be at least 1".into()));
        }
        Ok(())
    }

    /// Transfer function at distance `d` from the spectrum center.
    pub fn transfer(&self, d: f64) -> f64 {
        let low = match self.kind {
            FilterKind::Ideal => {
                if d <= self.radius {
                    1.0
                } else {
                    0.0
                }
            }
            FilterKind::Butterworth { order } => 1.0 / (1.0 + (d / self.radius).powi(2 * order as i32)),
        };
        match self.band {
            Band::LowPass => low,
            Band::HighPass => 1.0 - low,
        }
    }
}

/// Signed frequency of DFT index `k` of an `n`-point transform; its absolute
/// value is the distance from the center of the shifted spectrum.
fn signed_frequency(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn fft_2d(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut column = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

/// Filters a real plane in the frequency domain and returns the real part of
/// the result, without clamping.
pub fn filter_gray_f64(plane: &[f64], w: usize, h: usize, spec: &FrequencyFilterSpec) -> Vec<f64> {
    let mut spectrum: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_2d(&mut spectrum, w, h, false);
    for v in 0..h {
        let fv = signed_frequency(v, h);
        for u in 0..w {
            let fu = signed_frequency(u, w);
            spectrum[v * w + u] *= spec.transfer(fu.hypot(fv));
        }
    }
    fft_2d(&mut spectrum, w, h, true);
    let norm = (w * h) as f64;
    spectrum.iter().map(|c| c.re / norm).collect()
}

/// Low- or high-pass filters the grayscale image.
pub fn fft_filter(img: &ImageBuffer, spec: &FrequencyFilterSpec) -> Result<ImageBuffer> {
    spec.validate()?;
    let (w, h) = (img.width(), img.height());
    let real = filter_gray_f64(&gray_f64(img), w, h, spec);
    let min_max = match spec.rescale {
        Rescale::Auto => spec.band == Band::HighPass,
        Rescale::Clamp => false,
        Rescale::MinMax => true,
    };
    let data = if min_max {
        let lo = real.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = real.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // A flat result carries no information; map it to black.
        if hi - lo < 1e-9 {
            vec![0; real.len()]
        } else {
            real.iter().map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
        }
    } else {
        real.iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect()
    };
    let out = ImageBuffer::new(w, h, 1, data)?;
    Ok(if spec.equalize_output {
        equalize_histogram(&out)
    } else {
        out
    })
}

/// Classic CDF histogram equalization of a single-channel image.
pub fn equalize_histogram(img: &ImageBuffer) -> ImageBuffer {
    let gray = super::gray::to_grayscale(img);
    let mut hist = [0usize; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let total = gray.data().len();
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if total == cdf_min {
        return gray;
    }
    let data = gray
        .data()
        .iter()
        .map(|&v| {
            let num = (cdf[v as usize] - cdf_min) as f64;
            (num / (total - cdf_min) as f64 * 255.0).round() as u8
        })
        .collect();
    ImageBuffer::new(gray.width(), gray.height(), 1, data).expect("same geometry")
}
