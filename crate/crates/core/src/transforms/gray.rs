use crate::raster::ImageBuffer;

/// ITU-R 601 luma, rounded half up. Single-channel input is returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    // Weights in thousandths keep the rounding exact.
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            let milli = 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]);
            ((milli + 500) / 1000).min(255) as u8
        })
        .collect();
    ImageBuffer::new(img.width(), img.height(), 1, data).expect("same geometry")
}

/// Grayscale samples as reals, row-major.
pub fn gray_f64(img: &ImageBuffer) -> Vec<f64> {
    to_grayscale(img).data().iter().map(|&v| f64::from(v)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanRgb {
    /// Constant image filled with the rounded per-channel means.
    pub image: ImageBuffer,
    /// Exact per-channel means.
    pub means: Vec<f64>,
}

/// Replaces every pixel with the per-channel mean color.
///
/// Means are rounded half up using integer arithmetic, so the constant color
/// never depends on floating-point summation order.
pub fn mean_rgb(img: &ImageBuffer) -> MeanRgb {
    let c = img.channels();
    let n = (img.width() * img.height()) as u64;
    let mut sums = vec![0u64; c];
    for px in img.data().chunks_exact(c) {
        for (s, &v) in sums.iter_mut().zip(px) {
            *s += u64::from(v);
        }
    }
    let rounded: Vec<u8> = sums.iter().map(|&s| ((2 * s + n) / (2 * n)) as u8).collect();
    let means = sums.iter().map(|&s| s as f64 / n as f64).collect();
    MeanRgb {
        image: ImageBuffer::filled(img.width(), img.height(), &rounded).expect("valid geometry"),
        means,
    }
}

/// Separable Gaussian blur of a real-valued plane.
///
/// The kernel is truncated at `ceil(truncate * sigma)` taps on each side; at
/// the borders only in-bounds taps are used and their weights renormalized.
pub fn blur_gaussian(src: &[f64], width: usize, height: usize, sigma: f64, truncate: f64) -> Vec<f64> {
    let radius = (truncate * sigma).ceil().max(1.0) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |src: &[f64], len: usize, lines: usize, stride: usize, step: usize| {
        let mut out = vec![0.0; src.len()];
        for line in 0..lines {
            let base = line * stride;
            for i in 0..len as isize {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (k, &w) in kernel.iter().enumerate() {
                    let j = i + k as isize - radius;
                    if j >= 0 && j < len as isize {
                        acc += w * src[base + j as usize * step];
                        wsum += w;
                    }
                }
                out[base + i as usize * step] = acc / wsum;
            }
        }
        out
    };
    let horizontal = pass(src, width, height, width, 1);
    pass(&horizontal, height, width, 1, width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn luma_oracle(r: u8, g: u8, b: u8) -> f64 {
        0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
    }

    #[test]
    fn luma_values() {
        let img = ImageBuffer::new(3, 1, 3, vec![255, 255, 255, 255, 0, 0, 0, 0, 255]).unwrap();
        let g = to_grayscale(&img);
        assert_eq!(g.data(), &[255, 76, 29]);
        assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn luma_matches_float_oracle() {
        let mut rng = Rng::new(5, 0);
        let img = ImageBuffer::from_fn(16, 16, 3, |_, _, _| rng.below(256) as u8).unwrap();
        let g = to_grayscale(&img);
        for (px, &y) in img.data().chunks_exact(3).zip(g.data()) {
            let exact = luma_oracle(px[0], px[1], px[2]);
            assert!((f64::from(y) - exact).abs() <= 0.5 + 1e-9);
            if (exact.fract() - 0.5).abs() > 1e-6 {
                assert_eq!(f64::from(y), exact.round());
            }
        }
    }

    #[test]
    fn mean_rgb_examples() {
        let zero = ImageBuffer::filled(4, 4, &[0, 0, 0]).unwrap();
        let m = mean_rgb(&zero);
        assert_eq!(m.image, zero);
        assert_eq!(m.means, [0.0, 0.0, 0.0]);

        let two = ImageBuffer::new(2, 1, 3, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let m = mean_rgb(&two);
        assert_eq!(m.image.data(), &[128; 6]);
        assert_eq!(m.means, [127.5; 3]);
    }

    #[test]
    fn mean_rgb_is_idempotent() {
        let mut rng = Rng::new(2, 0);
        let img = ImageBuffer::from_fn(8, 8, 3, |_, _, _| rng.below(256) as u8).unwrap();
        let once = mean_rgb(&img).image;
        assert_eq!(mean_rgb(&once).image, once);
    }

    #[test]
    fn blur_preserves_constants_at_borders() {
        let plane = vec![3.5; 7 * 5];
        for v in blur_gaussian(&plane, 7, 5, 1.4, 2.0) {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }
}
