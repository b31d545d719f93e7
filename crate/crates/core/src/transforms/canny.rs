use serde::{Deserialize, Serialize};

use super::gray::{blur_gaussian, gray_f64};
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

/// Canny parameters. Thresholds apply to the L2 magnitude of the raw 3x3
/// Sobel response of the blurred 8-bit image, the same scale OpenCV uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CannySpec {
    #[serde(default = "CannySpec::default_sigma")]
    pub sigma: f64,
    #[serde(default = "CannySpec::default_low")]
    pub low_threshold: f64,
    #[serde(default = "CannySpec::default_high")]
    pub high_threshold: f64,
}

impl CannySpec {
    fn default_sigma() -> f64 {
        1.4
    }
    fn default_low() -> f64 {
        100.0
    }
    fn default_high() -> f64 {
        200.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::InvalidConfig(format!("canny sigma {} must be positive", self.sigma)));
        }
        if !(0.0 <= self.low_threshold && self.low_threshold <= self.high_threshold) {
            return Err(Error::InvalidConfig(format!(
                "canny thresholds must satisfy 0 <= low ({}) <= high ({})",
                self.low_threshold, self.high_threshold
            )));
        }
        Ok(())
    }
}

impl Default for CannySpec {
    fn default() -> Self {
        CannySpec {
            sigma: Self::default_sigma(),
            low_threshold: Self::default_low(),
            high_threshold: Self::default_high(),
        }
    }
}

/// Binary edge map: 255 on edges, 0 elsewhere.
pub fn canny(img: &ImageBuffer, spec: &CannySpec) -> Result<ImageBuffer> {
    let thinned = suppressed_magnitude(img, spec)?;
    let edges = hysteresis(&thinned, img.width(), img.height(), spec);
    ImageBuffer::new(img.width(), img.height(), 1, edges)
}

/// Gradient magnitude after non-maximum suppression (zero where suppressed).
pub(crate) fn suppressed_magnitude(img: &ImageBuffer, spec: &CannySpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let (w, h) = (img.width(), img.height());
    if w.min(h) < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let blurred = blur_gaussian(&gray_f64(img), w, h, spec.sigma, 2.0);
    let (gx, gy) = sobel(&blurred, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();

    let mut out = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            // Quantize the gradient direction into 4 sectors; `(dx, dy)` is
            // the neighbor step along the gradient.
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let fwd = mag[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
            let back = mag[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
            // Ties on a two-pixel ridge keep only the forward pixel.
            if m > fwd && m >= back {
                out[i] = m;
            }
        }
    }
    Ok(out)
}

fn sobel(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        src[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Keeps strong pixels and every weak pixel 8-connected to one.
fn hysteresis(mag: &[f64], w: usize, h: usize, spec: &CannySpec) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in mag.iter().enumerate() {
        if m >= spec.high_threshold && m > 0.0 && out[i] == 0 {
            out[i] = 255;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (x, y) = ((j % w) as isize, (j / w) as isize);
                for ny in y - 1..=y + 1 {
                    for nx in x - 1..=x + 1 {
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let k = ny as usize * w + nx as usize;
                        if out[k] == 0 && mag[k] >= spec.low_threshold && mag[k] > 0.0 {
                            out[k] = 255;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ImageBuffer {
        ImageBuffer::from_fn(32, 32, 1, |x, y, _| {
            if (8..24).contains(&x) && (8..24).contains(&y) {
                0
            } else {
                255
            }
        })
        .unwrap()
    }

    #[test]
    fn constant_has_no_edges() {
        let img = ImageBuffer::filled(20, 20, &[120, 30, 200]).unwrap();
        assert!(canny(&img, &CannySpec::default()).unwrap().data().iter().all(|&v| v == 0));
    }

    #[test]
    fn too_small() {
        let img = ImageBuffer::filled(2, 9, &[1]).unwrap();
        assert!(matches!(canny(&img, &CannySpec::default()), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let img = ImageBuffer::filled(8, 8, &[1]).unwrap();
        let spec = CannySpec {
            low_threshold: 50.0,
            high_threshold: 10.0,
            ..CannySpec::default()
        };
        assert!(canny(&img, &spec).is_err());
    }

    /// Geometric oracle: the boundary of the dark square is the set of pixels
    /// on either side of the intensity jump.
    #[test]
    fn square_edges_hug_the_boundary() {
        let img = square();
        let edges = canny(&img, &CannySpec::default()).unwrap();
        let is_edge = |x: usize, y: usize| edges.get(x, y, 0) == 255;
        let boundary: Vec<(usize, usize)> = (0..32)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| {
                let inside = |x: usize, y: usize| (8..24).contains(&x) && (8..24).contains(&y);
                let here = inside(x, y);
                [(0isize, 1isize), (1, 0), (0, -1), (-1, 0)].iter().any(|&(dx, dy)| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    (0..32).contains(&nx) && (0..32).contains(&ny) && inside(nx as usize, ny as usize) != here
                })
            })
            .collect();
        let near_boundary = |x: usize, y: usize| {
            boundary
                .iter()
                .any(|&(bx, by)| bx.abs_diff(x) <= 1 && by.abs_diff(y) <= 1)
        };
        let mut n_edges = 0;
        for y in 0..32 {
            for x in 0..32 {
                if is_edge(x, y) {
                    n_edges += 1;
                    assert!(near_boundary(x, y), "stray edge at ({x},{y})");
                }
            }
        }
        assert!(n_edges > 0);
        let covered = boundary
            .iter()
            .filter(|&&(bx, by)| {
                (bx.saturating_sub(1)..=(bx + 1).min(31))
                    .any(|x| (by.saturating_sub(1)..=(by + 1).min(31)).any(|y| is_edge(x, y)))
            })
            .count();
        assert!(covered as f64 >= 0.9 * boundary.len() as f64, "{covered}/{}", boundary.len());
    }

    #[test]
    fn step_edge_is_one_pixel_line() {
        let img = ImageBuffer::from_fn(32, 32, 1, |x, _, _| if x < 16 { 0 } else { 255 }).unwrap();
        let edges = canny(&img, &CannySpec::default()).unwrap();
        let cols: std::collections::BTreeSet<usize> = (0..32)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| edges.get(x, y, 0) == 255)
            .map(|(x, _)| x)
            .collect();
        assert_eq!(cols.len(), 1, "edge columns {cols:?}");
        let col = *cols.iter().next().unwrap();
        assert!(col == 15 || col == 16);
        for y in 1..31 {
            assert_eq!(edges.get(col, y, 0), 255, "gap at row {y}");
        }
    }

    #[test]
    fn output_is_binary_and_weak_pixels_are_connected() {
        let mut rng = crate::rng::Rng::new(17, 0);
        let img = ImageBuffer::from_fn(40, 40, 3, |x, y, _| {
            let base = if (x / 10 + y / 10) % 2 == 0 { 40.0 } else { 210.0 };
            (base + rng.normal(0.0, 25.0)).clamp(0.0, 255.0) as u8
        })
        .unwrap();
        let spec = CannySpec::default();
        let edges = canny(&img, &spec).unwrap();
        assert!(edges.data().iter().all(|&v| v == 0 || v == 255));
        let mag = suppressed_magnitude(&img, &spec).unwrap();
        // Flood from strong pixels over the edge map itself must reach every edge pixel.
        let (w, h) = (40usize, 40usize);
        let mut seen = vec![false; w * h];
        let mut stack: Vec<usize> = (0..w * h)
            .filter(|&i| edges.data()[i] == 255 && mag[i] >= spec.high_threshold)
            .collect();
        for &i in &stack {
            seen[i] = true;
        }
        while let Some(j) = stack.pop() {
            let (x, y) = ((j % w) as isize, (j / w) as isize);
            for ny in (y - 1).max(0)..=(y + 1).min(h as isize - 1) {
                for nx in (x - 1).max(0)..=(x + 1).min(w as isize - 1) {
                    let k = ny as usize * w + nx as usize;
                    if !seen[k] && edges.data()[k] == 255 {
                        seen[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
        for i in 0..w * h {
            if edges.data()[i] == 255 {
                assert!(seen[i]);
                assert!(mag[i] >= spec.low_threshold);
            }
        }
    }
}
