use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::draw::Canvas;
use super::gray::{blur_gaussian, gray_f64};
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

const MIN_SIDE: usize = 16;
const MIN_OCTAVE_SIDE: usize = 8;
const ORI_BINS: usize = 36;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiftParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma: f64,
    /// Blur already present in the input image.
    pub assumed_blur: f64,
    /// Minimum |DoG| on intensities scaled to [0, 1].
    pub contrast_threshold: f64,
    /// Principal-curvature ratio limit.
    pub edge_ratio: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        SiftParams {
            octaves: 3,
            scales_per_octave: 3,
            sigma: 1.6,
            assumed_blur: 0.5,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
        }
    }
}

/// A detected scale-space extremum.
#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Gaussian scale in input-image pixels.
    pub scale: f64,
    /// Dominant gradient orientation in radians, in `[0, 2π)`.
    pub orientation: f64,
    /// Interpolated |DoG| at the refined location.
    pub response: f64,
    /// `trace² / det` of the spatial DoG Hessian.
    pub edge_score: f64,
    pub octave: usize,
    pub layer: usize,
}

struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn at(&self, x: usize, y: usize) -> f64 {
        self.v[y * self.w + x]
    }
}

/// Detects DoG keypoints (location, scale and orientation; no descriptors)
/// and renders each as a circle of radius `scale` with an orientation tick.
pub fn sift_keypoints(img: &ImageBuffer, params: &SiftParams) -> Result<(Vec<Keypoint>, ImageBuffer)> {
    let (w, h) = (img.width(), img.height());
    if w.min(h) < MIN_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_SIDE,
        });
    }
    let s = params.scales_per_octave.max(1);
    let k = 2f64.powf(1.0 / s as f64);
    let base: Vec<f64> = gray_f64(img).iter().map(|v| v / 255.0).collect();
    let first_blur = (params.sigma.powi(2) - params.assumed_blur.powi(2)).max(0.01).sqrt();
    let mut octave_base = Plane {
        w,
        h,
        v: blur_gaussian(&base, w, h, first_blur, 4.0),
    };

    let mut keypoints = Vec::new();
    for octave in 0..params.octaves {
        if octave_base.w.min(octave_base.h) < MIN_OCTAVE_SIDE {
            break;
        }
        let (ow, oh) = (octave_base.w, octave_base.h);
        let mut gauss = vec![octave_base];
        for i in 1..s + 3 {
            let prev = params.sigma * k.powi(i as i32 - 1);
            let total = prev * k;
            let inc = (total * total - prev * prev).sqrt();
            let blurred = blur_gaussian(&gauss[i - 1].v, ow, oh, inc, 4.0);
            gauss.push(Plane {
                w: ow,
                h: oh,
                v: blurred,
            });
        }
        let dog: Vec<Plane> = gauss
            .windows(2)
            .map(|p| Plane {
                w: ow,
                h: oh,
                v: p[1].v.iter().zip(&p[0].v).map(|(a, b)| a - b).collect(),
            })
            .collect();

        let scale_factor = (1usize << octave) as f64;
        for layer in 1..=s {
            for y in 1..oh - 1 {
                for x in 1..ow - 1 {
                    let v = dog[layer].at(x, y);
                    if v.abs() < 0.5 * params.contrast_threshold || !is_extremum(&dog, layer, x, y) {
                        continue;
                    }
                    let Some(refined) = refine(&dog, layer, x, y, params) else {
                        continue;
                    };
                    let kx = (x as f64 + refined.offset[0]) * scale_factor;
                    let ky = (y as f64 + refined.offset[1]) * scale_factor;
                    if !(0.0..w as f64).contains(&kx) || !(0.0..h as f64).contains(&ky) {
                        continue;
                    }
                    let octave_sigma = params.sigma * 2f64.powf((layer as f64 + refined.offset[2]) / s as f64);
                    let orientation = dominant_orientation(&gauss[layer], x, y, octave_sigma);
                    keypoints.push(Keypoint {
                        x: kx,
                        y: ky,
                        scale: octave_sigma * scale_factor,
                        orientation,
                        response: refined.response,
                        edge_score: refined.edge_score,
                        octave,
                        layer,
                    });
                }
            }
        }

        let next = &gauss[s];
        let (nw, nh) = (ow / 2, oh / 2);
        let mut v = Vec::with_capacity(nw * nh);
        for y in 0..nh {
            for x in 0..nw {
                v.push(next.at(2 * x, 2 * y));
            }
        }
        octave_base = Plane { w: nw, h: nh, v };
    }

    let mut canvas = Canvas::new(w, h);
    for kp in &keypoints {
        canvas.circle(kp.x, kp.y, kp.scale, 255);
        canvas.line(
            kp.x,
            kp.y,
            kp.x + kp.scale * kp.orientation.cos(),
            kp.y + kp.scale * kp.orientation.sin(),
            255,
        );
    }
    Ok((keypoints, canvas.into_image()))
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let (mut is_max, mut is_min) = (true, true);
    for plane in &dog[layer - 1..=layer + 1] {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dog[layer]) && nx == x && ny == y {
                    continue;
                }
                let n = plane.at(nx, ny);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

struct Refined {
    offset: [f64; 3],
    response: f64,
    edge_score: f64,
}

/// One Newton step on the quadratic model of the DoG around `(x, y, layer)`,
/// followed by the contrast and edge tests.
fn refine(dog: &[Plane], layer: usize, x: usize, y: usize, params: &SiftParams) -> Option<Refined> {
    let d = |l: usize, dx: isize, dy: isize| {
        dog[l].at((x as isize + dx) as usize, (y as isize + dy) as usize)
    };
    let v = d(layer, 0, 0);
    let grad = [
        0.5 * (d(layer, 1, 0) - d(layer, -1, 0)),
        0.5 * (d(layer, 0, 1) - d(layer, 0, -1)),
        0.5 * (d(layer + 1, 0, 0) - d(layer - 1, 0, 0)),
    ];
    let dxx = d(layer, 1, 0) + d(layer, -1, 0) - 2.0 * v;
    let dyy = d(layer, 0, 1) + d(layer, 0, -1) - 2.0 * v;
    let dss = d(layer + 1, 0, 0) + d(layer - 1, 0, 0) - 2.0 * v;
    let dxy = 0.25 * (d(layer, 1, 1) - d(layer, -1, 1) - d(layer, 1, -1) + d(layer, -1, -1));
    let dxs = 0.25 * (d(layer + 1, 1, 0) - d(layer + 1, -1, 0) - d(layer - 1, 1, 0) + d(layer - 1, -1, 0));
    let dys = 0.25 * (d(layer + 1, 0, 1) - d(layer + 1, 0, -1) - d(layer - 1, 0, 1) + d(layer - 1, 0, -1));
    let hessian = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
    let step = solve3(hessian, grad)?;
    let offset = [-step[0], -step[1], -step[2]];
    if offset.iter().any(|o| o.abs() >= 1.0) {
        return None;
    }
    let response = (v + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2])).abs();
    if response < params.contrast_threshold {
        return None;
    }
    let trace = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    if det <= 0.0 {
        return None;
    }
    let edge_score = trace * trace / det;
    let r = params.edge_ratio;
    if edge_score >= (r + 1.0).powi(2) / r {
        return None;
    }
    Some(Refined {
        offset,
        response,
        edge_score,
    })
}

/// Solves `a x = b` by Cramer's rule; `None` when `a` is near singular.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(a);
    if det.abs() < 1e-15 {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xi) in x.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *xi = det3(m) / det;
    }
    Some(x)
}

fn dominant_orientation(g: &Plane, x: usize, y: usize, octave_sigma: f64) -> f64 {
    let sigma = 1.5 * octave_sigma;
    let radius = (3.0 * sigma).round() as isize;
    let mut hist = [0.0; ORI_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (x as isize + dx, y as isize + dy);
            if px < 1 || py < 1 || px >= g.w as isize - 1 || py >= g.h as isize - 1 {
                continue;
            }
            let (px, py) = (px as usize, py as usize);
            let gx = g.at(px + 1, py) - g.at(px - 1, py);
            let gy = g.at(px, py + 1) - g.at(px, py - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(TAU);
            let weight = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let bin = ((angle / TAU * ORI_BINS as f64) as usize).min(ORI_BINS - 1);
            hist[bin] += weight * mag;
        }
    }
    let peak = (0..ORI_BINS).fold(0, |best, i| if hist[i] > hist[best] { i } else { best });
    let left = hist[(peak + ORI_BINS - 1) % ORI_BINS];
    let right = hist[(peak + 1) % ORI_BINS];
    let denom = left - 2.0 * hist[peak] + right;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    ((peak as f64 + 0.5 + shift) / ORI_BINS as f64 * TAU).rem_euclid(TAU)
}
