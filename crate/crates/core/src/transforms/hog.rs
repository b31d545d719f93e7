use super::draw::Canvas;
use super::gray::gray_f64;
use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

const CLIP: f64 = 0.2;
const EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct HogOutput {
    /// Concatenated normalized blocks.
    pub features: Vec<f64>,
    /// Raw magnitude-weighted histogram per cell, row-major over cells.
    pub cells: Vec<Vec<f64>>,
    pub cells_x: usize,
    pub cells_y: usize,
    /// Each block after the first normalization and clipping, before the
    /// final renormalization.
    pub clipped_blocks: Vec<Vec<f64>>,
    /// Dominant-orientation rendering.
    pub image: ImageBuffer,
}

/// HOG descriptor: unsigned orientations, `bins` bins over [0°, 180°)
/// centered at `i * 180 / bins`, 2x2-cell blocks with stride one cell and
/// L2-hysteresis normalization. Images narrower than two cells use a single
/// block spanning the available cells in that direction.
pub fn hog_features(img: &ImageBuffer, cell: usize, bins: usize) -> Result<HogOutput> {
    let (w, h) = (img.width(), img.height());
    if cell == 0 || bins == 0 {
        return Err(Error::InvalidConfig("HOG cell and bins must be positive".into()));
    }
    if w < cell.max(2) || h < cell.max(2) {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: cell.max(2),
        });
    }
    let g = gray_f64(img);
    let at = |x: isize, y: isize| {
        g[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let (cells_x, cells_y) = (w / cell, h / cell);
    let bin_width = 180.0 / bins as f64;
    let mut cells = vec![vec![0.0; bins]; cells_x * cells_y];
    for y in 0..cells_y * cell {
        for x in 0..cells_x * cell {
            let (xi, yi) = (x as isize, y as isize);
            let gx = at(xi + 1, yi) - at(xi - 1, yi);
            let gy = at(xi, yi + 1) - at(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = lo as usize % bins;
            let b1 = (b0 + 1) % bins;
            let hist = &mut cells[(y / cell) * cells_x + x / cell];
            hist[b0] += mag * (1.0 - frac);
            hist[b1] += mag * frac;
        }
    }

    let (bw, bh) = (cells_x.min(2), cells_y.min(2));
    let mut features = Vec::new();
    let mut clipped_blocks = Vec::new();
    for by in 0..=cells_y - bh {
        for bx in 0..=cells_x - bw {
            let mut block: Vec<f64> = Vec::with_capacity(bw * bh * bins);
            for cy in by..by + bh {
                for cx in bx..bx + bw {
                    block.extend_from_slice(&cells[cy * cells_x + cx]);
                }
            }
            normalize(&mut block);
            for v in &mut block {
                *v = v.min(CLIP);
            }
            clipped_blocks.push(block.clone());
            normalize(&mut block);
            features.extend(block);
        }
    }

    let image = render(&cells, cells_x, cells_y, cell, bin_width, w, h);
    Ok(HogOutput {
        features,
        cells,
        cells_x,
        cells_y,
        clipped_blocks,
        image,
    })
}

fn normalize(v: &mut [f64]) {
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + EPS * EPS).sqrt();
    for x in v {
        *x /= norm;
    }
}

/// Draws one segment per cell along the edge direction of its dominant bin,
/// with brightness proportional to the cell's gradient energy.
fn render(
    cells: &[Vec<f64>],
    cells_x: usize,
    cells_y: usize,
    cell: usize,
    bin_width: f64,
    w: usize,
    h: usize,
) -> ImageBuffer {
    let energy: Vec<f64> = cells.iter().map(|c| c.iter().sum()).collect();
    let max_energy = energy.iter().copied().fold(0.0, f64::max);
    let mut canvas = Canvas::new(w, h);
    if max_energy > 0.0 {
        for cy in 0..cells_y {
            for cx in 0..cells_x {
                let i = cy * cells_x + cx;
                if energy[i] == 0.0 {
                    continue;
                }
                let dominant = argmax(&cells[i]);
                // Edges run perpendicular to the gradient.
                let theta = (dominant as f64 * bin_width + 90.0).to_radians();
                let half = (cell as f64 - 1.0) / 2.0;
                let (ccx, ccy) = (cx as f64 * cell as f64 + half, cy as f64 * cell as f64 + half);
                let (dx, dy) = (theta.cos() * half, theta.sin() * half);
                let level = (255.0 * energy[i] / max_energy).round() as u8;
                canvas.line(ccx - dx, ccy - dy, ccx + dx, ccy + dy, level);
            }
        }
    }
    canvas.into_image()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Feature vector plus rendering.
pub fn hog_render(img: &ImageBuffer, cell: usize, bins: usize) -> Result<HogOutput> {
    hog_features(img, cell, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_image_is_zero_and_black() {
        let img = ImageBuffer::filled(32, 32, &[80, 80, 80]).unwrap();
        let out = hog_render(&img, 8, 9).unwrap();
        assert!(out.features.iter().all(|&v| v == 0.0));
        assert!(out.image.data().iter().all(|&v| v == 0));
        assert_eq!(out.features.len(), 3 * 3 * 4 * 9);
    }

    #[test]
    fn step_edge_cells_use_one_bin_and_render_vertically() {
        let img = ImageBuffer::from_fn(32, 32, 1, |x, _, _| if x < 12 { 0 } else { 255 }).unwrap();
        let out = hog_render(&img, 8, 9).unwrap();
        let mut edge_cells = 0;
        for (i, c) in out.cells.iter().enumerate() {
            let total: f64 = c.iter().sum();
            if total == 0.0 {
                continue;
            }
            edge_cells += 1;
            assert_eq!(argmax(c), 0, "cell {i}");
            assert!(c[0] >= 0.99 * total);
        }
        assert_eq!(edge_cells, 4);
        // Cell column 1 holds the edge; its rendered segment is vertical.
        let lit: Vec<(usize, usize)> = (0..32)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| out.image.get(x, y, 0) > 0)
            .collect();
        assert!(!lit.is_empty());
        let xs: std::collections::BTreeSet<usize> = lit.iter().map(|p| p.0).collect();
        assert!(xs.len() <= 2, "{xs:?}");
        assert!(xs.iter().all(|x| (8..16).contains(x)));
    }

    #[test]
    fn block_norm_bounds() {
        let mut rng = Rng::new(11, 0);
        let img = ImageBuffer::from_fn(40, 24, 3, |_, _, _| rng.below(256) as u8).unwrap();
        let out = hog_features(&img, 8, 9).unwrap();
        for b in &out.clipped_blocks {
            let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm <= 1.0 + 1e-9);
            assert!(b.iter().all(|&x| x <= 0.2 + 1e-9));
        }
        for b in out.features.chunks(4 * 9) {
            let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn single_cell_row_still_has_a_block() {
        let img = ImageBuffer::filled(24, 8, &[1]).unwrap();
        let out = hog_features(&img, 8, 9).unwrap();
        assert_eq!(out.features.len(), 2 * 9 * 2);
    }

    #[test]
    fn too_small() {
        let img = ImageBuffer::filled(7, 30, &[1]).unwrap();
        assert!(matches!(hog_features(&img, 8, 9), Err(Error::ImageTooSmall { .. })));
    }
}
