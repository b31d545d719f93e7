use crate::raster::ImageBuffer;

/// Black single-channel canvas; drawing keeps the brighter of old and new.
pub(crate) struct Canvas {
    w: usize,
    h: usize,
    data: Vec<u8>,
}

impl Canvas {
    pub fn new(w: usize, h: usize) -> Self {
        Canvas {
            w,
            h,
            data: vec![0; w * h],
        }
    }

    pub fn plot(&mut self, x: f64, y: f64, level: u8) {
        let (xi, yi) = (x.round(), y.round());
        if xi < 0.0 || yi < 0.0 || xi >= self.w as f64 || yi >= self.h as f64 {
            return;
        }
        let i = yi as usize * self.w + xi as usize;
        self.data[i] = self.data[i].max(level);
    }

    pub fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, level: u8) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            self.plot(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, level);
        }
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, level: u8) {
        let steps = ((2.0 * std::f64::consts::PI * r).ceil() as usize * 2).max(8);
        for s in 0..steps {
            let a = s as f64 / steps as f64 * std::f64::consts::TAU;
            self.plot(cx + r * a.cos(), cy + r * a.sin(), level);
        }
    }

    pub fn into_image(self) -> ImageBuffer {
        ImageBuffer::new(self.w, self.h, 1, self.data).expect("canvas geometry")
    }
}
