//! 8-bit rasters, decoding/encoding and resampling.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels, expected 1 or 3")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "{} bytes for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        ImageBuffer::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self> {
        ImageBuffer::from_fn(width, height, pixel.len(), |_, _, c| pixel[c])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Bilinear resize with half-pixel centers; samples are rounded back to 8 bits.
    pub fn resize(&self, width: usize, height: usize) -> ImageBuffer {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let data = resample_bilinear(&self.data, self.width, self.height, self.channels, width, height)
            .into_iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        ImageBuffer {
            width,
            height,
            channels: self.channels,
            data,
        }
    }
}

/// An image with an arbitrary number of channels, e.g. two transforms stacked.
/// Only 1- and 3-channel feature images can be exported as PNG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl FeatureImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidImage(format!(
                "empty feature image {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "{} bytes for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(FeatureImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Copies channels `range` into a new feature image.
    pub fn channel_slice(&self, range: std::ops::Range<usize>) -> Result<FeatureImage> {
        if range.start >= range.end || range.end > self.channels {
            return Err(Error::DimensionMismatch(format!(
                "channel range {range:?} of a {}-channel image",
                self.channels
            )));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|px| px[range.clone()].iter().copied())
            .collect();
        FeatureImage::new(self.width, self.height, range.len(), data)
    }

    pub fn to_image(&self) -> Result<ImageBuffer> {
        ImageBuffer::new(self.width, self.height, self.channels, self.data.clone())
    }
}

impl From<ImageBuffer> for FeatureImage {
    fn from(img: ImageBuffer) -> Self {
        FeatureImage {
            width: img.width,
            height: img.height,
            channels: img.channels,
            data: img.data,
        }
    }
}

/// Bilinear resampling of interleaved 8-bit data into real-valued samples.
///
/// Output sample `(ox, oy)` reads source position
/// `((ox + 0.5) * w / out_w - 0.5, (oy + 0.5) * h / out_h - 0.5)`, clamped to
/// the image.
pub fn resample_bilinear(
    data: &[u8],
    width: usize,
    height: usize,
    channels: usize,
    out_width: usize,
    out_height: usize,
) -> Vec<f64> {
    let sx = width as f64 / out_width as f64;
    let sy = height as f64 / out_height as f64;
    let axis = |o: usize, scale: f64, n: usize| {
        let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_width).map(|ox| axis(ox, sx, width)).collect();
    let mut out = Vec::with_capacity(out_width * out_height * channels);
    for oy in 0..out_height {
        let (y0, y1, ty) = axis(oy, sy, height);
        for &(x0, x1, tx) in &cols {
            for c in 0..channels {
                let at = |x: usize, y: usize| f64::from(data[(y * width + x) * channels + c]);
                let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
                let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    out
}

/// Decodes a PNG or JPEG file. Gray sources stay single-channel, color sources
/// become RGB, and any alpha channel is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: format!("unsupported format {other:?}"),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    from_dynamic(decoded)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::Decode {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        ImageBuffer::new(w, h, 3, img.into_rgb8().into_raw())
    } else {
        ImageBuffer::new(w, h, 1, img.into_luma8().into_raw())
    }
}

/// Writes an image as PNG.
pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = if img.channels == 1 {
        ColorType::L8
    } else {
        ColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(ImageBuffer::new(0, 1, 1, vec![]).is_err());
        assert!(ImageBuffer::new(1, 1, 2, vec![0, 0]).is_err());
        assert!(ImageBuffer::new(2, 2, 3, vec![0; 11]).is_err());
    }

    #[test]
    fn png_roundtrip_and_simple_decodes() {
        let dir = tempfile::tempdir().unwrap();
        let black = ImageBuffer::filled(2, 2, &[0, 0, 0]).unwrap();
        let p = dir.path().join("black.png");
        save_png(&black, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.data(), &[0u8; 12]);

        let red = ImageBuffer::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        let p = dir.path().join("red.png");
        save_png(&red, &p).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[255, 0, 0]);

        let noisy = ImageBuffer::from_fn(7, 5, 3, |x, y, c| (x * 37 + y * 11 + c * 101) as u8).unwrap();
        let p = dir.path().join("noisy.png");
        save_png(&noisy, &p).unwrap();
        let once = load_image(&p).unwrap();
        save_png(&once, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), noisy);
    }

    #[test]
    fn gray_stays_gray_and_alpha_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        save_png(&ImageBuffer::filled(3, 2, &[9]).unwrap(), &p).unwrap();
        assert_eq!(load_image(&p).unwrap().channels(), 1);

        let p = dir.path().join("rgba.png");
        image::save_buffer(&p, &[10, 20, 30, 40], 1, 1, ColorType::Rgba8).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[10, 20, 30]);
    }

    #[test]
    fn jpeg_decodes_to_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jpg");
        image::save_buffer(&p, &[200u8; 8 * 8 * 3], 8, 8, ColorType::Rgb8).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (8, 8, 3));
    }

    #[test]
    fn corrupt_file_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        assert!(matches!(load_image(&p), Err(Error::Decode { .. })));
        assert!(matches!(load_image(dir.path().join("missing.png")), Err(Error::Io { .. })));
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ImageBuffer::filled(9, 4, &[17, 18, 19]).unwrap();
        assert_eq!(img.resize(9, 4), img);
        assert_eq!(img.resize(3, 3), ImageBuffer::filled(3, 3, &[17, 18, 19]).unwrap());
    }

    #[test]
    fn channel_slice_bounds() {
        let f: FeatureImage = ImageBuffer::filled(2, 2, &[1, 2, 3]).unwrap().into();
        assert_eq!(f.channel_slice(1..2).unwrap().data(), &[2, 2, 2, 2]);
        assert!(f.channel_slice(2..4).is_err());
    }
}
