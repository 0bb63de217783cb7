//! Per-sample preprocessing and augmentation transforms.

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use super::{GestureSample, Provenance};
use crate::error::{Error, Result};
use crate::featurestreams::FrameGeometry;
use crate::linalg::Tensor;

/// Allowed brightness factors.
pub const BRIGHTNESS_LIMITS: (f64, f64) = (0.5, 1.5);

/// Undecoded 8-bit frame, row-major `H×W×C` with `C` = 1 or 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawFrame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidShape {
                shape: vec![height, width, channels],
                reason: "frame has a zero dimension".into(),
            });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidShape {
                shape: vec![height, width, channels],
                reason: "frames must have 1 or 3 channels".into(),
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidShape {
                shape: vec![height, width, channels],
                reason: format!("{} bytes for {} pixels", data.len(), width * height * channels),
            });
        }
        Ok(RawFrame {
            width,
            height,
            channels,
            data,
        })
    }

    fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, self.data.clone()).expect("validated size"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, self.data.clone()).expect("validated size"))
        }
    }

    /// Same pixels with `channels` channels (luma conversion or grey replication).
    pub fn with_channels(&self, channels: usize) -> Result<RawFrame> {
        if channels == self.channels {
            return Ok(self.clone());
        }
        let data = match channels {
            1 => self.to_dynamic().to_luma8().into_raw(),
            3 => self.to_dynamic().to_rgb8().into_raw(),
            _ => {
                return Err(Error::InvalidShape {
                    shape: vec![self.height, self.width, channels],
                    reason: "frames must have 1 or 3 channels".into(),
                })
            }
        };
        RawFrame::new(self.width, self.height, channels, data)
    }
}

fn resize_plane(frame: &RawFrame, geometry: FrameGeometry) -> Vec<f64> {
    let (w, h) = (frame.width as u32, frame.height as u32);
    let (nw, nh) = (geometry.width as u32, geometry.height as u32);
    let values: Vec<f32> = frame.data.iter().map(|&b| f32::from(b) / 255.0).collect();
    let resized: Vec<f32> = if frame.channels == 1 {
        let img: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_raw(w, h, values).expect("validated size");
        imageops::resize(&img, nw, nh, FilterType::Triangle).into_raw()
    } else {
        let img: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_raw(w, h, values).expect("validated size");
        imageops::resize(&img, nw, nh, FilterType::Triangle).into_raw()
    };
    resized
        .into_iter()
        .map(|v| f64::from(v).clamp(0.0, 1.0))
        .collect()
}

/// Resizes every frame to `geometry` (bilinear, widened when shrinking) and maps bytes to `[0, 1]`.
///
/// Frames already at the target size are converted exactly (`k / 255`).
pub fn resize_normalize(frames: &[RawFrame], geometry: FrameGeometry) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    if geometry.height == 0 || geometry.width == 0 || !(geometry.channels == 1 || geometry.channels == 3) {
        return Err(Error::InvalidShape {
            shape: vec![geometry.height, geometry.width, geometry.channels],
            reason: "target frame size must be nonzero with 1 or 3 channels".into(),
        });
    }
    let mut data = Vec::with_capacity(frames.len() * geometry.pixels());
    for f in frames {
        let f = RawFrame::new(f.width, f.height, f.channels, f.data.clone())?.with_channels(geometry.channels)?;
        if f.width == geometry.width && f.height == geometry.height {
            data.extend(f.data.iter().map(|&b| f64::from(b) / 255.0));
        } else {
            data.extend(resize_plane(&f, geometry));
        }
    }
    Tensor::new(&[frames.len(), geometry.height, geometry.width, geometry.channels], data)
}

/// Mirrors every frame across the vertical axis and mirrors the keypoints.
///
/// The label is kept; dataset-level flipping decides whether it changes.
pub fn horizontal_flip(sample: &GestureSample) -> GestureSample {
    let g = sample.geometry();
    let mut frames = sample.frames.clone();
    let src = sample.frames.data();
    let row = g.width * g.channels;
    for (dst_row, src_row) in frames.data_mut().chunks_exact_mut(row).zip(src.chunks_exact(row)) {
        for x in 0..g.width {
            let from = (g.width - 1 - x) * g.channels;
            dst_row[x * g.channels..(x + 1) * g.channels].copy_from_slice(&src_row[from..from + g.channels]);
        }
    }
    let keypoints = sample.keypoints.as_ref().map(|k| k.mirrored());
    sample.derive("flip", Provenance::Flipped, frames, keypoints)
}

fn sample_zero_padded(plane: &[f64], g: FrameGeometry, c: usize, x: f64, y: f64) -> f64 {
    // (x, y) in pixel-index coordinates
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let at = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= g.width as f64 || yi >= g.height as f64 {
            0.0
        } else {
            plane[((yi as usize) * g.width + xi as usize) * g.channels + c]
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotates frames and keypoints `degrees` clockwise (as displayed, y pointing down) about the image centre.
///
/// Bilinear resampling; pixels that come from outside the frame are 0.
pub fn rotate(sample: &GestureSample, degrees: f64) -> GestureSample {
    let g = sample.geometry();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = (g.width as f64 / 2.0, g.height as f64 / 2.0);
    let mut frames = sample.frames.clone();
    let plane_len = g.pixels();
    for (dst, src) in frames
        .data_mut()
        .chunks_exact_mut(plane_len)
        .zip(sample.frames.data().chunks_exact(plane_len))
    {
        for y in 0..g.height {
            for x in 0..g.width {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                // inverse of the clockwise rotation
                let sx = cx + dx * cos + dy * sin - 0.5;
                let sy = cy - dx * sin + dy * cos - 0.5;
                for c in 0..g.channels {
                    dst[(y * g.width + x) * g.channels + c] = sample_zero_padded(src, g, c, sx, sy).clamp(0.0, 1.0);
                }
            }
        }
    }
    let (w, h) = (g.width as f64, g.height as f64);
    let keypoints = sample.keypoints.as_ref().map(|k| {
        k.map_xy(|x, y| {
            let (dx, dy) = (x * w - cx, y * h - cy);
            ((cx + dx * cos - dy * sin) / w, (cy + dx * sin + dy * cos) / h)
        })
    });
    sample.derive("rot", Provenance::Rotated, frames, keypoints)
}

pub fn rotate10(sample: &GestureSample) -> GestureSample {
    rotate(sample, 10.0)
}

/// Scales pixel intensities by `factor` and clamps to `[0, 1]`. Keypoints are untouched.
pub fn adjust_brightness(sample: &GestureSample, factor: f64) -> Result<GestureSample> {
    let (lo, hi) = BRIGHTNESS_LIMITS;
    if !(lo..=hi).contains(&factor) {
        return Err(Error::Range(format!("brightness factor {factor} outside [{lo}, {hi}]")));
    }
    let frames = sample.frames.map(|v| (v * factor).clamp(0.0, 1.0));
    Ok(sample.derive("bright", Provenance::Brightened, frames, sample.keypoints.clone()))
}
