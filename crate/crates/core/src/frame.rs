//! Depth, color and normalized frame containers.
//!
//! Depth is stored as 16-bit millimeters with `0` reserved for "no measurement".
//! Frames are immutable once built; operations return new frames.

use crate::error::{Error, Result};

/// Sentinel value for a pixel without a depth measurement.
pub const HOLE: u16 = 0;

/// Default normalization range, covers the Kinect v2 extended range.
pub const DEFAULT_MAX_DEPTH_MM: f64 = 8000.0;

fn check_len(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width.checked_mul(height).and_then(|n| n.checked_mul(channels)) != Some(len) {
        return Err(Error::invalid(format!(
            "buffer of {len} values does not match {width}x{height}x{channels}"
        )));
    }
    Ok(())
}

/// Single-channel depth map in millimeters, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        check_len(width, height, 1, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_hole(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == HOLE
    }

    /// `true` where the pixel holds no measurement.
    pub fn hole_mask(&self) -> Vec<bool> {
        self.data.iter().map(|&d| d == HOLE).collect()
    }

    pub fn hole_count(&self) -> usize {
        self.data.iter().filter(|&&d| d == HOLE).count()
    }

    pub fn valid_count(&self) -> usize {
        self.data.len() - self.hole_count()
    }
}

/// Interleaved 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ColorFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, 3, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Depth scaled to `[0, 1]` with an explicit validity mask.
///
/// Invalid pixels carry `0.0`. Most numeric routines (metrics, baselines)
/// operate on this representation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedFrame {
    width: usize,
    height: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl NormalizedFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        check_len(width, height, 1, data.len())?;
        check_len(width, height, 1, valid.len())?;
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    /// Frame with every pixel valid.
    pub fn from_values(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let valid = vec![true; data.len()];
        Self::new(width, height, data, valid)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        let valid = vec![true; data.len()];
        Self {
            width,
            height,
            data,
            valid,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<bool>) {
        (self.data, self.valid)
    }

    /// Same grid and mask with new values; masked entries are forced to 0.
    pub fn with_values(&self, mut data: Vec<f64>) -> Result<Self> {
        check_len(self.width, self.height, 1, data.len())?;
        for (v, &ok) in data.iter_mut().zip(&self.valid) {
            if !ok {
                *v = 0.0;
            }
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
            valid: self.valid.clone(),
        })
    }
}

fn check_max_depth(max_depth_mm: f64) -> Result<()> {
    if !(max_depth_mm > 0.0 && max_depth_mm.is_finite()) {
        return Err(Error::invalid(format!(
            "max_depth_mm must be positive, got {max_depth_mm}"
        )));
    }
    Ok(())
}

/// Map millimeters to `min(depth / max_depth_mm, 1)`; holes become masked zeros.
pub fn normalize(frame: &DepthFrame, max_depth_mm: f64) -> Result<NormalizedFrame> {
    check_max_depth(max_depth_mm)?;
    let mut data = Vec::with_capacity(frame.data.len());
    let mut valid = Vec::with_capacity(frame.data.len());
    for &d in &frame.data {
        if d == HOLE {
            data.push(0.0);
            valid.push(false);
        } else {
            data.push((f64::from(d) / max_depth_mm).min(1.0));
            valid.push(true);
        }
    }
    Ok(NormalizedFrame {
        width: frame.width,
        height: frame.height,
        data,
        valid,
    })
}

/// Inverse of [`normalize`]: `round(v * max_depth_mm)` clamped to the u16 range.
pub fn denormalize(frame: &NormalizedFrame, max_depth_mm: f64) -> Result<DepthFrame> {
    check_max_depth(max_depth_mm)?;
    let data = frame
        .data
        .iter()
        .zip(&frame.valid)
        .map(|(&v, &ok)| {
            if ok {
                to_millimeters(v, max_depth_mm)
            } else {
                HOLE
            }
        })
        .collect();
    Ok(DepthFrame {
        width: frame.width,
        height: frame.height,
        data,
    })
}

#[inline]
pub(crate) fn to_millimeters(v: f64, max_depth_mm: f64) -> u16 {
    let mm = (v * max_depth_mm).round();
    if mm.is_nan() {
        HOLE
    } else {
        mm.clamp(0.0, f64::from(u16::MAX)) as u16
    }
}
