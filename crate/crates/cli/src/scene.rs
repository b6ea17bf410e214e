//! Procedural RGB-D sequences with exact ground truth.
//!
//! A tilted back wall, a static box and a sphere that slides left to right.
//! Color follows the geometry, so color edges line up with depth edges.

use depthmend_core::noise::{corrupt, NoiseConfig};
use depthmend_core::{CameraRig, ColorFrame, DepthFrame, Result};

#[derive(Clone, Debug)]
pub struct Scene {
    pub rig: CameraRig,
    pub clean: Vec<DepthFrame>,
    pub color: Vec<ColorFrame>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    /// Corrupt every frame; frame `t` uses seed `cfg.seed + t`.
    pub fn corrupted(&self, cfg: &NoiseConfig) -> Result<Vec<DepthFrame>> {
        self.clean
            .iter()
            .enumerate()
            .map(|(t, d)| {
                let c = NoiseConfig {
                    seed: cfg.seed.wrapping_add(t as u64),
                    ..*cfg
                };
                corrupt(d, &self.rig, &c)
            })
            .collect()
    }
}

pub fn moving_scene(width: usize, height: usize, frames: usize) -> Scene {
    let rig = CameraRig::identity(width, height, 0.9 * width as f64);
    let (w, h) = (width as f64, height as f64);
    let s = w.min(h);
    let mut clean = Vec::with_capacity(frames);
    let mut color = Vec::with_capacity(frames);
    for t in 0..frames {
        let phase = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
        let (cx, cy, r) = (0.2 * w + 0.6 * w * phase, 0.45 * h, 0.18 * s);
        let depth_color = |x: usize, y: usize| -> (f64, [u8; 3]) {
            let (xf, yf) = (x as f64, y as f64);
            let (dx, dy) = (xf - cx, yf - cy);
            let d2 = dx * dx + dy * dy;
            if d2 < r * r {
                // Sphere of radius 400 mm centred at 1600 mm.
                let z = 1600.0 - 400.0 * (1.0 - d2 / (r * r)).sqrt();
                let shade = (200.0 - 80.0 * d2 / (r * r)) as u8;
                return (z, [shade, 40, 30]);
            }
            if xf > 0.6 * w && xf < 0.85 * w && yf > 0.6 * h && yf < 0.9 * h {
                return (2200.0 + 300.0 * (yf - 0.6 * h) / h, [40, 60, 190]);
            }
            let z = 3000.0 + 1200.0 * (xf / w - 0.5) + 300.0 * (yf / h - 0.5);
            let stripe = if ((xf / s * 8.0) as usize) % 2 == 0 { 150 } else { 120 };
            (z, [stripe, stripe, 100])
        };
        clean.push(DepthFrame::from_fn(width, height, |x, y| depth_color(x, y).0.round() as u16));
        color.push(ColorFrame::from_fn(width, height, |x, y| depth_color(x, y).1));
    }
    Scene { rig, clean, color }
}
