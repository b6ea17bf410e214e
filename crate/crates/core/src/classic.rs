//! Non-learned baselines: Chambolle total-variation denoising, a
//! hole-aware bilateral filter, and FMM inpainting followed by bilateral
//! filtering.

use crate::error::{Error, Result};
use crate::frame::{denormalize, normalize, DepthFrame, NormalizedFrame};
use crate::inpaint::inpaint_classic;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvConfig {
    pub weight: f64,
    pub max_iters: usize,
    /// Stop once `|p_k - p_{k-1}| / |p_k|` drops below this.
    pub tol: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            weight: 0.4,
            max_iters: 200,
            tol: 2e-4,
        }
    }
}

impl TvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::invalid("tv.weight must be positive"));
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("tv.max_iters must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tv.tol must be non-negative"));
        }
        Ok(())
    }
}

/// Forward differences, zero at the border and across invalid pixels.
fn forward_gradient(values: &[f64], valid: &[bool], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                continue;
            }
            if x + 1 < w && valid[i + 1] {
                gx[i] = values[i + 1] - values[i];
            }
            if y + 1 < h && valid[i + w] {
                gy[i] = values[i + w] - values[i];
            }
        }
    }
    (gx, gy)
}

/// Discrete isotropic total variation over valid pixels.
pub fn total_variation(frame: &NormalizedFrame) -> f64 {
    let (w, h) = frame.dims();
    let (gx, gy) = forward_gradient(frame.data(), frame.valid(), w, h);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}

/// Chambolle's projection algorithm for `min_u |u - f|^2 / 2 + weight * TV(u)`.
///
/// Holes are left untouched and act as Neumann boundaries.
pub fn tv_denoise(frame: &NormalizedFrame, cfg: &TvConfig) -> Result<NormalizedFrame> {
    cfg.validate()?;
    let (w, h) = frame.dims();
    let f = frame.data();
    let valid = frame.valid();
    let tau = 0.25;
    let mut px = vec![0.0; w * h];
    let mut py = vec![0.0; w * h];
    let mut out = f.to_vec();
    for iter in 0..cfg.max_iters {
        if iter > 0 {
            // out = f + div p, with div the negative adjoint of the forward difference.
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let mut div = -(px[i] + py[i]);
                    if x > 0 {
                        div += px[i - 1];
                    }
                    if y > 0 {
                        div += py[i - w];
                    }
                    out[i] = f[i] + div;
                }
            }
        }
        let (gx, gy) = forward_gradient(&out, valid, w, h);
        let (mut change, mut norm) = (0.0, 0.0);
        for i in 0..w * h {
            let scale = 1.0 + tau / cfg.weight * (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
            let nx = (px[i] - tau * gx[i]) / scale;
            let ny = (py[i] - tau * gy[i]) / scale;
            change += (nx - px[i]).powi(2) + (ny - py[i]).powi(2);
            norm += nx * nx + ny * ny;
            px[i] = nx;
            py[i] = ny;
        }
        if iter > 0 && change.sqrt() <= cfg.tol * norm.sqrt() {
            break;
        }
    }
    frame.with_values(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilateralConfig {
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub radius: usize,
}

impl Default for BilateralConfig {
    fn default() -> Self {
        Self {
            sigma_s: 3.0,
            sigma_r: 0.05,
            radius: 7,
        }
    }
}

impl BilateralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s > 0.0 && self.sigma_r > 0.0 && self.radius > 0) {
            return Err(Error::invalid("bf.sigma_s, bf.sigma_r and bf.radius must be positive"));
        }
        Ok(())
    }
}

/// Square-window bilateral filter. Holes neither contribute nor get filled.
pub fn bilateral(frame: &NormalizedFrame, cfg: &BilateralConfig) -> Result<NormalizedFrame> {
    cfg.validate()?;
    let (w, h) = frame.dims();
    let (v, valid) = (frame.data(), frame.valid());
    let r = cfg.radius as isize;
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / (2.0 * cfg.sigma_s * cfg.sigma_s)).exp())
        .collect();
    let range_den = 2.0 * cfg.sigma_r * cfg.sigma_r;
    let side = 2 * cfg.radius + 1;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -r..=r {
                let qy = y as isize + dy;
                if qy < 0 || qy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let qx = x as isize + dx;
                    if qx < 0 || qx >= w as isize {
                        continue;
                    }
                    let j = qy as usize * w + qx as usize;
                    if !valid[j] {
                        continue;
                    }
                    let d = v[j] - v[i];
                    let wt = spatial[(dy + r) as usize * side + (dx + r) as usize] * (-(d * d) / range_den).exp();
                    num += wt * v[j];
                    den += wt;
                }
            }
            out[i] = num / den;
        }
    }
    frame.with_values(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FmmBfConfig {
    pub radius: usize,
    pub bilateral: BilateralConfig,
    pub max_depth_mm: f64,
}

impl Default for FmmBfConfig {
    fn default() -> Self {
        Self {
            radius: 5,
            bilateral: BilateralConfig::default(),
            max_depth_mm: crate::frame::DEFAULT_MAX_DEPTH_MM,
        }
    }
}

/// Classic FMM inpainting, then bilateral filtering, back in millimeters.
pub fn fmm_bf(depth: &DepthFrame, cfg: &FmmBfConfig) -> Result<DepthFrame> {
    let filled = inpaint_classic(depth, cfg.radius)?;
    let smoothed = bilateral(&normalize(&filled, cfg.max_depth_mm)?, &cfg.bilateral)?;
    let out = denormalize(&smoothed, cfg.max_depth_mm)?;
    // Sub-millimeter results would round to the hole sentinel.
    let (w, h) = out.dims();
    DepthFrame::new(w, h, out.into_data().into_iter().map(|d| d.max(1)).collect())
}
