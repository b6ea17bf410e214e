//! Synthetic structured-light style depth corruption.
//!
//! Three stages, applied in order to a clean depth map:
//! 1. pixels seen at a grazing angle (normal vs. viewing ray beyond `theta_max`) are dropped,
//! 2. depth is resampled bilinearly at Gaussian-jittered sub-pixel positions,
//! 3. depth is converted to disparity `k / z`, perturbed with Gaussian noise,
//!    quantized, and converted back.
//!
//! Noise in disparity grows quadratically in depth, so far surfaces get noisier.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, HOLE};
use crate::registration::CameraRig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Standard deviation of the disparity noise, in disparity units.
    pub sigma_base: f64,
    /// Disparity quantization step.
    pub q_step: f64,
    /// Standard deviation of the sub-pixel resampling jitter, in pixels.
    pub sigma_s: f64,
    /// Pixels whose surface normal is more than this far from the viewing ray are dropped.
    pub theta_max_deg: f64,
    /// Disparity constant: `disparity = k_disparity / depth_mm`.
    pub k_disparity: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_base: 0.5,
            q_step: 0.125,
            sigma_s: 0.5,
            theta_max_deg: 80.0,
            k_disparity: 35130.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_base >= 0.0 && self.sigma_base.is_finite()) {
            return Err(Error::invalid("noise.sigma_base must be non-negative"));
        }
        if !(self.q_step > 0.0 && self.q_step.is_finite()) {
            return Err(Error::invalid("noise.q_step must be positive"));
        }
        if !(self.sigma_s >= 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::invalid("noise.sigma_s must be non-negative"));
        }
        if !(self.theta_max_deg > 0.0 && self.theta_max_deg <= 90.0) {
            return Err(Error::invalid("noise.theta_max_deg must be in (0, 90]"));
        }
        if !(self.k_disparity > 0.0 && self.k_disparity.is_finite()) {
            return Err(Error::invalid("noise.k_disparity must be positive"));
        }
        Ok(())
    }
}

/// Unit surface normals facing the camera; `None` where a 4-neighbour is a
/// hole or lies outside the frame.
pub fn estimate_normals(depth: &DepthFrame, rig: &CameraRig) -> Vec<Option<Vector3<f64>>> {
    let (w, h) = depth.dims();
    let point = |x: usize, y: usize| -> Option<Vector3<f64>> {
        let z = depth.get(x, y);
        (z != HOLE)
            .then(|| rig.backproject(x as f64, y as f64, f64::from(z)).ok())
            .flatten()
    };
    let mut out = vec![None; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (Some(c), Some(l), Some(r), Some(u), Some(d)) =
                (point(x, y), point(x - 1, y), point(x + 1, y), point(x, y - 1), point(x, y + 1))
            else {
                continue;
            };
            let n = (r - l).cross(&(d - u));
            let len = n.norm();
            if !(len > 0.0) {
                continue;
            }
            let mut n = n / len;
            if n.dot(&c) > 0.0 {
                n = -n;
            }
            out[y * w + x] = Some(n);
        }
    }
    out
}

/// Angle in degrees between a camera-facing normal and the ray to the point.
fn view_angle_deg(normal: &Vector3<f64>, point: &Vector3<f64>) -> f64 {
    let cos = (-normal.dot(point) / point.norm()).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

/// Pixels that the grazing-angle rule removes.
pub fn grazing_dropout(depth: &DepthFrame, rig: &CameraRig, theta_max_deg: f64) -> Vec<bool> {
    let (w, _) = depth.dims();
    estimate_normals(depth, rig)
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let Some(n) = n else { return false };
            let (x, y) = (i % w, i / w);
            let p = rig
                .backproject(x as f64, y as f64, f64::from(depth.get(x, y)))
                .expect("normals exist only on valid pixels");
            view_angle_deg(n, &p) > theta_max_deg
        })
        .collect()
}

/// Bilinear sample over valid taps only, renormalised; `None` if no tap is valid.
fn sample_valid(values: &[f64], valid: &[bool], w: usize, h: usize, u: f64, v: f64) -> Option<f64> {
    let u = u.clamp(0.0, (w - 1) as f64);
    let v = v.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (u - x0 as f64, v - y0 as f64);
    let taps = [
        (x0, y0, (1.0 - ax) * (1.0 - ay)),
        (x1, y0, ax * (1.0 - ay)),
        (x0, y1, (1.0 - ax) * ay),
        (x1, y1, ax * ay),
    ];
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y, wt) in taps {
        let i = y * w + x;
        if valid[i] && wt > 0.0 {
            num += wt * values[i];
            den += wt;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Apply dropout, jitter and disparity noise. Deterministic for a given seed.
pub fn corrupt(depth: &DepthFrame, rig: &CameraRig, cfg: &NoiseConfig) -> Result<DepthFrame> {
    cfg.validate()?;
    if depth.dims() != rig.depth_dims() {
        return Err(Error::DimensionMismatch {
            expected: rig.depth_dims(),
            found: depth.dims(),
        });
    }
    let (w, h) = depth.dims();
    let dropped = grazing_dropout(depth, rig, cfg.theta_max_deg);
    let valid: Vec<bool> = depth
        .data()
        .iter()
        .zip(&dropped)
        .map(|(&d, &drop)| d != HOLE && !drop)
        .collect();
    let values: Vec<f64> = depth.data().iter().map(|&d| f64::from(d)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = vec![HOLE; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            // Draw for every pixel so the stream does not depend on the hole layout.
            let (jx, jy, eps) = (unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng));
            if !valid[i] {
                continue;
            }
            let z = sample_valid(
                &values,
                &valid,
                w,
                h,
                x as f64 + cfg.sigma_s * jx,
                y as f64 + cfg.sigma_s * jy,
            )
            .unwrap_or(values[i]);
            let disparity = cfg.k_disparity / z + cfg.sigma_base * eps;
            let quantized = (disparity / cfg.q_step).round() * cfg.q_step;
            let noisy = if quantized > 0.0 {
                cfg.k_disparity / quantized
            } else {
                f64::from(u16::MAX)
            };
            out[i] = noisy.round().clamp(1.0, f64::from(u16::MAX)) as u16;
        }
    }
    DepthFrame::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    use crate::registration::Intrinsics;

    fn rig(w: usize, h: usize) -> CameraRig {
        let intr = Intrinsics {
            fx: 60.0,
            fy: 60.0,
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            width: w,
            height: h,
        };
        CameraRig::new(intr, intr, Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    #[test]
    fn fronto_parallel_normals() {
        let depth = DepthFrame::filled(8, 6, 1500);
        let n = estimate_normals(&depth, &rig(8, 6));
        for y in 0..6 {
            for x in 0..8 {
                let interior = (1..7).contains(&x) && (1..5).contains(&y);
                match n[y * 8 + x] {
                    Some(v) => {
                        assert!(interior);
                        assert!((v - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
                    }
                    None => assert!(!interior),
                }
            }
        }
    }

    #[test]
    fn hole_neighbourhood_is_invalid() {
        let depth = DepthFrame::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { 0 } else { 1000 });
        let n = estimate_normals(&depth, &rig(7, 7));
        for (x, y) in [(3, 3), (2, 3), (4, 3), (3, 2), (3, 4)] {
            assert!(n[y * 7 + x].is_none());
        }
        assert!(n[7 + 1].is_some());
    }

    #[test]
    fn tilted_plane_normal_within_one_degree() {
        // Plane z = z0 + x_world (45 degrees about the vertical axis).
        let r = rig(41, 41);
        let f = 60.0;
        let cx = 20.0;
        let z0 = 2000.0;
        // Pixel ray x_world = (x - cx) z / f, so z = z0 / (1 - (x - cx)/f).
        let depth = DepthFrame::from_fn(41, 41, |x, _| (z0 / (1.0 - (x as f64 - cx) / f)).round() as u16);
        let normals = estimate_normals(&depth, &r);
        let analytic = Vector3::new(1.0, 0.0, -1.0).normalize();
        for y in 5..36 {
            for x in 5..36 {
                let n = normals[y * 41 + x].unwrap();
                let angle = n.dot(&analytic).clamp(-1.0, 1.0).acos().to_degrees();
                assert!(angle < 1.0, "({x},{y}): {angle}");
            }
        }
    }

    #[test]
    fn disabled_corruption_is_identity() {
        let depth = DepthFrame::filled(16, 12, 1800);
        let cfg = NoiseConfig {
            sigma_base: 0.0,
            sigma_s: 0.0,
            q_step: 1e-9,
            ..Default::default()
        };
        assert_eq!(corrupt(&depth, &rig(16, 12), &cfg).unwrap(), depth);
    }

    #[test]
    fn holes_stay_holes_and_seed_is_deterministic() {
        let depth = DepthFrame::from_fn(16, 12, |x, y| if x == 5 && y > 3 { 0 } else { 1200 + (x * 10) as u16 });
        let r = rig(16, 12);
        let cfg = NoiseConfig { seed: 9, ..Default::default() };
        let a = corrupt(&depth, &r, &cfg).unwrap();
        assert_eq!(a, corrupt(&depth, &r, &cfg).unwrap());
        assert_ne!(a, corrupt(&depth, &r, &NoiseConfig { seed: 10, ..cfg }).unwrap());
        for i in 0..depth.data().len() {
            if depth.data()[i] == 0 {
                assert_eq!(a.data()[i], 0);
            }
        }
    }

    #[test]
    fn dropout_set_is_exact() {
        // Steep ramp along x: the sloped part exceeds 60 degrees.
        let depth = DepthFrame::from_fn(24, 10, |x, y| {
            if (x, y) == (2, 2) {
                0
            } else if x < 12 {
                1000
            } else {
                1000 + ((x - 11) * 120) as u16
            }
        });
        let r = rig(24, 10);
        let cfg = NoiseConfig { theta_max_deg: 60.0, sigma_s: 0.0, sigma_base: 0.0, ..Default::default() };
        let out = corrupt(&depth, &r, &cfg).unwrap();
        let dropped = grazing_dropout(&depth, &r, 60.0);
        assert!(dropped.iter().any(|&d| d));
        for i in 0..out.data().len() {
            assert_eq!(out.data()[i] == 0, dropped[i] || depth.data()[i] == 0, "pixel {i}");
        }
    }

    #[test]
    fn far_plane_is_noisier_over_many_seeds() {
        let depth = DepthFrame::from_fn(20, 10, |x, _| if x < 10 { 1000 } else { 4000 });
        let r = rig(20, 10);
        let (mut near, mut far) = (Vec::new(), Vec::new());
        for seed in 0..100 {
            let out = corrupt(&depth, &r, &NoiseConfig { seed, ..Default::default() }).unwrap();
            for y in 2..8 {
                for (x, acc) in [(3usize, &mut near), (16usize, &mut far)] {
                    let v = out.get(x, y);
                    assert_ne!(v, 0);
                    acc.push(f64::from(v) - f64::from(depth.get(x, y)));
                }
            }
        }
        let var = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s.len() as f64
        };
        assert!(var(&far) > var(&near), "far {} near {}", var(&far), var(&near));
    }

    #[test]
    fn rejects_bad_config() {
        let d = DepthFrame::filled(4, 4, 100);
        let r = rig(4, 4);
        assert!(corrupt(&d, &r, &NoiseConfig { q_step: 0.0, ..Default::default() }).is_err());
        assert!(corrupt(&d, &r, &NoiseConfig { theta_max_deg: 0.0, ..Default::default() }).is_err());
        assert!(corrupt(&d, &r, &NoiseConfig { sigma_base: -1.0, ..Default::default() }).is_err());
    }
}
