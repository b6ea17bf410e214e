//! Depth-to-color registration.
//!
//! Every valid depth pixel is lifted to a 3-D point in the depth camera,
//! moved into the color camera frame, and projected onto the color image.
//! Reversing that mapping yields a color image on the depth grid (the
//! inpainting guide). Pixels that receive no color are filled from their
//! nearest covered neighbour and smoothed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, RealField, Vector3};

use crate::error::{Error, Result};
use crate::frame::{ColorFrame, DepthFrame, HOLE};

/// Points closer than this to the color camera plane are discarded (mm).
pub const PROJECTION_EPSILON_MM: f64 = 1.0;

/// Coordinates this close to an integer are snapped onto it before sampling.
const GRID_SNAP: f64 = 1e-9;

/// Pinhole intrinsics for one camera, in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::invalid(format!("{name} focal lengths must be positive")));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid(format!("{name} principal point must be finite")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!("{name} resolution must be non-zero")));
        }
        Ok(())
    }
}

/// Depth and color intrinsics plus the rigid transform between the two cameras.
///
/// `rotation` and `translation` follow the convention `X_d = R X_rgb + T`, so a
/// depth-camera point maps into the color camera as `R^-1 (X_d - T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    depth: Intrinsics,
    color: Intrinsics,
    rotation: Matrix3<f64>,
    rotation_inv: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraRig {
    pub fn new(
        depth: Intrinsics,
        color: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        depth.validate("depth")?;
        color.validate("color")?;
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho < 1e-6) {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (max |R^T R - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("rotation determinant is {det}, expected 1")));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        let rotation_inv = rotation
            .try_inverse()
            .ok_or_else(|| Error::invalid("rotation is singular"))?;
        Ok(Self {
            depth,
            color,
            rotation,
            rotation_inv,
            translation,
        })
    }

    /// Both cameras share intrinsics and pose.
    pub fn identity(width: usize, height: usize, focal: f64) -> Self {
        let intr = Intrinsics {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
        };
        Self::new(intr, intr, Matrix3::identity(), Vector3::zeros()).expect("identity rig is valid")
    }

    /// Nominal Kinect v2 geometry (512x424 depth, 1920x1080 color, 52 mm baseline).
    pub fn kinect_v2_nominal() -> Self {
        Self::new(
            Intrinsics {
                fx: 365.5,
                fy: 365.5,
                cx: 255.5,
                cy: 211.5,
                width: 512,
                height: 424,
            },
            Intrinsics {
                fx: 1081.4,
                fy: 1081.4,
                cx: 959.5,
                cy: 539.5,
                width: 1920,
                height: 1080,
            },
            Matrix3::identity(),
            Vector3::new(52.0, 0.0, 0.0),
        )
        .expect("nominal rig is valid")
    }

    pub fn depth_intrinsics(&self) -> &Intrinsics {
        &self.depth
    }

    pub fn color_intrinsics(&self) -> &Intrinsics {
        &self.color
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn depth_dims(&self) -> (usize, usize) {
        (self.depth.width, self.depth.height)
    }

    pub fn color_dims(&self) -> (usize, usize) {
        (self.color.width, self.color.height)
    }

    /// Lift depth pixel `(x, y)` at depth `z` mm into the depth camera frame.
    pub fn backproject<T: RealField + Copy>(&self, x: T, y: T, z: T) -> Result<Vector3<T>> {
        if z <= T::zero() {
            return Err(Error::NonPositiveDepth(nalgebra::try_convert(z).unwrap_or(f64::NAN)));
        }
        let (fx, fy, cx, cy) = cast4::<T>(self.depth.fx, self.depth.fy, self.depth.cx, self.depth.cy);
        Ok(Vector3::new((x - cx) * z / fx, (y - cy) * z / fy, z))
    }

    /// `R^-1 (X_d - T)`.
    pub fn to_rgb_camera<T: RealField + Copy>(&self, point: &Vector3<T>) -> Vector3<T> {
        let r_inv: Matrix3<T> = self.rotation_inv.cast();
        let t: Vector3<T> = self.translation.cast();
        r_inv * (point - t)
    }

    /// Perspective projection onto the color image. `None` when the point lies
    /// within [`PROJECTION_EPSILON_MM`] of the camera plane or behind it.
    pub fn project_rgb<T: RealField + Copy>(&self, point: &Vector3<T>) -> Option<(T, T, T)> {
        let eps: T = nalgebra::convert(PROJECTION_EPSILON_MM);
        if !(point.z > eps) {
            return None;
        }
        let (fx, fy, cx, cy) = cast4::<T>(self.color.fx, self.color.fy, self.color.cx, self.color.cy);
        Some((point.x * fx / point.z + cx, point.y * fy / point.z + cy, point.z))
    }

    /// Color-image coordinates of depth pixel `(x, y)` at `z` mm, if it projects.
    pub fn depth_to_color(&self, x: f64, y: f64, z: f64) -> Option<(f64, f64)> {
        let p = self.backproject(x, y, z).ok()?;
        self.project_rgb(&self.to_rgb_camera(&p)).map(|(u, v, _)| (u, v))
    }

    /// Parse the plain-text `key = value` calibration format.
    pub fn from_rig_str(text: &str, origin: &Path) -> Result<Self> {
        const SCALARS: [&str; 12] = [
            "fd_x", "fd_y", "cd_x", "cd_y", "frgb_x", "frgb_y", "crgb_x", "crgb_y", "depth_w",
            "depth_h", "rgb_w", "rgb_h",
        ];
        let mut values: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_owned(),
                line: n + 1,
                message,
            };
            let (key, rest) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let expected = match key {
                "R" => 9,
                "T" => 3,
                k if SCALARS.contains(&k) => 1,
                k => return Err(err(format!("unknown rig key `{k}`"))),
            };
            let nums = rest
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}` for `{key}`"))))
                .collect::<Result<Vec<_>>>()?;
            if nums.len() != expected {
                return Err(err(format!("`{key}` needs {expected} value(s), got {}", nums.len())));
            }
            if values.insert(key.to_owned(), (n + 1, nums)).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        let get = |k: &str| -> Result<&[f64]> {
            values.get(k).map(|(_, v)| v.as_slice()).ok_or_else(|| Error::Parse {
                path: origin.to_owned(),
                line: 0,
                message: format!("missing rig key `{k}`"),
            })
        };
        let size = |k: &str| -> Result<usize> {
            let v = get(k)?[0];
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::invalid(format!("`{k}` must be a positive integer, got {v}")));
            }
            Ok(v as usize)
        };
        let depth = Intrinsics {
            fx: get("fd_x")?[0],
            fy: get("fd_y")?[0],
            cx: get("cd_x")?[0],
            cy: get("cd_y")?[0],
            width: size("depth_w")?,
            height: size("depth_h")?,
        };
        let color = Intrinsics {
            fx: get("frgb_x")?[0],
            fy: get("frgb_y")?[0],
            cx: get("crgb_x")?[0],
            cy: get("crgb_y")?[0],
            width: size("rgb_w")?,
            height: size("rgb_h")?,
        };
        let rotation = Matrix3::from_row_slice(get("R")?);
        let translation = Vector3::from_column_slice(get("T")?);
        Self::new(depth, color, rotation, translation)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_rig_str(&text, path)
    }

    pub fn to_rig_string(&self) -> String {
        let mut s = String::new();
        let d = &self.depth;
        let c = &self.color;
        let _ = writeln!(s, "fd_x = {}\nfd_y = {}\ncd_x = {}\ncd_y = {}", d.fx, d.fy, d.cx, d.cy);
        let _ = writeln!(s, "frgb_x = {}\nfrgb_y = {}\ncrgb_x = {}\ncrgb_y = {}", c.fx, c.fy, c.cx, c.cy);
        let r = &self.rotation;
        let _ = writeln!(
            s,
            "R = {} {} {} {} {} {} {} {} {}",
            r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]
        );
        let t = &self.translation;
        let _ = writeln!(s, "T = {} {} {}", t.x, t.y, t.z);
        let _ = writeln!(s, "depth_w = {}\ndepth_h = {}\nrgb_w = {}\nrgb_h = {}", d.width, d.height, c.width, c.height);
        s
    }
}

fn cast4<T: RealField + Copy>(a: f64, b: f64, c: f64, d: f64) -> (T, T, T, T) {
    (
        nalgebra::convert(a),
        nalgebra::convert(b),
        nalgebra::convert(c),
        nalgebra::convert(d),
    )
}

/// Color resampled onto the depth grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RegisteredColor {
    pub color: ColorFrame,
    /// `true` where the color was sampled through the camera mapping, `false`
    /// where it was produced by hole filling.
    pub coverage: Vec<bool>,
}

impl RegisteredColor {
    pub fn new(color: ColorFrame, coverage: Vec<bool>) -> Result<Self> {
        if coverage.len() != color.width() * color.height() {
            return Err(Error::invalid("coverage mask does not match color frame"));
        }
        Ok(Self { color, coverage })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.color.dims()
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }
}

/// Hole-fill smoothing applied to uncovered pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HoleFillConfig {
    /// Half-width of the box filter (2 gives a 5x5 window).
    pub blur_radius: usize,
    pub blur_passes: usize,
}

impl Default for HoleFillConfig {
    fn default() -> Self {
        Self {
            blur_radius: 2,
            blur_passes: 2,
        }
    }
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < GRID_SNAP {
        r
    } else {
        v
    }
}

fn sample_bilinear(color: &ColorFrame, u: f64, v: f64) -> [u8; 3] {
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let x1 = (x0 + 1).min(color.width() - 1);
    let y1 = (y0 + 1).min(color.height() - 1);
    let ax = u - x0 as f64;
    let ay = v - y0 as f64;
    let (p00, p10, p01, p11) = (
        color.pixel(x0, y0),
        color.pixel(x1, y0),
        color.pixel(x0, y1),
        color.pixel(x1, y1),
    );
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - ax) + f64::from(p10[c]) * ax;
        let bottom = f64::from(p01[c]) * (1.0 - ax) + f64::from(p11[c]) * ax;
        out[c] = (top * (1.0 - ay) + bottom * ay).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Build the color guide on the depth grid, then fill whatever stayed uncovered.
///
/// A frame without a single covered pixel yields a black guide with an
/// all-false coverage mask.
pub fn build_registered_color(
    depth: &DepthFrame,
    color: &ColorFrame,
    rig: &CameraRig,
    fill: &HoleFillConfig,
) -> Result<RegisteredColor> {
    let projected = project_color(depth, color, rig)?;
    if projected.covered_count() == 0 {
        return Ok(projected);
    }
    fill_color_holes(&projected, fill)
}

/// Registration without hole filling: uncovered pixels are black.
pub fn project_color(depth: &DepthFrame, color: &ColorFrame, rig: &CameraRig) -> Result<RegisteredColor> {
    if depth.dims() != rig.depth_dims() {
        return Err(Error::DimensionMismatch {
            expected: rig.depth_dims(),
            found: depth.dims(),
        });
    }
    if color.dims() != rig.color_dims() {
        return Err(Error::DimensionMismatch {
            expected: rig.color_dims(),
            found: color.dims(),
        });
    }
    let (w, h) = depth.dims();
    let max_u = (color.width() - 1) as f64;
    let max_v = (color.height() - 1) as f64;
    let mut data = vec![0u8; 3 * w * h];
    let mut coverage = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let z = depth.get(x, y);
            if z == HOLE {
                continue;
            }
            let Some((u, v)) = rig.depth_to_color(x as f64, y as f64, f64::from(z)) else {
                continue;
            };
            let (u, v) = (snap(u), snap(v));
            if !(0.0..=max_u).contains(&u) || !(0.0..=max_v).contains(&v) {
                continue;
            }
            let i = y * w + x;
            data[3 * i..3 * i + 3].copy_from_slice(&sample_bilinear(color, u, v));
            coverage[i] = true;
        }
    }
    RegisteredColor::new(ColorFrame::new(w, h, data)?, coverage)
}

/// For every pixel, the index of the nearest pixel with `mask == true`
/// (exact Euclidean distance). `None` only when the mask is empty.
pub fn nearest_set_pixel(width: usize, height: usize, mask: &[bool]) -> Option<Vec<usize>> {
    if !mask.iter().any(|&m| m) {
        return None;
    }
    // Nearest set row within each column.
    let mut col_nearest = vec![None::<usize>; width * height];
    for x in 0..width {
        let mut last = None;
        for y in 0..height {
            if mask[y * width + x] {
                last = Some(y);
            }
            col_nearest[y * width + x] = last;
        }
        let mut next = None;
        for y in (0..height).rev() {
            if mask[y * width + x] {
                next = Some(y);
            }
            let i = y * width + x;
            col_nearest[i] = match (col_nearest[i], next) {
                (Some(a), Some(b)) => Some(if y - a <= b - y { a } else { b }),
                (a, b) => a.or(b),
            };
        }
    }

    // Lower envelope of parabolas along each row.
    let mut nearest = vec![0usize; width * height];
    let mut sites: Vec<usize> = Vec::with_capacity(width);
    let mut bounds: Vec<f64> = Vec::with_capacity(width + 1);
    for y in 0..height {
        let row = &col_nearest[y * width..(y + 1) * width];
        let f = |q: usize| -> f64 {
            let r = row[q].expect("only called on occupied columns");
            let dy = r as f64 - y as f64;
            dy * dy + (q * q) as f64
        };
        sites.clear();
        bounds.clear();
        for q in (0..width).filter(|&q| row[q].is_some()) {
            loop {
                let Some(&p) = sites.last() else { break };
                let s = (f(q) - f(p)) / (2.0 * (q as f64 - p as f64));
                if s <= *bounds.last().expect("one bound per site") {
                    sites.pop();
                    bounds.pop();
                } else {
                    break;
                }
            }
            let s = match sites.last() {
                Some(&p) => (f(q) - f(p)) / (2.0 * (q as f64 - p as f64)),
                None => f64::NEG_INFINITY,
            };
            sites.push(q);
            bounds.push(s);
        }
        let mut k = 0;
        for x in 0..width {
            while k + 1 < sites.len() && bounds[k + 1] < x as f64 {
                k += 1;
            }
            let q = sites[k];
            nearest[y * width + x] = row[q].expect("site column is occupied") * width + q;
        }
    }
    Some(nearest)
}

/// Fill uncovered pixels with their nearest covered color, then box-blur the
/// uncovered pixels only. Covered pixels are returned unchanged.
pub fn fill_color_holes(rc: &RegisteredColor, cfg: &HoleFillConfig) -> Result<RegisteredColor> {
    let (w, h) = rc.dims();
    let nearest = nearest_set_pixel(w, h, &rc.coverage).ok_or(Error::NoCoverage)?;
    let src = rc.color.data();
    let mut img: Vec<f64> = (0..w * h)
        .flat_map(|i| {
            let j = if rc.coverage[i] { i } else { nearest[i] };
            (0..3).map(move |c| f64::from(src[3 * j + c]))
        })
        .collect();

    let r = cfg.blur_radius as isize;
    if r > 0 {
        let mut next = img.clone();
        for _ in 0..cfg.blur_passes {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if rc.coverage[i] {
                        continue;
                    }
                    let mut acc = [0.0f64; 3];
                    let mut n = 0.0;
                    for yy in (y as isize - r).max(0)..=(y as isize + r).min(h as isize - 1) {
                        for xx in (x as isize - r).max(0)..=(x as isize + r).min(w as isize - 1) {
                            let j = yy as usize * w + xx as usize;
                            for c in 0..3 {
                                acc[c] += img[3 * j + c];
                            }
                            n += 1.0;
                        }
                    }
                    for c in 0..3 {
                        next[3 * i + c] = acc[c] / n;
                    }
                }
            }
            std::mem::swap(&mut img, &mut next);
        }
    }

    let data = img
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if rc.coverage[k / 3] {
                src[k]
            } else {
                v.round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    RegisteredColor::new(ColorFrame::new(w, h, data)?, rc.coverage.clone())
}
