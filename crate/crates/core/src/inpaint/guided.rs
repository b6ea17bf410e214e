use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{compute_distance_map, known_gradient, neighbors4, to_filled_mm, DistanceMap, HoleMask, Pixel};
use crate::error::{Error, Result};
use crate::frame::{DepthFrame, HOLE};
use crate::registration::RegisteredColor;

/// Smallest admissible automatic guide spread.
const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InpaintConfig {
    /// Minimum inter-pixel distance in the distance weight.
    pub d0: f64,
    /// Guide spread; `None` uses the standard deviation of the guide.
    pub sigma_g: Option<f64>,
    /// Mix between distance (0) and guide dissimilarity (1) in the priority.
    pub lambda: f64,
    /// Half-width of the square neighbourhood.
    pub radius: usize,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            d0: 1.0,
            sigma_g: None,
            lambda: 0.5,
            radius: 5,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda must be in [0, 1], got {}", self.lambda)));
        }
        if self.radius < 1 {
            return Err(Error::invalid("inpainting radius must be at least 1"));
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(Error::invalid(format!("d0 must be positive, got {}", self.d0)));
        }
        if let Some(s) = self.sigma_g {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma_g must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Guide image on the depth grid, channels scaled to `[0, 1]`, with its spread.
#[derive(Clone, Debug)]
pub struct Guide {
    width: usize,
    height: usize,
    values: Vec<[f64; 3]>,
    sigma: f64,
}

impl Guide {
    pub fn new(rc: &RegisteredColor, sigma_g: Option<f64>) -> Self {
        let (width, height) = rc.dims();
        let values: Vec<[f64; 3]> = rc
            .color
            .data()
            .chunks_exact(3)
            .map(|p| [f64::from(p[0]) / 255.0, f64::from(p[1]) / 255.0, f64::from(p[2]) / 255.0])
            .collect();
        let sigma = sigma_g.unwrap_or_else(|| {
            let n = (values.len() * 3) as f64;
            let mean = values.iter().flatten().sum::<f64>() / n;
            let var = values.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            var.sqrt().max(SIGMA_FLOOR)
        });
        Self {
            width,
            height,
            values,
            sigma,
        }
    }

    /// Constant guide: every guide weight is 1.
    pub fn uniform(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![[0.5; 3]; width * height],
            sigma: SIGMA_FLOOR,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn at(&self, p: Pixel) -> &[f64; 3] {
        &self.values[p.y * self.width + p.x]
    }
}

/// `exp(-|G(p) - G(q)|^2 / (2 sigma_g^2))`.
#[inline]
pub fn guide_weight(p: Pixel, q: Pixel, guide: &Guide) -> f64 {
    let (a, b) = (guide.at(p), guide.at(q));
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
    (-d2 / (2.0 * guide.sigma * guide.sigma)).exp()
}

/// `w_dst(p,q)^2 * w_g(p,q) * conf(q)` with `w_dst = d0^2 / |p-q|^2` and
/// `conf(q) = 1 / (1 + 2 T_out(q))`.
///
/// `T_out` is zero on original pixels and equals the distance map on pixels
/// filled during the run; since the distance map is zero on original pixels,
/// that is `T(q)` throughout.
pub fn weight(p: Pixel, q: Pixel, guide: &Guide, dist: &DistanceMap, cfg: &InpaintConfig) -> Result<f64> {
    if p == q {
        return Err(Error::CoincidentPixels);
    }
    Ok(weight_unchecked(p, q, guide, dist, cfg))
}

#[inline]
fn weight_unchecked(p: Pixel, q: Pixel, guide: &Guide, dist: &DistanceMap, cfg: &InpaintConfig) -> f64 {
    let w_dst = cfg.d0 * cfg.d0 / p.dist2(q);
    let conf = 1.0 / (1.0 + 2.0 * dist.get(q.x, q.y));
    w_dst * w_dst * guide_weight(p, q, guide) * conf
}

/// Lower values are filled first.
///
/// `known` marks pixels currently holding depth. A zero `T_max` drops the
/// distance term.
pub fn priority(p: Pixel, guide: &Guide, dist: &DistanceMap, known: &[bool], cfg: &InpaintConfig) -> f64 {
    let r = cfg.radius;
    let (w, h) = (dist.width(), dist.height());
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in p.y.saturating_sub(r)..=(p.y + r).min(h - 1) {
        for x in p.x.saturating_sub(r)..=(p.x + r).min(w - 1) {
            let q = Pixel::new(x, y);
            if q != p && known[y * w + x] {
                sum += guide_weight(p, q, guide);
                count += 1;
            }
        }
    }
    let similarity = if count == 0 { 0.0 } else { sum / count as f64 };
    let distance_term = if dist.max() > 0.0 {
        dist.get(p.x, p.y) / dist.max()
    } else {
        0.0
    };
    (1.0 - cfg.lambda) * distance_term + cfg.lambda * (1.0 - similarity)
}

#[derive(Clone, Copy, PartialEq)]
struct Key {
    pr: f64,
    y: usize,
    x: usize,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.pr
            .total_cmp(&other.pr)
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Working state shared by one inpainting run.
pub(crate) struct Canvas {
    pub w: usize,
    pub h: usize,
    pub values: Vec<f64>,
    pub known: Vec<bool>,
}

impl Canvas {
    pub fn new(depth: &DepthFrame) -> Self {
        Self {
            w: depth.width(),
            h: depth.height(),
            values: depth.data().iter().map(|&d| f64::from(d)).collect(),
            known: depth.data().iter().map(|&d| d != HOLE).collect(),
        }
    }

    pub fn on_band(&self, i: usize) -> bool {
        !self.known[i] && neighbors4(i % self.w, i / self.w, self.w, self.h).any(|(x, y)| self.known[y * self.w + x])
    }

    /// `sum w(q) [I(q) + grad I(q) . (p - q)] / sum w(q)` over known `q` in the
    /// candidate set. When every weight underflows, the guide factor is dropped.
    pub fn estimate(
        &self,
        p: Pixel,
        neighbours: impl Iterator<Item = Pixel> + Clone,
        weight: impl Fn(Pixel) -> f64,
        fallback: impl Fn(Pixel) -> f64,
    ) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut terms = Vec::new();
        for q in neighbours {
            let i = q.y * self.w + q.x;
            if q == p || !self.known[i] {
                continue;
            }
            let (gx, gy) = known_gradient(&self.values, &self.known, self.w, self.h, q.x, q.y);
            let est = self.values[i] + gx * (p.x as f64 - q.x as f64) + gy * (p.y as f64 - q.y as f64);
            let wq = weight(q);
            num += wq * est;
            den += wq;
            terms.push((q, est));
        }
        if den > 0.0 && den.is_finite() {
            return num / den;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (q, est) in terms {
            let wq = fallback(q);
            num += wq * est;
            den += wq;
        }
        num / den
    }

    pub fn into_frame(self, original: &DepthFrame) -> DepthFrame {
        let data = original
            .data()
            .iter()
            .zip(&self.values)
            .map(|(&orig, &v)| if orig == HOLE { to_filled_mm(v) } else { orig })
            .collect();
        DepthFrame::new(self.w, self.h, data).expect("canvas keeps the frame size")
    }
}

pub(crate) fn window(p: Pixel, r: usize, w: usize, h: usize) -> impl Iterator<Item = Pixel> + Clone {
    let (x0, x1) = (p.x.saturating_sub(r), (p.x + r).min(w - 1));
    (p.y.saturating_sub(r)..=(p.y + r).min(h - 1))
        .flat_map(move |y| (x0..=x1).map(move |x| Pixel::new(x, y)))
}

/// Color-guided fast-marching inpainting.
///
/// Boundary pixels (holes with a known 4-neighbour) are filled one at a time
/// in order of `(priority, row, column)`. Every fill makes the pixel known and
/// re-prioritises the boundary pixels whose neighbourhood contains it.
pub fn inpaint_guided(depth: &DepthFrame, guide: &Guide, cfg: &InpaintConfig) -> Result<DepthFrame> {
    cfg.validate()?;
    if guide.dims() != depth.dims() {
        return Err(Error::DimensionMismatch {
            expected: depth.dims(),
            found: guide.dims(),
        });
    }
    let mask = HoleMask::from_depth(depth);
    let dist = compute_distance_map(&mask)?;
    if mask.hole_count() == 0 {
        return Ok(depth.clone());
    }

    let mut canvas = Canvas::new(depth);
    let (w, h) = (canvas.w, canvas.h);
    let mut current = vec![f64::NAN; w * h];
    let mut heap = BinaryHeap::new();
    for i in 0..w * h {
        if canvas.on_band(i) {
            let p = Pixel::new(i % w, i / w);
            let pr = priority(p, guide, &dist, &canvas.known, cfg);
            current[i] = pr;
            heap.push(Reverse(Key { pr, y: p.y, x: p.x }));
        }
    }

    while let Some(Reverse(key)) = heap.pop() {
        let i = key.y * w + key.x;
        if canvas.known[i] || key.pr.to_bits() != current[i].to_bits() {
            continue;
        }
        let p = Pixel::new(key.x, key.y);
        let value = canvas.estimate(
            p,
            window(p, cfg.radius, w, h),
            |q| weight_unchecked(p, q, guide, &dist, cfg),
            |q| {
                let w_dst = cfg.d0 * cfg.d0 / p.dist2(q);
                w_dst * w_dst / (1.0 + 2.0 * dist.get(q.x, q.y))
            },
        );
        canvas.values[i] = value;
        canvas.known[i] = true;

        for q in window(p, cfg.radius, w, h) {
            let j = q.y * w + q.x;
            if canvas.on_band(j) {
                let pr = priority(q, guide, &dist, &canvas.known, cfg);
                if pr.to_bits() != current[j].to_bits() {
                    current[j] = pr;
                    heap.push(Reverse(Key { pr, y: q.y, x: q.x }));
                }
            }
        }
    }
    debug_assert!(canvas.known.iter().all(|&k| k));
    Ok(canvas.into_frame(depth))
}
