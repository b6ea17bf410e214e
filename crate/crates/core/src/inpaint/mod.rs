//! Fast-marching depth completion.
//!
//! [`inpaint_guided`] fills holes with color-guided weights and a priority
//! that mixes distance-to-boundary with local guide similarity.
//! [`inpaint_classic`] is the unguided Telea scheme used by the FMM+BF baseline.

mod distance;
mod guided;
mod telea;

pub use distance::{compute_distance_map, DistanceMap};
pub use guided::{guide_weight, inpaint_guided, priority, weight, Guide, InpaintConfig};
pub use telea::inpaint_classic;

use crate::frame::DepthFrame;

/// Pixel coordinate, `x` along the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    #[inline]
    pub(crate) fn dist2(self, other: Pixel) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx * dx + dy * dy
    }
}

/// The set of initial holes, fixed for the duration of one inpainting run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoleMask {
    width: usize,
    height: usize,
    holes: Vec<bool>,
}

impl HoleMask {
    pub fn from_depth(depth: &DepthFrame) -> Self {
        Self {
            width: depth.width(),
            height: depth.height(),
            holes: depth.hole_mask(),
        }
    }

    pub fn from_bools(width: usize, height: usize, holes: Vec<bool>) -> Self {
        assert_eq!(holes.len(), width * height, "mask size mismatch");
        Self {
            width,
            height,
            holes,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn holes(&self) -> &[bool] {
        &self.holes
    }

    #[inline]
    pub fn is_hole(&self, x: usize, y: usize) -> bool {
        self.holes[y * self.width + x]
    }

    pub fn hole_count(&self) -> usize {
        self.holes.iter().filter(|&&h| h).count()
    }
}

/// 4-neighbours of `(x, y)` inside a `w x h` grid.
#[inline]
pub(crate) fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let cand = [
        (x.wrapping_sub(1), y),
        (x + 1, y),
        (x, y.wrapping_sub(1)),
        (x, y + 1),
    ];
    cand.into_iter().filter(move |&(nx, ny)| nx < w && ny < h)
}

/// Discrete image gradient at a known pixel: central differences where both
/// neighbours are known, one-sided where only one is, zero otherwise.
pub(crate) fn known_gradient(values: &[f64], known: &[bool], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    let at = |xx: usize, yy: usize| yy * w + xx;
    let axis = |prev: Option<usize>, next: Option<usize>, here: usize| -> f64 {
        let p = prev.filter(|&i| known[i]);
        let n = next.filter(|&i| known[i]);
        match (p, n) {
            (Some(p), Some(n)) => (values[n] - values[p]) / 2.0,
            (None, Some(n)) => values[n] - values[here],
            (Some(p), None) => values[here] - values[p],
            (None, None) => 0.0,
        }
    };
    let here = at(x, y);
    let gx = axis(
        x.checked_sub(1).map(|xx| at(xx, y)),
        (x + 1 < w).then(|| at(x + 1, y)),
        here,
    );
    let gy = axis(
        y.checked_sub(1).map(|yy| at(x, yy)),
        (y + 1 < h).then(|| at(x, y + 1)),
        here,
    );
    (gx, gy)
}

/// Round a filled estimate to millimeters, never producing the hole sentinel.
#[inline]
pub(crate) fn to_filled_mm(v: f64) -> u16 {
    if v.is_nan() {
        return 1;
    }
    v.round().clamp(1.0, f64::from(u16::MAX)) as u16
}
