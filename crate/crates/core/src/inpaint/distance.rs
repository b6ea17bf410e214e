use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{neighbors4, HoleMask};
use crate::error::{Error, Result};

/// Per-pixel distance to the initial hole boundary (`0` on known pixels).
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    max: f64,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Largest distance in the map.
    pub fn max(&self) -> f64 {
        self.max
    }
}

#[derive(PartialEq)]
struct Front {
    t: f64,
    index: usize,
}

impl Eq for Front {}

impl Ord for Front {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Front {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order upwind solution of `|grad T| = 1` from the smallest frozen
/// neighbour along each axis.
fn solve_eikonal(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) if (a - b).abs() < 1.0 => (a + b + (2.0 - (a - b) * (a - b)).sqrt()) / 2.0,
        (true, true) => a.min(b) + 1.0,
        (true, false) => a + 1.0,
        (false, true) => b + 1.0,
        (false, false) => f64::INFINITY,
    }
}

/// Fast-marching distance from the known region into every hole.
///
/// Hole pixels touching a known pixel (4-connectivity) start at `T = 1`; the
/// front then advances through the holes in increasing `T`.
pub fn compute_distance_map(mask: &HoleMask) -> Result<DistanceMap> {
    let (w, h) = (mask.width(), mask.height());
    let holes = mask.holes();
    if holes.iter().all(|&hole| hole) {
        return Err(Error::NoValidPixels);
    }
    let mut t = vec![f64::INFINITY; w * h];
    let mut frozen = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    for (i, &hole) in holes.iter().enumerate() {
        if !hole {
            t[i] = 0.0;
            frozen[i] = true;
        } else if neighbors4(i % w, i / w, w, h).any(|(x, y)| !holes[y * w + x]) {
            t[i] = 1.0;
            heap.push(Front { t: 1.0, index: i });
        }
    }

    while let Some(Front { t: tp, index }) = heap.pop() {
        if frozen[index] || tp > t[index] {
            continue;
        }
        frozen[index] = true;
        let (px, py) = (index % w, index / w);
        for (nx, ny) in neighbors4(px, py, w, h) {
            let n = ny * w + nx;
            if frozen[n] {
                continue;
            }
            // Only frozen hole pixels carry the front; known pixels are
            // already accounted for by the seeding.
            let axis_min = |a: Option<usize>, b: Option<usize>| {
                [a, b]
                    .into_iter()
                    .flatten()
                    .filter(|&j| frozen[j] && holes[j])
                    .map(|j| t[j])
                    .fold(f64::INFINITY, f64::min)
            };
            let a = axis_min(
                nx.checked_sub(1).map(|x| ny * w + x),
                (nx + 1 < w).then(|| ny * w + nx + 1),
            );
            let b = axis_min(
                ny.checked_sub(1).map(|y| y * w + nx),
                (ny + 1 < h).then(|| (ny + 1) * w + nx),
            );
            let cand = solve_eikonal(a, b);
            if cand < t[n] {
                t[n] = cand;
                heap.push(Front { t: cand, index: n });
            }
        }
    }

    let max = t.iter().copied().fold(0.0, f64::max);
    Ok(DistanceMap {
        width: w,
        height: h,
        values: t,
        max,
    })
}
