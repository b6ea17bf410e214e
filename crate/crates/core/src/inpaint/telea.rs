use super::guided::{window, Canvas};
use super::{compute_distance_map, DistanceMap, HoleMask, Pixel};
use crate::error::{Error, Result};
use crate::frame::DepthFrame;

/// Direction factors below this are clamped so no neighbour is ignored outright.
const MIN_DIRECTION: f64 = 1e-6;

/// Unit normal of the marching front at `p`, from central differences of `T`.
fn front_normal(dist: &DistanceMap, p: Pixel) -> Option<(f64, f64)> {
    let (w, h) = (dist.width(), dist.height());
    let diff = |a: Option<f64>, b: Option<f64>, here: f64| match (a, b) {
        (Some(a), Some(b)) => (b - a) / 2.0,
        (None, Some(b)) => b - here,
        (Some(a), None) => here - a,
        (None, None) => 0.0,
    };
    let here = dist.get(p.x, p.y);
    let gx = diff(
        p.x.checked_sub(1).map(|x| dist.get(x, p.y)),
        (p.x + 1 < w).then(|| dist.get(p.x + 1, p.y)),
        here,
    );
    let gy = diff(
        p.y.checked_sub(1).map(|y| dist.get(p.x, y)),
        (p.y + 1 < h).then(|| dist.get(p.x, p.y + 1)),
        here,
    );
    let n = (gx * gx + gy * gy).sqrt();
    (n > 0.0).then(|| (gx / n, gy / n))
}

/// Classic fast-marching inpainting with direction, distance and level-set weights.
///
/// Holes are filled in increasing distance from the boundary (ties by row,
/// then column) from known pixels inside a disc of the given radius.
pub fn inpaint_classic(depth: &DepthFrame, radius: usize) -> Result<DepthFrame> {
    if radius < 1 {
        return Err(Error::invalid("inpainting radius must be at least 1"));
    }
    let mask = HoleMask::from_depth(depth);
    let dist = compute_distance_map(&mask)?;
    let (w, h) = depth.dims();
    let mut order: Vec<usize> = (0..w * h).filter(|&i| mask.holes()[i]).collect();
    if order.is_empty() {
        return Ok(depth.clone());
    }
    order.sort_by(|&a, &b| dist.values()[a].total_cmp(&dist.values()[b]).then(a.cmp(&b)));

    let r2 = (radius * radius) as f64;
    let mut canvas = Canvas::new(depth);
    for i in order {
        let p = Pixel::new(i % w, i / w);
        let normal = front_normal(&dist, p);
        let tp = dist.get(p.x, p.y);
        let classic_weight = |q: Pixel| {
            let d2 = p.dist2(q);
            let direction = match normal {
                Some((nx, ny)) => {
                    let dot = (p.x as f64 - q.x as f64) * nx + (p.y as f64 - q.y as f64) * ny;
                    (dot.abs() / d2.sqrt()).max(MIN_DIRECTION)
                }
                None => 1.0,
            };
            let distance = 1.0 / d2;
            let level = 1.0 / (1.0 + (tp - dist.get(q.x, q.y)).abs());
            direction * distance * level
        };
        let disc = window(p, radius, w, h).filter(move |&q| p.dist2(q) <= r2);
        canvas.values[i] = canvas.estimate(p, disc, classic_weight, |q| 1.0 / p.dist2(q));
        canvas.known[i] = true;
    }
    Ok(canvas.into_frame(depth))
}
