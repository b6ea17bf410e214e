//! Independent reference implementations of both inpainting variants.
//!
//! The references re-derive everything from the raw inputs: their own
//! distance map (linear-scan fast marching), their own gradients and weights,
//! and a priority list that is recomputed and fully sorted before every fill.
//! Arithmetic is written in the same order as the library so the results are
//! compared bit for bit.

use depthmend_core::inpaint::InpaintConfig;
use depthmend_core::{ColorFrame, DepthFrame};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Grid {
    w: usize,
    h: usize,
}

impl Grid {
    fn nb4(&self, i: usize) -> Vec<usize> {
        let (x, y) = (i % self.w, i / self.w);
        let mut v = Vec::new();
        if x > 0 {
            v.push(i - 1);
        }
        if x + 1 < self.w {
            v.push(i + 1);
        }
        if y > 0 {
            v.push(i - self.w);
        }
        if y + 1 < self.h {
            v.push(i + self.w);
        }
        v
    }
}

fn ref_distance(g: &Grid, holes: &[bool]) -> Vec<f64> {
    let n = g.w * g.h;
    let mut t = vec![f64::INFINITY; n];
    let mut frozen = vec![false; n];
    for i in 0..n {
        if !holes[i] {
            t[i] = 0.0;
            frozen[i] = true;
        } else if g.nb4(i).iter().any(|&j| !holes[j]) {
            t[i] = 1.0;
        }
    }
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !frozen[i] && t[i].is_finite() && best.is_none_or(|b| t[i] < t[b]) {
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        frozen[p] = true;
        for nb in g.nb4(p) {
            if frozen[nb] {
                continue;
            }
            let (x, y) = (nb % g.w, nb / g.w);
            let pick = |cands: &[Option<usize>]| {
                let mut m = f64::INFINITY;
                for j in cands.iter().flatten() {
                    if frozen[*j] && holes[*j] {
                        m = m.min(t[*j]);
                    }
                }
                m
            };
            let a = pick(&[(x > 0).then(|| nb - 1), (x + 1 < g.w).then(|| nb + 1)]);
            let b = pick(&[(y > 0).then(|| nb - g.w), (y + 1 < g.h).then(|| nb + g.w)]);
            let cand = if a.is_finite() && b.is_finite() {
                if (a - b).abs() < 1.0 {
                    (a + b + (2.0 - (a - b) * (a - b)).sqrt()) / 2.0
                } else {
                    a.min(b) + 1.0
                }
            } else if a.is_finite() {
                a + 1.0
            } else if b.is_finite() {
                b + 1.0
            } else {
                f64::INFINITY
            };
            if cand < t[nb] {
                t[nb] = cand;
            }
        }
    }
    t
}

fn ref_gradient(g: &Grid, v: &[f64], known: &[bool], x: usize, y: usize) -> (f64, f64) {
    let i = y * g.w + x;
    let one = |prev: Option<usize>, next: Option<usize>| -> f64 {
        let p = prev.filter(|&j| known[j]);
        let n = next.filter(|&j| known[j]);
        if let (Some(p), Some(n)) = (p, n) {
            (v[n] - v[p]) / 2.0
        } else if let Some(n) = n {
            v[n] - v[i]
        } else if let Some(p) = p {
            v[i] - v[p]
        } else {
            0.0
        }
    };
    (
        one((x > 0).then(|| i - 1), (x + 1 < g.w).then(|| i + 1)),
        one((y > 0).then(|| i - g.w), (y + 1 < g.h).then(|| i + g.w)),
    )
}

fn round_mm(v: f64) -> u16 {
    if v.is_nan() {
        1
    } else {
        v.round().clamp(1.0, 65535.0) as u16
    }
}

fn in_window(p: usize, q: usize, w: usize, r: usize) -> bool {
    let (px, py, qx, qy) = (p % w, p / w, q % w, q / w);
    px.abs_diff(qx) <= r && py.abs_diff(qy) <= r
}

/// Weighted average of `I(q) + grad I(q) . (p - q)` over known `q` in the
/// row-major window, with a fallback weight if the primary ones vanish.
fn ref_fill(
    g: &Grid,
    v: &[f64],
    known: &[bool],
    p: usize,
    cands: &[usize],
    weight: impl Fn(usize) -> f64,
    fallback: impl Fn(usize) -> f64,
) -> f64 {
    let (px, py) = ((p % g.w) as f64, (p / g.w) as f64);
    let mut ests = Vec::new();
    for &q in cands {
        if q == p || !known[q] {
            continue;
        }
        let (gx, gy) = ref_gradient(g, v, known, q % g.w, q / g.w);
        ests.push((q, v[q] + gx * (px - (q % g.w) as f64) + gy * (py - (q / g.w) as f64)));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(q, e) in &ests {
        let wq = weight(q);
        num += wq * e;
        den += wq;
    }
    if den > 0.0 && den.is_finite() {
        return num / den;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(q, e) in &ests {
        let wq = fallback(q);
        num += wq * e;
        den += wq;
    }
    num / den
}

pub fn ref_guided(depth: &DepthFrame, colors: &[[f64; 3]], sigma: f64, cfg: &InpaintConfig) -> DepthFrame {
    let (w, h) = depth.dims();
    let g = Grid { w, h };
    let holes: Vec<bool> = depth.data().iter().map(|&d| d == 0).collect();
    let t = ref_distance(&g, &holes);
    let t_max = t.iter().copied().fold(0.0, f64::max);
    let mut v: Vec<f64> = depth.data().iter().map(|&d| f64::from(d)).collect();
    let mut known: Vec<bool> = holes.iter().map(|&h| !h).collect();
    let r = cfg.radius;
    let window: Vec<Vec<usize>> = (0..w * h).map(|p| (0..w * h).filter(|&q| in_window(p, q, w, r)).collect()).collect();
    let d2 = |p: usize, q: usize| {
        let dx = (p % w) as f64 - (q % w) as f64;
        let dy = (p / w) as f64 - (q / w) as f64;
        dx * dx + dy * dy
    };
    let wg = |p: usize, q: usize| {
        let (a, b) = (colors[p], colors[q]);
        let dd = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
        (-dd / (2.0 * sigma * sigma)).exp()
    };

    loop {
        let band: Vec<usize> = (0..w * h).filter(|&i| !known[i] && g.nb4(i).iter().any(|&j| known[j])).collect();
        if band.is_empty() {
            break;
        }
        let mut list: Vec<(f64, usize, usize, usize)> = band
            .iter()
            .map(|&p| {
                let (mut s, mut c) = (0.0, 0usize);
                for &q in &window[p] {
                    if q != p && known[q] {
                        s += wg(p, q);
                        c += 1;
                    }
                }
                let sg = if c == 0 { 0.0 } else { s / c as f64 };
                let dt = if t_max > 0.0 { t[p] / t_max } else { 0.0 };
                ((1.0 - cfg.lambda) * dt + cfg.lambda * (1.0 - sg), p / w, p % w, p)
            })
            .collect();
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let p = list[0].3;
        let value = ref_fill(
            &g,
            &v,
            &known,
            p,
            &window[p],
            |q| {
                let wd = cfg.d0 * cfg.d0 / d2(p, q);
                wd * wd * wg(p, q) * (1.0 / (1.0 + 2.0 * t[q]))
            },
            |q| {
                let wd = cfg.d0 * cfg.d0 / d2(p, q);
                wd * wd / (1.0 + 2.0 * t[q])
            },
        );
        v[p] = value;
        known[p] = true;
    }
    let data = (0..w * h).map(|i| if holes[i] { round_mm(v[i]) } else { depth.data()[i] }).collect();
    DepthFrame::new(w, h, data).unwrap()
}

pub fn ref_classic(depth: &DepthFrame, radius: usize) -> DepthFrame {
    let (w, h) = depth.dims();
    let g = Grid { w, h };
    let holes: Vec<bool> = depth.data().iter().map(|&d| d == 0).collect();
    let t = ref_distance(&g, &holes);
    let mut v: Vec<f64> = depth.data().iter().map(|&d| f64::from(d)).collect();
    let mut known: Vec<bool> = holes.iter().map(|&h| !h).collect();
    let mut order: Vec<usize> = (0..w * h).filter(|&i| holes[i]).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    let r2 = (radius * radius) as f64;
    for p in order {
        let (px, py) = (p % w, p / w);
        let tx = {
            let l = (px > 0).then(|| t[p - 1]);
            let rr = (px + 1 < w).then(|| t[p + 1]);
            match (l, rr) {
                (Some(a), Some(b)) => (b - a) / 2.0,
                (None, Some(b)) => b - t[p],
                (Some(a), None) => t[p] - a,
                (None, None) => 0.0,
            }
        };
        let ty = {
            let u = (py > 0).then(|| t[p - w]);
            let d = (py + 1 < h).then(|| t[p + w]);
            match (u, d) {
                (Some(a), Some(b)) => (b - a) / 2.0,
                (None, Some(b)) => b - t[p],
                (Some(a), None) => t[p] - a,
                (None, None) => 0.0,
            }
        };
        let nlen = (tx * tx + ty * ty).sqrt();
        let d2 = |q: usize| {
            let dx = px as f64 - (q % w) as f64;
            let dy = py as f64 - (q / w) as f64;
            dx * dx + dy * dy
        };
        let disc: Vec<usize> = (0..w * h).filter(|&q| in_window(p, q, w, radius) && d2(q) <= r2).collect();
        let value = ref_fill(
            &g,
            &v,
            &known,
            p,
            &disc,
            |q| {
                let dd = d2(q);
                let dir = if nlen > 0.0 {
                    let dot = (px as f64 - (q % w) as f64) * (tx / nlen) + (py as f64 - (q / w) as f64) * (ty / nlen);
                    (dot.abs() / dd.sqrt()).max(1e-6)
                } else {
                    1.0
                };
                dir * (1.0 / dd) * (1.0 / (1.0 + (t[p] - t[q]).abs()))
            },
            |q| 1.0 / d2(q),
        );
        v[p] = value;
        known[p] = true;
    }
    let data = (0..w * h).map(|i| if holes[i] { round_mm(v[i]) } else { depth.data()[i] }).collect();
    DepthFrame::new(w, h, data).unwrap()
}

pub fn random_fixture(rng: &mut ChaCha8Rng, max_holes: usize) -> (DepthFrame, ColorFrame) {
    let (w, h): (usize, usize) = (16, 16);
    let base = rng.random_range(500.0..4000.0);
    let (sx, sy) = (rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
    let mut depth: Vec<u16> = (0..w * h)
        .map(|i| {
            let noise: f64 = rng.random_range(-5.0..5.0);
            (base + sx * (i % w) as f64 + sy * (i / w) as f64 + noise).round().max(1.0) as u16
        })
        .collect();
    let holes = rng.random_range(1..=max_holes);
    // Half the fixtures get a contiguous blob, the rest scattered pixels.
    if rng.random_bool(0.5) {
        let (cx, cy) = (rng.random_range(0..w), rng.random_range(0..h));
        let mut placed = 0;
        'outer: for rad in 0..w {
            for y in cy.saturating_sub(rad)..=(cy + rad).min(h - 1) {
                for x in cx.saturating_sub(rad)..=(cx + rad).min(w - 1) {
                    if placed == holes {
                        break 'outer;
                    }
                    if depth[y * w + x] != 0 {
                        depth[y * w + x] = 0;
                        placed += 1;
                    }
                }
            }
        }
    } else {
        for _ in 0..holes {
            let i = rng.random_range(0..w * h);
            depth[i] = 0;
        }
    }
    let edge = rng.random_range(2..14);
    let color = ColorFrame::from_fn(w, h, |x, y| {
        let c = if x < edge { [200, 40, 40] } else { [30, 90, 220] };
        [c[0], c[1].saturating_add((y * 5) as u8), c[2]]
    });
    (DepthFrame::new(w, h, depth).unwrap(), color)
}

pub fn guide_values(color: &ColorFrame) -> Vec<[f64; 3]> {
    color
        .data()
        .chunks_exact(3)
        .map(|p| [f64::from(p[0]) / 255.0, f64::from(p[1]) / 255.0, f64::from(p[2]) / 255.0])
        .collect()
}
