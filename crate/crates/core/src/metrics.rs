//! Reference metrics (MSE, PSNR, SSIM), the no-reference NMID score and
//! temporal coherence. Everything works on `[0, 1]`-scaled frames and only
//! over pixels valid in both operands.

use std::io::Write;

use crate::error::{Error, Result};
use crate::frame::NormalizedFrame;

/// SSIM window side.
pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_dims(a: &NormalizedFrame, b: &NormalizedFrame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    Ok(())
}

pub fn mse(a: &NormalizedFrame, b: &NormalizedFrame) -> Result<f64> {
    check_dims(a, b)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.data().len() {
        if a.valid()[i] && b.valid()[i] {
            let d = a.data()[i] - b.data()[i];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoJointlyValidPixels);
    }
    Ok(sum / n as f64)
}

/// `10 log10(1 / mse)`; `+inf` for identical frames.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr(a: &NormalizedFrame, b: &NormalizedFrame) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

/// SSIM of the `size x size` window at `(x0, y0)`, or `None` if any pixel in
/// it is invalid in either frame.
fn window_ssim(a: &NormalizedFrame, b: &NormalizedFrame, x0: usize, y0: usize, size: usize) -> Option<f64> {
    let w = a.width();
    let (mut sa, mut sb) = (0.0, 0.0);
    for y in y0..y0 + size {
        for i in y * w + x0..y * w + x0 + size {
            if !(a.valid()[i] && b.valid()[i]) {
                return None;
            }
            sa += a.data()[i];
            sb += b.data()[i];
        }
    }
    let n = (size * size) as f64;
    let (ma, mb) = (sa / n, sb / n);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for y in y0..y0 + size {
        for i in y * w + x0..y * w + x0 + size {
            let (da, db) = (a.data()[i] - ma, b.data()[i] - mb);
            vaa += da * da;
            vbb += db * db;
            vab += da * db;
        }
    }
    let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
    Some(((2.0 * ma * mb + C1) * (2.0 * vab + C2)) / ((ma * ma + mb * mb + C1) * (vaa + vbb + C2)))
}

/// Mean SSIM over all fully valid sliding 8x8 windows.
pub fn ssim(a: &NormalizedFrame, b: &NormalizedFrame) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            block: SSIM_WINDOW,
        });
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..=h - SSIM_WINDOW {
        for x in 0..=w - SSIM_WINDOW {
            if let Some(s) = window_ssim(a, b, x, y, SSIM_WINDOW) {
                sum += s;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NoJointlyValidPixels);
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NmidConfig {
    pub block: usize,
    /// Blocks at or below this variance quantile are homogeneous.
    pub lower_quantile: f64,
    /// Blocks at or above this variance quantile are structured.
    pub upper_quantile: f64,
}

impl Default for NmidConfig {
    fn default() -> Self {
        Self {
            block: 8,
            lower_quantile: 0.25,
            upper_quantile: 0.75,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nmid {
    pub value: f64,
    /// Set when the two block classes could not be told apart; `value` is then 0.
    pub degenerate: bool,
}

/// Nearest-rank quantile of sorted data.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Mean block SSIM(noisy, restored) over structured blocks minus the mean over
/// homogeneous blocks, with blocks classified by the variance of `noisy`.
pub fn nmid_with(noisy: &NormalizedFrame, restored: &NormalizedFrame, cfg: &NmidConfig) -> Result<Nmid> {
    check_dims(noisy, restored)?;
    if cfg.block == 0 || !(0.0..=1.0).contains(&cfg.lower_quantile) || !(0.0..=1.0).contains(&cfg.upper_quantile) {
        return Err(Error::invalid("nmid block must be positive and quantiles in [0, 1]"));
    }
    let (w, h) = noisy.dims();
    let b = cfg.block;
    if w < b || h < b {
        return Err(Error::TooSmall { width: w, height: h, block: b });
    }
    let mut blocks = Vec::new();
    for by in 0..h / b {
        for bx in 0..w / b {
            let (x0, y0) = (bx * b, by * b);
            let Some(s) = window_ssim(noisy, restored, x0, y0, b) else { continue };
            let vals: Vec<f64> = (y0..y0 + b)
                .flat_map(|y| (x0..x0 + b).map(move |x| (x, y)))
                .map(|(x, y)| noisy.get(x, y))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            blocks.push((var, s));
        }
    }
    let degenerate = Nmid { value: 0.0, degenerate: true };
    if blocks.is_empty() {
        return Ok(degenerate);
    }
    let mut vars: Vec<f64> = blocks.iter().map(|&(v, _)| v).collect();
    vars.sort_by(f64::total_cmp);
    let lo = nearest_rank(&vars, cfg.lower_quantile);
    let hi = nearest_rank(&vars, cfg.upper_quantile);
    if !(lo < hi) {
        return Ok(degenerate);
    }
    let class_mean = |keep: &dyn Fn(f64) -> bool| {
        let sel: Vec<f64> = blocks.iter().filter(|&&(v, _)| keep(v)).map(|&(_, s)| s).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let structured = class_mean(&|v| v >= hi);
    let homogeneous = class_mean(&|v| v <= lo);
    Ok(Nmid {
        value: structured - homogeneous,
        degenerate: false,
    })
}

pub fn nmid(noisy: &NormalizedFrame, restored: &NormalizedFrame) -> Result<Nmid> {
    nmid_with(noisy, restored, &NmidConfig::default())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Temporal {
    /// Mean absolute inter-frame difference.
    pub abs: f64,
    /// Mean signed difference `I_{t+1} - I_t`.
    pub signed: f64,
}

/// Mean absolute and signed difference between two consecutive frames.
pub fn frame_difference(prev: &NormalizedFrame, next: &NormalizedFrame) -> Result<Temporal> {
    check_dims(prev, next)?;
    let (mut abs, mut signed, mut n) = (0.0, 0.0, 0usize);
    for i in 0..prev.data().len() {
        if prev.valid()[i] && next.valid()[i] {
            let d = next.data()[i] - prev.data()[i];
            abs += d.abs();
            signed += d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoJointlyValidPixels);
    }
    Ok(Temporal {
        abs: abs / n as f64,
        signed: signed / n as f64,
    })
}

/// Per-pair differences averaged over the sequence.
pub fn temporal(frames: &[NormalizedFrame]) -> Result<Temporal> {
    if frames.len() < 2 {
        return Err(Error::SequenceTooShort { len: frames.len(), min: 2 });
    }
    let pairs = frames
        .windows(2)
        .map(|p| frame_difference(&p[0], &p[1]))
        .collect::<Result<Vec<_>>>()?;
    let n = pairs.len() as f64;
    Ok(Temporal {
        abs: pairs.iter().map(|t| t.abs).sum::<f64>() / n,
        signed: pairs.iter().map(|t| t.signed).sum::<f64>() / n,
    })
}

/// One row of a report. Missing values (no clean reference, first frame of a
/// sequence for temporal) are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameMetrics {
    pub frame_index: u64,
    pub mse: Option<f64>,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub nmid: Option<f64>,
    pub temporal_abs: Option<f64>,
    pub temporal_signed: Option<f64>,
    pub holes_in: usize,
    pub holes_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub dataset: String,
    pub frames: Vec<FrameMetrics>,
}

/// Aggregate row: column-wise mean over the frames that have a value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeanMetrics {
    pub mse: Option<f64>,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub nmid: Option<f64>,
    pub temporal_abs: Option<f64>,
    pub temporal_signed: Option<f64>,
    pub holes_in: f64,
    pub holes_out: f64,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricReport {
    /// Build a report for a restored sequence. `noisy` is the method input,
    /// `clean` the optional ground truth; all three must have equal length.
    pub fn evaluate(
        method: &str,
        dataset: &str,
        indices: &[u64],
        noisy: &[NormalizedFrame],
        restored: &[NormalizedFrame],
        clean: Option<&[NormalizedFrame]>,
    ) -> Result<Self> {
        let n = restored.len();
        if noisy.len() != n || indices.len() != n || clean.is_some_and(|c| c.len() != n) {
            return Err(Error::invalid(format!(
                "frame counts differ: {} indices, {} noisy, {} restored, {} clean",
                indices.len(),
                noisy.len(),
                n,
                clean.map_or(n, |c| c.len())
            )));
        }
        let mut frames = Vec::with_capacity(n);
        for i in 0..n {
            let hole_count = |f: &NormalizedFrame| f.valid().iter().filter(|&&v| !v).count();
            let mut row = FrameMetrics {
                frame_index: indices[i],
                holes_in: hole_count(&noisy[i]),
                holes_out: hole_count(&restored[i]),
                ..Default::default()
            };
            if let Some(clean) = clean {
                let m = mse(&restored[i], &clean[i])?;
                row.mse = Some(m);
                row.psnr_db = Some(psnr_from_mse(m));
                row.ssim = ssim(&restored[i], &clean[i]).ok();
            }
            row.nmid = nmid(&noisy[i], &restored[i]).ok().map(|r| r.value);
            if i > 0 {
                let t = frame_difference(&restored[i - 1], &restored[i])?;
                row.temporal_abs = Some(t.abs);
                row.temporal_signed = Some(t.signed);
            }
            frames.push(row);
        }
        Ok(Self {
            method: method.to_owned(),
            dataset: dataset.to_owned(),
            frames,
        })
    }

    pub fn mean(&self) -> MeanMetrics {
        let n = self.frames.len().max(1) as f64;
        MeanMetrics {
            mse: mean_of(self.frames.iter().map(|f| f.mse)),
            psnr_db: mean_of(self.frames.iter().map(|f| f.psnr_db)),
            ssim: mean_of(self.frames.iter().map(|f| f.ssim)),
            nmid: mean_of(self.frames.iter().map(|f| f.nmid)),
            temporal_abs: mean_of(self.frames.iter().map(|f| f.temporal_abs)),
            temporal_signed: mean_of(self.frames.iter().map(|f| f.temporal_signed)),
            holes_in: self.frames.iter().map(|f| f.holes_in as f64).sum::<f64>() / n,
            holes_out: self.frames.iter().map(|f| f.holes_out as f64).sum::<f64>() / n,
        }
    }
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "method",
    "dataset",
    "frame_index",
    "mse",
    "psnr_db",
    "ssim",
    "nmid",
    "temporal_abs",
    "temporal_signed",
    "holes_in",
    "holes_out",
];

fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(v) if v == f64::INFINITY => "inf".to_owned(),
        Some(v) => v.to_string(),
    }
}

/// Write reports as CSV: one row per frame, then a `mean` row per report.
/// `header` lines are emitted first as `# ` comments.
pub fn write_report_csv<W: Write>(mut out: W, reports: &[MetricReport], header: &[String]) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}").map_err(csv::Error::from)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&REPORT_COLUMNS)?;
    for r in reports {
        for f in &r.frames {
            w.write_record([
                r.method.clone(),
                r.dataset.clone(),
                f.frame_index.to_string(),
                cell(f.mse),
                cell(f.psnr_db),
                cell(f.ssim),
                cell(f.nmid),
                cell(f.temporal_abs),
                cell(f.temporal_signed),
                f.holes_in.to_string(),
                f.holes_out.to_string(),
            ])?;
        }
        let m = r.mean();
        w.write_record([
            r.method.clone(),
            r.dataset.clone(),
            "mean".to_owned(),
            cell(m.mse),
            cell(m.psnr_db),
            cell(m.ssim),
            cell(m.nmid),
            cell(m.temporal_abs),
            cell(m.temporal_signed),
            m.holes_in.to_string(),
            m.holes_out.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
