//! Inference timing across resolutions.

use std::time::Instant;

use depthmend_core::DepthFrame;
use depthmend_nn::{build_model, infer_variant, DenoiserModel, Mode};

use crate::commands::Ctx;
use crate::error::{CliError, CliResult};
use crate::scene::moving_scene;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

impl BenchRow {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of log(time) against log(pixels).
    pub exponent: f64,
    /// Largest time ratio between a size and the one with both sides halved.
    pub doubling: Option<f64>,
}

pub fn parse_sizes(s: &str) -> CliResult<Vec<(usize, usize)>> {
    s.split(',')
        .map(|item| {
            let item = item.trim();
            let parsed = item
                .split_once('x')
                .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)));
            match parsed {
                Some((w, h)) if w > 0 && h > 0 => Ok((w, h)),
                _ => Err(CliError::Config(format!("bench.sizes: bad size `{item}`, expected WxH"))),
            }
        })
        .collect()
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn fit_exponent(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn run_bench(
    model: &DenoiserModel<f32>,
    mode: Mode,
    sizes: &[(usize, usize)],
    frames: usize,
    warmup: usize,
    max_depth_mm: f64,
) -> CliResult<BenchReport> {
    if sizes.len() < 2 || frames < 2 {
        return Err(CliError::Config("bench needs at least two sizes and two frames".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &(w, h) in sizes {
        let scene = moving_scene(w, h, mode.in_channels());
        let inputs: Vec<&DepthFrame> = scene.clean.iter().collect();
        for _ in 0..warmup {
            infer_variant(model, mode, &inputs, max_depth_mm)?;
        }
        let times = (0..frames)
            .map(|_| {
                let start = Instant::now();
                infer_variant(model, mode, &inputs, max_depth_mm)?;
                Ok(start.elapsed().as_secs_f64())
            })
            .collect::<CliResult<Vec<f64>>>()?;
        let mean = times.iter().sum::<f64>() / frames as f64;
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (frames - 1) as f64;
        log::info!("{w}x{h}: {:.2} ms +- {:.2}", mean * 1e3, var.sqrt() * 1e3);
        rows.push(BenchRow {
            width: w,
            height: h,
            frames,
            mean_s: mean,
            std_s: var.sqrt(),
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.pixels() as f64, r.mean_s)).collect();
    let exponent = fit_exponent(&points);
    let doubling = rows
        .iter()
        .filter_map(|big| {
            rows.iter()
                .find(|s| 2 * s.width == big.width && 2 * s.height == big.height)
                .map(|small| big.mean_s / small.mean_s)
        })
        .reduce(f64::max);
    Ok(BenchReport {
        rows,
        exponent,
        doubling,
    })
}

pub fn command(ctx: &Ctx) -> CliResult<()> {
    let v = &ctx.cfg.values;
    let mode = ctx.cfg.mode;
    let model = match v.path("model.weights") {
        Some(p) => {
            let m = DenoiserModel::load(&p)?;
            if m.config().in_channels != mode.in_channels() {
                return Err(CliError::Config(format!("{} does not match model.mode = {}", p.display(), mode.name())));
            }
            m
        }
        None => {
            log::info!("no model.weights given; timing a freshly initialised network");
            build_model(mode.network(), ctx.cfg.seed)?
        }
    };
    let sizes = parse_sizes(v.text("bench.sizes"))?;
    let report = run_bench(&model, mode, &sizes, v.usize("bench.frames"), v.usize("bench.warmup"), ctx.cfg.max_depth_mm)?;

    let dir = ctx.dir("")?;
    let path = dir.join("bench.csv");
    let mut f = std::fs::File::create(&path).map_err(|e| crate::error::io_err(&path, e))?;
    let mut header = ctx.header();
    header.push(format!("exponent={:.4}", report.exponent));
    if let Some(d) = report.doubling {
        header.push(format!("doubling_ratio={d:.4}"));
    }
    let werr = |e: csv::Error| crate::error::io_err(&path, e);
    {
        use std::io::Write;
        for line in &header {
            writeln!(f, "# {line}").map_err(|e| crate::error::io_err(&path, e))?;
        }
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["width", "height", "pixels", "frames", "mean_ms", "std_ms"]).map_err(werr)?;
    for r in &report.rows {
        w.write_record([
            r.width.to_string(),
            r.height.to_string(),
            r.pixels().to_string(),
            r.frames.to_string(),
            format!("{:.4}", r.mean_s * 1e3),
            format!("{:.4}", r.std_s * 1e3),
        ])
        .map_err(werr)?;
    }
    w.flush().map_err(|e| crate::error::io_err(&path, e))?;
    println!("scaling exponent (time vs pixels): {:.3}", report.exponent);
    if let Some(d) = report.doubling {
        println!("worst time ratio when doubling both sides: {d:.2}");
    }
    Ok(())
}
