//! One function per subcommand. Each reads the merged configuration, writes
//! into the output directory and overwrites earlier results.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use depthmend_core::classic::{fmm_bf, tv_denoise};
use depthmend_core::io::{
    load_sequence, read_manifest, save_color_png, save_depth_png, save_mask_png, write_manifest, ManifestEntry,
};
use depthmend_core::metrics::{frame_difference, write_report_csv, MetricReport};
use depthmend_core::noise::corrupt;
use depthmend_core::sequence::window_training_samples;
use depthmend_core::{build_registered_color, denormalize, normalize, CameraRig, DepthFrame, FrameSequence, NormalizedFrame};
use depthmend_nn::{build_examples, build_model, make_target, restore_sequence, write_training_log, DenoiserModel, Mode};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{io_err, CliError, CliResult};
use crate::scene::moving_scene;

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    pub command: &'static str,
}

impl Ctx {
    pub fn header(&self) -> Vec<String> {
        self.cfg.header(self.command)
    }

    fn header_text(&self) -> String {
        self.header().join("\n")
    }

    /// `out/<sub>`, created on demand.
    pub fn dir(&self, sub: &str) -> CliResult<PathBuf> {
        let d = if sub.is_empty() { self.out.clone() } else { self.out.join(sub) };
        fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        Ok(d)
    }

    fn rig(&self) -> CliResult<CameraRig> {
        let path = self.cfg.values.require_path("rig.path")?;
        if !path.is_file() {
            return Err(CliError::Config(format!("rig file {} does not exist", path.display())));
        }
        CameraRig::load(&path).map_err(|e| CliError::Config(format!("rig file {}: {e}", path.display())))
    }

    fn sequence(&self, key: &str) -> CliResult<(Vec<u64>, FrameSequence)> {
        let path = self.cfg.values.require_path(key)?;
        Ok(load_sequence(&path, self.cfg.fps)?)
    }

    fn create(&self, path: &Path) -> CliResult<fs::File> {
        fs::File::create(path).map_err(|e| io_err(path, e))
    }
}

fn frame_name(prefix: &str, index: u64) -> String {
    format!("{prefix}_{index:06}.png")
}

pub fn register(ctx: &Ctx) -> CliResult<()> {
    let rig = ctx.rig()?;
    let (indices, seq) = ctx.sequence("data.manifest")?;
    let dir = ctx.dir("registered")?;
    let entries = (0..seq.len())
        .into_par_iter()
        .map(|i| {
            let color = seq
                .color(i)
                .ok_or_else(|| CliError::Data(format!("frame {} has no color image", indices[i])))?;
            let rc = build_registered_color(seq.depth(i), color, &rig, &ctx.cfg.target.hole_fill)?;
            let (w, h) = rc.dims();
            let color_path = dir.join(frame_name("color", indices[i]));
            save_color_png(&rc.color, &color_path)?;
            save_mask_png(w, h, &rc.coverage, dir.join(frame_name("coverage", indices[i])))?;
            let depth_path = dir.join(frame_name("depth", indices[i]));
            save_depth_png(seq.depth(i), &depth_path)?;
            Ok(ManifestEntry {
                index: indices[i],
                depth: depth_path,
                color: Some(color_path),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_manifest(&entries, dir.join("manifest.txt"), Some(&ctx.header_text()))?;
    log::info!("registered {} frames into {}", entries.len(), dir.display());
    Ok(())
}

pub fn make_targets(ctx: &Ctx) -> CliResult<()> {
    let rig = ctx.rig()?;
    let (indices, seq) = ctx.sequence("data.manifest")?;
    let dir = ctx.dir("targets")?;
    let samples = window_training_samples(&seq)?;
    let entries = samples
        .par_iter()
        .map(|s| {
            let i = s.target_index();
            let color = seq
                .color(i)
                .ok_or_else(|| CliError::Data(format!("frame {} has no color image", indices[i])))?;
            let target = make_target(seq.depth(i), color, &rig, &ctx.cfg.target)?;
            let path = dir.join(frame_name("target", indices[i]));
            save_depth_png(&target, &path)?;
            Ok(ManifestEntry {
                index: indices[i],
                depth: path,
                color: None,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_manifest(&entries, dir.join("manifest.txt"), Some(&ctx.header_text()))?;
    log::info!("wrote {} targets into {}", entries.len(), dir.display());
    Ok(())
}

pub fn train(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let manifests = cfg.values.paths("data.manifest");
    if manifests.is_empty() {
        return Err(CliError::Config("`data.manifest` is required (config file or --data.manifest)".into()));
    }
    let rig = match cfg.mode {
        Mode::Sred => Some(ctx.rig()?),
        _ => None,
    };
    let sequences = manifests
        .iter()
        .map(|m| Ok(load_sequence(m, cfg.fps)?.1))
        .collect::<CliResult<Vec<_>>>()?;
    let examples = build_examples(&sequences, cfg.mode, rig.as_ref(), &cfg.target, cfg.max_depth_mm)?;
    log::info!("{} {} training windows from {} sequence(s)", examples.len(), cfg.mode.name(), sequences.len());
    let model = build_model(cfg.mode.network(), cfg.seed)?;
    let outcome = depthmend_nn::train(model, &examples, &cfg.train, |_| {})?;
    let dir = ctx.dir("")?;
    let weights = dir.join(format!("{}.sredw", cfg.mode.name()));
    outcome.model.save(&weights)?;
    let log_path = dir.join(format!("{}_train_log.csv", cfg.mode.name()));
    write_training_log(ctx.create(&log_path)?, &outcome.history, &ctx.header())?;
    log::info!(
        "best epoch {} of {}; weights {}",
        outcome.best_epoch,
        outcome.history.len(),
        weights.display()
    );
    Ok(())
}

fn load_model(ctx: &Ctx) -> CliResult<DenoiserModel<f32>> {
    let path = ctx.cfg.values.require_path("model.weights")?;
    let model = DenoiserModel::load(&path)?;
    let want = ctx.cfg.mode.in_channels();
    if model.config().in_channels != want {
        return Err(CliError::Config(format!(
            "{} has {} input channels but model.mode = {} needs {want}",
            path.display(),
            model.config().in_channels,
            ctx.cfg.mode.name()
        )));
    }
    Ok(model)
}

pub fn restore(ctx: &Ctx) -> CliResult<()> {
    let model = load_model(ctx)?;
    let (indices, seq) = ctx.sequence("data.manifest")?;
    let frames: Vec<DepthFrame> = seq.depth_frames().cloned().collect();
    let restored = restore_sequence(&model, ctx.cfg.mode, &frames, ctx.cfg.max_depth_mm)?;
    let dir = ctx.dir(&format!("restored_{}", ctx.cfg.mode.name()))?;
    let mut entries = Vec::with_capacity(restored.len());
    let mut times = csv_writer(ctx, &dir.join("timing.csv"))?;
    times.write_record(["frame_index", "seconds"]).map_err(|e| io_err(&dir, e))?;
    for (t, frame, secs) in &restored {
        let path = dir.join(frame_name("depth", indices[*t]));
        save_depth_png(frame, &path)?;
        entries.push(ManifestEntry {
            index: indices[*t],
            depth: path,
            color: None,
        });
        times
            .write_record([indices[*t].to_string(), format!("{secs:.6}")])
            .map_err(|e| io_err(&dir, e))?;
    }
    times.flush().map_err(|e| io_err(&dir, e))?;
    write_manifest(&entries, dir.join("manifest.txt"), Some(&ctx.header_text()))?;
    let mean = restored.iter().map(|r| r.2).sum::<f64>() / restored.len().max(1) as f64;
    log::info!("restored {} frames, {:.1} ms/frame", restored.len(), mean * 1e3);
    Ok(())
}

/// CSV writer with the `# ` header lines already written.
fn csv_writer(ctx: &Ctx, path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let mut f = ctx.create(path)?;
    for line in ctx.header() {
        writeln!(f, "# {line}").map_err(|e| io_err(path, e))?;
    }
    Ok(csv::Writer::from_writer(f))
}

/// Depth frames of a manifest keyed by frame index.
fn load_indexed(path: &Path) -> CliResult<Vec<(u64, DepthFrame)>> {
    read_manifest(path)?
        .into_iter()
        .map(|e| Ok((e.index, depthmend_core::io::load_depth_png(&e.depth)?)))
        .collect()
}

pub fn evaluate(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let noisy = load_indexed(&cfg.values.require_path("evaluate.noisy")?)?;
    let clean = match cfg.values.path("evaluate.clean") {
        Some(p) => {
            let c = load_indexed(&p)?;
            if c.iter().map(|e| e.0).ne(noisy.iter().map(|e| e.0)) {
                return Err(CliError::Data(format!(
                    "clean manifest has {} frames, noisy has {}; frame indices must match",
                    c.len(),
                    noisy.len()
                )));
            }
            Some(c)
        }
        None => None,
    };
    let md = cfg.max_depth_mm;
    let norm = |d: &DepthFrame| -> CliResult<NormalizedFrame> { Ok(normalize(d, md)?) };
    let position = |index: u64| noisy.iter().position(|e| e.0 == index);

    // Each method: (name, [(index, restored)]).
    let mut methods: Vec<(String, Vec<(u64, DepthFrame)>)> = Vec::new();
    for m in Mode::ALL {
        if let Some(p) = cfg.values.path(&format!("evaluate.{}", m.name())) {
            let frames = load_indexed(&p)?;
            if let Some(bad) = frames.iter().find(|e| position(e.0).is_none()) {
                return Err(CliError::Data(format!(
                    "{}: frame {} has no counterpart in the noisy sequence",
                    p.display(),
                    bad.0
                )));
            }
            methods.push((m.name().to_owned(), frames));
        }
    }
    if cfg.values.bool("evaluate.baselines") {
        // Same frames the networks restore: t >= 2.
        let targets: Vec<&(u64, DepthFrame)> = noisy.iter().skip(2).collect();
        let fb = targets
            .par_iter()
            .map(|(i, d)| Ok((*i, fmm_bf(d, &cfg.fmm_bf)?)))
            .collect::<CliResult<Vec<_>>>()?;
        let tv = targets
            .par_iter()
            .map(|(i, d)| Ok((*i, denormalize(&tv_denoise(&normalize(d, md)?, &cfg.tv)?, md)?)))
            .collect::<CliResult<Vec<_>>>()?;
        methods.push(("fmm_bf".into(), fb));
        methods.push(("tv".into(), tv));
    }
    if methods.is_empty() {
        return Err(CliError::Config(
            "nothing to evaluate: set evaluate.sred / evaluate.n2n / evaluate.n2stack or evaluate.baselines".into(),
        ));
    }

    let dataset = cfg.values.text("evaluate.dataset");
    let dir = ctx.dir("")?;
    let mut reports = Vec::new();
    let mut series = csv_writer(ctx, &dir.join("temporal.csv"))?;
    let werr = |e: csv::Error| io_err(&dir, e);
    series
        .write_record(["series", "frame_index", "mean_abs_diff", "mean_signed_diff"])
        .map_err(werr)?;
    let mut write_series = |name: &str, frames: &[(u64, NormalizedFrame)]| -> CliResult<()> {
        for p in frames.windows(2) {
            let d = frame_difference(&p[0].1, &p[1].1)?;
            series
                .write_record([name.to_owned(), p[1].0.to_string(), d.abs.to_string(), d.signed.to_string()])
                .map_err(werr)?;
        }
        Ok(())
    };
    let noisy_n = noisy.iter().map(|(i, d)| Ok((*i, norm(d)?))).collect::<CliResult<Vec<_>>>()?;
    write_series("noisy", &noisy_n)?;
    if let Some(c) = &clean {
        let cn = c.iter().map(|(i, d)| Ok((*i, norm(d)?))).collect::<CliResult<Vec<_>>>()?;
        write_series("clean", &cn)?;
    }
    for (name, frames) in &methods {
        let idx: Vec<u64> = frames.iter().map(|e| e.0).collect();
        let restored = frames.iter().map(|(_, d)| norm(d)).collect::<CliResult<Vec<_>>>()?;
        let pos: Vec<usize> = idx.iter().map(|&i| position(i).expect("checked above")).collect();
        let noisy_sel: Vec<NormalizedFrame> = pos.iter().map(|&p| noisy_n[p].1.clone()).collect();
        let clean_sel = match &clean {
            Some(c) => Some(pos.iter().map(|&p| norm(&c[p].1)).collect::<CliResult<Vec<_>>>()?),
            None => None,
        };
        let report = MetricReport::evaluate(name, dataset, &idx, &noisy_sel, &restored, clean_sel.as_deref())
            .map_err(|e| CliError::Data(e.to_string()))?;
        let m = report.mean();
        log::info!(
            "{name}: mse {:?} psnr {:?} ssim {:?} nmid {:?} temporal {:?}",
            m.mse,
            m.psnr_db,
            m.ssim,
            m.nmid,
            m.temporal_abs
        );
        let tagged: Vec<(u64, NormalizedFrame)> = idx.into_iter().zip(restored).collect();
        write_series(name, &tagged)?;
        reports.push(report);
    }
    series.flush().map_err(|e| io_err(&dir, e))?;
    let report_path = dir.join("report.csv");
    write_report_csv(ctx.create(&report_path)?, &reports, &ctx.header())?;
    log::info!("wrote {}", report_path.display());
    Ok(())
}

pub fn synth_noise(ctx: &Ctx) -> CliResult<()> {
    let rig = ctx.rig()?;
    let manifest = ctx.cfg.values.require_path("data.manifest")?;
    let entries = read_manifest(&manifest)?;
    let dir = ctx.dir("noisy")?;
    let out = entries
        .par_iter()
        .enumerate()
        .map(|(pos, e)| {
            let clean = depthmend_core::io::load_depth_png(&e.depth)?;
            let mut noise = ctx.cfg.noise;
            noise.seed = noise.seed.wrapping_add(pos as u64);
            let noisy = corrupt(&clean, &rig, &noise)?;
            let path = dir.join(frame_name("depth", e.index));
            save_depth_png(&noisy, &path)?;
            Ok(ManifestEntry {
                index: e.index,
                depth: path,
                color: e.color.clone(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_manifest(&out, dir.join("manifest.txt"), Some(&ctx.header_text()))?;
    log::info!("corrupted {} frames into {}", out.len(), dir.display());
    Ok(())
}

pub fn synth_scene(ctx: &Ctx) -> CliResult<()> {
    let v = &ctx.cfg.values;
    let (w, h, n) = (v.usize("scene.width"), v.usize("scene.height"), v.usize("scene.frames"));
    if w < 8 || h < 8 || n < 1 {
        return Err(CliError::Config("scene must be at least 8x8 with one frame".into()));
    }
    let scene = moving_scene(w, h, n);
    let dir = ctx.dir("scene")?;
    let rig_path = dir.join("rig.txt");
    fs::write(&rig_path, scene.rig.to_rig_string()).map_err(|e| io_err(&rig_path, e))?;
    let entries = (0..n)
        .into_par_iter()
        .map(|t| {
            let (d, c) = (dir.join(frame_name("depth", t as u64)), dir.join(frame_name("color", t as u64)));
            save_depth_png(&scene.clean[t], &d)?;
            save_color_png(&scene.color[t], &c)?;
            Ok(ManifestEntry {
                index: t as u64,
                depth: d,
                color: Some(c),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_manifest(&entries, dir.join("manifest.txt"), Some(&ctx.header_text()))?;
    log::info!("wrote {n} frames of {w}x{h} into {}", dir.display());
    Ok(())
}
