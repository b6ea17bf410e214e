//! Dataset assembly, target generation, the training loop and inference.

use std::io::Write;
use std::time::Instant;

use depthmend_core::inpaint::{inpaint_guided, Guide, InpaintConfig};
use depthmend_core::sequence::{split_indices, window_training_samples, Splits};
use depthmend_core::{build_registered_color, normalize, CameraRig, ColorFrame, DepthFrame, FrameSequence, HoleFillConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::model::{DenoiserModel, Gradients, NetworkConfig, ALIGN};
use crate::tensor::{round_up, Tensor};

/// Which frames feed the network and what it is trained against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Inputs `[t-4, t-2, t]` in training, `[t-2, t-1, t]` at inference;
    /// target is the color-guided inpainting of `t-1`.
    Sred,
    /// Single frame `t`, trained against the raw frame `t+1`.
    N2n,
    /// Adjacent frames `[t-2, t-1, t]`, trained against the raw frame `t+1`.
    N2stack,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Sred, Mode::N2n, Mode::N2stack];

    pub fn in_channels(self) -> usize {
        match self {
            Mode::N2n => 1,
            Mode::Sred | Mode::N2stack => 3,
        }
    }

    pub fn network(self) -> NetworkConfig {
        NetworkConfig::with_channels(self.in_channels())
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Sred => "sred",
            Mode::N2n => "n2n",
            Mode::N2stack => "n2stack",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Frame offsets (relative to `t`) read at inference time.
    pub fn inference_offsets(self) -> &'static [usize] {
        match self {
            Mode::N2n => &[0],
            Mode::Sred | Mode::N2stack => &[2, 1, 0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub validation_split: f64,
    pub test_split: f64,
    pub max_depth_mm: f64,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 200,
            learning_rate: 1e-4,
            seed: 0,
            validation_split: 0.1,
            test_split: 0.04,
            max_depth_mm: depthmend_core::DEFAULT_MAX_DEPTH_MM,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::Config("batch size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        for (name, v) in [("validation", self.validation_split), ("test", self.test_split)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} split must be in (0, 1), got {v}")));
            }
        }
        if !(self.max_depth_mm > 0.0) {
            return Err(Error::Config("max_depth_mm must be positive".into()));
        }
        Ok(())
    }
}

/// Settings for building inpainted training targets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TargetConfig {
    pub inpaint: InpaintConfig,
    pub hole_fill: HoleFillConfig,
}

/// `d*_{t-1}`: the frame inpainted under the guidance of its registered color.
pub fn make_target(depth: &DepthFrame, color: &ColorFrame, rig: &CameraRig, cfg: &TargetConfig) -> Result<DepthFrame> {
    let rc = build_registered_color(depth, color, rig, &cfg.hole_fill)?;
    let guide = Guide::new(&rc, cfg.inpaint.sigma_g);
    Ok(inpaint_guided(depth, &guide, &cfg.inpaint)?)
}

/// One aligned training pair. Padding pixels are excluded through `mask`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Tensor<f32>,
    pub target: Vec<f32>,
    pub mask: Vec<bool>,
    /// Sequence and frame position of the target, for bookkeeping.
    pub source: (usize, usize),
}

impl Example {
    pub fn new(inputs: &[&DepthFrame], target: &DepthFrame, max_depth_mm: f64, source: (usize, usize)) -> Result<Self> {
        let (w, h) = target.dims();
        if inputs.iter().any(|f| f.dims() != (w, h)) {
            return Err(Error::Shape("input and target frames differ in size".into()));
        }
        let planes = inputs
            .iter()
            .map(|f| normalized_plane(f, max_depth_mm))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f32]> = planes.iter().map(Vec::as_slice).collect();
        let (ph, pw) = (round_up(h, ALIGN), round_up(w, ALIGN));
        let input = Tensor::from_planes(h, w, &refs).reflect_pad(ph, pw);
        let t = normalize(target, max_depth_mm)?;
        let mut tgt = vec![0.0f32; ph * pw];
        let mut mask = vec![false; ph * pw];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                tgt[y * pw + x] = t.data()[i] as f32;
                mask[y * pw + x] = t.valid()[i];
            }
        }
        Ok(Self {
            input,
            target: tgt,
            mask,
            source,
        })
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn normalized_plane(f: &DepthFrame, max_depth_mm: f64) -> Result<Vec<f32>> {
    Ok(normalize(f, max_depth_mm)?.data().iter().map(|&v| v as f32).collect())
}

fn require_color(seq: &FrameSequence, si: usize, i: usize) -> Result<&ColorFrame> {
    seq.color(i)
        .ok_or_else(|| Error::Config(format!("sequence {si}: frame {i} has no color image for target generation")))
}

/// All training pairs of the given sequences for `mode`. Targets are
/// generated in parallel.
pub fn build_examples(
    sequences: &[FrameSequence],
    mode: Mode,
    rig: Option<&CameraRig>,
    target_cfg: &TargetConfig,
    max_depth_mm: f64,
) -> Result<Vec<Example>> {
    let mut jobs: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    for (si, seq) in sequences.iter().enumerate() {
        match mode {
            Mode::Sred => {
                for s in window_training_samples(seq)? {
                    require_color(seq, si, s.target_index())?;
                    jobs.push((si, s.input_indices().to_vec(), s.target_index()));
                }
            }
            Mode::N2n => jobs.extend((0..seq.len().saturating_sub(1)).map(|t| (si, vec![t], t + 1))),
            Mode::N2stack => jobs.extend((2..seq.len().saturating_sub(1)).map(|t| (si, vec![t - 2, t - 1, t], t + 1))),
        }
    }
    if jobs.is_empty() {
        return Err(Error::EmptyDataset(format!("no {} training windows in the given sequences", mode.name())));
    }
    let rig = match mode {
        Mode::Sred => Some(rig.ok_or_else(|| Error::Config("sred targets need a camera rig".into()))?),
        _ => None,
    };
    jobs.par_iter()
        .map(|(si, inputs, target)| {
            let seq = &sequences[*si];
            let frames: Vec<&DepthFrame> = inputs.iter().map(|&i| seq.depth(i)).collect();
            let tgt = match rig {
                Some(rig) => make_target(seq.depth(*target), require_color(seq, *si, *target)?, rig, target_cfg)?,
                None => seq.depth(*target).clone(),
            };
            Example::new(&frames, &tgt, max_depth_mm, (*si, *target))
        })
        .collect()
}

/// Sum of absolute errors over masked pixels and their count.
pub fn masked_l1(pred: &[f32], target: &[f32], mask: &[bool]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..pred.len() {
        if mask[i] {
            sum += f64::from((pred[i] - target[i]).abs());
            n += 1;
        }
    }
    (sum, n)
}

/// Mean masked L1 of the model over a set of examples.
pub fn evaluate_l1(model: &DenoiserModel<f32>, examples: &[&Example]) -> Result<f64> {
    let parts = examples
        .par_iter()
        .map(|ex| {
            let (pred, _) = model.forward_aligned(&ex.input, false)?;
            Ok(masked_l1(&pred.data, &ex.target, &ex.mask))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, n) = parts.iter().fold((0.0, 0), |(s, c), &(a, b)| (s + a, c + b));
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_l1: f64,
    /// `None` when there is no validation data.
    pub val_l1: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: DenoiserModel<f32>,
    pub history: Vec<EpochLog>,
    /// Mini-batch loss of every optimizer step.
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub splits: Splits,
}

/// Loss, gradient and valid count of one mini-batch.
fn batch_gradients(model: &DenoiserModel<f32>, batch: &[&Example]) -> Result<(f64, Gradients<f32>)> {
    let total: usize = batch.iter().map(|e| e.valid_count()).sum();
    let scale = if total == 0 { 0.0 } else { 1.0 / total as f32 };
    let parts = batch
        .par_iter()
        .map(|ex| {
            let (pred, trace) = model.forward_aligned(&ex.input, true)?;
            let (sum, _) = masked_l1(&pred.data, &ex.target, &ex.mask);
            let mut g = pred.clone();
            for i in 0..g.data.len() {
                let d = pred.data[i] - ex.target[i];
                g.data[i] = if !ex.mask[i] || d == 0.0 { 0.0 } else { d.signum() * scale };
            }
            let mut grads = model.zero_grads();
            model.backward(&trace, &g, &mut grads);
            Ok((sum, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let (mut sum, mut grads) = iter.next().expect("non-empty batch");
    for (s, g) in iter {
        sum += s;
        for (acc, part) in grads.iter_mut().zip(g) {
            acc.weight.iter_mut().zip(part.weight).for_each(|(a, b)| *a += b);
            acc.bias.iter_mut().zip(part.bias).for_each(|(a, b)| *a += b);
        }
    }
    Ok((if total == 0 { 0.0 } else { sum / total as f64 }, grads))
}

/// Mini-batch Adam on the masked L1 loss. Deterministic for a given seed.
pub fn train(
    model: DenoiserModel<f32>,
    examples: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset("example list is empty".into()));
    }
    if let Some(ex) = examples.iter().find(|e| e.input.c != model.config().in_channels) {
        return Err(Error::Shape(format!(
            "examples have {} channels, model expects {}",
            ex.input.c,
            model.config().in_channels
        )));
    }
    let splits = split_indices(examples.len(), cfg.validation_split, cfg.test_split, cfg.seed)?;
    let val: Vec<&Example> = splits.validation.iter().map(|&i| &examples[i]).collect();
    let mut order = splits.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut model = model;
    let mut opt = Adam::new(&model, cfg.learning_rate);
    let mut best = (f64::INFINITY, model.clone(), 0);
    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let start = Instant::now();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        let mut stop = false;
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = batch_idx.iter().map(|&i| &examples[i]).collect();
            let (loss, grads) = batch_gradients(&model, &batch)?;
            if !loss.is_finite() || grads.iter().any(|g| g.weight.iter().chain(&g.bias).any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step_losses.len() + 1,
                    loss,
                });
            }
            opt.update(&mut model, &grads);
            step_losses.push(loss);
            let n: usize = batch.iter().map(|e| e.valid_count()).sum();
            sum += loss * n as f64;
            count += n;
            if cfg.max_steps.is_some_and(|m| step_losses.len() >= m) {
                stop = true;
                break;
            }
        }
        let train_l1 = if count == 0 { 0.0 } else { sum / count as f64 };
        let val_l1 = if val.is_empty() { None } else { Some(evaluate_l1(&model, &val)?) };
        let log = EpochLog {
            epoch,
            train_l1,
            val_l1,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: train_l1 {train_l1:.6} val_l1 {val_l1:?}");
        on_epoch(&log);
        history.push(log);
        let score = val_l1.unwrap_or(train_l1);
        if score < best.0 {
            best = (score, model.clone(), epoch);
        }
        if stop {
            break 'epochs;
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        history,
        step_losses,
        best_epoch: best.2,
        splits,
    })
}

/// CSV with columns `epoch, train_l1, val_l1, wall_seconds`.
pub fn write_training_log<W: Write>(mut out: W, history: &[EpochLog], header: &[String]) -> Result<()> {
    let err = |e: std::io::Error| Error::Io {
        path: "<training log>".into(),
        source: e,
    };
    for line in header {
        writeln!(out, "# {line}").map_err(err)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io {
        path: "<training log>".into(),
        source: e.into(),
    };
    w.write_record(["epoch", "train_l1", "val_l1", "wall_seconds"]).map_err(csv_err)?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            h.train_l1.to_string(),
            h.val_l1.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.3}", h.wall_seconds),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(err)
}

/// Restore one frame from the frames the mode reads (oldest first).
pub fn infer_variant(model: &DenoiserModel<f32>, mode: Mode, frames: &[&DepthFrame], max_depth_mm: f64) -> Result<DepthFrame> {
    if frames.len() != mode.in_channels() || model.config().in_channels != mode.in_channels() {
        return Err(Error::Shape(format!(
            "{} mode needs {} frames and a {}-channel model, got {} frames and {} channels",
            mode.name(),
            mode.in_channels(),
            mode.in_channels(),
            frames.len(),
            model.config().in_channels
        )));
    }
    let (w, h) = frames[0].dims();
    if frames.iter().any(|f| f.dims() != (w, h)) {
        return Err(Error::Shape("frames differ in size".into()));
    }
    let planes = frames
        .iter()
        .map(|f| normalized_plane(f, max_depth_mm))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f32]> = planes.iter().map(Vec::as_slice).collect();
    let pred = model.predict(h, w, &refs)?;
    let data = pred
        .iter()
        .map(|&v| {
            let mm = (f64::from(v) * max_depth_mm).round();
            if mm.is_nan() {
                0
            } else {
                mm.clamp(0.0, f64::from(u16::MAX)) as u16
            }
        })
        .collect();
    Ok(DepthFrame::new(w, h, data)?)
}

/// Restore `d_t` from `[d_{t-2}, d_{t-1}, d_t]`.
pub fn infer(
    model: &DenoiserModel<f32>,
    d_t2: &DepthFrame,
    d_t1: &DepthFrame,
    d_t: &DepthFrame,
    max_depth_mm: f64,
) -> Result<DepthFrame> {
    infer_variant(model, Mode::Sred, &[d_t2, d_t1, d_t], max_depth_mm)
}

/// Restored frame `t` for every `t >= 2`, with per-frame wall time in seconds.
pub fn restore_sequence(
    model: &DenoiserModel<f32>,
    mode: Mode,
    frames: &[DepthFrame],
    max_depth_mm: f64,
) -> Result<Vec<(usize, DepthFrame, f64)>> {
    (2..frames.len())
        .map(|t| {
            let inputs: Vec<&DepthFrame> = mode.inference_offsets().iter().map(|&o| &frames[t - o]).collect();
            let start = Instant::now();
            let out = infer_variant(model, mode, &inputs, max_depth_mm)?;
            Ok((t, out, start.elapsed().as_secs_f64()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;

    #[test]
    fn mode_contracts() {
        assert_eq!(Mode::N2n.in_channels(), 1);
        assert_eq!(Mode::N2stack.in_channels(), 3);
        assert_eq!(Mode::parse("n2stack"), Some(Mode::N2stack));
        assert_eq!(Mode::parse("x"), None);
    }

    #[test]
    fn l1_of_identical_is_zero() {
        let v = [0.1f32, 0.5, 0.7];
        assert_eq!(masked_l1(&v, &v, &[true; 3]), (0.0, 3));
        assert_eq!(masked_l1(&v, &[0.0; 3], &[false, true, false]), (0.5f32 as f64, 1));
    }

    #[test]
    fn zero_model_inference_returns_last_frame() {
        let model = DenoiserModel::<f32>::zeros(NetworkConfig::default()).unwrap();
        let f = |s: u16| DepthFrame::from_fn(40, 30, move |x, y| if (x + y) % 11 == 0 { 0 } else { 500 + s + (x * y) as u16 });
        let (a, b, c) = (f(0), f(7), f(13));
        let out = infer(&model, &a, &b, &c, 8000.0).unwrap();
        for (o, i) in out.data().iter().zip(c.data()) {
            assert!(o.abs_diff(*i) <= 1);
        }
    }

    #[test]
    fn variants_train_without_color() {
        let frames: Vec<DepthFrame> = (0..6).map(|t| DepthFrame::filled(32, 32, 1000 + t * 10)).collect();
        let seq = FrameSequence::from_depth(frames, 30.0).unwrap();
        for mode in [Mode::N2n, Mode::N2stack] {
            let ex = build_examples(std::slice::from_ref(&seq), mode, None, &TargetConfig::default(), 8000.0).unwrap();
            assert_eq!(ex[0].input.c, mode.in_channels());
            let cfg = TrainConfig { epochs: 1, batch_size: 2, validation_split: 0.2, test_split: 0.01, ..Default::default() };
            let out = train(build_model(mode.network(), 1).unwrap(), &ex, &cfg, |_| {}).unwrap();
            assert_eq!(out.history.len(), 1);
        }
        assert!(build_examples(&[seq], Mode::Sred, Some(&CameraRig::identity(32, 32, 30.0)), &TargetConfig::default(), 8000.0).is_err());
    }

    #[test]
    fn target_generation_examples() {
        let rig = CameraRig::identity(32, 32, 40.0);
        let color = ColorFrame::from_fn(32, 32, |x, _| [(x * 8) as u8, 100, 50]);
        let full = DepthFrame::from_fn(32, 32, |x, y| (900 + x + 2 * y) as u16);
        assert_eq!(make_target(&full, &color, &rig, &TargetConfig::default()).unwrap(), full);
        let holes = DepthFrame::from_fn(32, 32, |x, y| if (x * y) % 7 == 3 { 0 } else { 1500 });
        let t = make_target(&holes, &color, &rig, &TargetConfig::default()).unwrap();
        assert!(t.data().iter().all(|&d| d == 1500));
    }
}
