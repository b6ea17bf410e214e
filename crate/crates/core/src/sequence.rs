//! Frame sequences and the dilated training windows cut from them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::{ColorFrame, DepthFrame};

/// Ordered depth frames, each optionally paired with the color frame captured with it.
#[derive(Clone, Debug)]
pub struct FrameSequence {
    frames: Vec<(DepthFrame, Option<ColorFrame>)>,
    fps: f64,
}

impl FrameSequence {
    /// All depth frames must share one size, and likewise all color frames.
    pub fn new(frames: Vec<(DepthFrame, Option<ColorFrame>)>, fps: f64) -> Result<Self> {
        let mut depth_dims = None;
        let mut color_dims = None;
        for (d, c) in &frames {
            let expected = *depth_dims.get_or_insert(d.dims());
            if d.dims() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: d.dims(),
                });
            }
            if let Some(c) = c {
                let expected = *color_dims.get_or_insert(c.dims());
                if c.dims() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        found: c.dims(),
                    });
                }
            }
        }
        Ok(Self { frames, fps })
    }

    pub fn from_depth(frames: Vec<DepthFrame>, fps: f64) -> Result<Self> {
        Self::new(frames.into_iter().map(|d| (d, None)).collect(), fps)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn depth(&self, i: usize) -> &DepthFrame {
        &self.frames[i].0
    }

    pub fn color(&self, i: usize) -> Option<&ColorFrame> {
        self.frames[i].1.as_ref()
    }

    pub fn depth_frames(&self) -> impl Iterator<Item = &DepthFrame> {
        self.frames.iter().map(|(d, _)| d)
    }

    pub fn frames(&self) -> &[(DepthFrame, Option<ColorFrame>)] {
        &self.frames
    }
}

/// One dilated training window ending at frame `t`.
///
/// The network sees `t-4, t-2, t`; the held-out frame `t-1` becomes the
/// (inpainted) target, so the input never contains the target frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrainingSample {
    pub t: usize,
}

impl TrainingSample {
    pub const MIN_T: usize = 4;

    pub fn input_indices(self) -> [usize; 3] {
        [self.t - 4, self.t - 2, self.t]
    }

    pub fn target_index(self) -> usize {
        self.t - 1
    }
}

/// One sample per `t` in `4..len`.
pub fn window_training_samples(seq: &FrameSequence) -> Result<Vec<TrainingSample>> {
    window_count(seq.len())
}

pub(crate) fn window_count(len: usize) -> Result<Vec<TrainingSample>> {
    if len < TrainingSample::MIN_T + 1 {
        return Err(Error::SequenceTooShort {
            len,
            min: TrainingSample::MIN_T + 1,
        });
    }
    Ok((TrainingSample::MIN_T..len).map(|t| TrainingSample { t }).collect())
}

/// Disjoint train/validation/test partition of sample positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle `0..n` with a seeded generator, then carve off validation and test
/// fractions (rounded to the nearest count). At least one sample stays in train.
pub fn split_indices(n: usize, validation: f64, test: f64, seed: u64) -> Result<Splits> {
    for (name, v) in [("validation", validation), ("test", test)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} split must be in [0, 1), got {v}")));
        }
    }
    if validation + test >= 1.0 {
        return Err(Error::invalid("validation + test splits leave no training data"));
    }
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut n_val = (n as f64 * validation).round() as usize;
    let mut n_test = (n as f64 * test).round() as usize;
    while n_val + n_test >= n {
        if n_test > 0 {
            n_test -= 1;
        } else {
            n_val -= 1;
        }
    }
    let test_part = order.split_off(n - n_test);
    let val_part = order.split_off(n - n_test - n_val);
    Ok(Splits {
        train: order,
        validation: val_part,
        test: test_part,
    })
}
