//! `key = value` configuration with dotted section names.
//!
//! ```text
//! # comment
//! data.manifest = seq/manifest.txt
//! train.epochs  = 20
//! ```
//!
//! Every key is declared in [`SCHEMA`]; anything else is rejected. Values set
//! on the command line as `--section.key value` win over the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use depthmend_core::classic::{BilateralConfig, FmmBfConfig, TvConfig};
use depthmend_core::inpaint::InpaintConfig;
use depthmend_core::noise::NoiseConfig;
use depthmend_core::HoleFillConfig;
use depthmend_nn::{Mode, TargetConfig, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Text,
    File,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Int => "integer",
            Kind::Float => "number",
            Kind::Bool => "true/false",
            Kind::Text => "text",
            Kind::File => "path",
        })
    }
}

pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    /// `None` means "unset unless given".
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>, help: &'static str) -> Key {
    Key {
        name,
        kind,
        default,
        help,
    }
}

use Kind::*;

pub const SCHEMA: &[Key] = &[
    key("data.manifest", File, None, "input sequence manifest; several may be comma separated for train"),
    key("data.fps", Float, Some("30"), "frame rate of the input sequences"),
    key("data.max_depth_mm", Float, Some("8000"), "depth that maps to 1.0 after normalization"),
    key("rig.path", File, None, "camera rig file"),
    key("model.mode", Text, Some("sred"), "sred, n2n or n2stack"),
    key("model.weights", File, None, "weight file to read (restore, bench)"),
    key("train.batch_size", Int, Some("16"), "mini-batch size"),
    key("train.epochs", Int, Some("200"), "number of epochs"),
    key("train.learning_rate", Float, Some("0.0001"), "Adam step size"),
    key("train.validation_split", Float, Some("0.1"), "fraction of windows held out for checkpoint selection"),
    key("train.test_split", Float, Some("0.04"), "fraction of windows never used"),
    key("train.max_steps", Int, None, "stop after this many optimizer steps"),
    key("inpaint.radius", Int, Some("5"), "neighbourhood half-width"),
    key("inpaint.lambda", Float, Some("0.5"), "priority mix of distance and guide dissimilarity"),
    key("inpaint.d0", Float, Some("1"), "distance-weight scale"),
    key("inpaint.sigma_g", Float, None, "guide spread; default is the guide's standard deviation"),
    key("registration.blur_radius", Int, Some("2"), "box filter half-width for uncovered pixels"),
    key("registration.blur_passes", Int, Some("2"), "box filter passes"),
    key("noise.sigma_base", Float, Some("0.5"), "disparity noise standard deviation"),
    key("noise.q_step", Float, Some("0.125"), "disparity quantization step"),
    key("noise.sigma_s", Float, Some("0.5"), "sub-pixel jitter in pixels"),
    key("noise.theta_max_deg", Float, Some("80"), "grazing angle beyond which pixels drop out"),
    key("noise.k_disparity", Float, Some("35130"), "disparity constant, mm * units"),
    key("noise.seed", Int, None, "noise seed; defaults to --seed"),
    key("tv.weight", Float, Some("0.4"), "TV regularization weight"),
    key("tv.max_iters", Int, Some("200"), "Chambolle iterations"),
    key("tv.tol", Float, Some("0.0002"), "relative dual-variable change to stop at"),
    key("bilateral.sigma_s", Float, Some("3"), "spatial sigma in pixels"),
    key("bilateral.sigma_r", Float, Some("0.05"), "range sigma in normalized depth"),
    key("bilateral.radius", Int, Some("7"), "window half-width"),
    key("fmm_bf.radius", Int, Some("5"), "inpainting radius of the FMM+BF baseline"),
    key("evaluate.noisy", File, None, "manifest of the noisy input sequence"),
    key("evaluate.clean", File, None, "manifest of the clean reference, if any"),
    key("evaluate.sred", File, None, "manifest of restored frames from the sred model"),
    key("evaluate.n2n", File, None, "manifest of restored frames from the n2n model"),
    key("evaluate.n2stack", File, None, "manifest of restored frames from the n2stack model"),
    key("evaluate.baselines", Bool, Some("true"), "also run fmm_bf and tv on the noisy frames"),
    key("evaluate.dataset", Text, Some("dataset"), "dataset label written to the report"),
    key("bench.frames", Int, Some("100"), "timed frames per resolution"),
    key("bench.warmup", Int, Some("3"), "untimed frames per resolution"),
    key("bench.sizes", Text, Some("128x128,256x256,512x512,512x424"), "comma separated WxH list"),
    key("scene.width", Int, Some("64"), "synthetic scene width"),
    key("scene.height", Int, Some("64"), "synthetic scene height"),
    key("scene.frames", Int, Some("60"), "synthetic scene length"),
];

pub fn lookup(name: &str) -> Option<&'static Key> {
    SCHEMA.iter().find(|k| k.name == name)
}

/// Raw values keyed by name, with the file or flag each came from.
#[derive(Clone, Debug, Default)]
pub struct Values {
    map: BTreeMap<String, (String, String)>,
}

impl Values {
    /// Parse config file text. `origin` is used in messages and to resolve
    /// relative paths.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let base = origin.parent().unwrap_or_else(|| Path::new(""));
        let mut v = Values::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("{}:{}", origin.display(), n + 1);
            let (k, val) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{at}: expected `key = value`")))?;
            let (k, val) = (k.trim(), val.trim());
            if v.map.contains_key(k) {
                return Err(CliError::Config(format!("{at}: `{k}` set twice")));
            }
            v.set(k, val, &at, Some(base))?;
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Set one value after checking the key and the value's type. Relative
    /// paths are joined onto `base` when given.
    pub fn set(&mut self, name: &str, value: &str, origin: &str, base: Option<&Path>) -> Result<(), CliError> {
        let k = lookup(name).ok_or_else(|| CliError::Config(format!("{origin}: unknown key `{name}`")))?;
        let bad = |what: &str| CliError::Config(format!("{origin}: `{name}` expects {what}, got `{value}`"));
        let stored = match k.kind {
            Int => {
                value.parse::<u64>().map_err(|_| bad("a non-negative integer"))?;
                value.to_owned()
            }
            Float => {
                let f: f64 = value.parse().map_err(|_| bad("a number"))?;
                if !f.is_finite() {
                    return Err(bad("a finite number"));
                }
                value.to_owned()
            }
            Bool => {
                value.parse::<bool>().map_err(|_| bad("true or false"))?;
                value.to_owned()
            }
            Text => value.to_owned(),
            File => {
                if value.is_empty() {
                    return Err(bad("a path"));
                }
                match base {
                    Some(b) => value
                        .split(',')
                        .map(|p| {
                            let p = std::path::Path::new(p.trim());
                            if p.is_absolute() {
                                p.to_owned()
                            } else {
                                b.join(p)
                            }
                            .to_string_lossy()
                            .into_owned()
                        })
                        .collect::<Vec<_>>()
                        .join(","),
                    None => value.to_owned(),
                }
            }
        };
        self.map.insert(name.to_owned(), (stored, origin.to_owned()));
        Ok(())
    }

    /// `other` wins on conflicts.
    pub fn merge(&mut self, other: Values) {
        self.map.extend(other.map);
    }

    fn raw(&self, name: &str) -> Option<&str> {
        debug_assert!(lookup(name).is_some(), "undeclared key {name}");
        self.map
            .get(name)
            .map(|(v, _)| v.as_str())
            .or_else(|| lookup(name).and_then(|k| k.default))
    }

    fn num<T: std::str::FromStr>(&self, name: &str) -> Option<T> {
        // Types were checked on entry, so a failed parse here is a bug.
        self.raw(name).map(|v| v.parse().ok().expect("value checked against schema"))
    }

    pub fn is_set(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn usize(&self, name: &str) -> usize {
        self.num(name).expect("key has a default")
    }

    pub fn opt_usize(&self, name: &str) -> Option<usize> {
        self.num(name)
    }

    pub fn f64(&self, name: &str) -> f64 {
        self.num(name).expect("key has a default")
    }

    pub fn opt_f64(&self, name: &str) -> Option<f64> {
        self.num(name)
    }

    pub fn bool(&self, name: &str) -> bool {
        self.num(name).expect("key has a default")
    }

    pub fn text(&self, name: &str) -> &str {
        self.raw(name).expect("key has a default")
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.raw(name).map(PathBuf::from)
    }

    pub fn paths(&self, name: &str) -> Vec<PathBuf> {
        self.raw(name)
            .map(|v| v.split(',').map(|p| PathBuf::from(p.trim())).collect())
            .unwrap_or_default()
    }

    pub fn require_path(&self, name: &str) -> Result<PathBuf, CliError> {
        self.path(name)
            .ok_or_else(|| CliError::Config(format!("`{name}` is required (config file or --{name})")))
    }

    /// Render every key with its effective value, for `# ` headers.
    pub fn describe(&self) -> Vec<String> {
        self.map.iter().map(|(k, (v, _))| format!("{k}={v}")).collect()
    }
}

/// Split `--section.key value` / `--section.key=value` pairs out of `args`.
/// Everything else is returned untouched for clap.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Values), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut values = Values::default();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--").filter(|b| b.contains('.')) else {
            rest.push(a);
            continue;
        };
        let (name, value) = match body.split_once('=') {
            Some((n, v)) => (n.to_owned(), v.to_owned()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("--{body} needs a value")))?;
                (body.to_owned(), v)
            }
        };
        values.set(&name, &value, &format!("--{name}"), None)?;
    }
    Ok((rest, values))
}

/// Every module configuration, parsed and validated.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub values: Values,
    pub seed: u64,
    pub fps: f64,
    pub max_depth_mm: f64,
    pub mode: Mode,
    pub train: TrainConfig,
    pub target: TargetConfig,
    pub noise: NoiseConfig,
    pub tv: TvConfig,
    pub bilateral: BilateralConfig,
    pub fmm_bf: FmmBfConfig,
}

impl PipelineConfig {
    pub fn new(values: Values, seed: u64) -> Result<Self, CliError> {
        let v = &values;
        let max_depth_mm = v.f64("data.max_depth_mm");
        let fps = v.f64("data.fps");
        if !(max_depth_mm > 0.0) || !(fps > 0.0) {
            return Err(CliError::Config("data.max_depth_mm and data.fps must be positive".into()));
        }
        let mode = Mode::parse(v.text("model.mode")).ok_or_else(|| {
            CliError::Config(format!("model.mode must be sred, n2n or n2stack, got `{}`", v.text("model.mode")))
        })?;
        let train = TrainConfig {
            batch_size: v.usize("train.batch_size"),
            epochs: v.usize("train.epochs"),
            learning_rate: v.f64("train.learning_rate"),
            seed,
            validation_split: v.f64("train.validation_split"),
            test_split: v.f64("train.test_split"),
            max_depth_mm,
            max_steps: v.opt_usize("train.max_steps"),
        };
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let inpaint = InpaintConfig {
            d0: v.f64("inpaint.d0"),
            sigma_g: v.opt_f64("inpaint.sigma_g"),
            lambda: v.f64("inpaint.lambda"),
            radius: v.usize("inpaint.radius"),
        };
        inpaint.validate().map_err(config_err)?;
        let target = TargetConfig {
            inpaint,
            hole_fill: HoleFillConfig {
                blur_radius: v.usize("registration.blur_radius"),
                blur_passes: v.usize("registration.blur_passes"),
            },
        };
        let noise = NoiseConfig {
            sigma_base: v.f64("noise.sigma_base"),
            q_step: v.f64("noise.q_step"),
            sigma_s: v.f64("noise.sigma_s"),
            theta_max_deg: v.f64("noise.theta_max_deg"),
            k_disparity: v.f64("noise.k_disparity"),
            seed: v.opt_usize("noise.seed").map_or(seed, |s| s as u64),
        };
        noise.validate().map_err(config_err)?;
        let tv = TvConfig {
            weight: v.f64("tv.weight"),
            max_iters: v.usize("tv.max_iters"),
            tol: v.f64("tv.tol"),
        };
        tv.validate().map_err(config_err)?;
        let bilateral = BilateralConfig {
            sigma_s: v.f64("bilateral.sigma_s"),
            sigma_r: v.f64("bilateral.sigma_r"),
            radius: v.usize("bilateral.radius"),
        };
        bilateral.validate().map_err(config_err)?;
        let fmm_bf = FmmBfConfig {
            radius: v.usize("fmm_bf.radius"),
            bilateral,
            max_depth_mm,
        };
        Ok(Self {
            values,
            seed,
            fps,
            max_depth_mm,
            mode,
            train,
            target,
            noise,
            tv,
            bilateral,
            fmm_bf,
        })
    }

    /// Header lines for every output file: the seed first, then explicitly set keys.
    pub fn header(&self, command: &str) -> Vec<String> {
        let mut h = vec![format!("seed={}", self.seed), format!("command={command}")];
        h.extend(self.values.describe());
        h
    }
}

fn config_err(e: depthmend_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
