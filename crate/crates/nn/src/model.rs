//! The residual U-Net denoiser.
//!
//! ```text
//! first:  conv(cin -> F0), conv(F0 -> F0)                      = x0
//! down i: conv/2(F[i-1] -> F[i]), conv(F[i] -> F[i])          = d_i, i = 1..5
//! up 5:   conv(F5), conv(F5), tconv*2(F5)
//! up i:   conv([u, d_i] -> F[i]), conv(F[i]), tconv*2(F[i]), i = 4..1
//! last:   conv([u, x0] -> F0), conv(F0), conv(F0 -> 1, linear)  = r
//! output: d_t - r, with d_t the last input channel
//! ```

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conv::{Conv, ConvGrad, Geometry, KERNEL};
use crate::error::{Error, Result};
use crate::tensor::{round_up, Real, Tensor};

/// Spatial dimensions must be divisible by this (five stride-2 stages).
pub const ALIGN: usize = 32;
pub const DEFAULT_FILTERS: [usize; 6] = [32, 32, 48, 48, 64, 128];
const MAGIC: &[u8; 6] = b"SREDW1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub filters: [usize; 6],
    pub in_channels: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            filters: DEFAULT_FILTERS,
            in_channels: 3,
        }
    }
}

impl NetworkConfig {
    pub fn with_channels(in_channels: usize) -> Self {
        Self {
            in_channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.filters.iter().any(|&f| f == 0) {
            return Err(Error::Config("filter counts and input channels must be positive".into()));
        }
        Ok(())
    }

    pub fn kernel_size(&self) -> usize {
        KERNEL
    }

    /// `(cin, cout, geometry, relu)` for every layer in construction order.
    pub fn layer_specs(&self) -> Vec<(usize, usize, Geometry, bool)> {
        let f = self.filters;
        let mut s = vec![
            (self.in_channels, f[0], Geometry::Same, true),
            (f[0], f[0], Geometry::Same, true),
        ];
        for i in 1..=5 {
            s.push((f[i - 1], f[i], Geometry::Down, true));
            s.push((f[i], f[i], Geometry::Same, true));
        }
        s.push((f[5], f[5], Geometry::Same, true));
        s.push((f[5], f[5], Geometry::Same, true));
        s.push((f[5], f[5], Geometry::Up, true));
        for i in (1..=4).rev() {
            s.push((f[i + 1] + f[i], f[i], Geometry::Same, true));
            s.push((f[i], f[i], Geometry::Same, true));
            s.push((f[i], f[i], Geometry::Up, true));
        }
        s.push((f[1] + f[0], f[0], Geometry::Same, true));
        s.push((f[0], f[0], Geometry::Same, true));
        s.push((f[0], 1, Geometry::Same, false));
        s
    }
}

/// Layer index of the first convolution of up block `i` (`i = 1..=4`).
fn up_base(i: usize) -> usize {
    15 + 3 * (4 - i)
}
const UP5: usize = 12;
const LAST: usize = 27;

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel<T = f32> {
    config: NetworkConfig,
    layers: Vec<Conv<T>>,
}

/// Per-layer `(input, output)` activations kept for the backward pass.
pub struct Trace<T> {
    acts: Vec<(Tensor<T>, Tensor<T>)>,
}

pub type Gradients<T> = Vec<ConvGrad<T>>;

/// He-normal weights, zero biases, drawn in construction order.
pub fn build_model<T: Real>(cfg: NetworkConfig, seed: u64) -> Result<DenoiserModel<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = cfg
        .layer_specs()
        .into_iter()
        .map(|(cin, cout, g, relu)| {
            let mut c = Conv::zeros(cin, cout, g, relu);
            let std = (2.0 / (KERNEL * KERNEL * cin) as f64).sqrt();
            for w in &mut c.weight {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = T::of(z * std);
            }
            c
        })
        .collect::<Vec<_>>();
    // Start as the identity on the last input channel; the residual is learned.
    let mut layers = layers;
    if let Some(last) = layers.last_mut() {
        last.weight.iter_mut().for_each(|w| *w = T::zero());
    }
    Ok(DenoiserModel { config: cfg, layers })
}

impl<T: Real> DenoiserModel<T> {
    /// All parameters zero: the network output is exactly the last input channel.
    pub fn zeros(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = cfg
            .layer_specs()
            .into_iter()
            .map(|(cin, cout, g, relu)| Conv::zeros(cin, cout, g, relu))
            .collect();
        Ok(Self { config: cfg, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Conv<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Conv<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv::param_count).sum()
    }

    /// Number of 3x3 filters (output channels summed over layers).
    pub fn filter_count(&self) -> usize {
        self.layers.iter().map(|l| l.cout).sum()
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        self.layers.iter().map(Conv::zero_grad).collect()
    }

    pub fn cast<U: Real>(&self) -> DenoiserModel<U> {
        DenoiserModel {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| Conv {
                    cin: l.cin,
                    cout: l.cout,
                    geometry: l.geometry,
                    relu: l.relu,
                    weight: l.weight.iter().map(|w| U::of(w.as_f64())).collect(),
                    bias: l.bias.iter().map(|b| U::of(b.as_f64())).collect(),
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels, x.c
            )));
        }
        if x.h % ALIGN != 0 || x.w % ALIGN != 0 || x.h == 0 || x.w == 0 {
            return Err(Error::Shape(format!(
                "input {}x{} is not a non-empty multiple of {ALIGN}",
                x.w, x.h
            )));
        }
        Ok(())
    }

    /// Residual prediction on an aligned input. Returns `(prediction, trace)`;
    /// the trace is empty unless `keep` is set.
    pub fn forward_aligned(&self, x: &Tensor<T>, keep: bool) -> Result<(Tensor<T>, Trace<T>)> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut run = |k: usize, input: Tensor<T>| -> Tensor<T> {
            let out = self.layers[k].forward(&input);
            if keep {
                acts.push((input, out.clone()));
            }
            out
        };

        let h = run(0, x.clone());
        let x0 = run(1, h);
        let mut skips = vec![x0.clone()];
        for i in 1..=5 {
            let h = run(2 * i, skips[i - 1].clone());
            let d = run(2 * i + 1, h);
            skips.push(d);
        }
        let mut u = run(UP5, skips[5].clone());
        u = run(UP5 + 1, u);
        u = run(UP5 + 2, u);
        for i in (1..=4).rev() {
            let b = up_base(i);
            u = run(b, Tensor::concat(&u, &skips[i]));
            u = run(b + 1, u);
            u = run(b + 2, u);
        }
        u = run(LAST, Tensor::concat(&u, &skips[0]));
        u = run(LAST + 1, u);
        let r = run(LAST + 2, u);

        let last = x.c - 1;
        let pred = Tensor::from_vec(
            x.h,
            x.w,
            1,
            (0..x.pixels()).map(|p| x.data[p * x.c + last] - r.data[p]).collect(),
        );
        Ok((pred, Trace { acts }))
    }

    /// Accumulate into `grads` the parameter gradients of a loss whose
    /// gradient with respect to the prediction is `grad_pred`.
    pub fn backward(&self, trace: &Trace<T>, grad_pred: &Tensor<T>, grads: &mut Gradients<T>) {
        assert_eq!(trace.acts.len(), self.layers.len(), "forward was run without keep");
        let back = |k: usize, g: &Tensor<T>, grads: &mut Gradients<T>, want: bool| {
            let (input, output) = &trace.acts[k];
            self.layers[k].backward(input, output, g, &mut grads[k], want)
        };
        let f = self.config.filters;

        // pred = d_t - r.
        let mut g = Tensor::from_vec(grad_pred.h, grad_pred.w, 1, grad_pred.data.iter().map(|&v| -v).collect());
        g = back(LAST + 2, &g, grads, true).unwrap();
        g = back(LAST + 1, &g, grads, true).unwrap();
        g = back(LAST, &g, grads, true).unwrap();
        let (mut gu, gx0) = g.split(f[1]);
        let mut gskip: Vec<Option<Tensor<T>>> = vec![None; 6];
        gskip[0] = Some(gx0);

        let add = |slot: &mut Option<Tensor<T>>, t: Tensor<T>| match slot {
            Some(s) => s.add_assign(&t),
            None => *slot = Some(t),
        };
        for i in 1..=4 {
            let b = up_base(i);
            gu = back(b + 2, &gu, grads, true).unwrap();
            gu = back(b + 1, &gu, grads, true).unwrap();
            let gcat = back(b, &gu, grads, true).unwrap();
            let (prev, skip) = gcat.split(f[i + 1]);
            add(&mut gskip[i], skip);
            gu = prev;
        }
        gu = back(UP5 + 2, &gu, grads, true).unwrap();
        gu = back(UP5 + 1, &gu, grads, true).unwrap();
        gu = back(UP5, &gu, grads, true).unwrap();
        add(&mut gskip[5], gu);

        for i in (1..=5).rev() {
            let gd = gskip[i].take().expect("every level receives a gradient");
            let gh = back(2 * i + 1, &gd, grads, true).unwrap();
            let gprev = back(2 * i, &gh, grads, true).unwrap();
            add(&mut gskip[i - 1], gprev);
        }
        let gx0 = gskip[0].take().unwrap();
        let gh = back(1, &gx0, grads, true).unwrap();
        back(0, &gh, grads, false);
    }

    /// Restore one frame: reflect-pad the channel stack to a multiple of 32,
    /// run the network, crop back. `planes` are `h x w` row-major.
    pub fn predict(&self, h: usize, w: usize, planes: &[&[T]]) -> Result<Vec<T>> {
        if planes.len() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                planes.len()
            )));
        }
        if planes.iter().any(|p| p.len() != h * w) || h == 0 || w == 0 {
            return Err(Error::Shape(format!("input planes are not {w}x{h}")));
        }
        let x = Tensor::from_planes(h, w, planes).reflect_pad(round_up(h, ALIGN), round_up(w, ALIGN));
        let (pred, _) = self.forward_aligned(&x, false)?;
        Ok(pred.crop(h, w).data)
    }
}

fn get<R: Read>(input: &mut R, what: &str) -> Result<usize> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Weights(format!("truncated {what}: {e}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

impl DenoiserModel<f32> {
    /// `SREDW1`, then `u32` channel count, `u32` filter-table length and the
    /// table, `u32` tensor count, and per tensor a `u32` rank, `u32` dims and
    /// little-endian `f32` data. Weights are `[3, 3, cin, cout]`, biases `[cout]`.
    pub fn write_weights<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let put = |out: &mut W, v: usize| out.write_all(&(v as u32).to_le_bytes());
        out.write_all(MAGIC)?;
        put(&mut out, self.config.in_channels)?;
        put(&mut out, self.config.filters.len())?;
        for &f in &self.config.filters {
            put(&mut out, f)?;
        }
        put(&mut out, 2 * self.layers.len())?;
        for l in &self.layers {
            put(&mut out, 4)?;
            for d in [KERNEL, KERNEL, l.cin, l.cout] {
                put(&mut out, d)?;
            }
            for w in &l.weight {
                out.write_all(&w.to_le_bytes())?;
            }
            put(&mut out, 1)?;
            put(&mut out, l.cout)?;
            for b in &l.bias {
                out.write_all(&b.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_weights<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic).map_err(|e| Error::Weights(format!("truncated header: {e}")))?;
        if &magic != MAGIC {
            return Err(Error::Weights("bad magic, not a weight file".into()));
        }
        let in_channels = get(&mut input, "channel count")?;
        let nf = get(&mut input, "filter table")?;
        if nf != 6 {
            return Err(Error::Weights(format!("filter table has {nf} entries, expected 6")));
        }
        let mut filters = [0usize; 6];
        for f in &mut filters {
            *f = get(&mut input, "filter table")?;
        }
        let cfg = NetworkConfig { filters, in_channels };
        cfg.validate().map_err(|e| Error::Weights(e.to_string()))?;
        let mut model = Self::zeros(cfg)?;
        let nt = get(&mut input, "tensor count")?;
        if nt != 2 * model.layers.len() {
            return Err(Error::Weights(format!("{nt} tensors, expected {}", 2 * model.layers.len())));
        }
        for (i, layer) in model.layers.iter_mut().enumerate() {
            for (want, dst) in [
                (vec![KERNEL, KERNEL, layer.cin, layer.cout], &mut layer.weight),
                (vec![layer.cout], &mut layer.bias),
            ] {
                let rank = get(&mut input, "tensor rank")?;
                let dims = (0..rank).map(|_| get(&mut input, "tensor shape")).collect::<Result<Vec<_>>>()?;
                if dims != want {
                    return Err(Error::Weights(format!("layer {i}: shape {dims:?}, expected {want:?}")));
                }
                let mut buf = vec![0u8; dst.len() * 4];
                input
                    .read_exact(&mut buf)
                    .map_err(|e| Error::Weights(format!("layer {i}: truncated data: {e}")))?;
                for (v, b) in dst.iter_mut().zip(buf.chunks_exact(4)) {
                    *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                    if !v.is_finite() {
                        return Err(Error::Weights(format!("layer {i}: non-finite parameter")));
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_weights(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_weights(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Weights(m) => Error::Weights(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory() {
        let m = DenoiserModel::<f32>::zeros(NetworkConfig::default()).unwrap();
        assert_eq!(m.layers().len(), 30);
        assert_eq!(m.filter_count(), 1729);
        assert_eq!(m.param_count(), 1_260_865);
        let n2n = DenoiserModel::<f32>::zeros(NetworkConfig::with_channels(1)).unwrap();
        assert_eq!(n2n.config().in_channels, 1);
        assert_eq!(n2n.param_count(), 1_260_865 - 2 * 9 * 32);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = build_model::<f32>(NetworkConfig::default(), 5).unwrap();
        assert_eq!(a, build_model::<f32>(NetworkConfig::default(), 5).unwrap());
        assert_ne!(a, build_model::<f32>(NetworkConfig::default(), 6).unwrap());
    }

    #[test]
    fn zero_model_is_identity_on_last_channel() {
        let m = DenoiserModel::<f32>::zeros(NetworkConfig::default()).unwrap();
        let (h, w) = (20, 37);
        let planes: Vec<Vec<f32>> = (0..3).map(|c| (0..h * w).map(|i| (i * (c + 1)) as f32 * 1e-3).collect()).collect();
        let refs: Vec<&[f32]> = planes.iter().map(Vec::as_slice).collect();
        assert_eq!(m.predict(h, w, &refs).unwrap(), planes[2]);
    }

    #[test]
    fn weight_file_round_trip() {
        let m = build_model::<f32>(NetworkConfig::with_channels(1), 3).unwrap();
        let mut buf = Vec::new();
        m.write_weights(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"SREDW1");
        assert_eq!(buf.len(), 6 + 4 * 8 + 4 + 60 * 4 + 30 * 4 * 4 + 30 * 4 + m.param_count() * 4);
        assert_eq!(DenoiserModel::read_weights(&buf[..]).unwrap(), m);
        assert!(DenoiserModel::read_weights(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(DenoiserModel::read_weights(&bad[..]).is_err());
    }

    #[test]
    fn rejects_wrong_inputs() {
        let m = DenoiserModel::<f32>::zeros(NetworkConfig::default()).unwrap();
        let p = vec![0.0f32; 16];
        assert!(m.predict(4, 4, &[&p, &p]).is_err());
        assert!(m.predict(4, 5, &[&p, &p, &p]).is_err());
        assert!(m.forward_aligned(&Tensor::zeros(16, 32, 3), false).is_err());
    }
}
