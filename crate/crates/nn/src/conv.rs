//! 3x3 convolution layers (plain, stride-2, stride-2 transposed) lowered to
//! GEMM through an explicit im2col gather.

use rayon::prelude::*;

use crate::tensor::{Real, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;
/// Upper bound on im2col buffer elements per chunk.
const COLS_BUDGET: usize = 1 << 21;

/// How output coordinates map onto input coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometry {
    /// Stride 1, zero padding 1.
    Same,
    /// Stride 2, zero padding 1: halves each dimension.
    Down,
    /// Transposed stride-2 convolution: doubles each dimension. Output `o`
    /// receives input `i` through tap `k` when `o = 2i + k - 1`.
    Up,
}

impl Geometry {
    pub fn out_len(self, n: usize) -> usize {
        match self {
            Geometry::Same => n,
            Geometry::Down => n.div_ceil(2),
            Geometry::Up => 2 * n,
        }
    }

    /// Input index feeding output index `o` through tap `k`, if any.
    #[inline]
    fn src(self, o: usize, k: usize, n: usize) -> Option<usize> {
        let i = match self {
            Geometry::Same => (o + k).checked_sub(1)?,
            Geometry::Down => (2 * o + k).checked_sub(1)?,
            Geometry::Up => {
                let t = (o + 1).checked_sub(k)?;
                if t % 2 != 0 {
                    return None;
                }
                t / 2
            }
        };
        (i < n).then_some(i)
    }

    /// `table[o * 3 + k]` = source index (or `usize::MAX` for padding).
    fn table(self, out: usize, n: usize) -> Vec<usize> {
        (0..out)
            .flat_map(|o| (0..KERNEL).map(move |k| self.src(o, k, n).unwrap_or(usize::MAX)))
            .collect()
    }
}

/// One 3x3 layer. Weights are stored as a `(9 * cin) x cout` row-major matrix
/// indexed by `(tap * cin + ci) * cout + co`, with `tap = ky * 3 + kx`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    pub cin: usize,
    pub cout: usize,
    pub geometry: Geometry,
    pub relu: bool,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

struct Plan {
    out_h: usize,
    out_w: usize,
    ys: Vec<usize>,
    xs: Vec<usize>,
}

impl<T: Real> Conv<T> {
    pub fn zeros(cin: usize, cout: usize, geometry: Geometry, relu: bool) -> Self {
        Self {
            cin,
            cout,
            geometry,
            relu,
            weight: vec![T::zero(); TAPS * cin * cout],
            bias: vec![T::zero(); cout],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zero_grad(&self) -> ConvGrad<T> {
        ConvGrad {
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    fn k(&self) -> usize {
        TAPS * self.cin
    }

    fn plan(&self, input: &Tensor<T>) -> Plan {
        assert_eq!(input.c, self.cin, "layer expects {} input channels", self.cin);
        let out_h = self.geometry.out_len(input.h);
        let out_w = self.geometry.out_len(input.w);
        Plan {
            out_h,
            out_w,
            ys: self.geometry.table(out_h, input.h),
            xs: self.geometry.table(out_w, input.w),
        }
    }

    fn chunk_pixels(&self) -> usize {
        (COLS_BUDGET / self.k()).max(1)
    }

    /// Gather the receptive fields of output pixels `p0..p0 + rows` into `cols`.
    fn im2col(&self, input: &Tensor<T>, plan: &Plan, p0: usize, rows: usize, cols: &mut [T]) {
        let (k, cin) = (self.k(), self.cin);
        for r in 0..rows {
            let p = p0 + r;
            let (oy, ox) = (p / plan.out_w, p % plan.out_w);
            let row = &mut cols[r * k..(r + 1) * k];
            for ky in 0..KERNEL {
                let sy = plan.ys[oy * KERNEL + ky];
                for kx in 0..KERNEL {
                    let sx = plan.xs[ox * KERNEL + kx];
                    let dst = &mut row[(ky * KERNEL + kx) * cin..(ky * KERNEL + kx + 1) * cin];
                    if sy == usize::MAX || sx == usize::MAX {
                        dst.fill(T::zero());
                    } else {
                        let s = (sy * input.w + sx) * cin;
                        dst.copy_from_slice(&input.data[s..s + cin]);
                    }
                }
            }
        }
    }

    /// Add `cols` contributions back onto the input positions they came from.
    fn col2im(&self, grad_in: &mut Tensor<T>, plan: &Plan, p0: usize, rows: usize, cols: &[T]) {
        let (k, cin) = (self.k(), self.cin);
        for r in 0..rows {
            let p = p0 + r;
            let (oy, ox) = (p / plan.out_w, p % plan.out_w);
            let row = &cols[r * k..(r + 1) * k];
            for ky in 0..KERNEL {
                let sy = plan.ys[oy * KERNEL + ky];
                if sy == usize::MAX {
                    continue;
                }
                for kx in 0..KERNEL {
                    let sx = plan.xs[ox * KERNEL + kx];
                    if sx == usize::MAX {
                        continue;
                    }
                    let src = &row[(ky * KERNEL + kx) * cin..(ky * KERNEL + kx + 1) * cin];
                    let d = (sy * grad_in.w + sx) * cin;
                    for (g, &v) in grad_in.data[d..d + cin].iter_mut().zip(src) {
                        *g = *g + v;
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        let plan = self.plan(input);
        let (k, cout) = (self.k(), self.cout);
        let mut out = Tensor::zeros(plan.out_h, plan.out_w, cout);
        let chunk = self.chunk_pixels();
        out.data.par_chunks_mut(chunk * cout).enumerate().for_each(|(ci, dst)| {
            let rows = dst.len() / cout;
            let mut cols = vec![T::zero(); rows * k];
            self.im2col(input, &plan, ci * chunk, rows, &mut cols);
            for r in 0..rows {
                dst[r * cout..(r + 1) * cout].copy_from_slice(&self.bias);
            }
            // SAFETY: cols is rows x k, weight is k x cout, dst is rows x cout, all row-major.
            unsafe {
                T::gemm(
                    rows,
                    k,
                    cout,
                    T::one(),
                    cols.as_ptr(),
                    k as isize,
                    1,
                    self.weight.as_ptr(),
                    cout as isize,
                    1,
                    T::one(),
                    dst.as_mut_ptr(),
                    cout as isize,
                    1,
                );
            }
            if self.relu {
                for v in dst.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        });
        out
    }

    /// Accumulate parameter gradients into `grad` and return the gradient with
    /// respect to `input` when asked.
    ///
    /// `output` is this layer's forward result (used for the ReLU mask) and
    /// `grad_out` the loss gradient with respect to it.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad: &mut ConvGrad<T>,
        want_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let plan = self.plan(input);
        let (k, cout) = (self.k(), self.cout);
        assert_eq!(grad_out.data.len(), plan.out_h * plan.out_w * cout);
        let dz: Vec<T> = if self.relu {
            grad_out
                .data
                .iter()
                .zip(&output.data)
                .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
                .collect()
        } else {
            grad_out.data.clone()
        };
        for row in dz.chunks_exact(cout) {
            for (b, &g) in grad.bias.iter_mut().zip(row) {
                *b = *b + g;
            }
        }

        let mut grad_in = want_input_grad.then(|| Tensor::zeros(input.h, input.w, self.cin));
        let pixels = plan.out_h * plan.out_w;
        let chunk = self.chunk_pixels();
        let mut cols = vec![T::zero(); chunk.min(pixels) * k];
        let mut p0 = 0;
        while p0 < pixels {
            let rows = chunk.min(pixels - p0);
            let dz_chunk = &dz[p0 * cout..(p0 + rows) * cout];
            self.im2col(input, &plan, p0, rows, &mut cols);
            // SAFETY: dW (k x cout) += cols^T (k x rows) * dz (rows x cout).
            unsafe {
                T::gemm(
                    k,
                    rows,
                    cout,
                    T::one(),
                    cols.as_ptr(),
                    1,
                    k as isize,
                    dz_chunk.as_ptr(),
                    cout as isize,
                    1,
                    T::one(),
                    grad.weight.as_mut_ptr(),
                    cout as isize,
                    1,
                );
            }
            if let Some(gi) = grad_in.as_mut() {
                // SAFETY: dcols (rows x k) = dz (rows x cout) * W^T (cout x k).
                unsafe {
                    T::gemm(
                        rows,
                        cout,
                        k,
                        T::one(),
                        dz_chunk.as_ptr(),
                        cout as isize,
                        1,
                        self.weight.as_ptr(),
                        1,
                        cout as isize,
                        T::zero(),
                        cols.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
                self.col2im(gi, &plan, p0, rows, &cols[..rows * k]);
            }
            p0 += rows;
        }
        grad_in
    }
}
