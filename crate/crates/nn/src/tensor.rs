use std::fmt::Debug;

use num_traits::Float;

/// Scalar type the engine runs on. Training and inference use `f32`; the
/// gradient check runs the identical code in `f64`.
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    /// `C = alpha * A * B + beta * C` with arbitrary row/column strides.
    ///
    /// # Safety
    /// The pointers and strides must describe valid `m x k`, `k x n` and
    /// `m x n` matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn of(v: f64) -> f32 {
        v as f32
    }

    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn of(v: f64) -> f64 {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Height x width x channels, channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![T::zero(); h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), h * w * c, "tensor size mismatch");
        Self { h, w, c, data }
    }

    /// Interleave single-channel planes into one tensor.
    pub fn from_planes(h: usize, w: usize, planes: &[&[T]]) -> Self {
        let c = planes.len();
        let mut data = Vec::with_capacity(h * w * c);
        for i in 0..h * w {
            for p in planes {
                data.push(p[i]);
            }
        }
        Self { h, w, c, data }
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn channel(&self, ch: usize) -> Vec<T> {
        self.data.iter().skip(ch).step_by(self.c).copied().collect()
    }

    /// Channel-wise concatenation `[a, b]`.
    pub fn concat(a: &Self, b: &Self) -> Self {
        assert_eq!((a.h, a.w), (b.h, b.w), "concat spatial mismatch");
        let c = a.c + b.c;
        let mut data = Vec::with_capacity(a.pixels() * c);
        for p in 0..a.pixels() {
            data.extend_from_slice(&a.data[p * a.c..(p + 1) * a.c]);
            data.extend_from_slice(&b.data[p * b.c..(p + 1) * b.c]);
        }
        Self { h: a.h, w: a.w, c, data }
    }

    /// Inverse of [`Tensor::concat`]: split off the first `c0` channels.
    pub fn split(&self, c0: usize) -> (Self, Self) {
        let c1 = self.c - c0;
        let mut a = Vec::with_capacity(self.pixels() * c0);
        let mut b = Vec::with_capacity(self.pixels() * c1);
        for p in 0..self.pixels() {
            let px = &self.data[p * self.c..(p + 1) * self.c];
            a.extend_from_slice(&px[..c0]);
            b.extend_from_slice(&px[c0..]);
        }
        (Self::from_vec(self.h, self.w, c0, a), Self::from_vec(self.h, self.w, c1, b))
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Mirror-pad to `h x w` at the bottom and right edge.
    pub fn reflect_pad(&self, h: usize, w: usize) -> Self {
        if (h, w) == (self.h, self.w) {
            return self.clone();
        }
        let mut out = Vec::with_capacity(h * w * self.c);
        for y in 0..h {
            let sy = mirror(y, self.h);
            for x in 0..w {
                let sx = mirror(x, self.w);
                let i = (sy * self.w + sx) * self.c;
                out.extend_from_slice(&self.data[i..i + self.c]);
            }
        }
        Self::from_vec(h, w, self.c, out)
    }

    /// Top-left `h x w` window.
    pub fn crop(&self, h: usize, w: usize) -> Self {
        if (h, w) == (self.h, self.w) {
            return self.clone();
        }
        let mut out = Vec::with_capacity(h * w * self.c);
        for y in 0..h {
            let i = y * self.w * self.c;
            out.extend_from_slice(&self.data[i..i + w * self.c]);
        }
        Self::from_vec(h, w, self.c, out)
    }
}

/// Reflection without repeating the edge sample; periodic for indices past
/// twice the length.
pub(crate) fn mirror(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Smallest multiple of `m` that is at least `n`.
pub fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}
