use rand::Rng;

use super::{matmul, Grads, Mat, ParamId, ParamStore, Real};

/// One sample's activation map, `c × h × w` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Feature<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Feature {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn new(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w, "feature shape");
        Feature { c, h, w, data }
    }

    /// From an interleaved `h × w × c` buffer.
    pub fn from_hwc<S: Copy + Into<f64>>(h: usize, w: usize, c: usize, hwc: &[S]) -> Self {
        assert_eq!(hwc.len(), h * w * c);
        let mut data = vec![T::zero(); c * h * w];
        for (p, pixel) in hwc.chunks_exact(c).enumerate() {
            for (ch, &v) in pixel.iter().enumerate() {
                data[ch * h * w + p] = T::of(v.into());
            }
        }
        Feature { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn cast<U: Real>(&self) -> Feature<U> {
        Feature {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Zero `grad` wherever the ReLU output was not positive.
pub fn relu_backward_inplace<T: Real>(out: &[T], grad: &mut [T]) {
    grad.iter_mut().zip(out).for_each(|(g, &o)| {
        if o <= T::zero() {
            *g = T::zero()
        }
    });
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// 2×2 average pooling with stride 2; odd trailing rows/columns are dropped.
pub fn avg_pool2<T: Real>(x: &Feature<T>) -> Feature<T> {
    let (ho, wo) = (x.h / 2, x.w / 2);
    let quarter = T::of(0.25);
    let mut out = Feature::zeros(x.c, ho, wo);
    for c in 0..x.c {
        let src = &x.data[c * x.h * x.w..(c + 1) * x.h * x.w];
        let dst = &mut out.data[c * ho * wo..(c + 1) * ho * wo];
        for oy in 0..ho {
            let r0 = &src[2 * oy * x.w..];
            let r1 = &src[(2 * oy + 1) * x.w..];
            for ox in 0..wo {
                dst[oy * wo + ox] =
                    (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter;
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Real>(dy: &Feature<T>, in_h: usize, in_w: usize) -> Feature<T> {
    let quarter = T::of(0.25);
    let mut dx = Feature::zeros(dy.c, in_h, in_w);
    for c in 0..dy.c {
        let g = &dy.data[c * dy.h * dy.w..(c + 1) * dy.h * dy.w];
        let d = &mut dx.data[c * in_h * in_w..(c + 1) * in_h * in_w];
        for oy in 0..dy.h {
            for ox in 0..dy.w {
                let v = g[oy * dy.w + ox] * quarter;
                d[2 * oy * in_w + 2 * ox] = v;
                d[2 * oy * in_w + 2 * ox + 1] = v;
                d[(2 * oy + 1) * in_w + 2 * ox] = v;
                d[(2 * oy + 1) * in_w + 2 * ox + 1] = v;
            }
        }
    }
    dx
}

/// Square-kernel 2-D convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Saved forward state for [`Conv2d::backward`].
#[derive(Clone, Debug)]
pub struct ConvTrace<T> {
    cols: Vec<T>,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

impl Conv2d {
    /// Registers `<name>.weight` (`[out, in, k, k]`, Gaussian with standard
    /// deviation `gain / sqrt(fan_in)`) and a zero `<name>.bias`.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_c * k * k) as f64;
        let weight = store.register_normal(
            format!("{name}.weight"),
            vec![out_c, in_c, k, k],
            gain / fan_in.sqrt(),
            rng,
        );
        let bias = store.register_zeros(format!("{name}.bias"), vec![out_c]);
        Conv2d {
            weight,
            bias,
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    /// Output columns `ox` whose input column `ox·stride + kx − pad` lies in `0..in_w`.
    fn valid_cols(&self, kx: usize, in_w: usize, out_w: usize) -> std::ops::Range<usize> {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let lo = (p - kx as isize).max(0);
        let lo = ((lo + s - 1) / s) as usize;
        let last = in_w as isize - 1 + p - kx as isize;
        let hi = if last < 0 {
            0
        } else {
            ((last / s) as usize + 1).min(out_w)
        };
        lo.min(hi)..hi
    }

    fn im2col<T: Real>(&self, x: &Feature<T>, out_h: usize, out_w: usize) -> Vec<T> {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let plane = out_h * out_w;
        let mut cols = vec![T::zero(); self.in_c * k * k * plane];
        for c in 0..self.in_c {
            let src = &x.data[c * x.h * x.w..(c + 1) * x.h * x.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * plane..][..plane];
                    let valid = self.valid_cols(kx, x.w, out_w);
                    for oy in 0..out_h {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * x.w..][..x.w];
                        let dst = &mut row[oy * out_w..][..out_w];
                        let off = |ox: usize| (ox * s + kx) as isize - p;
                        if s == 1 && !valid.is_empty() {
                            let i0 = off(valid.start) as usize;
                            dst[valid.clone()].copy_from_slice(&src_row[i0..i0 + valid.len()]);
                        } else {
                            for ox in valid.clone() {
                                dst[ox] = src_row[off(ox) as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Real>(
        &self,
        cols: &[T],
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
    ) -> Feature<T> {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let plane = out_h * out_w;
        let mut dx = Feature::zeros(self.in_c, in_h, in_w);
        for c in 0..self.in_c {
            let dst = &mut dx.data[c * in_h * in_w..(c + 1) * in_h * in_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * plane..][..plane];
                    let valid = self.valid_cols(kx, in_w, out_w);
                    for oy in 0..out_h {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= in_h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * in_w..][..in_w];
                        let src = &row[oy * out_w..][..out_w];
                        for ox in valid.clone() {
                            dst_row[((ox * s + kx) as isize - p) as usize] += src[ox];
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Feature<T>,
    ) -> (Feature<T>, ConvTrace<T>) {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (out_h, out_w) = self.out_size(x.h, x.w);
        let cols = self.im2col(x, out_h, out_w);
        let plane = out_h * out_w;
        let ckk = self.in_c * self.k * self.k;
        let mut y = Feature::zeros(self.out_c, out_h, out_w);
        matmul(
            Mat::new(store.get(self.weight), self.out_c, ckk),
            Mat::new(&cols, ckk, plane),
            T::zero(),
            &mut y.data,
        );
        for (row, &b) in y.data.chunks_exact_mut(plane).zip(store.get(self.bias)) {
            row.iter_mut().for_each(|v| *v += b);
        }
        (
            y,
            ConvTrace {
                cols,
                in_h: x.h,
                in_w: x.w,
                out_h,
                out_w,
            },
        )
    }

    /// Accumulates weight and bias gradients; returns the input gradient
    /// when `need_dx`.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &mut Grads<T>,
        trace: &ConvTrace<T>,
        dy: &Feature<T>,
        need_dx: bool,
    ) -> Option<Feature<T>> {
        let plane = trace.out_h * trace.out_w;
        let ckk = self.in_c * self.k * self.k;
        assert_eq!(
            dy.data.len(),
            self.out_c * plane,
            "conv output gradient shape"
        );
        matmul(
            Mat::new(&dy.data, self.out_c, plane),
            Mat::new(&trace.cols, ckk, plane).t(),
            T::one(),
            grads.get_mut(self.weight),
        );
        for (g, row) in grads
            .get_mut(self.bias)
            .iter_mut()
            .zip(dy.data.chunks_exact(plane))
        {
            *g += row.iter().copied().sum::<T>();
        }
        if !need_dx {
            return None;
        }
        let mut dcols = vec![T::zero(); ckk * plane];
        matmul(
            Mat::new(store.get(self.weight), self.out_c, ckk).t(),
            Mat::new(&dy.data, self.out_c, plane),
            T::zero(),
            &mut dcols,
        );
        Some(self.col2im(&dcols, trace.in_h, trace.in_w, trace.out_h, trace.out_w))
    }
}

/// Fully connected layer `y = W·x + b`, `W` stored `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_f: usize,
    pub out_f: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_f: usize,
        out_f: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.register_normal(
            format!("{name}.weight"),
            vec![out_f, in_f],
            gain / (in_f as f64).sqrt(),
            rng,
        );
        let bias = store.register_zeros(format!("{name}.bias"), vec![out_f]);
        Linear {
            weight,
            bias,
            in_f,
            out_f,
        }
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.in_f, "linear input width");
        let mut y = store.get(self.bias).to_vec();
        matmul(
            Mat::new(store.get(self.weight), self.out_f, self.in_f),
            Mat::new(x, self.in_f, 1),
            T::one(),
            &mut y,
        );
        y
    }

    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &mut Grads<T>,
        x: &[T],
        dy: &[T],
    ) -> Vec<T> {
        matmul(
            Mat::new(dy, self.out_f, 1),
            Mat::new(x, 1, self.in_f),
            T::one(),
            grads.get_mut(self.weight),
        );
        grads
            .get_mut(self.bias)
            .iter_mut()
            .zip(dy)
            .for_each(|(g, &d)| *g += d);
        let mut dx = vec![T::zero(); self.in_f];
        matmul(
            Mat::new(store.get(self.weight), self.out_f, self.in_f).t(),
            Mat::new(dy, self.out_f, 1),
            T::zero(),
            &mut dx,
        );
        dx
    }
}
